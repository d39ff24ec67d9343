#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "repvec/sparse.hpp"

namespace repvec {

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Raw inputs

struct NoteRecord {
    std::string patient_id;
    std::string category;
    std::int64_t order_key = 0;
    std::string text;
};

struct LabelRecord {
    std::string patient_id;
    std::string task;
    std::string label;
};

enum class Assertion { present, absent };

struct ConceptAnnotation {
    std::string patient_id;
    std::string cui;
    Assertion assertion = Assertion::present;
    std::uint64_t count = 1;
};

Assertion parse_assertion(std::string_view s);
std::string_view to_string(Assertion a);

/// Backslash escaping for TSV text fields: \n, \t, \r and \\.
std::string escape_field(std::string_view raw);
std::string unescape_field(std::string_view escaped);

std::vector<NoteRecord> read_notes_tsv(const std::filesystem::path &path);
void write_notes_tsv(const std::filesystem::path &path, std::span<const NoteRecord> notes);

std::vector<LabelRecord> read_labels_tsv(const std::filesystem::path &path);
void write_labels_tsv(const std::filesystem::path &path, std::span<const LabelRecord> labels);

std::vector<ConceptAnnotation> read_concepts_tsv(const std::filesystem::path &path);
void write_concepts_tsv(const std::filesystem::path &path,
                        std::span<const ConceptAnnotation> concepts);

/// patient_id -> note texts in chronological (order_key) order.
using PatientNotes = std::map<std::string, std::vector<std::string>>;

/// Reads a notes TSV, drops notes in `excluded_categories` and patients left
/// without notes. Throws CorpusError naming the line for malformed rows and
/// duplicate (patient_id, order_key) pairs.
PatientNotes ingest_notes(const std::filesystem::path &notes_file,
                          const std::set<std::string> &excluded_categories);

PatientNotes group_notes(std::vector<NoteRecord> notes,
                         const std::set<std::string> &excluded_categories);

/// task -> (patient_id -> label). Patients without a label for a task are
/// simply absent from that task's map.
using TaskLabels = std::map<std::string, std::map<std::string, std::string>>;

TaskLabels group_labels(std::span<const LabelRecord> labels);

// ---------------------------------------------------------------------------
// Tokenization

inline constexpr std::string_view kNumericPlaceholder = "NUMERIC_VAL";
inline constexpr std::string_view kTimePlaceholder = "TIME_VAL";
inline constexpr std::string_view kMeasurementPlaceholder = "MEAS_VAL";

bool is_placeholder(std::string_view token);

/// What happens to number/time/measurement tokens: the bag-of-words path
/// replaces them with placeholders, the paragraph-vector path drops them.
enum class PlaceholderMode { replace, drop };

struct TokenPatterns {
    std::regex number;
    std::regex time;
    std::regex measurement;

    static TokenPatterns defaults();
};

class TokenNormalizer {
public:
    explicit TokenNormalizer(PlaceholderMode mode = PlaceholderMode::replace,
                             TokenPatterns patterns = TokenPatterns::defaults());

    std::vector<std::string> operator()(std::string_view raw_text) const;

private:
    PlaceholderMode _mode;
    TokenPatterns _patterns;
};

/// Whitespace tokenization, ASCII lowercasing, edge punctuation stripping
/// and placeholder substitution.
std::vector<std::string> normalize_tokens(std::string_view raw_text,
                                          PlaceholderMode mode = PlaceholderMode::replace);

std::string join_tokens(std::span<const std::string> tokens);

struct PatientDocument {
    std::string patient_id;
    std::vector<std::string> tokens;
    std::map<std::string, std::string> labels;
};

/// Concatenates each patient's notes and tokenizes the result.
std::vector<PatientDocument> build_documents(const PatientNotes &notes, const TaskLabels &labels,
                                             const TokenNormalizer &normalizer);

// ---------------------------------------------------------------------------
// Vocabulary and TF-IDF

using TermCounts = std::map<std::string, std::uint64_t>;

TermCounts count_terms(std::span<const std::string> tokens);

class Vocabulary {
public:
    static constexpr std::string_view oov_token = "OOV_TOKEN";
    static constexpr std::uint32_t oov_index = 0;

    Vocabulary();

    /// `terms` must not contain the OOV token; it is placed at index 0.
    Vocabulary(std::vector<std::string> terms, std::vector<std::uint64_t> frequencies,
               std::uint64_t min_frequency);

    std::size_t size() const { return _terms.size(); }
    std::uint64_t min_frequency() const { return _min_frequency; }

    std::optional<std::uint32_t> find(std::string_view term) const;
    std::uint32_t index_or_oov(std::string_view term) const;

    const std::string &term(std::size_t i) const { return _terms.at(i); }
    std::uint64_t frequency(std::size_t i) const { return _frequencies.at(i); }

    const std::vector<std::string> &terms() const { return _terms; }
    const std::vector<std::uint64_t> &frequencies() const { return _frequencies; }

    /// Order-sensitive fingerprint of the term list.
    std::uint64_t fingerprint() const;

    bool operator==(const Vocabulary &o) const
    {
        return _terms == o._terms && _frequencies == o._frequencies &&
               _min_frequency == o._min_frequency;
    }

private:
    std::vector<std::string> _terms;
    std::vector<std::uint64_t> _frequencies;
    std::uint64_t _min_frequency = 1;
    std::unordered_map<std::string, std::uint32_t> _index;
};

/// Keeps terms whose summed count over `training_docs` is >= min_frequency.
/// Retained terms are indexed in lexicographic order after the OOV token.
Vocabulary build_vocabulary(std::span<const TermCounts> training_docs, std::uint64_t min_frequency);
Vocabulary build_vocabulary(std::span<const PatientDocument> training_docs,
                            std::uint64_t min_frequency);

/// Training documents drop out-of-vocabulary terms; held-out documents map
/// them onto the OOV token.
enum class OovPolicy { drop, map };

struct TransformedDocument {
    SparseVector vector;
    bool degenerate = false; // no in-vocabulary term, zero vector
};

/// Smoothed idf, ln((1 + N) / (1 + df)) + 1, with L2-normalized rows.
class TfidfModel {
public:
    TfidfModel() = default;
    TfidfModel(std::vector<double> idf, std::uint64_t n_documents);

    /// df is counted over `training_docs` after dropping unknown terms, so the
    /// OOV column always has df = 0.
    static TfidfModel fit(std::span<const TermCounts> training_docs, const Vocabulary &vocab);

    TransformedDocument transform(const TermCounts &doc, const Vocabulary &vocab,
                                  OovPolicy policy) const;

    const std::vector<double> &idf() const { return _idf; }
    std::uint64_t n_documents() const { return _n_documents; }

    bool operator==(const TfidfModel &) const = default;

private:
    std::vector<double> _idf;
    std::uint64_t _n_documents = 0;
};

struct TfidfFit {
    TfidfModel model;
    std::vector<TransformedDocument> documents;
};

/// Fits idf on `training_docs` and transforms them (OovPolicy::drop).
TfidfFit fit_transform_tfidf(std::span<const TermCounts> training_docs, const Vocabulary &vocab);

/// Vocabulary + idf + one sparse row per patient, rows sorted by patient_id.
struct FeatureSet {
    Vocabulary vocabulary;
    TfidfModel tfidf;
    std::vector<std::string> patient_ids;
    std::vector<SparseVector> rows;
    std::vector<bool> degenerate;

    std::optional<std::size_t> row_of(std::string_view patient_id) const;
};

/// Vocabulary and idf come from `train_ids` only; every patient in `docs` is
/// transformed.
FeatureSet build_feature_set(const std::map<std::string, TermCounts> &docs,
                             const std::set<std::string> &train_ids, std::uint64_t min_frequency);

/// Bag-of-concepts: terms are "CUI|present" / "CUI|absent", counts summed per
/// patient. Patients in `patient_ids` without annotations get a zero row.
FeatureSet build_concept_features(std::span<const ConceptAnnotation> annotations,
                                  std::span<const std::string> patient_ids,
                                  const std::set<std::string> &train_ids,
                                  std::uint64_t min_frequency);

std::string concept_term(std::string_view cui, Assertion assertion);

// ---------------------------------------------------------------------------
// Splits

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};

/// 80/10/10 with validation and test sizes rounded to nearest and the
/// remainder assigned to train. Independent of input order.
DatasetSplit split_dataset(std::vector<std::string> patient_ids, std::uint64_t seed);

void write_split_tsv(const std::filesystem::path &path, const DatasetSplit &split);
DatasetSplit read_split_tsv(const std::filesystem::path &path);

} // namespace repvec
