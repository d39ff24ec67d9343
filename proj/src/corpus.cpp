#include "repvec/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "repvec/rng.hpp"

namespace repvec {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while(true) {
        const auto pos = line.find('\t', start);
        if(pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string where(const std::filesystem::path &path, std::size_t line_no)
{
    return path.string() + ":" + std::to_string(line_no) + ": ";
}

std::ifstream open_input(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if(!in)
        throw CorpusError("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path &path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if(!out)
        throw CorpusError("cannot write " + path.string());
    return out;
}

// Reads all lines, stripping a trailing '\r'. Line numbers are 1-based.
template <class Fn>
void for_each_line(const std::filesystem::path &path, Fn &&fn)
{
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    while(std::getline(in, line)) {
        ++line_no;
        if(!line.empty() && line.back() == '\r')
            line.pop_back();
        fn(std::string_view(line), line_no);
    }
}

bool is_ascii_space(unsigned char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_edge_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) && c != '%'; }

bool has_digit(std::string_view s)
{
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view s)
{
    for(unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t parse_count(std::string_view s, const std::string &ctx)
{
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if(ec != std::errc() || ptr != s.data() + s.size())
        throw CorpusError(ctx + "expected a non-negative integer, got '" + std::string(s) + "'");
    return v;
}

} // namespace

// ---------------------------------------------------------------------------

Assertion parse_assertion(std::string_view s)
{
    if(s == "present")
        return Assertion::present;
    if(s == "absent")
        return Assertion::absent;
    throw CorpusError("unknown assertion label '" + std::string(s) + "'");
}

std::string_view to_string(Assertion a) { return a == Assertion::present ? "present" : "absent"; }

std::string escape_field(std::string_view raw)
{
    std::string out;
    out.reserve(raw.size());
    for(char c : raw) {
        switch(c) {
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        case '\\': out += "\\\\"; break;
        default: out += c;
        }
    }
    return out;
}

std::string unescape_field(std::string_view escaped)
{
    std::string out;
    out.reserve(escaped.size());
    for(std::size_t i = 0; i < escaped.size(); ++i) {
        const char c = escaped[i];
        if(c != '\\' || i + 1 == escaped.size()) {
            out += c;
            continue;
        }
        const char n = escaped[++i];
        switch(n) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '\\': out += '\\'; break;
        default:
            out += '\\';
            out += n;
        }
    }
    return out;
}

std::vector<NoteRecord> read_notes_tsv(const std::filesystem::path &path)
{
    std::vector<NoteRecord> notes;
    bool header_seen = false;
    for_each_line(path, [&](std::string_view line, std::size_t line_no) {
        if(!header_seen) {
            const auto cols = split_tabs(line);
            if(cols.size() != 4 || cols[0] != "patient_id")
                throw CorpusError(where(path, line_no) +
                                  "missing header 'patient_id\\tcategory\\torder_key\\ttext'");
            header_seen = true;
            return;
        }
        if(line.empty())
            return;
        const auto cols = split_tabs(line);
        if(cols.size() != 4)
            throw CorpusError(where(path, line_no) + "expected 4 tab-separated fields, got " +
                              std::to_string(cols.size()));
        if(cols[0].empty())
            throw CorpusError(where(path, line_no) + "empty patient_id");
        NoteRecord rec;
        rec.patient_id = std::string(cols[0]);
        rec.category = std::string(cols[1]);
        const auto [ptr, ec] =
            std::from_chars(cols[2].data(), cols[2].data() + cols[2].size(), rec.order_key);
        if(ec != std::errc() || ptr != cols[2].data() + cols[2].size())
            throw CorpusError(where(path, line_no) + "order_key is not an integer: '" +
                              std::string(cols[2]) + "'");
        rec.text = unescape_field(cols[3]);
        notes.push_back(std::move(rec));
    });
    if(!header_seen)
        throw CorpusError(path.string() + ": empty notes file (header required)");
    return notes;
}

void write_notes_tsv(const std::filesystem::path &path, std::span<const NoteRecord> notes)
{
    auto out = open_output(path);
    out << "patient_id\tcategory\torder_key\ttext\n";
    for(const auto &n : notes)
        out << n.patient_id << '\t' << n.category << '\t' << n.order_key << '\t'
            << escape_field(n.text) << '\n';
}

std::vector<LabelRecord> read_labels_tsv(const std::filesystem::path &path)
{
    std::vector<LabelRecord> labels;
    for_each_line(path, [&](std::string_view line, std::size_t line_no) {
        if(line.empty())
            return;
        const auto cols = split_tabs(line);
        if(cols.size() != 3)
            throw CorpusError(where(path, line_no) + "expected 3 tab-separated fields");
        if(line_no == 1 && cols[0] == "patient_id")
            return;
        if(cols[0].empty() || cols[1].empty())
            throw CorpusError(where(path, line_no) + "empty patient_id or task");
        labels.push_back({std::string(cols[0]), std::string(cols[1]), std::string(cols[2])});
    });
    return labels;
}

void write_labels_tsv(const std::filesystem::path &path, std::span<const LabelRecord> labels)
{
    auto out = open_output(path);
    out << "patient_id\ttask_name\tlabel\n";
    for(const auto &l : labels)
        out << l.patient_id << '\t' << l.task << '\t' << l.label << '\n';
}

std::vector<ConceptAnnotation> read_concepts_tsv(const std::filesystem::path &path)
{
    std::vector<ConceptAnnotation> concepts;
    for_each_line(path, [&](std::string_view line, std::size_t line_no) {
        if(line.empty())
            return;
        const auto cols = split_tabs(line);
        if(cols.size() != 4)
            throw CorpusError(where(path, line_no) + "expected 4 tab-separated fields");
        if(line_no == 1 && cols[0] == "patient_id")
            return;
        ConceptAnnotation c;
        c.patient_id = std::string(cols[0]);
        c.cui = std::string(cols[1]);
        try {
            c.assertion = parse_assertion(cols[2]);
        } catch(const CorpusError &e) {
            throw CorpusError(where(path, line_no) + e.what());
        }
        c.count = parse_count(cols[3], where(path, line_no));
        if(c.count == 0)
            throw CorpusError(where(path, line_no) + "concept count must be positive");
        concepts.push_back(std::move(c));
    });
    return concepts;
}

void write_concepts_tsv(const std::filesystem::path &path,
                        std::span<const ConceptAnnotation> concepts)
{
    auto out = open_output(path);
    out << "patient_id\tcui\tassertion\tcount\n";
    for(const auto &c : concepts)
        out << c.patient_id << '\t' << c.cui << '\t' << to_string(c.assertion) << '\t' << c.count
            << '\n';
}

PatientNotes group_notes(std::vector<NoteRecord> notes,
                         const std::set<std::string> &excluded_categories)
{
    std::map<std::string, std::vector<const NoteRecord *>> by_patient;
    std::set<std::pair<std::string_view, std::int64_t>> seen;
    for(const auto &n : notes) {
        if(!seen.emplace(n.patient_id, n.order_key).second)
            throw CorpusError("duplicate (patient_id, order_key) = (" + n.patient_id + ", " +
                              std::to_string(n.order_key) + ")");
        if(excluded_categories.count(n.category))
            continue;
        by_patient[n.patient_id].push_back(&n);
    }
    PatientNotes out;
    for(auto &[pid, list] : by_patient) {
        std::sort(list.begin(), list.end(),
                  [](const NoteRecord *a, const NoteRecord *b) { return a->order_key < b->order_key; });
        auto &texts = out[pid];
        for(const auto *n : list)
            texts.push_back(n->text);
    }
    return out;
}

PatientNotes ingest_notes(const std::filesystem::path &notes_file,
                          const std::set<std::string> &excluded_categories)
{
    // Duplicates are checked here too so the error can name the line.
    auto notes = read_notes_tsv(notes_file);
    std::set<std::pair<std::string, std::int64_t>> seen;
    for(std::size_t i = 0; i < notes.size(); ++i) {
        if(!seen.emplace(notes[i].patient_id, notes[i].order_key).second)
            throw CorpusError(where(notes_file, i + 2) + "duplicate (patient_id, order_key) = (" +
                              notes[i].patient_id + ", " + std::to_string(notes[i].order_key) +
                              ")");
    }
    return group_notes(std::move(notes), excluded_categories);
}

TaskLabels group_labels(std::span<const LabelRecord> labels)
{
    TaskLabels out;
    for(const auto &l : labels) {
        auto [it, inserted] = out[l.task].emplace(l.patient_id, l.label);
        if(!inserted && it->second != l.label)
            throw CorpusError("conflicting labels for patient " + l.patient_id + " on task " +
                              l.task);
    }
    return out;
}

// ---------------------------------------------------------------------------

bool is_placeholder(std::string_view token)
{
    return token == kNumericPlaceholder || token == kTimePlaceholder ||
           token == kMeasurementPlaceholder;
}

TokenPatterns TokenPatterns::defaults()
{
    constexpr auto flags = std::regex::ECMAScript | std::regex::optimize;
    TokenPatterns p{
        std::regex(R"(^[0-9]+([.,][0-9]+)*$)", flags),
        std::regex(R"(^[0-9]{1,2}:[0-9]{2}(am|pm)?$)", flags),
        std::regex(R"(^([0-9]+([.,][0-9]+)*(mg|mcg|g|kg|ml|l|dl|cc|mm|cm|m|mmhg|meq|mmol|units?|u|iu|%|hrs?|h|mins?|s|secs?|bpm|lpm)(/[a-z0-9.%]+)*|[0-9][0-9.,]*(/[0-9a-z.,%]+)+)$)",
                   flags),
    };
    return p;
}

TokenNormalizer::TokenNormalizer(PlaceholderMode mode, TokenPatterns patterns)
    : _mode(mode), _patterns(std::move(patterns))
{
}

std::vector<std::string> TokenNormalizer::operator()(std::string_view raw_text) const
{
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = raw_text.size();
    while(i < n) {
        while(i < n && is_ascii_space(static_cast<unsigned char>(raw_text[i])))
            ++i;
        const std::size_t start = i;
        while(i < n && !is_ascii_space(static_cast<unsigned char>(raw_text[i])))
            ++i;
        if(start == i)
            continue;
        std::string_view raw = raw_text.substr(start, i - start);

        if(is_placeholder(raw)) {
            if(_mode == PlaceholderMode::replace)
                out.emplace_back(raw);
            continue;
        }

        std::size_t b = 0, e = raw.size();
        while(b < e && is_edge_punct(static_cast<unsigned char>(raw[b])))
            ++b;
        while(e > b && is_edge_punct(static_cast<unsigned char>(raw[e - 1])))
            --e;
        std::string tok(raw.substr(b, e - b));
        if(tok.empty())
            continue;
        for(auto &c : tok)
            if(static_cast<unsigned char>(c) < 0x80)
                c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if(std::all_of(tok.begin(), tok.end(),
                       [](unsigned char c) { return c < 0x80 && std::ispunct(c); }))
            continue;

        std::string_view placeholder;
        if(has_digit(tok)) {
            if(std::regex_match(tok, _patterns.time))
                placeholder = kTimePlaceholder;
            else if(std::regex_match(tok, _patterns.number))
                placeholder = kNumericPlaceholder;
            else if(std::regex_match(tok, _patterns.measurement))
                placeholder = kMeasurementPlaceholder;
        }
        if(!placeholder.empty()) {
            if(_mode == PlaceholderMode::replace)
                out.emplace_back(placeholder);
            continue;
        }
        out.push_back(std::move(tok));
    }
    return out;
}

std::vector<std::string> normalize_tokens(std::string_view raw_text, PlaceholderMode mode)
{
    static const TokenNormalizer replace_norm(PlaceholderMode::replace);
    static const TokenNormalizer drop_norm(PlaceholderMode::drop);
    return mode == PlaceholderMode::replace ? replace_norm(raw_text) : drop_norm(raw_text);
}

std::string join_tokens(std::span<const std::string> tokens)
{
    std::string out;
    for(std::size_t i = 0; i < tokens.size(); ++i) {
        if(i)
            out += ' ';
        out += tokens[i];
    }
    return out;
}

std::vector<PatientDocument> build_documents(const PatientNotes &notes, const TaskLabels &labels,
                                             const TokenNormalizer &normalizer)
{
    std::vector<PatientDocument> docs;
    docs.reserve(notes.size());
    for(const auto &[pid, texts] : notes) {
        PatientDocument d;
        d.patient_id = pid;
        for(const auto &t : texts) {
            auto toks = normalizer(t);
            d.tokens.insert(d.tokens.end(), std::make_move_iterator(toks.begin()),
                            std::make_move_iterator(toks.end()));
        }
        for(const auto &[task, by_patient] : labels) {
            const auto it = by_patient.find(pid);
            if(it != by_patient.end())
                d.labels.emplace(task, it->second);
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

// ---------------------------------------------------------------------------

TermCounts count_terms(std::span<const std::string> tokens)
{
    TermCounts counts;
    for(const auto &t : tokens)
        ++counts[t];
    return counts;
}

Vocabulary::Vocabulary() : Vocabulary({}, {}, 1) {}

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::uint64_t> frequencies,
                       std::uint64_t min_frequency)
    : _min_frequency(min_frequency)
{
    if(terms.size() != frequencies.size())
        throw std::invalid_argument("Vocabulary: terms/frequencies size mismatch");
    _terms.reserve(terms.size() + 1);
    _frequencies.reserve(terms.size() + 1);
    _terms.emplace_back(oov_token);
    _frequencies.push_back(0);
    for(std::size_t i = 0; i < terms.size(); ++i) {
        if(terms[i] == oov_token)
            throw std::invalid_argument("Vocabulary: OOV token is reserved");
        _terms.push_back(std::move(terms[i]));
        _frequencies.push_back(frequencies[i]);
    }
    _index.reserve(_terms.size());
    for(std::size_t i = 0; i < _terms.size(); ++i)
        if(!_index.emplace(_terms[i], static_cast<std::uint32_t>(i)).second)
            throw std::invalid_argument("Vocabulary: duplicate term '" + _terms[i] + "'");
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view term) const
{
    const auto it = _index.find(std::string(term));
    if(it == _index.end())
        return std::nullopt;
    return it->second;
}

std::uint32_t Vocabulary::index_or_oov(std::string_view term) const
{
    return find(term).value_or(oov_index);
}

std::uint64_t Vocabulary::fingerprint() const
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for(const auto &t : _terms) {
        h = fnv1a(h, t);
        h = fnv1a(h, std::string_view("\0", 1));
    }
    return h;
}

Vocabulary build_vocabulary(std::span<const TermCounts> training_docs, std::uint64_t min_frequency)
{
    if(training_docs.empty())
        throw CorpusError("build_vocabulary: empty training corpus");
    std::map<std::string, std::uint64_t> totals;
    for(const auto &doc : training_docs)
        for(const auto &[term, c] : doc)
            if(term != Vocabulary::oov_token)
                totals[term] += c;
    std::vector<std::string> terms;
    std::vector<std::uint64_t> freqs;
    for(const auto &[term, c] : totals) {
        if(c >= min_frequency) {
            terms.push_back(term);
            freqs.push_back(c);
        }
    }
    return Vocabulary(std::move(terms), std::move(freqs), min_frequency);
}

Vocabulary build_vocabulary(std::span<const PatientDocument> training_docs,
                            std::uint64_t min_frequency)
{
    std::vector<TermCounts> counts;
    counts.reserve(training_docs.size());
    for(const auto &d : training_docs)
        counts.push_back(count_terms(d.tokens));
    return build_vocabulary(counts, min_frequency);
}

TfidfModel::TfidfModel(std::vector<double> idf, std::uint64_t n_documents)
    : _idf(std::move(idf)), _n_documents(n_documents)
{
}

TfidfModel TfidfModel::fit(std::span<const TermCounts> training_docs, const Vocabulary &vocab)
{
    std::vector<std::uint64_t> df(vocab.size(), 0);
    for(const auto &doc : training_docs)
        for(const auto &[term, c] : doc)
            if(const auto idx = vocab.find(term); idx && *idx != Vocabulary::oov_index && c > 0)
                ++df[*idx];
    const double n = static_cast<double>(training_docs.size());
    std::vector<double> idf(vocab.size());
    for(std::size_t i = 0; i < df.size(); ++i)
        idf[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
    return TfidfModel(std::move(idf), training_docs.size());
}

TransformedDocument TfidfModel::transform(const TermCounts &doc, const Vocabulary &vocab,
                                          OovPolicy policy) const
{
    if(_idf.size() != vocab.size())
        throw std::invalid_argument("TfidfModel::transform: vocabulary size mismatch");
    std::map<std::uint32_t, double> tf;
    for(const auto &[term, c] : doc) {
        if(c == 0)
            continue;
        const auto idx = vocab.find(term);
        if(idx)
            tf[*idx] += static_cast<double>(c);
        else if(policy == OovPolicy::map)
            tf[Vocabulary::oov_index] += static_cast<double>(c);
    }
    TransformedDocument out;
    out.vector.dim = vocab.size();
    double norm2 = 0.0;
    for(const auto &[idx, f] : tf) {
        const double w = f * _idf[idx];
        out.vector.indices.push_back(idx);
        out.vector.values.push_back(w);
        norm2 += w * w;
    }
    if(norm2 == 0.0) {
        out.vector.indices.clear();
        out.vector.values.clear();
        out.degenerate = true;
        return out;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for(auto &v : out.vector.values)
        v *= inv;
    return out;
}

TfidfFit fit_transform_tfidf(std::span<const TermCounts> training_docs, const Vocabulary &vocab)
{
    TfidfFit fit{TfidfModel::fit(training_docs, vocab), {}};
    fit.documents.reserve(training_docs.size());
    for(const auto &doc : training_docs)
        fit.documents.push_back(fit.model.transform(doc, vocab, OovPolicy::drop));
    return fit;
}

std::optional<std::size_t> FeatureSet::row_of(std::string_view patient_id) const
{
    const auto it = std::lower_bound(patient_ids.begin(), patient_ids.end(), patient_id);
    if(it == patient_ids.end() || *it != patient_id)
        return std::nullopt;
    return static_cast<std::size_t>(it - patient_ids.begin());
}

FeatureSet build_feature_set(const std::map<std::string, TermCounts> &docs,
                             const std::set<std::string> &train_ids, std::uint64_t min_frequency)
{
    std::vector<TermCounts> train;
    for(const auto &id : train_ids) {
        const auto it = docs.find(id);
        if(it == docs.end())
            throw CorpusError("training patient '" + id + "' has no document");
        train.push_back(it->second);
    }
    FeatureSet fs;
    fs.vocabulary = build_vocabulary(train, min_frequency);
    fs.tfidf = TfidfModel::fit(train, fs.vocabulary);
    for(const auto &[pid, counts] : docs) {
        const auto policy = train_ids.count(pid) ? OovPolicy::drop : OovPolicy::map;
        auto t = fs.tfidf.transform(counts, fs.vocabulary, policy);
        fs.patient_ids.push_back(pid);
        fs.rows.push_back(std::move(t.vector));
        fs.degenerate.push_back(t.degenerate);
    }
    return fs;
}

std::string concept_term(std::string_view cui, Assertion assertion)
{
    std::string t(cui);
    t += '|';
    t += to_string(assertion);
    return t;
}

FeatureSet build_concept_features(std::span<const ConceptAnnotation> annotations,
                                  std::span<const std::string> patient_ids,
                                  const std::set<std::string> &train_ids,
                                  std::uint64_t min_frequency)
{
    std::map<std::string, TermCounts> docs;
    for(const auto &pid : patient_ids)
        docs[pid];
    for(const auto &a : annotations) {
        const auto it = docs.find(a.patient_id);
        if(it == docs.end())
            continue;
        it->second[concept_term(a.cui, a.assertion)] += a.count;
    }
    return build_feature_set(docs, train_ids, min_frequency);
}

// ---------------------------------------------------------------------------

DatasetSplit split_dataset(std::vector<std::string> patient_ids, std::uint64_t seed)
{
    if(patient_ids.size() < 3)
        throw std::invalid_argument("split_dataset: need at least 3 patients");
    std::sort(patient_ids.begin(), patient_ids.end());
    if(std::adjacent_find(patient_ids.begin(), patient_ids.end()) != patient_ids.end())
        throw std::invalid_argument("split_dataset: duplicate patient ids");
    Rng rng(seed);
    rng.shuffle(patient_ids.begin(), patient_ids.end());

    const auto n = patient_ids.size();
    const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
    const auto n_test = n_val;
    const auto n_train = n - n_val - n_test;

    DatasetSplit s;
    s.train.assign(patient_ids.begin(), patient_ids.begin() + n_train);
    s.validation.assign(patient_ids.begin() + n_train, patient_ids.begin() + n_train + n_val);
    s.test.assign(patient_ids.begin() + n_train + n_val, patient_ids.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

void write_split_tsv(const std::filesystem::path &path, const DatasetSplit &split)
{
    auto out = open_output(path);
    out << "patient_id\tsubset\n";
    for(const auto &id : split.train)
        out << id << "\ttrain\n";
    for(const auto &id : split.validation)
        out << id << "\tvalidation\n";
    for(const auto &id : split.test)
        out << id << "\ttest\n";
}

DatasetSplit read_split_tsv(const std::filesystem::path &path)
{
    DatasetSplit s;
    for_each_line(path, [&](std::string_view line, std::size_t line_no) {
        if(line.empty() || line_no == 1)
            return;
        const auto cols = split_tabs(line);
        if(cols.size() != 2)
            throw CorpusError(where(path, line_no) + "expected 2 tab-separated fields");
        if(cols[1] == "train")
            s.train.emplace_back(cols[0]);
        else if(cols[1] == "validation")
            s.validation.emplace_back(cols[0]);
        else if(cols[1] == "test")
            s.test.emplace_back(cols[0]);
        else
            throw CorpusError(where(path, line_no) + "unknown subset '" + std::string(cols[1]) +
                              "'");
    });
    return s;
}

} // namespace repvec
