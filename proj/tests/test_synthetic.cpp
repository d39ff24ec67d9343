#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repvec/synthetic.hpp"

using namespace repvec;

namespace {

// presence of `marker` per patient, from the raw note text
std::map<std::string, bool> marker_presence(const SyntheticCorpus &c, const std::string &marker)
{
    std::map<std::string, bool> present;
    for(const auto &n : c.notes) {
        auto &p = present[n.patient_id];
        for(const auto &t : normalize_tokens(n.text))
            if(t == marker)
                p = true;
    }
    return present;
}

std::map<std::string, std::string> labels_of(const SyntheticCorpus &c, const std::string &task)
{
    std::map<std::string, std::string> out;
    for(const auto &l : c.labels)
        if(l.task == task)
            out[l.patient_id] = l.label;
    return out;
}

// Pearson chi-square of a 2x2 table, no continuity correction
double chi_square_2x2(double a, double b, double c, double d)
{
    const double n = a + b + c + d;
    const double rows[2] = {a + b, c + d}, cols[2] = {a + c, b + d};
    const double obs[2][2] = {{a, b}, {c, d}};
    double chi = 0.0;
    for(int i = 0; i < 2; ++i)
        for(int j = 0; j < 2; ++j) {
            const double e = rows[i] * cols[j] / n;
            if(e > 0)
                chi += (obs[i][j] - e) * (obs[i][j] - e) / e;
        }
    return chi;
}

SyntheticConfig base_config()
{
    SyntheticConfig c;
    c.n_patients = 300;
    c.vocabulary_size = 400;
    c.seed = 17;
    return c;
}

} // namespace

TEST(Synthetic, CertainInjectionMarksEveryPositive)
{
    auto cfg = base_config();
    cfg.tasks.push_back({.name = "in_hosp", .positive_rate = 0.2, .markers = {"expired"},
                         .injection_probability = 1.0});
    const auto corpus = generate_synthetic_corpus(cfg);
    const auto present = marker_presence(corpus, "expired");
    const auto labels = labels_of(corpus, "in_hosp");
    std::size_t positives = 0;
    for(const auto &[pid, label] : labels) {
        if(label == "1") {
            ++positives;
            EXPECT_TRUE(present.at(pid)) << pid;
        } else {
            EXPECT_FALSE(present.at(pid)) << pid;
        }
    }
    EXPECT_GT(positives, 30u);
}

TEST(Synthetic, ZeroInjectionGivesNoAssociation)
{
    auto cfg = base_config();
    cfg.tasks.push_back({.name = "t", .positive_rate = 0.3, .markers = {"expired"},
                         .injection_probability = 0.0});
    const auto corpus = generate_synthetic_corpus(cfg);
    const auto present = marker_presence(corpus, "expired");
    const auto labels = labels_of(corpus, "t");
    double tab[2][2] = {};
    for(const auto &[pid, label] : labels)
        tab[present.at(pid)][label == "1"] += 1;
    EXPECT_NEAR(chi_square_2x2(tab[0][0], tab[0][1], tab[1][0], tab[1][1]), 0.0, 1e-12);

    // same injection rate in both classes: frequency independent of label
    cfg.tasks[0].injection_probability = 0.3;
    cfg.tasks[0].noise_probability = 0.3;
    const auto c2 = generate_synthetic_corpus(cfg);
    const auto p2 = marker_presence(c2, "expired");
    double t2[2][2] = {};
    for(const auto &[pid, label] : labels_of(c2, "t"))
        t2[p2.at(pid)][label == "1"] += 1;
    EXPECT_LT(chi_square_2x2(t2[0][0], t2[0][1], t2[1][0], t2[1][1]), 3.84);
}

TEST(Synthetic, ZipfRankFrequencySlope)
{
    SyntheticConfig cfg;
    cfg.n_patients = 2000;
    cfg.vocabulary_size = 1000;
    cfg.zipf_exponent = 1.0;
    cfg.numeric_rate = 0.0;
    cfg.seed = 3;
    const auto corpus = generate_synthetic_corpus(cfg);
    std::map<std::string, double> counts;
    for(const auto &n : corpus.notes)
        for(const auto &t : normalize_tokens(n.text))
            counts[t] += 1;
    std::vector<double> freq;
    for(const auto &[t, c] : counts)
        freq.push_back(c);
    std::sort(freq.rbegin(), freq.rend());

    // least squares of log(freq) on log(rank)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(freq.size());
    for(std::size_t r = 0; r < freq.size(); ++r) {
        const double x = std::log(static_cast<double>(r + 1)), y = std::log(freq[r]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_NEAR(slope, -1.0, 0.1);
}

TEST(Synthetic, DeterministicPerSeed)
{
    auto cfg = base_config();
    cfg.tasks.push_back({.name = "t", .positive_rate = 0.3, .markers = {"expired"},
                         .injection_probability = 0.5});
    cfg.concept_vocabulary = 50;
    cfg.discharge_rate = 0.5;
    const auto a = generate_synthetic_corpus(cfg);
    const auto b = generate_synthetic_corpus(cfg);
    ASSERT_EQ(a.notes.size(), b.notes.size());
    for(std::size_t i = 0; i < a.notes.size(); ++i)
        EXPECT_EQ(a.notes[i].text, b.notes[i].text);
    EXPECT_EQ(a.labels.size(), b.labels.size());
    EXPECT_EQ(a.concepts.size(), b.concepts.size());

    cfg.seed += 1;
    const auto c = generate_synthetic_corpus(cfg);
    EXPECT_NE(a.notes.front().text, c.notes.front().text);
}

TEST(Synthetic, MarkerCollidingWithPlaceholderIsRejected)
{
    auto cfg = base_config();
    cfg.tasks.push_back({.name = "t", .markers = {"NUMERIC_VAL"}});
    EXPECT_THROW(generate_synthetic_corpus(cfg), std::invalid_argument);
    cfg.tasks[0].markers = {"120/80"};
    EXPECT_THROW(generate_synthetic_corpus(cfg), std::invalid_argument);
    cfg.tasks[0].markers = {"Expired"};
    EXPECT_THROW(generate_synthetic_corpus(cfg), std::invalid_argument);
}

TEST(Synthetic, LatentTaskHasExactPositiveRate)
{
    auto cfg = base_config();
    cfg.n_patients = 1000;
    cfg.latents.push_back({.name = "severity", .topic_size = 10, .max_rate = 0.1});
    cfg.tasks.push_back({.name = "30_days", .positive_rate = 0.0385, .latent = "severity"});
    const auto corpus = generate_synthetic_corpus(cfg);
    std::size_t pos = 0;
    for(const auto &[pid, l] : labels_of(corpus, "30_days"))
        pos += l == "1";
    EXPECT_EQ(pos, 39u); // round(0.0385 * 1000)
}

TEST(Synthetic, WordsAreUniqueAndTokenizerStable)
{
    std::set<std::string> seen;
    for(std::size_t i = 0; i < 5000; ++i) {
        const auto w = synthetic_word(i);
        ASSERT_TRUE(seen.insert(w).second) << w;
        ASSERT_EQ(normalize_tokens(w), std::vector<std::string>{w});
    }
}

TEST(Synthetic, CorpusFilesRoundTrip)
{
    auto cfg = base_config();
    cfg.tasks.push_back({.name = "t", .positive_rate = 0.3, .markers = {"expired"}});
    cfg.concept_vocabulary = 20;
    cfg.discharge_rate = 1.0;
    const auto corpus = generate_synthetic_corpus(cfg);
    const auto dir = oracle::temp_dir("synthetic_files");
    write_synthetic_corpus(dir, corpus);
    EXPECT_EQ(read_notes_tsv(dir / "notes.tsv").size(), corpus.notes.size());
    EXPECT_EQ(read_labels_tsv(dir / "labels.tsv").size(), corpus.labels.size());
    EXPECT_EQ(read_concepts_tsv(dir / "concepts.tsv").size(), corpus.concepts.size());
    const auto notes = ingest_notes(dir / "notes.tsv", {"discharge_report"});
    EXPECT_EQ(notes.size(), cfg.n_patients);
}
