#include "repvec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "repvec/rng.hpp"

namespace repvec {

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr std::string_view kNoteCategories[] = {"nursing", "physician", "radiology", "respiratory"};

class ZipfSampler {
public:
    ZipfSampler(std::size_t n, double exponent) : _cdf(n)
    {
        double total = 0.0;
        for(std::size_t r = 0; r < n; ++r) {
            total += std::pow(static_cast<double>(r + 1), -exponent);
            _cdf[r] = total;
        }
        for(auto &c : _cdf)
            c /= total;
    }

    std::size_t operator()(Rng &rng) const
    {
        const double u = rng.uniform();
        const auto it = std::upper_bound(_cdf.begin(), _cdf.end(), u);
        return std::min(static_cast<std::size_t>(it - _cdf.begin()), _cdf.size() - 1);
    }

private:
    std::vector<double> _cdf;
};

std::string numeric_token(Rng &rng)
{
    char buf[32];
    switch(rng.below(5)) {
    case 0: std::snprintf(buf, sizeof buf, "%d", static_cast<int>(rng.below(200))); break;
    case 1: std::snprintf(buf, sizeof buf, "%d.%d", static_cast<int>(rng.below(100)), static_cast<int>(rng.below(10))); break;
    case 2: std::snprintf(buf, sizeof buf, "%d:%02d%s", static_cast<int>(rng.below(12) + 1), static_cast<int>(rng.below(60)), rng.bernoulli(0.5) ? "am" : "pm"); break;
    case 3: std::snprintf(buf, sizeof buf, "%d/%d", static_cast<int>(90 + rng.below(80)), static_cast<int>(50 + rng.below(50))); break;
    default: std::snprintf(buf, sizeof buf, "%dmg", static_cast<int>(rng.below(500) + 1)); break;
    }
    return buf;
}

void validate(const SyntheticConfig &c)
{
    if(c.n_patients == 0 || c.vocabulary_size == 0)
        throw std::invalid_argument("synthetic: n_patients and vocabulary_size must be positive");
    if(c.zipf_exponent < 0.0)
        throw std::invalid_argument("synthetic: zipf_exponent must be >= 0");
    if(c.min_notes == 0 || c.min_notes > c.max_notes)
        throw std::invalid_argument("synthetic: need 1 <= min_notes <= max_notes");
    if(c.min_note_tokens == 0 || c.min_note_tokens > c.max_note_tokens)
        throw std::invalid_argument("synthetic: need 1 <= min_note_tokens <= max_note_tokens");
    auto prob = [](double p, const char *what) {
        if(!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument(std::string("synthetic: ") + what + " must be in [0, 1]");
    };
    prob(c.numeric_rate, "numeric_rate");
    prob(c.discharge_rate, "discharge_rate");
    for(const auto &l : c.latents)
        prob(l.max_rate, "latent max_rate");
    for(const auto &t : c.tasks) {
        prob(t.positive_rate, "positive_rate");
        prob(t.injection_probability, "injection_probability");
        prob(t.noise_probability, "noise_probability");
        prob(t.label_noise, "label_noise");
        if(!t.latent.empty() &&
           std::none_of(c.latents.begin(), c.latents.end(),
                        [&](const SyntheticLatent &l) { return l.name == t.latent; }))
            throw std::invalid_argument("synthetic: task '" + t.name + "' references unknown latent '" +
                                        t.latent + "'");
        for(const auto *list : {&t.markers, &t.negative_markers}) {
            for(const auto &m : *list) {
                const auto toks = normalize_tokens(m);
                if(is_placeholder(m) || toks.size() != 1 || toks.front() != m ||
                   is_placeholder(toks.front()))
                    throw std::invalid_argument("synthetic: marker '" + m +
                                                "' collides with placeholder tokens or does not "
                                                "survive normalization");
            }
        }
    }
}

} // namespace

std::string synthetic_word(std::size_t index)
{
    const std::size_t base = kConsonants.size() * kVowels.size();
    std::string word;
    std::size_t n = index;
    std::size_t syllables = 0;
    do {
        const std::size_t s = n % base;
        word += kConsonants[s / kVowels.size()];
        word += kVowels[s % kVowels.size()];
        n /= base;
        ++syllables;
    } while(n > 0 || syllables < 2);
    return word;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig &config)
{
    validate(config);
    Rng rng(config.seed);
    SyntheticCorpus out;

    out.background_words.reserve(config.vocabulary_size);
    for(std::size_t i = 0; i < config.vocabulary_size; ++i)
        out.background_words.push_back(synthetic_word(i));
    std::size_t next_word = config.vocabulary_size;
    for(const auto &l : config.latents) {
        auto &words = out.topic_words.emplace_back();
        for(std::size_t i = 0; i < l.topic_size; ++i)
            words.push_back(synthetic_word(next_word++));
    }
    const ZipfSampler zipf(config.vocabulary_size, config.zipf_exponent);

    const std::size_t n = config.n_patients;
    const std::size_t n_latent = config.latents.size();

    // latent scores, then per-task labels
    std::vector<std::vector<double>> scores(n_latent, std::vector<double>(n));
    for(std::size_t l = 0; l < n_latent; ++l)
        for(std::size_t p = 0; p < n; ++p)
            scores[l][p] = rng.uniform();

    std::vector<std::vector<bool>> positive(config.tasks.size(), std::vector<bool>(n));
    for(std::size_t t = 0; t < config.tasks.size(); ++t) {
        const auto &task = config.tasks[t];
        if(task.latent.empty()) {
            for(std::size_t p = 0; p < n; ++p)
                positive[t][p] = rng.bernoulli(task.positive_rate);
            continue;
        }
        const auto l = static_cast<std::size_t>(
            std::find_if(config.latents.begin(), config.latents.end(),
                         [&](const SyntheticLatent &x) { return x.name == task.latent; }) -
            config.latents.begin());
        std::vector<std::size_t> order(n);
        for(std::size_t p = 0; p < n; ++p)
            order[p] = p;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return scores[l][a] > scores[l][b]; });
        const auto n_pos = static_cast<std::size_t>(
            std::llround(task.positive_rate * static_cast<double>(n)));
        for(std::size_t r = 0; r < n_pos; ++r)
            positive[t][order[r]] = true;
        for(std::size_t p = 0; p < n; ++p)
            if(rng.bernoulli(task.label_noise))
                positive[t][p] = !positive[t][p];
    }

    // word -> CUI for concept-bearing words
    std::map<std::string, std::string> cui_of;
    if(config.concept_vocabulary > 0) {
        auto cui = [](std::size_t id) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "C%07zu", id);
            return std::string(buf);
        };
        const auto n_concepts = std::min(config.concept_vocabulary, out.background_words.size());
        for(std::size_t i = 0; i < n_concepts; ++i)
            cui_of[out.background_words[i]] = cui(i);
        std::size_t marker_id = 9000000;
        for(const auto &task : config.tasks)
            for(const auto *list : {&task.markers, &task.negative_markers})
                for(const auto &m : *list)
                    if(!cui_of.count(m))
                        cui_of[m] = cui(marker_id++);
    }

    for(std::size_t p = 0; p < n; ++p) {
        char id_buf[32];
        std::snprintf(id_buf, sizeof id_buf, "P%06zu", p + 1);
        const std::string pid = id_buf;

        const std::size_t n_notes =
            config.min_notes + rng.below(config.max_notes - config.min_notes + 1);
        std::vector<std::vector<std::string>> notes(n_notes);
        for(auto &note : notes) {
            const std::size_t len = config.min_note_tokens +
                                    rng.below(config.max_note_tokens - config.min_note_tokens + 1);
            note.reserve(len);
            for(std::size_t k = 0; k < len; ++k) {
                if(rng.bernoulli(config.numeric_rate)) {
                    note.push_back(numeric_token(rng));
                    continue;
                }
                bool topical = false;
                for(std::size_t l = 0; l < n_latent && !topical; ++l) {
                    if(rng.bernoulli(config.latents[l].max_rate * scores[l][p])) {
                        const auto &words = out.topic_words[l];
                        note.push_back(words[rng.below(words.size())]);
                        topical = true;
                    }
                }
                if(!topical)
                    note.push_back(out.background_words[zipf(rng)]);
            }
        }

        for(std::size_t t = 0; t < config.tasks.size(); ++t) {
            const auto &task = config.tasks[t];
            const bool pos = positive[t][p];
            auto inject = [&](const std::vector<std::string> &markers, double prob) {
                for(const auto &m : markers) {
                    if(!rng.bernoulli(prob))
                        continue;
                    for(std::size_t r = 0; r < task.marker_repeats; ++r) {
                        auto &note = notes[rng.below(notes.size())];
                        const auto at = rng.below(note.size() + 1);
                        note.insert(note.begin() + static_cast<std::ptrdiff_t>(at), m);
                    }
                }
            };
            inject(task.markers, pos ? task.injection_probability : task.noise_probability);
            inject(task.negative_markers, pos ? task.noise_probability : task.injection_probability);
            out.labels.push_back({pid, task.name, pos ? task.positive_label : task.negative_label});
        }

        std::int64_t order_key = 0;
        for(auto &note : notes) {
            NoteRecord rec;
            rec.patient_id = pid;
            rec.category = std::string(kNoteCategories[rng.below(std::size(kNoteCategories))]);
            rec.order_key = ++order_key;
            rec.text = join_tokens(note);
            out.notes.push_back(std::move(rec));
        }
        if(rng.bernoulli(config.discharge_rate)) {
            std::vector<std::string> note;
            for(std::size_t k = 0; k < config.min_note_tokens; ++k)
                note.push_back(out.background_words[zipf(rng)]);
            out.notes.push_back({pid, "discharge_report", ++order_key, join_tokens(note)});
        }

        if(config.concept_vocabulary > 0) {
            std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> counts;
            for(const auto &note : notes) {
                for(const auto &w : note) {
                    const auto it = cui_of.find(w);
                    if(it == cui_of.end())
                        continue;
                    auto &c = counts[it->second];
                    if(rng.bernoulli(0.2))
                        ++c.second;
                    else
                        ++c.first;
                }
            }
            for(const auto &[cui, c] : counts) {
                if(c.first)
                    out.concepts.push_back({pid, cui, Assertion::present, c.first});
                if(c.second)
                    out.concepts.push_back({pid, cui, Assertion::absent, c.second});
            }
        }
    }
    return out;
}

void write_synthetic_corpus(const std::filesystem::path &dir, const SyntheticCorpus &corpus)
{
    std::filesystem::create_directories(dir);
    write_notes_tsv(dir / "notes.tsv", corpus.notes);
    write_labels_tsv(dir / "labels.tsv", corpus.labels);
    if(!corpus.concepts.empty())
        write_concepts_tsv(dir / "concepts.tsv", corpus.concepts);
}

} // namespace repvec
