#include "repvec/config.hpp"

#include <algorithm>
#include <iterator>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace repvec {

namespace {

constexpr std::string_view known_keys[] {
    "notes", "labels", "concepts", "out", "seed", "task", "feature_set", "representation",
    "min_frequency", "exclude_categories", "positive_label",

    "sdae.hidden", "sdae.corruption", "sdae.epochs", "sdae.batch_size", "sdae.learning_rate",

    "doc2vec.dim", "doc2vec.window", "doc2vec.min_count", "doc2vec.negatives", "doc2vec.epochs",
    "doc2vec.inference_epochs",

    "classifier.preset", "classifier.layers", "classifier.width", "classifier.activation",
    "classifier.batch_size", "classifier.max_epochs", "classifier.patience", "classifier.learning_rate",

    "search.samples", "search.min_layers", "search.max_layers", "search.min_width", "search.max_width",
    "search.width_step", "search.activations",

    "projection.pca_dims", "projection.perplexity", "projection.iterations", "projection.color_task",
    "projection.split", "projection.max_points",

    "interpret.split", "interpret.patient", "interpret.class", "interpret.mode",

    "significance.systems", "significance.iterations", "significance.alpha", "significance.hypotheses",

    "synth.n_patients", "synth.vocabulary_size", "synth.zipf_exponent", "synth.min_notes",
    "synth.max_notes", "synth.min_note_tokens", "synth.max_note_tokens", "synth.numeric_rate",
    "synth.discharge_rate", "synth.concept_vocabulary", "synth.latents", "synth.tasks",
    "evaluate.split",
};

constexpr std::string_view latent_fields[] {"topic_size", "max_rate"};
constexpr std::string_view task_fields[] {
    "markers",          "positive_rate", "injection_probability", "noise_probability",
    "negative_markers", "marker_repeats", "latent",               "label_noise",
    "positive_label",   "negative_label",
};

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if(b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// synth.task.<name>.<field> / synth.latent.<name>.<field>
bool known_nested(std::string_view key)
{
    for(const std::string_view prefix : {"synth.task.", "synth.latent."}) {
        if(key.substr(0, prefix.size()) != prefix)
            continue;
        const auto rest = key.substr(prefix.size());
        const auto dot = rest.rfind('.');
        if(dot == std::string_view::npos || dot == 0)
            return false;
        const auto field = rest.substr(dot + 1);
        if(prefix == "synth.task.")
            return std::find(std::begin(task_fields), std::end(task_fields), field) != std::end(task_fields);
        return std::find(std::begin(latent_fields), std::end(latent_fields), field) != std::end(latent_fields);
    }
    return false;
}

} // namespace

bool is_known_config_key(std::string_view key)
{
    return std::find(std::begin(known_keys), std::end(known_keys), key) != std::end(known_keys) || known_nested(key);
}

PipelineConfig PipelineConfig::parse(std::string_view text, std::filesystem::path base_dir)
{
    PipelineConfig c;
    c._base_dir = std::move(base_dir);
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    while(std::getline(in, line)) {
        ++number;
        const auto t = trim(line);
        if(t.empty() || t[0] == '#')
            continue;
        const auto eq = t.find('=');
        if(eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
        const auto key = trim(std::string_view(t).substr(0, eq));
        if(c.has(key))
            throw ConfigError("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
        try {
            c.set(key, trim(std::string_view(t).substr(eq + 1)));
        } catch(const ConfigError &e) {
            throw ConfigError("config line " + std::to_string(number) + ": " + e.what());
        }
    }
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if(!in)
        throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.parent_path());
}

void PipelineConfig::set(const std::string &key, const std::string &value)
{
    if(key.empty())
        throw ConfigError("empty key");
    if(!is_known_config_key(key))
        throw ConfigError("unknown key '" + key + "'");
    _values[key] = value;
}

std::string PipelineConfig::text(const std::string &key) const
{
    const auto it = _values.find(key);
    if(it == _values.end() || it->second.empty())
        throw ConfigError("missing required key '" + key + "'");
    return it->second;
}

std::string PipelineConfig::text(const std::string &key, const std::string &fallback) const
{
    const auto it = _values.find(key);
    return it == _values.end() ? fallback : it->second;
}

std::filesystem::path PipelineConfig::path(const std::string &key) const
{
    const std::filesystem::path p = text(key);
    return p.is_absolute() || _base_dir.empty() ? p : _base_dir / p;
}

std::optional<std::filesystem::path> PipelineConfig::optional_path(const std::string &key) const
{
    if(!has(key) || _values.at(key).empty())
        return std::nullopt;
    return path(key);
}

double PipelineConfig::real(const std::string &key, double fallback) const
{
    const auto it = _values.find(key);
    if(it == _values.end())
        return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if(used != it->second.size() || !std::isfinite(v))
            throw std::invalid_argument(key);
        return v;
    } catch(const std::exception &) {
        throw ConfigError("key '" + key + "' expects a number, got '" + it->second + "'");
    }
}

std::uint64_t PipelineConfig::integer(const std::string &key, std::uint64_t fallback) const
{
    const auto it = _values.find(key);
    if(it == _values.end())
        return fallback;
    std::uint64_t v = 0;
    const auto &s = it->second;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if(ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + s + "'");
    return v;
}

bool PipelineConfig::flag(const std::string &key, bool fallback) const
{
    const auto it = _values.find(key);
    if(it == _values.end())
        return fallback;
    if(it->second == "true" || it->second == "1")
        return true;
    if(it->second == "false" || it->second == "0")
        return false;
    throw ConfigError("key '" + key + "' expects true or false, got '" + it->second + "'");
}

std::vector<std::string> PipelineConfig::list(const std::string &key, std::vector<std::string> fallback) const
{
    const auto it = _values.find(key);
    if(it == _values.end())
        return fallback;
    std::vector<std::string> out;
    std::istringstream in(it->second);
    std::string item;
    while(std::getline(in, item, ','))
        if(auto t = trim(item); !t.empty())
            out.push_back(std::move(t));
    return out;
}

std::filesystem::path PipelineConfig::out_dir() const
{
    return has("out") ? path("out") : (_base_dir.empty() ? std::filesystem::path(".") : _base_dir);
}

} // namespace repvec
