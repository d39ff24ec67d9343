#include "repvec/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <numeric>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"

#include "repvec/eval.hpp"
#include "repvec/interpret.hpp"
#include "repvec/models.hpp"
#include "repvec/presets.hpp"
#include "repvec/projection.hpp"
#include "repvec/synthetic.hpp"

namespace repvec {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view commands[] = {
    "preprocess", "split",    "featurize", "pretrain-sdae", "train-doc2vec", "train-classifier",
    "search",     "evaluate", "interpret", "project",       "significance",  "synth",
};

std::string hex(const unsigned char *data, std::size_t n)
{
    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for(std::size_t i = 0; i < n; ++i)
        out << std::setw(2) << static_cast<int>(data[i]);
    return out.str();
}

std::ofstream open_out(const fs::path &path)
{
    std::ofstream out(path);
    if(!out)
        throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(12);
    return out;
}

// Artifact bookkeeping for one command invocation.
class Run {
public:
    Run(std::string_view command, const PipelineConfig &config)
        : cfg(config), command(command), out(config.out_dir())
    {
        fs::create_directories(out);
    }

    fs::path artifact(const std::string &name) const { return out / name; }

    fs::path require(const std::string &name, std::string_view producer)
    {
        const auto p = artifact(name);
        if(!fs::exists(p))
            throw MissingArtifactError("missing " + p.string() + "; run `repvec " + std::string(producer) +
                                       "` first");
        _inputs.push_back(p);
        return p;
    }

    // a user-supplied input named by a config key
    fs::path input(const std::string &key)
    {
        const auto p = cfg.path(key);
        if(!fs::exists(p))
            throw ConfigError("key '" + key + "': file " + p.string() + " does not exist");
        _inputs.push_back(p);
        return p;
    }

    fs::path produce(const std::string &name)
    {
        _outputs.push_back(artifact(name));
        return _outputs.back();
    }

    void finish(const std::string &qualifier = {})
    {
        json m;
        m["command"] = command;
        m["version"] = std::string(kVersion);
        json c = json::object();
        for(const auto &[k, v] : cfg.values())
            if(k != "out")
                c[k] = v;
        m["config"] = c;
        m["settings"] = settings;
        m["inputs"] = hashes(_inputs);
        m["outputs"] = hashes(_outputs);
        fs::create_directories(out / "manifest");
        auto f = open_out(out / "manifest" / (command + (qualifier.empty() ? "" : "." + qualifier) + ".json"));
        f << m.dump(2) << '\n';
    }

    const PipelineConfig &cfg;
    std::string command;
    fs::path out;
    json settings = json::object();

private:
    json hashes(const std::vector<fs::path> &paths) const
    {
        json list = json::array();
        std::set<fs::path> seen;
        for(const auto &p : paths) {
            if(!seen.insert(p).second)
                continue;
            // artifacts are recorded relative to the output directory so
            // reruns into different directories hash the same
            const auto rel = p.lexically_relative(out);
            const bool inside = !rel.empty() && *rel.begin() != "..";
            list.push_back({{"path", inside ? rel.generic_string() : p.generic_string()}, {"sha256", sha256_file(p)}});
        }
        return list;
    }

    std::vector<fs::path> _inputs, _outputs;
};

// ---------------------------------------------------------------------------
// documents

void write_documents_tsv(const fs::path &path, std::span<const PatientDocument> docs)
{
    auto out = open_out(path);
    for(const auto &d : docs)
        out << escape_field(d.patient_id) << '\t' << join_tokens(d.tokens) << '\n';
}

std::vector<PatientDocument> read_documents_tsv(const fs::path &path)
{
    std::ifstream in(path);
    if(!in)
        throw std::runtime_error("cannot read " + path.string());
    std::vector<PatientDocument> docs;
    std::string line;
    std::size_t number = 0;
    while(std::getline(in, line)) {
        ++number;
        const auto tab = line.find('\t');
        if(tab == std::string::npos)
            throw CorpusError(path.string() + ":" + std::to_string(number) + ": expected patient_id<TAB>tokens");
        PatientDocument d;
        d.patient_id = unescape_field(std::string_view(line).substr(0, tab));
        std::istringstream toks(line.substr(tab + 1));
        for(std::string t; toks >> t;)
            d.tokens.push_back(t);
        docs.push_back(std::move(d));
    }
    return docs;
}

// ---------------------------------------------------------------------------
// systems and inputs

FeatureKind feature_kind(const PipelineConfig &cfg)
{
    try {
        return parse_feature_kind(cfg.text("feature_set", "bow"));
    } catch(const std::invalid_argument &e) {
        throw ConfigError(e.what());
    }
}

std::string representation(const PipelineConfig &cfg)
{
    const auto r = cfg.text("representation", "sparse");
    if(r != "sparse" && r != "sdae" && r != "doc2vec" && r != "ensemble")
        throw ConfigError("unknown representation '" + r + "' (expected sparse, sdae, doc2vec or ensemble)");
    return r;
}

struct Inputs {
    std::string system;
    std::optional<FeatureSet> sparse;
    std::optional<RepresentationSet> dense;

    bool contains(const std::string &id) const
    {
        return sparse ? sparse->row_of(id).has_value() : dense->column_of(id).has_value();
    }

    std::size_t dim() const { return sparse ? sparse->vocabulary.size() : static_cast<std::size_t>(dense->values.rows()); }

    InputMatrix select(std::span<const std::string> ids) const
    {
        if(sparse) {
            std::vector<SparseVector> rows;
            for(const auto &id : ids)
                rows.push_back(sparse->rows[*sparse->row_of(id)]);
            auto m = InputMatrix(std::move(rows));
            return ids.empty() ? InputMatrix(Eigen::MatrixXd(dim(), 0)) : m;
        }
        Eigen::MatrixXd cols(dense->values.rows(), static_cast<Eigen::Index>(ids.size()));
        for(std::size_t i = 0; i < ids.size(); ++i)
            cols.col(static_cast<Eigen::Index>(i)) = dense->values.col(static_cast<Eigen::Index>(*dense->column_of(ids[i])));
        return InputMatrix(std::move(cols));
    }

    Eigen::MatrixXd dense_rows(std::span<const std::string> ids) const
    {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(dim()));
        for(std::size_t i = 0; i < ids.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            if(sparse)
                X.row(r) = sparse->rows[*sparse->row_of(ids[i])].to_dense().transpose();
            else
                X.row(r) = dense->values.col(static_cast<Eigen::Index>(*dense->column_of(ids[i]))).transpose();
        }
        return X;
    }
};

std::string features_artifact(FeatureKind f)
{
    return "features." + std::string(to_string(f)) + ".bin";
}

Inputs load_inputs(Run &run, const std::string &system)
{
    Inputs in;
    in.system = system;
    if(system == "bow" || system == "bocui") {
        in.sparse = load_feature_set(run.require(features_artifact(parse_feature_kind(system)), "featurize"));
    } else if(system == "sdae-bow" || system == "sdae-bocui") {
        in.dense = load_representations(run.require("representations." + system + ".bin", "pretrain-sdae"));
    } else if(system == "doc2vec") {
        in.dense = load_representations(run.require("representations.doc2vec.bin", "train-doc2vec"));
    } else if(system == "ensemble") {
        const auto d2v = load_representations(run.require("representations.doc2vec.bin", "train-doc2vec"));
        const auto sdae = load_representations(run.require("representations.sdae-bow.bin", "pretrain-sdae"));
        in.dense = concat_representation_sets(d2v, sdae, "ensemble");
    } else {
        throw ConfigError("unknown system '" + system + "'");
    }
    return in;
}

DatasetSplit load_split(Run &run)
{
    return read_split_tsv(run.require("split.tsv", "split"));
}

const std::vector<std::string> &split_part(const DatasetSplit &s, const std::string &name)
{
    if(name == "train")
        return s.train;
    if(name == "validation")
        return s.validation;
    if(name == "test")
        return s.test;
    throw ConfigError("unknown split '" + name + "' (expected train, validation or test)");
}

std::vector<std::string> split_ids(const DatasetSplit &s, const std::string &name)
{
    if(name != "all")
        return split_part(s, name);
    std::vector<std::string> all = s.train;
    all.insert(all.end(), s.validation.begin(), s.validation.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    return all;
}

std::map<std::string, std::string> load_task_labels(Run &run, const std::string &task)
{
    auto grouped = group_labels(read_labels_tsv(run.input("labels")));
    const auto it = grouped.find(task);
    if(it == grouped.end())
        throw ConfigError("task '" + task + "' does not occur in the labels file");
    return std::move(it->second);
}

struct TaskData {
    std::vector<std::string> ids;
    std::vector<std::string> labels;
};

// patients of `ids` that carry a label and a representation
TaskData task_data(std::span<const std::string> ids, const std::map<std::string, std::string> &labels,
                   const Inputs &inputs)
{
    TaskData d;
    for(const auto &id : ids) {
        const auto it = labels.find(id);
        if(it == labels.end() || !inputs.contains(id))
            continue;
        d.ids.push_back(id);
        d.labels.push_back(it->second);
    }
    return d;
}

ClassifierConfig classifier_config(const PipelineConfig &cfg)
{
    ClassifierConfig c;
    c.batch_size = cfg.integer("classifier.batch_size", c.batch_size);
    c.max_epochs = cfg.integer("classifier.max_epochs", c.max_epochs);
    c.patience = cfg.integer("classifier.patience", c.patience);
    c.optimizer.learning_rate = cfg.real("classifier.learning_rate", c.optimizer.learning_rate);
    c.seed = cfg.seed();
    if(c.batch_size == 0 || c.max_epochs == 0)
        throw ConfigError("classifier.batch_size and classifier.max_epochs must be positive");
    return c;
}

Activation activation(const std::string &name)
{
    try {
        return parse_activation(name);
    } catch(const std::invalid_argument &e) {
        throw ConfigError(e.what());
    }
}

ClassifierArchitecture resolve_architecture(const PipelineConfig &cfg, const std::string &task,
                                            const std::string &system, json &settings)
{
    if(cfg.has("classifier.layers")) {
        ClassifierArchitecture a;
        a.hidden_layers = cfg.integer("classifier.layers", 0);
        if(a.hidden_layers > 0) {
            a.width = cfg.integer("classifier.width", 0);
            if(a.width == 0)
                throw ConfigError("classifier.width must be positive when classifier.layers > 0");
            a.activation = activation(cfg.text("classifier.activation", "sigmoid"));
        }
        settings["architecture_source"] = "config";
        return a;
    }
    const auto preset_task = cfg.text("classifier.preset", task);
    const auto preset = find_classifier_preset(preset_task, system);
    if(!preset)
        throw ConfigError("no classifier preset for task '" + preset_task + "' and system '" + system +
                          "'; set classifier.preset to a known task or give classifier.layers");
    settings["architecture_source"] = "preset " + preset_task + "/" + system;
    return *preset;
}

std::string positive_class(const PipelineConfig &cfg, std::span<const std::string> classes)
{
    const auto wanted = cfg.text("positive_label", "1");
    if(std::find(classes.begin(), classes.end(), wanted) != classes.end())
        return wanted;
    return classes.back();
}

std::size_t label_index(const FeedForwardClassifier &model, const std::string &label)
{
    const auto it = std::lower_bound(model.classes.begin(), model.classes.end(), label);
    if(it != model.classes.end() && *it == label)
        return static_cast<std::size_t>(it - model.classes.begin());
    return model.classes.size(); // never predicted
}

std::optional<double> binary_auc(const Eigen::MatrixXd &probs, std::span<const std::size_t> y, std::size_t positive)
{
    std::vector<double> scores(y.size());
    std::vector<int> labels(y.size());
    bool pos = false, neg = false;
    for(std::size_t i = 0; i < y.size(); ++i) {
        scores[i] = probs(static_cast<Eigen::Index>(positive), static_cast<Eigen::Index>(i));
        labels[i] = y[i] == positive;
        (labels[i] ? pos : neg) = true;
    }
    if(!pos || !neg)
        return std::nullopt;
    return roc_auc(scores, labels).area;
}

json architecture_json(const ClassifierArchitecture &a)
{
    return {{"hidden_layers", a.hidden_layers},
            {"width", a.hidden_layers ? json(a.width) : json("NA")},
            {"activation", a.hidden_layers ? json(std::string(to_string(a.activation))) : json("NA")},
            {"describe", describe(a)}};
}

std::string qualifier(const std::string &task, const std::string &system)
{
    return task + "." + system;
}

// ---------------------------------------------------------------------------
// commands

SyntheticConfig synthetic_config(const PipelineConfig &cfg)
{
    SyntheticConfig s;
    s.n_patients = cfg.integer("synth.n_patients", s.n_patients);
    s.vocabulary_size = cfg.integer("synth.vocabulary_size", s.vocabulary_size);
    s.zipf_exponent = cfg.real("synth.zipf_exponent", s.zipf_exponent);
    s.min_notes = cfg.integer("synth.min_notes", s.min_notes);
    s.max_notes = cfg.integer("synth.max_notes", s.max_notes);
    s.min_note_tokens = cfg.integer("synth.min_note_tokens", s.min_note_tokens);
    s.max_note_tokens = cfg.integer("synth.max_note_tokens", s.max_note_tokens);
    s.numeric_rate = cfg.real("synth.numeric_rate", s.numeric_rate);
    s.discharge_rate = cfg.real("synth.discharge_rate", s.discharge_rate);
    s.concept_vocabulary = cfg.integer("synth.concept_vocabulary", s.concept_vocabulary);
    s.seed = cfg.seed();
    for(const auto &name : cfg.list("synth.latents")) {
        SyntheticLatent l;
        l.name = name;
        const auto p = "synth.latent." + name + ".";
        l.topic_size = cfg.integer(p + "topic_size", l.topic_size);
        l.max_rate = cfg.real(p + "max_rate", l.max_rate);
        s.latents.push_back(l);
    }
    for(const auto &name : cfg.list("synth.tasks")) {
        SyntheticTask t;
        t.name = name;
        const auto p = "synth.task." + name + ".";
        t.markers = cfg.list(p + "markers");
        t.negative_markers = cfg.list(p + "negative_markers");
        t.positive_rate = cfg.real(p + "positive_rate", t.positive_rate);
        t.injection_probability = cfg.real(p + "injection_probability", t.injection_probability);
        t.noise_probability = cfg.real(p + "noise_probability", t.noise_probability);
        t.marker_repeats = cfg.integer(p + "marker_repeats", t.marker_repeats);
        t.latent = cfg.text(p + "latent", "");
        t.label_noise = cfg.real(p + "label_noise", t.label_noise);
        t.positive_label = cfg.text(p + "positive_label", t.positive_label);
        t.negative_label = cfg.text(p + "negative_label", t.negative_label);
        s.tasks.push_back(t);
    }
    return s;
}

void cmd_synth(Run &run)
{
    SyntheticCorpus corpus;
    try {
        corpus = generate_synthetic_corpus(synthetic_config(run.cfg));
    } catch(const std::invalid_argument &e) {
        throw ConfigError(std::string("synth: ") + e.what());
    }
    write_synthetic_corpus(run.out, corpus);
    run.produce("notes.tsv");
    run.produce("labels.tsv");
    if(!corpus.concepts.empty())
        run.produce("concepts.tsv");
    run.settings["patients"] = run.cfg.integer("synth.n_patients", SyntheticConfig{}.n_patients);
    run.finish();
}

void cmd_preprocess(Run &run)
{
    const auto excluded = run.cfg.list("exclude_categories", {"discharge_report"});
    const auto notes = ingest_notes(run.input("notes"), {excluded.begin(), excluded.end()});
    const auto bow = build_documents(notes, {}, TokenNormalizer(PlaceholderMode::replace));
    const auto d2v = build_documents(notes, {}, TokenNormalizer(PlaceholderMode::drop));
    write_documents_tsv(run.produce("documents.bow.tsv"), bow);
    write_documents_tsv(run.produce("documents.doc2vec.tsv"), d2v);
    run.settings["patients"] = bow.size();
    run.settings["excluded_categories"] = excluded;
    run.finish();
}

void cmd_split(Run &run)
{
    std::vector<std::string> ids;
    for(const auto &d : read_documents_tsv(run.require("documents.bow.tsv", "preprocess")))
        ids.push_back(d.patient_id);
    const auto split = split_dataset(ids, run.cfg.seed());
    write_split_tsv(run.produce("split.tsv"), split);
    run.settings["train"] = split.train.size();
    run.settings["validation"] = split.validation.size();
    run.settings["test"] = split.test.size();
    run.finish();
}

void cmd_featurize(Run &run)
{
    const auto kind = feature_kind(run.cfg);
    const auto min_frequency = run.cfg.integer("min_frequency", 5);
    if(min_frequency == 0)
        throw ConfigError("min_frequency must be at least 1");
    if(kind == FeatureKind::bocui && !run.cfg.optional_path("concepts"))
        throw ConfigError("feature_set=bocui requires a concepts file (key 'concepts')");
    const auto docs = read_documents_tsv(run.require("documents.bow.tsv", "preprocess"));
    const auto split = load_split(run);
    const std::set<std::string> train(split.train.begin(), split.train.end());

    FeatureSet features;
    if(kind == FeatureKind::bow) {
        std::map<std::string, TermCounts> counts;
        for(const auto &d : docs)
            counts[d.patient_id] = count_terms(d.tokens);
        features = build_feature_set(counts, train, min_frequency);
    } else {
        const auto annotations = read_concepts_tsv(run.input("concepts"));
        std::vector<std::string> ids;
        for(const auto &d : docs)
            ids.push_back(d.patient_id);
        features = build_concept_features(annotations, ids, train, min_frequency);
    }
    save_feature_set(features, run.produce(features_artifact(kind)));
    run.settings["feature_set"] = std::string(to_string(kind));
    run.settings["vocabulary_size"] = features.vocabulary.size();
    run.settings["min_frequency"] = min_frequency;
    run.finish(std::string(to_string(kind)));
}

SdaeConfig sdae_config(const PipelineConfig &cfg, FeatureKind kind)
{
    auto c = sdae_preset(kind);
    if(cfg.has("sdae.hidden")) {
        const auto hidden = cfg.list("sdae.hidden");
        auto corruption = cfg.list("sdae.corruption");
        if(corruption.empty())
            corruption.push_back(std::to_string(c.layers.front().corruption));
        if(corruption.size() == 1)
            corruption.assign(hidden.size(), corruption[0]);
        if(hidden.empty() || corruption.size() != hidden.size())
            throw ConfigError("sdae.hidden and sdae.corruption must list one value per layer");
        c.layers.clear();
        for(std::size_t l = 0; l < hidden.size(); ++l) {
            try {
                c.layers.push_back({std::stoul(hidden[l]), std::stod(corruption[l])});
            } catch(const std::exception &) {
                throw ConfigError("invalid sdae layer '" + hidden[l] + "/" + corruption[l] + "'");
            }
        }
    } else if(cfg.has("sdae.corruption")) {
        throw ConfigError("sdae.corruption requires sdae.hidden");
    }
    c.epochs = cfg.integer("sdae.epochs", c.epochs);
    c.batch_size = cfg.integer("sdae.batch_size", c.batch_size);
    c.optimizer.learning_rate = cfg.real("sdae.learning_rate", c.optimizer.learning_rate);
    c.seed = cfg.seed();
    return c;
}

void cmd_pretrain_sdae(Run &run)
{
    const auto kind = feature_kind(run.cfg);
    const auto features = load_feature_set(run.require(features_artifact(kind), "featurize"));
    const auto split = load_split(run);
    const auto config = sdae_config(run.cfg, kind);

    std::vector<SparseVector> training;
    for(const auto &id : split.train)
        if(const auto r = features.row_of(id))
            training.push_back(features.rows[*r]);
    const auto model = pretrain_stack(config, InputMatrix(std::move(training)));
    const auto system = "sdae-" + std::string(to_string(kind));
    save_sdae(model, run.produce("sdae." + std::string(to_string(kind)) + ".bin"));

    RepresentationSet reps;
    reps.system = system;
    reps.patient_ids = features.patient_ids;
    reps.values = represent_all(model, InputMatrix(features.rows));
    save_representations(reps, run.produce("representations." + system + ".bin"));

    json layers = json::array();
    for(const auto &l : config.layers)
        layers.push_back({{"hidden_dim", l.hidden_dim}, {"corruption", l.corruption}});
    run.settings["sdae"] = {{"layers", layers},
                            {"epochs", config.epochs},
                            {"batch_size", config.batch_size},
                            {"learning_rate", config.optimizer.learning_rate}};
    run.finish(std::string(to_string(kind)));
}

DbowConfig dbow_config(const PipelineConfig &cfg)
{
    auto c = dbow_preset();
    c.dim = cfg.integer("doc2vec.dim", c.dim);
    c.window = cfg.integer("doc2vec.window", c.window);
    c.min_count = cfg.integer("doc2vec.min_count", c.min_count);
    c.negatives = cfg.integer("doc2vec.negatives", c.negatives);
    c.epochs = cfg.integer("doc2vec.epochs", c.epochs);
    c.max_inference_epochs = cfg.integer("doc2vec.inference_epochs", c.max_inference_epochs);
    c.seed = cfg.seed();
    if(c.dim == 0 || c.epochs == 0)
        throw ConfigError("doc2vec.dim and doc2vec.epochs must be positive");
    return c;
}

void cmd_train_doc2vec(Run &run)
{
    if(feature_kind(run.cfg) != FeatureKind::bow)
        throw ConfigError("doc2vec is trained on words only; feature_set must be bow");
    const auto docs = read_documents_tsv(run.require("documents.doc2vec.tsv", "preprocess"));
    const auto split = load_split(run);
    const std::set<std::string> train(split.train.begin(), split.train.end());
    std::vector<PatientDocument> training;
    for(const auto &d : docs)
        if(train.count(d.patient_id))
            training.push_back(d);
    const auto config = dbow_config(run.cfg);
    const auto model = train_dbow(training, config);
    save_dbow(model, run.produce("doc2vec.bin"));

    // training patients keep their learned vectors, everyone else is inferred
    RepresentationSet reps;
    reps.system = "doc2vec";
    std::vector<const PatientDocument *> sorted;
    for(const auto &d : docs)
        sorted.push_back(&d);
    std::sort(sorted.begin(), sorted.end(),
              [](const auto *a, const auto *b) { return a->patient_id < b->patient_id; });
    reps.values.resize(static_cast<Eigen::Index>(config.dim), static_cast<Eigen::Index>(sorted.size()));
    std::size_t inferred = 0, degenerate = 0;
    for(std::size_t i = 0; i < sorted.size(); ++i) {
        const auto &d = *sorted[i];
        reps.patient_ids.push_back(d.patient_id);
        const auto col = static_cast<Eigen::Index>(i);
        if(const auto j = model.document_index(d.patient_id)) {
            reps.values.col(col) = model.document_vectors.col(static_cast<Eigen::Index>(*j));
        } else {
            const auto v = infer_vector(model, d.tokens, mix_seed(config.seed, i));
            reps.values.col(col) = v.vector;
            ++inferred;
            degenerate += v.degenerate;
        }
    }
    save_representations(reps, run.produce("representations.doc2vec.bin"));
    run.settings["doc2vec"] = {{"dim", config.dim},          {"window", config.window},
                               {"min_count", config.min_count}, {"negatives", config.negatives},
                               {"epochs", config.epochs},    {"vocabulary_size", model.vocabulary.size()}};
    run.settings["inferred"] = inferred;
    run.settings["degenerate_inferred"] = degenerate;
    run.finish();
}

struct ClassifierInputs {
    std::string task, system;
    Inputs inputs;
    std::map<std::string, std::string> labels;
    DatasetSplit split;
};

ClassifierInputs classifier_inputs(Run &run)
{
    ClassifierInputs c;
    c.task = run.cfg.text("task");
    c.system = system_name(run.cfg);
    c.inputs = load_inputs(run, c.system);
    c.labels = load_task_labels(run, c.task);
    c.split = load_split(run);
    return c;
}

// validation rows whose label the model knows
TaskData known_labels(TaskData d, std::span<const std::string> train_labels)
{
    const std::set<std::string> known(train_labels.begin(), train_labels.end());
    TaskData out;
    for(std::size_t i = 0; i < d.ids.size(); ++i)
        if(known.count(d.labels[i])) {
            out.ids.push_back(d.ids[i]);
            out.labels.push_back(d.labels[i]);
        }
    return out;
}

void cmd_train_classifier(Run &run, bool search)
{
    auto ci = classifier_inputs(run);
    const auto train = task_data(ci.split.train, ci.labels, ci.inputs);
    const auto val = known_labels(task_data(ci.split.validation, ci.labels, ci.inputs), train.labels);
    if(train.ids.empty())
        throw std::runtime_error("no labelled training patients for task '" + ci.task + "'");
    const auto X = ci.inputs.select(train.ids);
    const auto V = ci.inputs.select(val.ids);
    const LabeledData training{&X, train.labels};
    const LabeledData validation{val.ids.empty() ? nullptr : &V, val.labels};
    auto config = classifier_config(run.cfg);

    FeedForwardClassifier model;
    if(!search) {
        config.architecture = resolve_architecture(run.cfg, ci.task, ci.system, run.settings);
        model = train_classifier(training, validation, config);
    } else {
        HyperparameterSpace space;
        space.min_layers = run.cfg.integer("search.min_layers", space.min_layers);
        space.max_layers = run.cfg.integer("search.max_layers", space.max_layers);
        space.min_width = run.cfg.integer("search.min_width", space.min_width);
        space.max_width = run.cfg.integer("search.max_width", space.max_width);
        space.width_step = run.cfg.integer("search.width_step", space.width_step);
        space.samples = run.cfg.integer("search.samples", space.samples);
        space.seed = run.cfg.seed();
        if(run.cfg.has("search.activations")) {
            space.activations.clear();
            for(const auto &a : run.cfg.list("search.activations"))
                space.activations.push_back(activation(a));
        }
        if(space.samples == 0 || space.min_layers > space.max_layers || space.min_width > space.max_width ||
           space.width_step == 0 || space.activations.empty())
            throw ConfigError("invalid search space");
        if(val.ids.empty())
            throw std::runtime_error("search needs labelled validation patients");

        std::set<std::string> classes(train.labels.begin(), train.labels.end());
        const std::vector<std::string> sorted(classes.begin(), classes.end());
        const auto positive = static_cast<std::size_t>(
            std::find(sorted.begin(), sorted.end(), positive_class(run.cfg, sorted)) - sorted.begin());
        ValidationMetric metric;
        if(sorted.size() == 2)
            metric = [positive](const Eigen::MatrixXd &p, std::span<const std::size_t> y) {
                return binary_auc(p, y, positive).value_or(std::numeric_limits<double>::quiet_NaN());
            };
        else
            metric = [](const Eigen::MatrixXd &p, std::span<const std::size_t> y) {
                return weighted_f_score(predicted_classes(p), y);
            };
        auto result = random_search(space, training, validation, metric, config);
        auto log = open_out(run.produce("search." + qualifier(ci.task, ci.system) + ".tsv"));
        log << "candidate\tlayers\twidth\tactivation\tscore\n";
        for(std::size_t i = 0; i < result.candidates.size(); ++i) {
            const auto &a = result.candidates[i].architecture;
            log << i << '\t' << a.hidden_layers << '\t' << (a.hidden_layers ? std::to_string(a.width) : "NA")
                << '\t' << (a.hidden_layers ? std::string(to_string(a.activation)) : "NA") << '\t'
                << result.candidates[i].score << '\n';
        }
        run.settings["metric"] = sorted.size() == 2 ? "auc" : "weighted_f";
        run.settings["samples"] = space.samples;
        model = std::move(result.model);
    }
    save_classifier(model, run.produce("classifier." + qualifier(ci.task, ci.system) + ".bin"));
    run.settings["task"] = ci.task;
    run.settings["system"] = ci.system;
    run.settings["architecture"] = architecture_json(model.architecture);
    run.settings["classes"] = model.classes;
    run.settings["training_patients"] = train.ids.size();
    run.settings["validation_patients"] = val.ids.size();
    run.settings["best_epoch"] = model.best_epoch;
    run.finish(qualifier(ci.task, ci.system));
}

void cmd_evaluate(Run &run)
{
    auto ci = classifier_inputs(run);
    const auto q = qualifier(ci.task, ci.system);
    const auto model = load_classifier(run.require("classifier." + q + ".bin", "train-classifier"));
    const auto split_name = run.cfg.text("evaluate.split", "test");
    const auto data = task_data(split_part(ci.split, split_name), ci.labels, ci.inputs);
    if(data.ids.empty())
        throw std::runtime_error("no labelled " + split_name + " patients for task '" + ci.task + "'");
    const auto probs = predict_proba(model, ci.inputs.select(data.ids));
    write_predictions_tsv(run.produce("predictions." + q + ".tsv"), model, data.ids, data.labels, probs);

    std::vector<std::size_t> y, pred = predicted_classes(probs);
    double correct = 0;
    for(std::size_t i = 0; i < data.labels.size(); ++i) {
        y.push_back(label_index(model, data.labels[i]));
        correct += y.back() == pred[i];
    }
    std::vector<std::pair<std::string, double>> metrics = {
        {"n", static_cast<double>(y.size())},
        {"accuracy", correct / static_cast<double>(y.size())},
        {"weighted_f", weighted_f_score(pred, y)},
    };
    if(model.num_classes() == 2) {
        const auto pos = label_index(model, positive_class(run.cfg, model.classes));
        if(const auto auc = binary_auc(probs, y, pos))
            metrics.push_back({"auc", *auc});
    }
    write_metrics_report(run.produce("metrics." + q + ".tsv"), metrics);
    run.settings["split"] = split_name;
    run.finish(q);
}

void write_ranked(const fs::path &path, const std::string &header,
                  const std::vector<std::pair<std::string, std::vector<double>>> &rows)
{
    auto out = open_out(path);
    out << header << '\n';
    for(std::size_t i = 0; i < rows.size(); ++i) {
        out << i + 1 << '\t' << rows[i].first;
        for(const double v : rows[i].second)
            out << '\t' << v;
        out << '\n';
    }
}

void write_correlation(const fs::path &path, const CorrelationResult &c)
{
    auto out = open_out(path);
    auto put = [&](const char *name, const std::optional<double> &v) {
        out << name << '\t';
        if(v)
            out << *v;
        else
            out << "NA";
        out << '\n';
    };
    out << "n\t" << c.n << '\n';
    put("spearman", c.spearman);
    put("spearman_p", c.spearman_p);
    put("kendall", c.kendall);
    put("kendall_p", c.kendall_p);
}

void cmd_interpret(Run &run)
{
    const auto rep = representation(run.cfg);
    if(rep == "doc2vec" || rep == "ensemble")
        throw ConfigError("interpret supports the sparse and sdae representations only");
    const auto kind = feature_kind(run.cfg);
    const auto system = system_name(run.cfg);
    const auto features = load_feature_set(run.require(features_artifact(kind), "featurize"));
    const auto split = load_split(run);
    const auto ids = split_ids(split, run.cfg.text("interpret.split", "test"));
    std::vector<SparseVector> rows;
    for(const auto &id : ids)
        if(const auto r = features.row_of(id))
            rows.push_back(features.rows[*r]);
    const auto &terms = features.vocabulary.terms();
    std::vector<std::size_t> in_vocabulary(terms.size() - 1);
    std::iota(in_vocabulary.begin(), in_vocabulary.end(), std::size_t{1});
    const auto fsname = std::string(to_string(kind));

    std::optional<SdaeModel> sdae;
    if(rep == "sdae") {
        sdae = load_sdae(run.require("sdae." + fsname + ".bin", "pretrain-sdae"));
        std::vector<double> freq;
        for(const auto f : features.vocabulary.frequencies())
            freq.push_back(static_cast<double>(f));
        const auto profile = reconstruction_profile(*sdae, InputMatrix(rows), terms, freq, in_vocabulary);
        std::vector<std::pair<std::string, std::vector<double>>> ranked;
        for(const auto p : profile.ranking)
            ranked.push_back({profile.terms[p], {profile.errors[p], profile.frequencies[p]}});
        write_ranked(run.produce("reconstruction." + fsname + ".tsv"), "rank\tterm\terror\tfrequency", ranked);
        write_correlation(run.produce("reconstruction_correlation." + fsname + ".tsv"), frequency_correlation(profile));
    }

    if(run.cfg.has("task")) {
        const auto task = run.cfg.text("task");
        const auto labels = load_task_labels(run, task);
        std::vector<SparseVector> train_rows;
        std::vector<std::string> train_labels;
        for(const auto &id : split.train) {
            const auto it = labels.find(id);
            const auto r = features.row_of(id);
            if(it == labels.end() || !r)
                continue;
            train_rows.push_back(features.rows[*r]);
            train_labels.push_back(it->second);
        }
        const auto chi = chi_square_feature_ranking(InputMatrix(train_rows), train_labels, terms);
        std::vector<std::pair<std::string, std::vector<double>>> ranked;
        for(const auto &e : chi)
            if(e.feature != Vocabulary::oov_index)
                ranked.push_back({e.term, {e.statistic}});
        write_ranked(run.produce("chi2." + task + "." + fsname + ".tsv"), "rank\tterm\tchi2", ranked);

        if(sdae) {
            const auto q = qualifier(task, system);
            const auto clf = load_classifier(run.require("classifier." + q + ".bin", "train-classifier"));
            SensitivityOptions opts;
            const auto mode = run.cfg.text("interpret.mode", "probability");
            if(mode != "probability" && mode != "logit")
                throw ConfigError("interpret.mode must be probability or logit");
            opts.mode = mode == "logit" ? OutputMode::logit : OutputMode::probability;
            opts.features = in_vocabulary;
            write_significance_tsv(run.produce("significance." + q + ".tsv"),
                                   aggregate_report(*sdae, clf, InputMatrix(rows), terms, opts));
            if(run.cfg.has("interpret.patient")) {
                const auto patient = run.cfg.text("interpret.patient");
                const auto r = features.row_of(patient);
                if(!r)
                    throw ConfigError("interpret.patient '" + patient + "' is not in the cohort");
                std::optional<std::size_t> cls;
                if(run.cfg.has("interpret.class")) {
                    const auto k = label_index(clf, run.cfg.text("interpret.class"));
                    if(k == clf.num_classes())
                        throw ConfigError("interpret.class is not a class of the classifier");
                    cls = k;
                }
                write_significance_tsv(run.produce("significance." + q + "." + patient + ".tsv"),
                                       instance_report(*sdae, clf, features.rows[*r], terms, cls, opts));
            }
        }
    }
    run.settings["instances"] = rows.size();
    run.finish(run.cfg.has("task") ? qualifier(run.cfg.text("task"), system) : system);
}

void cmd_project(Run &run)
{
    const auto system = system_name(run.cfg);
    const auto inputs = load_inputs(run, system);
    const auto split = load_split(run);
    std::vector<std::string> ids;
    for(const auto &id : split_ids(split, run.cfg.text("projection.split", "test")))
        if(inputs.contains(id))
            ids.push_back(id);
    std::sort(ids.begin(), ids.end());

    ProjectionConfig pc;
    pc.pca_dims = run.cfg.integer("projection.pca_dims", pc.pca_dims);
    pc.tsne.perplexity = run.cfg.real("projection.perplexity", system.rfind("sdae", 0) == 0 ? 50.0 : 30.0);
    pc.tsne.iterations = run.cfg.integer("projection.iterations", pc.tsne.iterations);
    pc.tsne.max_points = run.cfg.integer("projection.max_points", pc.tsne.max_points);
    pc.tsne.seed = run.cfg.seed();
    const double n = static_cast<double>(ids.size());
    if(pc.pca_dims == 0 || pc.tsne.iterations == 0)
        throw ConfigError("projection.pca_dims and projection.iterations must be positive");
    if(!(pc.tsne.perplexity < (n - 1) / 3))
        throw ConfigError("projection.perplexity " + std::to_string(pc.tsne.perplexity) + " is infeasible for " +
                          std::to_string(ids.size()) + " points; it must be below (n - 1) / 3");
    if(ids.size() > pc.tsne.max_points)
        throw ConfigError(std::to_string(ids.size()) + " points exceed projection.max_points");

    std::vector<std::string> colors(ids.size(), "NA");
    const auto color_task = run.cfg.text("projection.color_task", run.cfg.text("task", ""));
    if(!color_task.empty()) {
        const auto labels = load_task_labels(run, color_task);
        for(std::size_t i = 0; i < ids.size(); ++i)
            if(const auto it = labels.find(ids[i]); it != labels.end())
                colors[i] = it->second;
    }
    const auto result = project(inputs.dense_rows(ids), pc);
    write_projection_tsv(run.produce("projection." + system + ".tsv"), ids, result.tsne.embedding, colors);
    {
        auto out = open_out(run.produce("projection." + system + ".pca.tsv"));
        out << "component\texplained_variance_ratio\n";
        for(Eigen::Index c = 0; c < result.pca.explained_variance_ratio.size(); ++c)
            out << c + 1 << '\t' << result.pca.explained_variance_ratio[c] << '\n';
    }
    {
        auto out = open_out(run.produce("projection." + system + ".kl.tsv"));
        out << "iteration\tkl\n";
        for(const auto &t : result.tsne.kl_trace)
            out << t.iteration << '\t' << t.kl << '\n';
    }
    run.settings["points"] = ids.size();
    run.settings["pca_dims"] = result.pca.projected.cols();
    run.settings["pca_rank_deficient"] = result.pca.rank_deficient;
    run.settings["perplexity"] = pc.tsne.perplexity;
    run.settings["iterations"] = pc.tsne.iterations;
    run.finish(system);
}

struct Predictions {
    std::vector<std::string> ids, truth, classes;
    Eigen::MatrixXd probs; // K x n
};

Predictions read_predictions(const fs::path &path)
{
    std::ifstream in(path);
    if(!in)
        throw std::runtime_error("cannot read " + path.string());
    auto split_tabs = [](const std::string &line) {
        std::vector<std::string> f;
        std::istringstream s(line);
        for(std::string x; std::getline(s, x, '\t');)
            f.push_back(x);
        return f;
    };
    std::string line;
    std::getline(in, line);
    const auto header = split_tabs(line);
    if(header.size() < 4 || header[0] != "patient_id")
        throw std::runtime_error(path.string() + ": not a predictions file");
    Predictions p;
    for(std::size_t c = 3; c < header.size(); ++c)
        p.classes.push_back(header[c].substr(2));
    std::vector<std::vector<double>> cols;
    while(std::getline(in, line)) {
        const auto f = split_tabs(line);
        if(f.size() != header.size())
            throw std::runtime_error(path.string() + ": ragged row");
        p.ids.push_back(f[0]);
        p.truth.push_back(f[1]);
        std::vector<double> v;
        for(std::size_t c = 3; c < f.size(); ++c)
            v.push_back(std::stod(f[c]));
        cols.push_back(std::move(v));
    }
    p.probs.resize(static_cast<Eigen::Index>(p.classes.size()), static_cast<Eigen::Index>(cols.size()));
    for(std::size_t i = 0; i < cols.size(); ++i)
        for(std::size_t k = 0; k < p.classes.size(); ++k)
            p.probs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = cols[i][k];
    return p;
}

void cmd_significance(Run &run)
{
    const auto task = run.cfg.text("task");
    const auto systems = run.cfg.list("significance.systems");
    if(systems.size() < 2)
        throw ConfigError("significance.systems must list at least two systems");
    const auto iterations = run.cfg.integer("significance.iterations", 10000);
    const auto alpha = run.cfg.real("significance.alpha", 0.05);
    const auto hypotheses = run.cfg.integer("significance.hypotheses", 54);
    if(iterations == 0 || hypotheses == 0)
        throw ConfigError("significance.iterations and significance.hypotheses must be positive");

    std::vector<Predictions> preds;
    for(const auto &s : systems) {
        preds.push_back(read_predictions(run.require("predictions." + qualifier(task, s) + ".tsv", "evaluate")));
        if(preds.back().ids != preds.front().ids || preds.back().truth != preds.front().truth)
            throw std::runtime_error("predictions for " + s + " cover different test patients than " + systems[0]);
        if(preds.back().classes != preds.front().classes)
            throw std::runtime_error("predictions for " + s + " use different classes than " + systems[0]);
    }
    const auto &classes = preds.front().classes;
    std::vector<std::size_t> y;
    for(const auto &t : preds.front().truth) {
        const auto it = std::find(classes.begin(), classes.end(), t);
        y.push_back(static_cast<std::size_t>(it - classes.begin()));
    }
    const bool binary = classes.size() == 2;
    const auto positive = static_cast<std::size_t>(
        std::find(classes.begin(), classes.end(), positive_class(run.cfg, classes)) - classes.begin());
    // binary tasks: rows ordered so the positive class is row 1
    auto outputs = [&](const Predictions &p) -> Eigen::MatrixXd {
        if(!binary)
            return p.probs;
        Eigen::MatrixXd m(2, p.probs.cols());
        m.row(0) = p.probs.row(static_cast<Eigen::Index>(1 - positive));
        m.row(1) = p.probs.row(static_cast<Eigen::Index>(positive));
        return m;
    };
    std::vector<std::size_t> yy = y;
    if(binary)
        for(auto &v : yy)
            v = v == positive ? 1 : 0;
    const PairedMetric metric = binary ? PairedMetric(auc_metric) : PairedMetric(weighted_f_metric);
    const std::string statistic = binary ? "auc" : "weighted_f";

    std::vector<SignificanceRow> rows;
    std::vector<double> p_values;
    auto agreement = open_out(run.produce("agreement." + task + ".tsv"));
    agreement << "system_a\tsystem_b\tkappa\n";
    std::size_t pair = 0;
    for(std::size_t a = 0; a < systems.size(); ++a)
        for(std::size_t b = a + 1; b < systems.size(); ++b, ++pair) {
            const auto r = approx_randomization_test(outputs(preds[a]), outputs(preds[b]), yy, metric, iterations,
                                                     mix_seed(run.cfg.seed(), pair), statistic);
            rows.push_back({task, systems[a], systems[b], statistic, r.p_value, false});
            p_values.push_back(r.p_value);
            const auto kappa = cohens_kappa(predicted_classes(preds[a].probs), predicted_classes(preds[b].probs));
            agreement << systems[a] << '\t' << systems[b] << '\t';
            if(kappa)
                agreement << *kappa;
            else
                agreement << "NA";
            agreement << '\n';
        }
    const auto decision = bonferroni(p_values, alpha, hypotheses);
    for(std::size_t i = 0; i < rows.size(); ++i)
        rows[i].significant = decision.significant[i];
    write_significance_report(run.produce("significance." + task + ".tsv"), rows);
    run.settings["iterations"] = iterations;
    run.settings["alpha"] = alpha;
    run.settings["hypotheses"] = hypotheses;
    run.settings["threshold"] = decision.threshold;
    run.finish(task);
}

} // namespace

std::span<const std::string_view> pipeline_commands()
{
    return commands;
}

std::string system_name(const PipelineConfig &config)
{
    const auto rep = representation(config);
    const auto kind = feature_kind(config);
    if(rep == "sparse")
        return std::string(to_string(kind));
    if(rep == "sdae")
        return "sdae-" + std::string(to_string(kind));
    if(kind == FeatureKind::bocui)
        throw ConfigError("representation " + rep + " is only defined over words; use feature_set=bow");
    return rep;
}

void execute_command(std::string_view command, const PipelineConfig &config)
{
    if(std::find(std::begin(commands), std::end(commands), command) == std::end(commands))
        throw ConfigError("unknown command '" + std::string(command) + "'");
    Run run(command, config);
    if(command == "synth")
        cmd_synth(run);
    else if(command == "preprocess")
        cmd_preprocess(run);
    else if(command == "split")
        cmd_split(run);
    else if(command == "featurize")
        cmd_featurize(run);
    else if(command == "pretrain-sdae")
        cmd_pretrain_sdae(run);
    else if(command == "train-doc2vec")
        cmd_train_doc2vec(run);
    else if(command == "train-classifier")
        cmd_train_classifier(run, false);
    else if(command == "search")
        cmd_train_classifier(run, true);
    else if(command == "evaluate")
        cmd_evaluate(run);
    else if(command == "interpret")
        cmd_interpret(run);
    else if(command == "project")
        cmd_project(run);
    else
        cmd_significance(run);
}

int run_command(std::string_view command, const PipelineConfig &config, std::ostream &err)
{
    try {
        execute_command(command, config);
        return 0;
    } catch(const ConfigError &e) {
        err << "configuration error: " << e.what() << '\n';
        return 2;
    } catch(const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

std::string sha256_file(const fs::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if(!in)
        throw std::runtime_error("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if(!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest initialisation failed");
    char buf[1 << 16];
    while(in) {
        in.read(buf, sizeof buf);
        if(in.gcount() > 0)
            EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    return hex(digest, len);
}

} // namespace repvec
