#include "repvec/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace repvec {

namespace {

void activate(Activation a, Eigen::MatrixXd &z)
{
    switch(a) {
    case Activation::sigmoid:
        z = (1.0 + (-z.array()).exp()).inverse().matrix();
        break;
    case Activation::tanh:
        z = z.array().tanh().matrix();
        break;
    case Activation::relu:
        z = z.cwiseMax(0.0);
        break;
    }
}

// Derivative expressed through the activation output.
Eigen::ArrayXXd activation_derivative(Activation a, const Eigen::MatrixXd &out)
{
    switch(a) {
    case Activation::sigmoid:
        return out.array() * (1.0 - out.array());
    case Activation::tanh:
        return 1.0 - out.array().square();
    case Activation::relu:
        return (out.array() > 0.0).cast<double>();
    }
    return {};
}

struct ForwardPass {
    std::vector<Eigen::MatrixXd> hidden; // activations of each hidden layer
    Eigen::MatrixXd logits;
};

void affine_from_inputs(const DenseLayer &layer, const InputMatrix &inputs,
                        std::span<const std::size_t> batch, Eigen::MatrixXd &out)
{
    inputs.multiply(layer.weights, batch, out);
    out.colwise() += layer.bias;
}

ForwardPass forward(const FeedForwardClassifier &model, const InputMatrix &inputs,
                    std::span<const std::size_t> batch)
{
    if(inputs.dim() != model.input_dim)
        throw std::invalid_argument("classifier: input dimension " + std::to_string(inputs.dim()) +
                                    " does not match model dimension " +
                                    std::to_string(model.input_dim));
    ForwardPass f;
    const std::size_t L = model.layers.size() - 1;
    for(std::size_t l = 0; l <= L; ++l) {
        Eigen::MatrixXd z;
        if(l == 0) {
            affine_from_inputs(model.layers[0], inputs, batch, z);
        } else {
            z = model.layers[l].weights * f.hidden.back();
            z.colwise() += model.layers[l].bias;
        }
        if(l < L) {
            activate(model.architecture.activation, z);
            f.hidden.push_back(std::move(z));
        } else {
            f.logits = std::move(z);
        }
    }
    return f;
}

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd &logits)
{
    Eigen::MatrixXd out = logits;
    for(Eigen::Index c = 0; c < out.cols(); ++c) {
        const double m = out.col(c).maxCoeff();
        const double lse = m + std::log((out.col(c).array() - m).exp().sum());
        out.col(c).array() -= lse;
    }
    return out;
}

Eigen::MatrixXd softmax(const Eigen::MatrixXd &logits)
{
    return log_softmax(logits).array().exp().matrix();
}

// Parameter gradients given dL/dlogits for the batch.
std::vector<DenseLayer> backward(const FeedForwardClassifier &model, const InputMatrix &inputs,
                                 std::span<const std::size_t> batch, const ForwardPass &f,
                                 Eigen::MatrixXd delta)
{
    const std::size_t L = model.layers.size() - 1;
    std::vector<DenseLayer> grads(model.layers.size());
    for(std::size_t l = L + 1; l-- > 0;) {
        auto &g = grads[l];
        g.bias = delta.rowwise().sum();
        if(l == 0) {
            g.weights = Eigen::MatrixXd::Zero(model.layers[0].weights.rows(),
                                              model.layers[0].weights.cols());
            inputs.accumulate_outer(delta, batch, g.weights);
        } else {
            const auto &below = f.hidden[l - 1];
            g.weights.noalias() = delta * below.transpose();
            Eigen::MatrixXd next = model.layers[l].weights.transpose() * delta;
            delta = (next.array() * activation_derivative(model.architecture.activation, below)).matrix();
        }
    }
    return grads;
}

std::vector<std::size_t> all_indices(std::size_t n)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

double batch_cross_entropy(const Eigen::MatrixXd &logits, std::span<const std::size_t> classes,
                           std::span<const std::size_t> batch)
{
    const Eigen::MatrixXd lp = log_softmax(logits);
    double total = 0.0;
    for(std::size_t b = 0; b < batch.size(); ++b)
        total -= lp(static_cast<Eigen::Index>(classes[batch[b]]), static_cast<Eigen::Index>(b));
    return total / static_cast<double>(batch.size());
}

std::vector<std::size_t> encode_labels(const FeedForwardClassifier &model,
                                       std::span<const std::string> labels)
{
    std::vector<std::size_t> out;
    out.reserve(labels.size());
    for(const auto &l : labels)
        out.push_back(model.class_index(l));
    return out;
}

void glorot(DenseLayer &layer, Rng &rng)
{
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.weights.rows() + layer.weights.cols()));
    for(Eigen::Index i = 0; i < layer.weights.size(); ++i)
        layer.weights.data()[i] = rng.uniform(-limit, limit);
    layer.bias.setZero();
}

void check_data(const LabeledData &d, const char *what)
{
    if(!d.inputs)
        throw std::invalid_argument(std::string("train_classifier: missing ") + what + " inputs");
    if(d.inputs->size() != d.labels.size())
        throw std::invalid_argument(std::string("train_classifier: ") + what +
                                    " inputs and labels differ in length");
}

} // namespace

std::string_view to_string(Activation a)
{
    switch(a) {
    case Activation::sigmoid:
        return "sigmoid";
    case Activation::tanh:
        return "tanh";
    case Activation::relu:
        return "relu";
    }
    return "?";
}

Activation parse_activation(std::string_view name)
{
    if(name == "sigmoid")
        return Activation::sigmoid;
    if(name == "tanh")
        return Activation::tanh;
    if(name == "relu")
        return Activation::relu;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string describe(const ClassifierArchitecture &a)
{
    if(a.hidden_layers == 0)
        return "0/NA/NA";
    return std::to_string(a.hidden_layers) + "/" + std::to_string(a.width) + "/" +
           std::string(to_string(a.activation));
}

std::size_t FeedForwardClassifier::class_index(std::string_view label) const
{
    const auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if(it == classes.end() || *it != label)
        throw std::invalid_argument("classifier: unknown label '" + std::string(label) + "'");
    return static_cast<std::size_t>(it - classes.begin());
}

bool FeedForwardClassifier::operator==(const FeedForwardClassifier &o) const
{
    return architecture == o.architecture && classes == o.classes && input_dim == o.input_dim &&
           layers == o.layers && training_loss_trace == o.training_loss_trace &&
           validation_loss_trace == o.validation_loss_trace && best_epoch == o.best_epoch;
}

FeedForwardClassifier make_classifier(const ClassifierArchitecture &architecture,
                                      std::size_t input_dim, std::vector<std::string> classes)
{
    if(classes.empty())
        throw std::invalid_argument("classifier: need at least one class");
    if(std::adjacent_find(classes.begin(), classes.end(), std::greater_equal<>()) != classes.end())
        throw std::invalid_argument("classifier: class labels must be sorted and distinct");
    if(architecture.hidden_layers > 0 && architecture.width == 0)
        throw std::invalid_argument("classifier: hidden width must be positive");
    FeedForwardClassifier m;
    m.architecture = architecture;
    if(architecture.hidden_layers == 0) {
        m.architecture.width = 0;
        m.architecture.activation = Activation::sigmoid;
    }
    m.classes = std::move(classes);
    m.input_dim = input_dim;
    auto in = static_cast<Eigen::Index>(input_dim);
    for(std::size_t l = 0; l <= architecture.hidden_layers; ++l) {
        const auto out = static_cast<Eigen::Index>(
            l < architecture.hidden_layers ? architecture.width : m.classes.size());
        m.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
        in = out;
    }
    return m;
}

FeedForwardClassifier train_classifier(const LabeledData &training, const LabeledData &validation,
                                       const ClassifierConfig &config)
{
    check_data(training, "training");
    const bool has_validation = validation.inputs && validation.inputs->size() > 0;
    if(has_validation)
        check_data(validation, "validation");
    if(config.batch_size == 0)
        throw std::invalid_argument("train_classifier: batch_size must be positive");

    std::set<std::string> class_set(training.labels.begin(), training.labels.end());
    if(class_set.size() < 2)
        throw std::invalid_argument("train_classifier: training data has a single class");
    auto model = make_classifier(config.architecture, training.inputs->dim(),
                                 std::vector<std::string>(class_set.begin(), class_set.end()));
    const auto train_y = encode_labels(model, training.labels);
    std::vector<std::size_t> val_y;
    if(has_validation)
        val_y = encode_labels(model, validation.labels);

    Rng rng(config.seed);
    for(auto &layer : model.layers)
        glorot(layer, rng);

    Rmsprop opt(config.optimizer);
    const std::size_t n = training.inputs->size();
    auto order = all_indices(n);
    const auto val_all = has_validation ? all_indices(validation.inputs->size())
                                        : std::vector<std::size_t>{};
    double best = std::numeric_limits<double>::infinity();
    auto best_layers = model.layers;
    std::size_t since_best = 0;

    for(std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double total = 0.0;
        for(std::size_t b = 0; b < n; b += config.batch_size) {
            const std::span<const std::size_t> batch(order.data() + b,
                                                     std::min(config.batch_size, n - b));
            const auto f = forward(model, *training.inputs, batch);
            const double loss = batch_cross_entropy(f.logits, train_y, batch);
            if(!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "train_classifier: non-finite loss at epoch " << epoch << ", batch "
                    << b / config.batch_size;
                throw TrainingError(msg.str());
            }
            total += loss * static_cast<double>(batch.size());
            Eigen::MatrixXd delta = softmax(f.logits);
            for(std::size_t i = 0; i < batch.size(); ++i)
                delta(static_cast<Eigen::Index>(train_y[batch[i]]), static_cast<Eigen::Index>(i)) -= 1.0;
            delta /= static_cast<double>(batch.size());
            const auto grads = backward(model, *training.inputs, batch, f, std::move(delta));
            for(std::size_t l = 0; l < model.layers.size(); ++l) {
                opt.step(2 * l, model.layers[l].weights, grads[l].weights);
                opt.step(2 * l + 1, model.layers[l].bias, grads[l].bias);
            }
        }
        const double train_loss = total / static_cast<double>(n);
        model.training_loss_trace.push_back(train_loss);
        double monitored = train_loss;
        if(has_validation) {
            monitored = batch_cross_entropy(forward(model, *validation.inputs, val_all).logits,
                                            val_y, val_all);
            model.validation_loss_trace.push_back(monitored);
        }
        if(monitored < best) {
            best = monitored;
            best_layers = model.layers;
            model.best_epoch = epoch;
            since_best = 0;
        } else if(++since_best >= config.patience) {
            break;
        }
    }
    model.layers = std::move(best_layers);
    return model;
}

Eigen::MatrixXd predict_proba(const FeedForwardClassifier &model, const InputMatrix &inputs)
{
    const auto idx = all_indices(inputs.size());
    return softmax(forward(model, inputs, idx).logits);
}

Eigen::VectorXd predict_proba(const FeedForwardClassifier &model, const Eigen::VectorXd &input)
{
    return predict_proba(model, InputMatrix(Eigen::MatrixXd(input))).col(0);
}

std::vector<std::size_t> predicted_classes(const Eigen::MatrixXd &probabilities)
{
    std::vector<std::size_t> out(static_cast<std::size_t>(probabilities.cols()));
    for(Eigen::Index c = 0; c < probabilities.cols(); ++c) {
        Eigen::Index best = 0;
        for(Eigen::Index k = 1; k < probabilities.rows(); ++k)
            if(probabilities(k, c) > probabilities(best, c))
                best = k;
        out[static_cast<std::size_t>(c)] = static_cast<std::size_t>(best);
    }
    return out;
}

double cross_entropy(const FeedForwardClassifier &model, const InputMatrix &inputs,
                     std::span<const std::size_t> classes)
{
    const auto idx = all_indices(inputs.size());
    return batch_cross_entropy(forward(model, inputs, idx).logits, classes, idx);
}

std::vector<DenseLayer> cross_entropy_gradients(const FeedForwardClassifier &model,
                                                const InputMatrix &inputs,
                                                std::span<const std::size_t> classes)
{
    const auto idx = all_indices(inputs.size());
    const auto f = forward(model, inputs, idx);
    Eigen::MatrixXd delta = softmax(f.logits);
    for(std::size_t i = 0; i < idx.size(); ++i)
        delta(static_cast<Eigen::Index>(classes[i]), static_cast<Eigen::Index>(i)) -= 1.0;
    delta /= static_cast<double>(idx.size());
    return backward(model, inputs, idx, f, std::move(delta));
}

Eigen::MatrixXd classifier_jacobian(const FeedForwardClassifier &model, const Eigen::VectorXd &input,
                                    OutputMode mode)
{
    const InputMatrix x{Eigen::MatrixXd(input)};
    const std::size_t single[] = {0};
    const auto f = forward(model, x, single);
    const auto K = static_cast<Eigen::Index>(model.num_classes());

    // rows: d output / d logits
    Eigen::MatrixXd J;
    if(mode == OutputMode::probability) {
        const Eigen::VectorXd p = softmax(f.logits).col(0);
        J = -p * p.transpose();
        J.diagonal() += p;
    } else {
        J = Eigen::MatrixXd::Identity(K, K);
    }
    for(std::size_t l = model.layers.size(); l-- > 0;) {
        J = J * model.layers[l].weights;
        if(l > 0)
            J.array().rowwise() *=
                activation_derivative(model.architecture.activation, f.hidden[l - 1]).col(0).transpose();
    }
    return J;
}

Eigen::VectorXd classifier_gradient(const FeedForwardClassifier &model, const Eigen::VectorXd &input,
                                    std::size_t k, OutputMode mode)
{
    if(k >= model.num_classes())
        throw std::invalid_argument("classifier_gradient: class index " + std::to_string(k) +
                                    " out of range");
    return classifier_jacobian(model, input, mode).row(static_cast<Eigen::Index>(k)).transpose();
}

ClassifierArchitecture sample_architecture(const HyperparameterSpace &space, Rng &rng)
{
    if(space.min_layers > space.max_layers || space.min_width > space.max_width ||
       space.width_step == 0 || space.activations.empty() || space.min_width == 0)
        throw std::invalid_argument("hyperparameter space is empty or malformed");
    ClassifierArchitecture a;
    a.hidden_layers = space.min_layers + rng.below(space.max_layers - space.min_layers + 1);
    const std::size_t widths = (space.max_width - space.min_width) / space.width_step + 1;
    a.width = space.min_width + space.width_step * rng.below(widths);
    a.activation = space.activations[rng.below(space.activations.size())];
    if(a.hidden_layers == 0) {
        a.width = 0;
        a.activation = Activation::sigmoid;
    }
    return a;
}

SearchResult random_search(const HyperparameterSpace &space, const LabeledData &training,
                           const LabeledData &validation, const ValidationMetric &metric,
                           const ClassifierConfig &base)
{
    if(space.samples == 0)
        throw std::invalid_argument("random_search: need at least one sample");
    if(!validation.inputs || validation.inputs->size() == 0)
        throw std::invalid_argument("random_search: validation data required");
    Rng rng(space.seed);
    SearchResult result;
    double best = -std::numeric_limits<double>::infinity();
    bool have_best = false;
    for(std::size_t m = 0; m < space.samples; ++m) {
        ClassifierConfig cfg = base;
        cfg.architecture = sample_architecture(space, rng);
        auto model = train_classifier(training, validation, cfg);
        const auto y = encode_labels(model, validation.labels);
        const double score = metric(predict_proba(model, *validation.inputs), y);
        result.candidates.push_back({model.architecture, score});
        const bool better = !std::isnan(score) && (!have_best || score > best);
        if(better || m == 0) {
            if(!std::isnan(score)) {
                have_best = true;
                best = score;
            }
            result.best = m;
            result.model = std::move(model);
        }
    }
    return result;
}

DenseRepresentation concat_representations(const DenseRepresentation &a,
                                           const DenseRepresentation &b)
{
    if(a.patient_id != b.patient_id)
        throw std::invalid_argument("concat_representations: patient id mismatch (" +
                                    a.patient_id + " vs " + b.patient_id + ")");
    DenseRepresentation out;
    out.patient_id = a.patient_id;
    out.values.resize(a.values.size() + b.values.size());
    out.values << a.values, b.values;
    return out;
}

void encode_classifier(const FeedForwardClassifier &model, ByteWriter &out)
{
    out.u64(model.architecture.hidden_layers);
    out.u64(model.architecture.width);
    out.u8(static_cast<std::uint8_t>(model.architecture.activation));
    out.strings(model.classes);
    out.u64(model.input_dim);
    out.u64(model.layers.size());
    for(const auto &l : model.layers) {
        out.matrix(l.weights);
        out.vector(l.bias);
    }
    out.f64s(model.training_loss_trace);
    out.f64s(model.validation_loss_trace);
    out.u64(model.best_epoch);
}

FeedForwardClassifier decode_classifier(ByteReader &in)
{
    FeedForwardClassifier m;
    m.architecture.hidden_layers = in.u64();
    m.architecture.width = in.u64();
    const auto act = in.u8();
    if(act > static_cast<std::uint8_t>(Activation::relu))
        throw SerializationError("classifier: unknown activation tag");
    m.architecture.activation = static_cast<Activation>(act);
    m.classes = in.strings();
    m.input_dim = in.u64();
    const auto n_layers = in.u64();
    if(n_layers != m.architecture.hidden_layers + 1)
        throw SerializationError("classifier: layer count does not match architecture");
    auto expected_in = static_cast<Eigen::Index>(m.input_dim);
    for(std::uint64_t l = 0; l < n_layers; ++l) {
        DenseLayer layer{in.matrix(), in.vector()};
        if(layer.weights.cols() != expected_in || layer.bias.size() != layer.weights.rows())
            throw SerializationError("classifier: inconsistent layer shapes");
        expected_in = layer.weights.rows();
        m.layers.push_back(std::move(layer));
    }
    if(expected_in != static_cast<Eigen::Index>(m.classes.size()))
        throw SerializationError("classifier: output layer does not match class count");
    m.training_loss_trace = in.f64s();
    m.validation_loss_trace = in.f64s();
    m.best_epoch = in.u64();
    in.expect_end();
    return m;
}

void save_classifier(const FeedForwardClassifier &model, const std::filesystem::path &path)
{
    ByteWriter w;
    encode_classifier(model, w);
    write_container(path, ModelType::classifier, w);
}

FeedForwardClassifier load_classifier(const std::filesystem::path &path)
{
    auto r = read_container(path, ModelType::classifier);
    return decode_classifier(r);
}

void write_predictions_tsv(const std::filesystem::path &path, const FeedForwardClassifier &model,
                           std::span<const std::string> patient_ids,
                           std::span<const std::string> true_labels,
                           const Eigen::MatrixXd &probabilities)
{
    if(patient_ids.size() != true_labels.size() ||
       static_cast<Eigen::Index>(patient_ids.size()) != probabilities.cols() ||
       static_cast<Eigen::Index>(model.num_classes()) != probabilities.rows())
        throw std::invalid_argument("write_predictions_tsv: inconsistent sizes");
    std::ofstream out(path);
    if(!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "patient_id\ttrue_label\tpredicted_label";
    for(const auto &c : model.classes)
        out << "\tp_" << c;
    out << '\n' << std::setprecision(12);
    const auto predicted = predicted_classes(probabilities);
    for(std::size_t i = 0; i < patient_ids.size(); ++i) {
        out << patient_ids[i] << '\t' << true_labels[i] << '\t' << model.classes[predicted[i]];
        for(Eigen::Index k = 0; k < probabilities.rows(); ++k)
            out << '\t' << probabilities(k, static_cast<Eigen::Index>(i));
        out << '\n';
    }
}

} // namespace repvec
