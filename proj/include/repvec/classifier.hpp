#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "repvec/errors.hpp"
#include "repvec/rmsprop.hpp"
#include "repvec/rng.hpp"
#include "repvec/serialize.hpp"
#include "repvec/sparse.hpp"

namespace repvec {

enum class Activation { sigmoid, tanh, relu };

std::string_view to_string(Activation a);
/// Throws std::invalid_argument for unknown names.
Activation parse_activation(std::string_view name);

/// hidden_layers = 0 is softmax regression on the raw input; width and
/// activation are then ignored.
struct ClassifierArchitecture {
    std::size_t hidden_layers = 0;
    std::size_t width = 0;
    Activation activation = Activation::sigmoid;

    bool operator==(const ClassifierArchitecture &) const = default;
};

std::string describe(const ClassifierArchitecture &a);

struct ClassifierConfig {
    ClassifierArchitecture architecture;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 200;
    std::size_t patience = 5;
    RmspropConfig optimizer;
    std::uint64_t seed = 0;
};

struct DenseLayer {
    Eigen::MatrixXd weights; // out x in
    Eigen::VectorXd bias;

    bool operator==(const DenseLayer &o) const
    {
        return weights == o.weights && bias == o.bias;
    }
};

struct FeedForwardClassifier {
    ClassifierArchitecture architecture;
    std::vector<std::string> classes; // class index -> label, sorted
    std::size_t input_dim = 0;
    /// Hidden layers followed by the softmax output layer.
    std::vector<DenseLayer> layers;
    std::vector<double> training_loss_trace;
    std::vector<double> validation_loss_trace;
    std::size_t best_epoch = 0;

    std::size_t num_classes() const { return classes.size(); }
    /// Throws std::invalid_argument for labels the model was not trained on.
    std::size_t class_index(std::string_view label) const;

    bool operator==(const FeedForwardClassifier &o) const;
};

/// Zero-initialized model with the given shape.
FeedForwardClassifier make_classifier(const ClassifierArchitecture &architecture,
                                      std::size_t input_dim, std::vector<std::string> classes);

struct LabeledData {
    const InputMatrix *inputs = nullptr;
    std::span<const std::string> labels;
};

/// Mini-batch RMSProp on mean categorical cross-entropy. Early stopping on
/// validation cross-entropy (training cross-entropy when no validation set
/// is given); the parameters of the best epoch are restored. Throws
/// std::invalid_argument when training data has a single class.
FeedForwardClassifier train_classifier(const LabeledData &training, const LabeledData &validation,
                                       const ClassifierConfig &config);

/// K x n class probabilities, one column per instance.
Eigen::MatrixXd predict_proba(const FeedForwardClassifier &model, const InputMatrix &inputs);
Eigen::VectorXd predict_proba(const FeedForwardClassifier &model, const Eigen::VectorXd &input);
/// Argmax over classes, first maximum on ties.
std::vector<std::size_t> predicted_classes(const Eigen::MatrixXd &probabilities);

double cross_entropy(const FeedForwardClassifier &model, const InputMatrix &inputs,
                     std::span<const std::size_t> classes);
/// Gradients of cross_entropy with respect to every layer, same shapes as model.layers.
std::vector<DenseLayer> cross_entropy_gradients(const FeedForwardClassifier &model,
                                                const InputMatrix &inputs,
                                                std::span<const std::size_t> classes);

enum class OutputMode { probability, logit };

/// d o_k / d x for the softmax probability (or the pre-softmax logit) of class k.
Eigen::VectorXd classifier_gradient(const FeedForwardClassifier &model, const Eigen::VectorXd &input,
                                    std::size_t k, OutputMode mode = OutputMode::probability);
/// All classes at once: K x d_in, row k is classifier_gradient(..., k, mode).
Eigen::MatrixXd classifier_jacobian(const FeedForwardClassifier &model, const Eigen::VectorXd &input,
                                    OutputMode mode = OutputMode::probability);

struct HyperparameterSpace {
    std::size_t min_layers = 0;
    std::size_t max_layers = 10;
    std::size_t min_width = 50;
    std::size_t max_width = 1000;
    std::size_t width_step = 10;
    std::vector<Activation> activations = {Activation::sigmoid, Activation::tanh, Activation::relu};
    std::size_t samples = 10;
    std::uint64_t seed = 0;
};

/// Uniform draw from the space; widths on the grid min_width + i * width_step.
ClassifierArchitecture sample_architecture(const HyperparameterSpace &space, Rng &rng);

/// Higher is better. Receives K x n probabilities and true class indices.
using ValidationMetric =
    std::function<double(const Eigen::MatrixXd &probabilities, std::span<const std::size_t> classes)>;

struct SearchCandidate {
    ClassifierArchitecture architecture;
    double score = 0.0;
};

struct SearchResult {
    std::vector<SearchCandidate> candidates;
    std::size_t best = 0;
    FeedForwardClassifier model;
};

/// Trains `space.samples` sampled architectures with the same inner seed
/// (base.seed) and keeps the best validation score; the first maximum wins
/// ties and NaN scores never win.
SearchResult random_search(const HyperparameterSpace &space, const LabeledData &training,
                           const LabeledData &validation, const ValidationMetric &metric,
                           const ClassifierConfig &base);

struct DenseRepresentation {
    std::string patient_id;
    Eigen::VectorXd values;
};

/// [a, b] for the same patient; throws std::invalid_argument on id mismatch.
DenseRepresentation concat_representations(const DenseRepresentation &a,
                                           const DenseRepresentation &b);

void encode_classifier(const FeedForwardClassifier &model, ByteWriter &out);
FeedForwardClassifier decode_classifier(ByteReader &in);
void save_classifier(const FeedForwardClassifier &model, const std::filesystem::path &path);
FeedForwardClassifier load_classifier(const std::filesystem::path &path);

/// patient_id, true_label, predicted_label, then one probability column per class.
void write_predictions_tsv(const std::filesystem::path &path, const FeedForwardClassifier &model,
                           std::span<const std::string> patient_ids,
                           std::span<const std::string> true_labels,
                           const Eigen::MatrixXd &probabilities);

} // namespace repvec
