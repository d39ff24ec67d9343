#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "repvec/corpus.hpp"
#include "repvec/errors.hpp"
#include "repvec/rng.hpp"
#include "repvec/serialize.hpp"

namespace repvec {

struct DbowConfig {
    std::size_t dim = 300;
    std::size_t window = 3;
    std::uint64_t min_count = 10;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double noise_power = 0.75;
    double start_learning_rate = 0.025;
    double end_learning_rate = 0.0001;
    /// Skip-gram updates of the word vectors, interleaved with the document updates.
    bool train_words = true;
    std::size_t max_inference_epochs = 50;
    double inference_tolerance = 1e-4;
    std::uint64_t seed = 0;

    bool operator==(const DbowConfig &) const = default;
};

/// P(w) proportional to count(w)^power. Throws std::invalid_argument for an
/// empty input, non-positive counts or a negative power.
std::vector<double> build_noise_distribution(std::span<const std::uint64_t> counts, double power);
/// Same, over the terms of `counts` in their (lexicographic) map order.
std::vector<double> build_noise_distribution(const TermCounts &counts, double power);

/// Draws indices from a discrete distribution by inverting its cumulative sum.
class NoiseSampler {
public:
    explicit NoiseSampler(std::span<const double> probabilities);
    std::size_t operator()(Rng &rng) const;

private:
    std::vector<double> _cumulative;
};

struct DbowModel {
    DbowConfig config;
    std::vector<std::string> vocabulary; // sorted
    std::vector<std::uint64_t> frequencies;
    std::vector<double> noise;
    std::vector<std::string> document_ids;
    std::vector<bool> degenerate; // training documents without in-vocabulary tokens
    Eigen::MatrixXd document_vectors; // d x n_docs
    Eigen::MatrixXd word_vectors;     // d x V, input side of the skip-gram updates
    Eigen::MatrixXd output_vectors;   // d x V, negative-sampling targets
    std::vector<double> loss_trace;   // mean loss of every epoch

    std::optional<std::size_t> find(std::string_view term) const;
    std::optional<std::size_t> document_index(std::string_view id) const;
    std::size_t dim() const { return static_cast<std::size_t>(document_vectors.rows()); }

    bool operator==(const DbowModel &o) const;
};

/// -log sigma(h.o_t) - sum_j log sigma(-h.o_nj) for input vector h.
double negative_sampling_loss(const Eigen::VectorXd &input, const Eigen::MatrixXd &output_vectors,
                              std::size_t target, std::span<const std::size_t> negatives);

struct NegativeSamplingGradients {
    double loss = 0.0;
    Eigen::VectorXd input;  // d
    Eigen::MatrixXd output; // d x V, zero outside the touched columns
};

NegativeSamplingGradients negative_sampling_gradients(const Eigen::VectorXd &input,
                                                      const Eigen::MatrixXd &output_vectors,
                                                      std::size_t target,
                                                      std::span<const std::size_t> negatives);

/// Trains document vectors for `documents` (already tokenized, numbers and
/// times removed). The vocabulary is every term occurring at least
/// min_count times over all documents.
DbowModel train_dbow(std::span<const PatientDocument> documents, const DbowConfig &config);

struct InferredVector {
    Eigen::VectorXd vector;
    bool degenerate = false; // no in-vocabulary token; vector is the initialization
    std::size_t epochs = 0;
    std::vector<double> loss_trace; // evaluation loss after each epoch
};

/// Fits a vector for an unseen document with all word and output vectors
/// frozen. Stops after max_inference_epochs or once the relative improvement
/// of the loss on a fixed draw of negatives falls below inference_tolerance.
InferredVector infer_vector(const DbowModel &model, std::span<const std::string> tokens,
                            std::uint64_t seed);

void encode_dbow(const DbowModel &model, ByteWriter &out);
DbowModel decode_dbow(ByteReader &in);
void save_dbow(const DbowModel &model, const std::filesystem::path &path);
DbowModel load_dbow(const std::filesystem::path &path);

} // namespace repvec
