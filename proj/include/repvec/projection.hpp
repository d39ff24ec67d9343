#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace repvec {

struct PcaResult {
    Eigen::MatrixXd projected;  // n x k
    Eigen::MatrixXd components; // d x k, unit columns
    Eigen::VectorXd mean;       // d
    Eigen::VectorXd explained_variance;
    Eigen::VectorXd explained_variance_ratio; // non-increasing
    std::size_t rank = 0;
    /// Set when k exceeds the numerical rank; the trailing components then
    /// carry zero variance.
    bool rank_deficient = false;
};

/// Rows are points. Requires n >= 2 and 1 <= k <= min(n, d). Component signs
/// are fixed so the largest-magnitude loading of each column is positive.
PcaResult pca(const Eigen::MatrixXd &data, std::size_t k);

struct TsneConfig {
    double perplexity = 30.0;
    std::size_t iterations = 5000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
    double min_gain = 0.01;
    double init_scale = 1e-4;
    std::size_t max_points = 10000;
    std::size_t trace_interval = 10;
    std::uint64_t seed = 0;
};

struct ProjectionConfig {
    std::size_t pca_dims = 50;
    TsneConfig tsne;
};

Eigen::MatrixXd pairwise_squared_distances(const Eigen::MatrixXd &points);

struct ConditionalAffinities {
    Eigen::MatrixXd p;      // row i holds p_{j|i}, zero diagonal
    Eigen::VectorXd beta;   // precision 1 / (2 sigma_i^2)
    Eigen::VectorXd perplexity; // achieved exp(H(P_i)), H in nats
};

/// Bisection on each row's precision until the row entropy matches
/// log(perplexity). Throws std::invalid_argument unless 1 <= perplexity <= n - 1.
ConditionalAffinities conditional_affinities(const Eigen::MatrixXd &squared_distances, double perplexity);

/// Symmetrized (p_{j|i} + p_{i|j}) / 2n.
Eigen::MatrixXd joint_probabilities(const ConditionalAffinities &conditional);

/// KL(P || Q) with the Student-t kernel over embedding rows of Y.
double tsne_kl(const Eigen::MatrixXd &P, const Eigen::MatrixXd &Y);
/// Gradient of tsne_kl with respect to Y, same shape as Y.
Eigen::MatrixXd tsne_gradient(const Eigen::MatrixXd &P, const Eigen::MatrixXd &Y);

struct TsneTracePoint {
    std::size_t iteration = 0;
    double kl = 0.0; // against the unexaggerated P
};

struct TsneResult {
    Eigen::MatrixXd embedding; // n x 2
    std::vector<TsneTracePoint> kl_trace;
};

/// Exact O(n^2) t-SNE with early exaggeration, momentum and adaptive gains.
/// Throws std::invalid_argument unless perplexity < (n - 1) / 3 and n <= max_points.
TsneResult tsne(const Eigen::MatrixXd &points, const TsneConfig &config);

struct ProjectionResult {
    PcaResult pca;
    TsneResult tsne;
};

/// PCA to min(pca_dims, n, d) dimensions followed by t-SNE.
ProjectionResult project(const Eigen::MatrixXd &data, const ProjectionConfig &config);

/// Mean silhouette over all points under Euclidean distance; points in
/// singleton clusters contribute 0. Needs at least two clusters.
double silhouette_score(const Eigen::MatrixXd &points, std::span<const std::string> labels);

/// patient_id \t x \t y \t color_label
void write_projection_tsv(const std::filesystem::path &path, std::span<const std::string> ids,
                          const Eigen::MatrixXd &embedding, std::span<const std::string> color_labels);

} // namespace repvec
