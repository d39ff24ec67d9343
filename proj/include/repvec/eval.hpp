#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace repvec {

struct RocPoint {
    double false_positive_rate = 0.0;
    double true_positive_rate = 0.0;
    double threshold = 0.0; // scores >= threshold are called positive
};

struct RocCurve {
    std::vector<RocPoint> points; // from (0,0) to (1,1)
    double area = 0.0;
};

/// Labels are 0/1. AUC is the Mann-Whitney statistic with ties counted as
/// one half. Throws std::invalid_argument unless both classes are present.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Support-weighted mean of per-class F1 over the classes present in `labels`.
double weighted_f_score(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

/// nullopt when chance agreement is 1 (both raters constant and identical).
std::optional<double> cohens_kappa(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// Metric over per-instance outputs (one column per instance) and true
/// class indices; nullopt when undefined on that sample.
using PairedMetric = std::function<std::optional<double>(const Eigen::MatrixXd &outputs,
                                                         std::span<const std::size_t> labels)>;

/// AUC of row 1 (positive-class probability) of a 2 x n probability matrix.
std::optional<double> auc_metric(const Eigen::MatrixXd &outputs, std::span<const std::size_t> labels);
/// Weighted F of the argmax of each column, or of the values of a 1 x n row of class indices.
std::optional<double> weighted_f_metric(const Eigen::MatrixXd &outputs,
                                        std::span<const std::size_t> labels);

struct SignificanceResult {
    std::string statistic;
    double metric_a = 0.0;
    double metric_b = 0.0;
    double observed_difference = 0.0; // metric_a - metric_b
    double p_value = 1.0;
    std::size_t iterations = 0;
    std::size_t exceeding = 0;
    std::size_t undefined_iterations = 0; // counted as exceeding
};

/// Two-tailed paired approximate randomization: every iteration swaps the
/// A and B columns of each instance with probability 1/2, drawn from
/// Rng(mix_seed(seed, iteration)). p = (exceeding + 1) / (iterations + 1).
SignificanceResult approx_randomization_test(const Eigen::MatrixXd &outputs_a,
                                             const Eigen::MatrixXd &outputs_b,
                                             std::span<const std::size_t> labels,
                                             const PairedMetric &metric, std::size_t iterations,
                                             std::uint64_t seed, std::string statistic);

struct BonferroniResult {
    double threshold = 0.0; // alpha / H
    std::vector<bool> significant;
};

/// Significant iff p < alpha / H. Throws std::invalid_argument for H = 0.
BonferroniResult bonferroni(std::span<const double> p_values, double alpha, std::size_t hypotheses);

struct SignificanceRow {
    std::string task;
    std::string system_a;
    std::string system_b;
    std::string statistic;
    double p_value = 1.0;
    bool significant = false;
};

/// name \t value per line.
void write_metrics_report(const std::filesystem::path &path,
                          std::span<const std::pair<std::string, double>> metrics);
/// Header, then task \t system_a \t system_b \t statistic \t p \t corrected_decision.
void write_significance_report(const std::filesystem::path &path,
                               std::span<const SignificanceRow> rows);

} // namespace repvec
