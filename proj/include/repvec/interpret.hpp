#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "repvec/classifier.hpp"
#include "repvec/sdae.hpp"
#include "repvec/sparse.hpp"

namespace repvec {

struct ReconstructionProfile {
    std::vector<std::size_t> features; // input coordinates covered
    std::vector<std::string> terms;
    std::vector<double> errors;      // mean squared reconstruction error per feature
    std::vector<double> frequencies; // corpus frequency per feature
    /// Positions into the vectors above, ascending error, ties by term.
    std::vector<std::size_t> ranking;

    std::vector<std::size_t> best(std::size_t k) const;
    /// Highest errors first.
    std::vector<std::size_t> worst(std::size_t k) const;
};

/// First-layer reconstruction of the uncorrupted inputs. `terms` and
/// `frequencies` are indexed by input coordinate; `features` restricts the
/// profile to a subset (all coordinates when empty).
ReconstructionProfile reconstruction_profile(const SdaeModel &model, const InputMatrix &inputs,
                                             std::span<const std::string> terms,
                                             std::span<const double> frequencies,
                                             std::span<const std::size_t> features = {});

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct CorrelationResult {
    std::size_t n = 0;
    std::optional<double> spearman;   // nullopt when either series is constant
    std::optional<double> spearman_p; // two-sided, Student t with n-2 df
    std::optional<double> kendall;    // tau-b
    std::optional<double> kendall_p;  // two-sided, normal approximation with tie correction
};

/// Throws std::invalid_argument for fewer than 3 pairs.
CorrelationResult rank_correlation(std::span<const double> x, std::span<const double> y);
/// Error against frequency over the profile's features.
CorrelationResult frequency_correlation(const ReconstructionProfile &profile);

struct SensitivityOptions {
    OutputMode mode = OutputMode::probability;
    std::vector<std::size_t> features; // empty: every input coordinate
};

/// S^(j)_{o_k z_i} = d o_k / d z_i through classifier and encoder, K x F.
Eigen::MatrixXd instance_sensitivity(const SdaeModel &sdae, const FeedForwardClassifier &clf,
                                     const SparseVector &input, const SensitivityOptions &options = {});

/// Root mean square of the per-instance sensitivities over all instances, K x F.
Eigen::MatrixXd aggregate_sensitivity(const SdaeModel &sdae, const FeedForwardClassifier &clf,
                                      const InputMatrix &instances,
                                      const SensitivityOptions &options = {});

struct FeatureSignificance {
    std::vector<double> phi;          // max over classes
    std::vector<std::size_t> argmax;  // class attaining the max, first on ties
};

FeatureSignificance significance(const Eigen::MatrixXd &sensitivity);

struct SignificanceEntry {
    std::size_t feature = 0;
    std::string term;
    double phi = 0.0;
    std::string argmax_class;
    bool present_in_document = false;
};

/// Entries sorted by descending phi, ties by term.
using SignificanceReport = std::vector<SignificanceEntry>;

/// Aggregate mode: phi over all instances and classes; a feature counts as
/// present when it occurs in any of the instances.
SignificanceReport aggregate_report(const SdaeModel &sdae, const FeedForwardClassifier &clf,
                                    const InputMatrix &instances, std::span<const std::string> terms,
                                    const SensitivityOptions &options = {});

/// Single-instance mode: phi_i = |S_{o_k z_i}| for one class k, the model's
/// predicted class unless `class_index` is given.
SignificanceReport instance_report(const SdaeModel &sdae, const FeedForwardClassifier &clf,
                                   const SparseVector &input, std::span<const std::string> terms,
                                   std::optional<std::size_t> class_index = std::nullopt,
                                   const SensitivityOptions &options = {});

/// rank \t term \t phi \t argmax_class \t present_in_document, rank from 1.
void write_significance_tsv(const std::filesystem::path &path, const SignificanceReport &report);

struct ChiSquareEntry {
    std::size_t feature = 0;
    std::string term;
    double statistic = 0.0;
};

/// Pearson chi-square of feature presence against the label over the full
/// 2 x K table; cells with zero expectation are skipped. Sorted descending,
/// ties by term. Throws std::invalid_argument for single-class labels.
std::vector<ChiSquareEntry> chi_square_feature_ranking(const InputMatrix &features,
                                                       std::span<const std::string> labels,
                                                       std::span<const std::string> terms);

} // namespace repvec
