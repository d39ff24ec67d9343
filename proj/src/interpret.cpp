#include "repvec/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace repvec {

namespace {

std::vector<std::size_t> resolve_features(std::span<const std::size_t> requested, std::size_t dim)
{
    std::vector<std::size_t> out;
    if(requested.empty()) {
        out.resize(dim);
        std::iota(out.begin(), out.end(), std::size_t{0});
        return out;
    }
    for(const auto f : requested) {
        if(f >= dim)
            throw std::invalid_argument("feature index " + std::to_string(f) + " out of range");
        out.push_back(f);
    }
    return out;
}

// Number of pairs i<j with v[i] > v[j], by merge sort.
std::uint64_t count_inversions(std::vector<double> &v, std::vector<double> &scratch, std::size_t lo,
                               std::size_t hi)
{
    if(hi - lo < 2)
        return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t inv = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while(i < mid && j < hi) {
        if(v[j] < v[i]) {
            inv += mid - i;
            scratch[k++] = v[j++];
        } else {
            scratch[k++] = v[i++];
        }
    }
    while(i < mid)
        scratch[k++] = v[i++];
    while(j < hi)
        scratch[k++] = v[j++];
    std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo),
              scratch.begin() + static_cast<std::ptrdiff_t>(hi), v.begin() + static_cast<std::ptrdiff_t>(lo));
    return inv;
}

struct TieSums {
    double pairs = 0; // sum t(t-1)/2
    double v1 = 0;    // sum t(t-1)(2t+5)
    double v2 = 0;    // sum t(t-1)(t-2)
    double v3 = 0;    // sum t(t-1)
};

TieSums tie_sums(std::vector<double> sorted)
{
    std::sort(sorted.begin(), sorted.end());
    TieSums s;
    for(std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while(j < sorted.size() && sorted[j] == sorted[i])
            ++j;
        const double t = static_cast<double>(j - i);
        s.pairs += t * (t - 1) / 2;
        s.v1 += t * (t - 1) * (2 * t + 5);
        s.v2 += t * (t - 1) * (t - 2);
        s.v3 += t * (t - 1);
        i = j;
    }
    return s;
}

SignificanceReport rank_report(std::vector<SignificanceEntry> entries)
{
    std::sort(entries.begin(), entries.end(), [](const SignificanceEntry &a, const SignificanceEntry &b) {
        if(a.phi != b.phi)
            return a.phi > b.phi;
        return a.term < b.term;
    });
    return entries;
}

void check_dims(const SdaeModel &sdae, const FeedForwardClassifier &clf)
{
    if(sdae.representation_dim() != clf.input_dim)
        throw std::invalid_argument("sensitivity: SDAE representation dimension " +
                                    std::to_string(sdae.representation_dim()) +
                                    " does not match classifier input dimension " +
                                    std::to_string(clf.input_dim));
}

} // namespace

std::vector<std::size_t> ReconstructionProfile::best(std::size_t k) const
{
    return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranking.size()))};
}

std::vector<std::size_t> ReconstructionProfile::worst(std::size_t k) const
{
    // highest error first; equal errors keep term order
    std::vector<std::size_t> order = ranking;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });
    order.resize(std::min(k, order.size()));
    return order;
}

ReconstructionProfile reconstruction_profile(const SdaeModel &model, const InputMatrix &inputs,
                                             std::span<const std::string> terms,
                                             std::span<const double> frequencies,
                                             std::span<const std::size_t> features)
{
    if(model.layers.empty())
        throw std::invalid_argument("reconstruction_profile: model has no layers");
    const auto &layer = model.layers.front();
    const std::size_t dim = layer.input_dim();
    if(inputs.dim() != dim || terms.size() != dim || frequencies.size() != dim)
        throw std::invalid_argument("reconstruction_profile: dimensions do not match the model");
    if(inputs.size() == 0)
        throw std::invalid_argument("reconstruction_profile: no instances");

    ReconstructionProfile p;
    p.features = resolve_features(features, dim);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    const std::size_t batch_size = 256;
    std::vector<std::size_t> batch;
    Eigen::MatrixXd z;
    for(std::size_t b = 0; b < inputs.size(); b += batch_size) {
        batch.resize(std::min(batch_size, inputs.size() - b));
        std::iota(batch.begin(), batch.end(), b);
        inputs.multiply(layer.encoder_weights, batch, z);
        z.colwise() += layer.encoder_bias;
        z = (1.0 + (-z.array()).exp()).inverse().matrix();
        Eigen::MatrixXd diff = layer.decoder_weights * z;
        diff.colwise() += layer.decoder_bias;
        for(std::size_t c = 0; c < batch.size(); ++c) {
            auto col = diff.col(static_cast<Eigen::Index>(c));
            if(inputs.is_sparse()) {
                const auto &row = inputs.sparse_row(batch[c]);
                for(std::size_t k = 0; k < row.nnz(); ++k)
                    col[row.indices[k]] -= row.values[k];
            } else {
                col -= inputs.dense().col(static_cast<Eigen::Index>(batch[c]));
            }
        }
        sum_sq += diff.array().square().rowwise().sum().matrix();
    }
    const double n = static_cast<double>(inputs.size());
    for(const auto f : p.features) {
        p.terms.push_back(terms[f]);
        p.errors.push_back(sum_sq[static_cast<Eigen::Index>(f)] / n);
        p.frequencies.push_back(frequencies[f]);
    }
    p.ranking.resize(p.features.size());
    std::iota(p.ranking.begin(), p.ranking.end(), std::size_t{0});
    std::sort(p.ranking.begin(), p.ranking.end(), [&](std::size_t a, std::size_t b) {
        if(p.errors[a] != p.errors[b])
            return p.errors[a] < p.errors[b];
        return p.terms[a] < p.terms[b];
    });
    return p;
}

std::vector<double> average_ranks(std::span<const double> values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for(std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while(j < order.size() && values[order[j]] == values[order[i]])
            ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for(std::size_t k = i; k < j; ++k)
            ranks[order[k]] = r;
        i = j;
    }
    return ranks;
}

CorrelationResult rank_correlation(std::span<const double> x, std::span<const double> y)
{
    if(x.size() != y.size())
        throw std::invalid_argument("rank_correlation: series differ in length");
    if(x.size() < 3)
        throw std::invalid_argument("rank_correlation: need at least 3 pairs");
    CorrelationResult r;
    r.n = x.size();
    const double n = static_cast<double>(x.size());

    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double mean = (n + 1) / 2;
    double sxy = 0, sxx = 0, syy = 0;
    for(std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mean) * (ry[i] - mean);
        sxx += (rx[i] - mean) * (rx[i] - mean);
        syy += (ry[i] - mean) * (ry[i] - mean);
    }
    if(sxx > 0 && syy > 0) {
        const double rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
        r.spearman = rho;
        if(std::abs(rho) >= 1.0) {
            r.spearman_p = 0.0;
        } else {
            const double t = rho * std::sqrt((n - 2) / (1 - rho * rho));
            const boost::math::students_t dist(n - 2);
            r.spearman_p = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
        }
    }

    // Kendall tau-b in O(n log n): sort by (x, y), count inversions of y.
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
    });
    double joint_ties = 0;
    for(std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while(j < order.size() && x[order[j]] == x[order[i]] && y[order[j]] == y[order[i]])
            ++j;
        const double t = static_cast<double>(j - i);
        joint_ties += t * (t - 1) / 2;
        i = j;
    }
    std::vector<double> ys(order.size()), scratch(order.size());
    for(std::size_t i = 0; i < order.size(); ++i)
        ys[i] = y[order[i]];
    const double swaps = static_cast<double>(count_inversions(ys, scratch, 0, ys.size()));
    const TieSums tx = tie_sums(std::vector<double>(x.begin(), x.end()));
    const TieSums ty = tie_sums(std::vector<double>(y.begin(), y.end()));
    const double n0 = n * (n - 1) / 2;
    const double S = n0 - tx.pairs - ty.pairs + joint_ties - 2 * swaps;
    const double denom = (n0 - tx.pairs) * (n0 - ty.pairs);
    if(denom > 0) {
        r.kendall = std::clamp(S / std::sqrt(denom), -1.0, 1.0);
        const double var = (n * (n - 1) * (2 * n + 5) - tx.v1 - ty.v1) / 18 +
                           tx.v2 * ty.v2 / (9 * n * (n - 1) * (n - 2)) +
                           tx.v3 * ty.v3 / (2 * n * (n - 1));
        if(var > 0) {
            const double z = S / std::sqrt(var);
            const boost::math::normal dist;
            r.kendall_p = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(z)));
        }
    }
    return r;
}

CorrelationResult frequency_correlation(const ReconstructionProfile &profile)
{
    return rank_correlation(profile.errors, profile.frequencies);
}

Eigen::MatrixXd instance_sensitivity(const SdaeModel &sdae, const FeedForwardClassifier &clf,
                                     const SparseVector &input, const SensitivityOptions &options)
{
    check_dims(sdae, clf);
    const auto features = resolve_features(options.features, sdae.input_dim());
    const Eigen::VectorXd r = represent(sdae, input);
    const Eigen::MatrixXd outer = classifier_jacobian(clf, r, options.mode); // K x d_R
    Eigen::MatrixXd out(outer.rows(), static_cast<Eigen::Index>(features.size()));
    const bool all = options.features.empty();
    for(Eigen::Index k = 0; k < outer.rows(); ++k) {
        const Eigen::VectorXd g = encoder_vjp(sdae, input, outer.row(k).transpose());
        if(all) {
            out.row(k) = g.transpose();
        } else {
            for(std::size_t f = 0; f < features.size(); ++f)
                out(k, static_cast<Eigen::Index>(f)) = g[static_cast<Eigen::Index>(features[f])];
        }
    }
    return out;
}

Eigen::MatrixXd aggregate_sensitivity(const SdaeModel &sdae, const FeedForwardClassifier &clf,
                                      const InputMatrix &instances, const SensitivityOptions &options)
{
    check_dims(sdae, clf);
    if(instances.size() == 0)
        throw std::invalid_argument("aggregate_sensitivity: no instances");
    Eigen::MatrixXd sum_sq;
    for(std::size_t j = 0; j < instances.size(); ++j) {
        const SparseVector row =
            instances.is_sparse() ? instances.sparse_row(j) : SparseVector::from_dense(instances.column(j));
        const auto s = instance_sensitivity(sdae, clf, row, options);
        if(j == 0)
            sum_sq = s.array().square().matrix();
        else
            sum_sq.array() += s.array().square();
    }
    return (sum_sq / static_cast<double>(instances.size())).cwiseSqrt();
}

FeatureSignificance significance(const Eigen::MatrixXd &sensitivity)
{
    FeatureSignificance out;
    for(Eigen::Index i = 0; i < sensitivity.cols(); ++i) {
        Eigen::Index best = 0;
        for(Eigen::Index k = 1; k < sensitivity.rows(); ++k)
            if(sensitivity(k, i) > sensitivity(best, i))
                best = k;
        out.phi.push_back(sensitivity.rows() ? sensitivity(best, i) : 0.0);
        out.argmax.push_back(static_cast<std::size_t>(best));
    }
    return out;
}

SignificanceReport aggregate_report(const SdaeModel &sdae, const FeedForwardClassifier &clf,
                                    const InputMatrix &instances, std::span<const std::string> terms,
                                    const SensitivityOptions &options)
{
    if(terms.size() != sdae.input_dim())
        throw std::invalid_argument("aggregate_report: term list does not match the input dimension");
    const auto features = resolve_features(options.features, sdae.input_dim());
    const auto sig = significance(aggregate_sensitivity(sdae, clf, instances, options));
    std::vector<bool> present(sdae.input_dim(), false);
    for(std::size_t j = 0; j < instances.size(); ++j) {
        if(instances.is_sparse()) {
            for(const auto idx : instances.sparse_row(j).indices)
                present[idx] = true;
        } else {
            const auto col = instances.dense().col(static_cast<Eigen::Index>(j));
            for(Eigen::Index i = 0; i < col.size(); ++i)
                if(col[i] != 0.0)
                    present[static_cast<std::size_t>(i)] = true;
        }
    }
    std::vector<SignificanceEntry> entries;
    for(std::size_t f = 0; f < features.size(); ++f)
        entries.push_back({features[f], terms[features[f]], sig.phi[f], clf.classes.at(sig.argmax[f]),
                           present[features[f]]});
    return rank_report(std::move(entries));
}

SignificanceReport instance_report(const SdaeModel &sdae, const FeedForwardClassifier &clf,
                                   const SparseVector &input, std::span<const std::string> terms,
                                   std::optional<std::size_t> class_index,
                                   const SensitivityOptions &options)
{
    if(terms.size() != sdae.input_dim())
        throw std::invalid_argument("instance_report: term list does not match the input dimension");
    std::size_t k = 0;
    if(class_index) {
        if(*class_index >= clf.num_classes())
            throw std::invalid_argument("instance_report: class index out of range");
        k = *class_index;
    } else {
        const Eigen::MatrixXd p = predict_proba(clf, Eigen::VectorXd(represent(sdae, input)));
        k = predicted_classes(p)[0];
    }
    const auto features = resolve_features(options.features, sdae.input_dim());
    const auto s = instance_sensitivity(sdae, clf, input, options);
    std::vector<bool> present(sdae.input_dim(), false);
    for(const auto idx : input.indices)
        present[idx] = true;
    std::vector<SignificanceEntry> entries;
    for(std::size_t f = 0; f < features.size(); ++f)
        entries.push_back({features[f], terms[features[f]],
                           std::abs(s(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f))),
                           clf.classes[k], present[features[f]]});
    return rank_report(std::move(entries));
}

void write_significance_tsv(const std::filesystem::path &path, const SignificanceReport &report)
{
    std::ofstream out(path);
    if(!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "rank\tterm\tphi\targmax_class\tpresent_in_document\n" << std::setprecision(12);
    for(std::size_t i = 0; i < report.size(); ++i) {
        const auto &e = report[i];
        out << i + 1 << '\t' << e.term << '\t' << e.phi << '\t' << e.argmax_class << '\t'
            << (e.present_in_document ? 1 : 0) << '\n';
    }
}

std::vector<ChiSquareEntry> chi_square_feature_ranking(const InputMatrix &features,
                                                       std::span<const std::string> labels,
                                                       std::span<const std::string> terms)
{
    if(features.size() != labels.size())
        throw std::invalid_argument("chi_square_feature_ranking: features and labels differ in length");
    if(terms.size() != features.dim())
        throw std::invalid_argument("chi_square_feature_ranking: term list does not match the dimension");
    std::vector<std::string> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if(classes.size() < 2)
        throw std::invalid_argument("chi_square_feature_ranking: labels have a single class");

    const std::size_t K = classes.size(), V = features.dim();
    std::vector<double> class_total(K, 0.0);
    Eigen::MatrixXd present = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(V), static_cast<Eigen::Index>(K));
    for(std::size_t j = 0; j < features.size(); ++j) {
        const auto c = static_cast<std::size_t>(
            std::lower_bound(classes.begin(), classes.end(), labels[j]) - classes.begin());
        class_total[c] += 1;
        const auto kc = static_cast<Eigen::Index>(c);
        if(features.is_sparse()) {
            const auto &row = features.sparse_row(j);
            for(std::size_t k = 0; k < row.nnz(); ++k) {
                if(row.values[k] < 0)
                    throw std::invalid_argument("chi_square_feature_ranking: negative feature value");
                if(row.values[k] > 0)
                    present(row.indices[k], kc) += 1;
            }
        } else {
            const auto col = features.dense().col(static_cast<Eigen::Index>(j));
            for(Eigen::Index i = 0; i < col.size(); ++i) {
                if(col[i] < 0)
                    throw std::invalid_argument("chi_square_feature_ranking: negative feature value");
                if(col[i] > 0)
                    present(i, kc) += 1;
            }
        }
    }

    const double n = static_cast<double>(features.size());
    std::vector<ChiSquareEntry> out;
    out.reserve(V);
    for(std::size_t i = 0; i < V; ++i) {
        const auto row = present.row(static_cast<Eigen::Index>(i));
        const double with = row.sum();
        const double rows[2] = {with, n - with};
        double chi = 0.0;
        for(int r = 0; r < 2; ++r) {
            for(std::size_t c = 0; c < K; ++c) {
                const double expected = rows[r] * class_total[c] / n;
                if(expected <= 0)
                    continue;
                const double observed = r == 0 ? row[static_cast<Eigen::Index>(c)]
                                               : class_total[c] - row[static_cast<Eigen::Index>(c)];
                chi += (observed - expected) * (observed - expected) / expected;
            }
        }
        out.push_back({i, terms[i], chi});
    }
    std::sort(out.begin(), out.end(), [](const ChiSquareEntry &a, const ChiSquareEntry &b) {
        if(a.statistic != b.statistic)
            return a.statistic > b.statistic;
        return a.term < b.term;
    });
    return out;
}

} // namespace repvec
