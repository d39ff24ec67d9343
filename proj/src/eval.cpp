#include "repvec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>

#include "repvec/rng.hpp"

namespace repvec {

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels)
{
    if(scores.size() != labels.size())
        throw std::invalid_argument("roc_auc: scores and labels differ in length");
    std::size_t pos = 0;
    for(const int l : labels) {
        if(l != 0 && l != 1)
            throw std::invalid_argument("roc_auc: labels must be 0 or 1");
        pos += static_cast<std::size_t>(l);
    }
    const std::size_t neg = labels.size() - pos;
    if(pos == 0 || neg == 0)
        throw std::invalid_argument("roc_auc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    // Walk tie groups from the highest score down; each group adds a
    // trapezoid, which is exactly the half credit for tied pairs.
    double tp = 0, fp = 0, twice_area = 0;
    for(std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        double group_pos = 0, group_neg = 0;
        while(j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? group_pos : group_neg) += 1;
            ++j;
        }
        twice_area += group_neg * (2 * tp + group_pos);
        tp += group_pos;
        fp += group_neg;
        curve.points.push_back(
            {fp / static_cast<double>(neg), tp / static_cast<double>(pos), scores[order[i]]});
        i = j;
    }
    curve.area = twice_area / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return curve;
}

double weighted_f_score(std::span<const std::size_t> predictions, std::span<const std::size_t> labels)
{
    if(predictions.size() != labels.size())
        throw std::invalid_argument("weighted_f_score: predictions and labels differ in length");
    if(labels.empty())
        throw std::invalid_argument("weighted_f_score: no labels");
    std::map<std::size_t, double> support, predicted, correct;
    for(std::size_t i = 0; i < labels.size(); ++i) {
        support[labels[i]] += 1;
        predicted[predictions[i]] += 1;
        if(predictions[i] == labels[i])
            correct[labels[i]] += 1;
    }
    double total = 0.0;
    for(const auto &[c, s] : support) {
        const double tp = correct[c];
        const double p_count = predicted.count(c) ? predicted[c] : 0.0;
        const double f1 = tp == 0 ? 0.0 : 2 * tp / (p_count + s);
        total += s * f1;
    }
    return total / static_cast<double>(labels.size());
}

std::optional<double> cohens_kappa(std::span<const std::size_t> a, std::span<const std::size_t> b)
{
    if(a.size() != b.size())
        throw std::invalid_argument("cohens_kappa: inputs differ in length");
    if(a.empty())
        throw std::invalid_argument("cohens_kappa: no instances");
    const double n = static_cast<double>(a.size());
    std::map<std::size_t, double> ma, mb;
    double agree = 0;
    for(std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1;
        mb[b[i]] += 1;
        agree += a[i] == b[i];
    }
    double pe = 0;
    for(const auto &[c, count] : ma)
        if(auto it = mb.find(c); it != mb.end())
            pe += (count / n) * (it->second / n);
    const double po = agree / n;
    if(pe >= 1.0)
        return std::nullopt;
    return (po - pe) / (1.0 - pe);
}

std::optional<double> auc_metric(const Eigen::MatrixXd &outputs, std::span<const std::size_t> labels)
{
    if(outputs.rows() != 2)
        throw std::invalid_argument("auc_metric: expects 2 x n probabilities");
    std::vector<double> scores(labels.size());
    std::vector<int> y(labels.size());
    std::size_t pos = 0;
    for(std::size_t i = 0; i < labels.size(); ++i) {
        scores[i] = outputs(1, static_cast<Eigen::Index>(i));
        y[i] = labels[i] == 1;
        pos += y[i];
    }
    if(pos == 0 || pos == labels.size())
        return std::nullopt;
    return roc_auc(scores, y).area;
}

std::optional<double> weighted_f_metric(const Eigen::MatrixXd &outputs,
                                        std::span<const std::size_t> labels)
{
    std::vector<std::size_t> pred(labels.size());
    for(std::size_t i = 0; i < labels.size(); ++i) {
        const auto col = outputs.col(static_cast<Eigen::Index>(i));
        Eigen::Index best = 0;
        if(outputs.rows() == 1)
            best = static_cast<Eigen::Index>(std::llround(col[0]));
        else
            for(Eigen::Index k = 1; k < col.size(); ++k)
                if(col[k] > col[best])
                    best = k;
        pred[i] = static_cast<std::size_t>(best);
    }
    return weighted_f_score(pred, labels);
}

SignificanceResult approx_randomization_test(const Eigen::MatrixXd &outputs_a,
                                             const Eigen::MatrixXd &outputs_b,
                                             std::span<const std::size_t> labels,
                                             const PairedMetric &metric, std::size_t iterations,
                                             std::uint64_t seed, std::string statistic)
{
    if(outputs_a.rows() != outputs_b.rows() || outputs_a.cols() != outputs_b.cols() ||
       outputs_a.cols() != static_cast<Eigen::Index>(labels.size()))
        throw std::invalid_argument("approx_randomization_test: outputs and labels must align");
    if(iterations == 0)
        throw std::invalid_argument("approx_randomization_test: need at least one iteration");

    SignificanceResult r;
    r.statistic = std::move(statistic);
    r.iterations = iterations;
    const auto ma = metric(outputs_a, labels), mb = metric(outputs_b, labels);
    if(!ma || !mb)
        throw std::invalid_argument("approx_randomization_test: metric undefined on the observed outputs");
    r.metric_a = *ma;
    r.metric_b = *mb;
    r.observed_difference = *ma - *mb;
    const double observed = std::abs(r.observed_difference);
    // guards against summation-order noise when a permutation reproduces the observed split
    const double slack = 1e-12 * std::max(1.0, observed);

    Eigen::MatrixXd pa(outputs_a.rows(), outputs_a.cols()), pb(outputs_b.rows(), outputs_b.cols());
    for(std::size_t it = 0; it < iterations; ++it) {
        Rng rng(mix_seed(seed, it));
        for(Eigen::Index c = 0; c < outputs_a.cols(); ++c) {
            if(rng.bernoulli(0.5)) {
                pa.col(c) = outputs_b.col(c);
                pb.col(c) = outputs_a.col(c);
            } else {
                pa.col(c) = outputs_a.col(c);
                pb.col(c) = outputs_b.col(c);
            }
        }
        const auto xa = metric(pa, labels), xb = metric(pb, labels);
        if(!xa || !xb) {
            ++r.undefined_iterations;
            ++r.exceeding;
        } else if(std::abs(*xa - *xb) >= observed - slack) {
            ++r.exceeding;
        }
    }
    r.p_value = static_cast<double>(r.exceeding + 1) / static_cast<double>(iterations + 1);
    return r;
}

BonferroniResult bonferroni(std::span<const double> p_values, double alpha, std::size_t hypotheses)
{
    if(hypotheses == 0)
        throw std::invalid_argument("bonferroni: hypothesis count must be at least 1");
    BonferroniResult r;
    r.threshold = alpha / static_cast<double>(hypotheses);
    for(const double p : p_values)
        r.significant.push_back(p < r.threshold);
    return r;
}

void write_metrics_report(const std::filesystem::path &path,
                          std::span<const std::pair<std::string, double>> metrics)
{
    std::ofstream out(path);
    if(!out)
        throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(12);
    for(const auto &[name, value] : metrics)
        out << name << '\t' << value << '\n';
}

void write_significance_report(const std::filesystem::path &path,
                               std::span<const SignificanceRow> rows)
{
    std::ofstream out(path);
    if(!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "task\tsystem_a\tsystem_b\tstatistic\tp\tcorrected_decision\n" << std::setprecision(12);
    for(const auto &r : rows)
        out << r.task << '\t' << r.system_a << '\t' << r.system_b << '\t' << r.statistic << '\t'
            << r.p_value << '\t' << (r.significant ? "significant" : "not_significant") << '\n';
}

} // namespace repvec
