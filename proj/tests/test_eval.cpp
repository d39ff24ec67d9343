#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repvec/eval.hpp"

using namespace repvec;

namespace {

// P(score+ > score-) + 1/2 P(tie) by exhaustive pair counting
double pair_count_auc(const std::vector<double> &s, const std::vector<int> &y)
{
    double wins = 0, pairs = 0;
    for(std::size_t i = 0; i < s.size(); ++i)
        for(std::size_t j = 0; j < s.size(); ++j)
            if(y[i] == 1 && y[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
            }
    return wins / pairs;
}

// per-class precision/recall/F1 from explicit confusion counts
double reference_weighted_f(const std::vector<std::size_t> &pred, const std::vector<std::size_t> &y)
{
    std::size_t K = 0;
    for(std::size_t i = 0; i < y.size(); ++i)
        K = std::max({K, pred[i] + 1, y[i] + 1});
    double total = 0;
    for(std::size_t c = 0; c < K; ++c) {
        double tp = 0, fp = 0, fn = 0;
        for(std::size_t i = 0; i < y.size(); ++i) {
            tp += pred[i] == c && y[i] == c;
            fp += pred[i] == c && y[i] != c;
            fn += pred[i] != c && y[i] == c;
        }
        const double support = tp + fn;
        if(support == 0)
            continue;
        const double precision = tp + fp > 0 ? tp / (tp + fp) : 0;
        const double recall = tp / support;
        const double f = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0;
        total += support * f;
    }
    return total / static_cast<double>(y.size());
}

Eigen::MatrixXd label_row(const std::vector<std::size_t> &v)
{
    Eigen::MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
    for(std::size_t i = 0; i < v.size(); ++i)
        m(0, static_cast<Eigen::Index>(i)) = static_cast<double>(v[i]);
    return m;
}

// exact two-tailed p over all 2^n swap patterns (the identity included)
double exhaustive_p(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b, const std::vector<std::size_t> &y,
                    const PairedMetric &metric)
{
    const double observed = std::abs(*metric(a, y) - *metric(b, y));
    const auto n = a.cols();
    std::size_t hits = 0, total = 0;
    for(std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
        Eigen::MatrixXd pa = a, pb = b;
        for(Eigen::Index c = 0; c < n; ++c)
            if(mask >> c & 1) {
                pa.col(c) = b.col(c);
                pb.col(c) = a.col(c);
            }
        const auto xa = metric(pa, y), xb = metric(pb, y);
        hits += !xa || !xb || std::abs(*xa - *xb) >= observed - 1e-12;
        ++total;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace

TEST(RocAuc, WorkedExamples)
{
    const std::vector<double> s = {0.9, 0.8, 0.3};
    EXPECT_EQ(roc_auc(s, std::vector<int>{1, 0, 0}).area, 1.0);
    EXPECT_EQ(roc_auc(s, std::vector<int>{0, 1, 0}).area, 0.5);
    EXPECT_EQ(roc_auc(std::vector<double>(6, 0.4), std::vector<int>{1, 0, 1, 0, 0, 1}).area, 0.5);
    EXPECT_THROW(roc_auc(s, std::vector<int>{1, 1, 1}), std::invalid_argument);
    EXPECT_THROW(roc_auc(s, std::vector<int>{0, 2, 1}), std::invalid_argument);
}

TEST(RocAuc, EqualsPairCountingWithTies)
{
    Rng rng(1);
    for(int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(49);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for(std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(6)) / 5.0; // heavy ties
            y[i] = rng.bernoulli(0.4);
        }
        y[0] = 1;
        y[1] = 0;
        const auto curve = roc_auc(s, y);
        ASSERT_EQ(curve.area, pair_count_auc(s, y)) << trial;

        // curve monotone, anchored at (0,0) and (1,1)
        EXPECT_EQ(curve.points.front().false_positive_rate, 0.0);
        EXPECT_EQ(curve.points.back().true_positive_rate, 1.0);
        EXPECT_EQ(curve.points.back().false_positive_rate, 1.0);
        for(std::size_t i = 1; i < curve.points.size(); ++i) {
            EXPECT_GE(curve.points[i].false_positive_rate, curve.points[i - 1].false_positive_rate);
            EXPECT_GE(curve.points[i].true_positive_rate, curve.points[i - 1].true_positive_rate);
        }

        // strictly monotone transform leaves the area unchanged
        std::vector<double> t(n);
        for(std::size_t i = 0; i < n; ++i)
            t[i] = std::exp(3 * s[i]) - 7;
        EXPECT_EQ(roc_auc(t, y).area, curve.area);
    }
}

TEST(WeightedF, WorkedExamples)
{
    const std::vector<std::size_t> y = {1, 1, 0, 0};
    EXPECT_EQ(weighted_f_score(y, y), 1.0);
    // class 1: P = 1, R = 1/2, F = 2/3; class 0: P = 2/3, R = 1, F = 4/5
    const std::vector<std::size_t> pred = {1, 0, 0, 0};
    EXPECT_NEAR(weighted_f_score(pred, y), 0.5 * (2.0 / 3.0) + 0.5 * 0.8, 1e-12);
    const std::vector<std::size_t> single = {2, 2, 2};
    EXPECT_EQ(weighted_f_score(single, single), 1.0);
}

TEST(WeightedF, MatchesPerClassRecomputation)
{
    Rng rng(2);
    for(int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(60), K = 2 + rng.below(4);
        std::vector<std::size_t> p(n), y(n);
        for(std::size_t i = 0; i < n; ++i) {
            p[i] = rng.below(K);
            y[i] = rng.below(K);
        }
        EXPECT_NEAR(weighted_f_score(p, y), reference_weighted_f(p, y), 1e-12);
    }
}

TEST(Kappa, WorkedExamplesAndSymmetry)
{
    const std::vector<std::size_t> a = {1, 1, 0, 0}, b = {1, 0, 1, 0};
    EXPECT_NEAR(*cohens_kappa(a, a), 1.0, 1e-15);
    EXPECT_NEAR(*cohens_kappa(a, b), 0.0, 1e-12);
    // one constant rater: p_o = p_e, so kappa is exactly 0
    const std::vector<std::size_t> constant(4, 0);
    EXPECT_NEAR(*cohens_kappa(a, constant), 0.0, 1e-15);
    EXPECT_FALSE(cohens_kappa(constant, constant).has_value());

    Rng rng(3);
    for(int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(30);
        std::vector<std::size_t> x(n), z(n);
        for(std::size_t i = 0; i < n; ++i) {
            x[i] = rng.below(3);
            z[i] = rng.below(3);
        }
        const auto k1 = cohens_kappa(x, z), k2 = cohens_kappa(z, x);
        ASSERT_EQ(k1.has_value(), k2.has_value());
        if(k1)
            EXPECT_NEAR(*k1, *k2, 1e-15);
    }
}

TEST(Randomization, IdenticalSystemsGivePOne)
{
    Rng rng(4);
    const Eigen::MatrixXd out = label_row({1, 0, 1, 1, 0, 0, 1});
    const std::vector<std::size_t> y = {1, 0, 0, 1, 0, 1, 1};
    const auto r = approx_randomization_test(out, out, y, weighted_f_metric, 500, 9, "weighted_f");
    EXPECT_EQ(r.observed_difference, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
}

TEST(Randomization, MatchesExhaustiveEnumeration)
{
    Rng rng(5);
    int outside_interval = 0;
    for(int trial = 0; trial < 6; ++trial) {
        const std::size_t n = 4 + rng.below(7); // 4..10
        std::vector<std::size_t> y(n), pa(n), pb(n);
        for(std::size_t i = 0; i < n; ++i) {
            y[i] = rng.below(2);
            pa[i] = rng.bernoulli(0.8) ? y[i] : 1 - y[i];
            pb[i] = rng.bernoulli(0.5) ? y[i] : 1 - y[i];
        }
        const auto A = label_row(pa), B = label_row(pb);
        const double exact = exhaustive_p(A, B, y, weighted_f_metric);
        const auto r = approx_randomization_test(A, B, y, weighted_f_metric, 10000, 100 + trial, "f");
        EXPECT_NEAR(r.p_value, exact, 0.02) << "n=" << n;

        // relabeling which system is A leaves p unchanged
        const auto swapped = approx_randomization_test(B, A, y, weighted_f_metric, 10000, 100 + trial, "f");
        EXPECT_EQ(swapped.p_value, r.p_value);

        // doubling R stays inside the binomial 95% interval around the exact p;
        // one miss in six is within what a 95% interval allows
        const auto twice = approx_randomization_test(A, B, y, weighted_f_metric, 20000, 100 + trial, "f");
        outside_interval +=
            std::abs(twice.p_value - exact) > 1.96 * std::sqrt(exact * (1 - exact) / 20000) + 1e-4;
    }
    EXPECT_LE(outside_interval, 1);
}

TEST(Randomization, ProbabilityOutputsWithAuc)
{
    Rng rng(6);
    const std::size_t n = 8;
    std::vector<std::size_t> y = {0, 1, 0, 1, 1, 0, 0, 1};
    Eigen::MatrixXd a(2, n), b(2, n);
    for(std::size_t i = 0; i < n; ++i) {
        const double pa = y[i] ? rng.uniform(0.4, 1) : rng.uniform(0, 0.6);
        const double pb = rng.uniform();
        a.col(static_cast<Eigen::Index>(i)) << 1 - pa, pa;
        b.col(static_cast<Eigen::Index>(i)) << 1 - pb, pb;
    }
    const double exact = exhaustive_p(a, b, y, auc_metric);
    const auto r = approx_randomization_test(a, b, y, auc_metric, 10000, 3, "auc");
    EXPECT_NEAR(r.p_value, exact, 0.02);
    EXPECT_GT(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
}

TEST(Randomization, UndefinedIterationsCountAsExceeding)
{
    // undefined whenever exactly one of the first two instances is swapped
    const PairedMetric picky = [](const Eigen::MatrixXd &o, std::span<const std::size_t>) -> std::optional<double> {
        if(o(0, 0) + o(0, 1) == 3)
            return std::nullopt;
        return o.sum();
    };
    Eigen::MatrixXd a(1, 3), b(1, 3);
    a << 1, 1, 5;
    b << 2, 2, 0;
    const std::vector<std::size_t> y = {0, 0, 0};
    const auto r = approx_randomization_test(a, b, y, picky, 2000, 1, "picky");
    EXPECT_GT(r.undefined_iterations, 800u);
    EXPECT_LT(r.undefined_iterations, 1200u);
    EXPECT_GE(r.exceeding, r.undefined_iterations);
}

TEST(Bonferroni, Thresholds)
{
    const std::vector<double> p = {0.01, 5e-4, 0.04};
    const auto r = bonferroni(p, 0.05, 54);
    EXPECT_NEAR(r.threshold, 9.259259259259e-4, 1e-15);
    EXPECT_EQ(r.significant, (std::vector<bool>{false, true, false}));
    const auto one = bonferroni(p, 0.05, 1);
    EXPECT_EQ(one.threshold, 0.05);
    EXPECT_EQ(one.significant, (std::vector<bool>{true, true, true}));
    EXPECT_THROW(bonferroni(p, 0.05, 0), std::invalid_argument);
}

TEST(Reports, Layout)
{
    const auto dir = oracle::temp_dir("eval_reports");
    const std::vector<std::pair<std::string, double>> metrics = {{"auc", 0.75}, {"weighted_f", 0.5}};
    write_metrics_report(dir / "m.tsv", metrics);
    std::ifstream m(dir / "m.tsv");
    std::string line;
    std::getline(m, line);
    EXPECT_EQ(line, "auc\t0.75");

    const std::vector<SignificanceRow> rows = {{"in_hosp", "bow", "sdae_bow", "auc", 0.5, false}};
    write_significance_report(dir / "s.tsv", rows);
    std::ifstream s(dir / "s.tsv");
    std::getline(s, line);
    EXPECT_EQ(line, "task\tsystem_a\tsystem_b\tstatistic\tp\tcorrected_decision");
    std::getline(s, line);
    EXPECT_EQ(line, "in_hosp\tbow\tsdae_bow\tauc\t0.5\tnot_significant");
}
