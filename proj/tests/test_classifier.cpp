#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repvec/classifier.hpp"

using namespace repvec;

namespace {

FeedForwardClassifier random_model(std::size_t d_in, std::size_t layers, std::size_t width,
                                   Activation act, std::size_t K, Rng &rng)
{
    std::vector<std::string> classes;
    for(std::size_t k = 0; k < K; ++k)
        classes.push_back("c" + std::to_string(k));
    auto m = make_classifier({layers, width, act}, d_in, classes);
    for(auto &l : m.layers) {
        l.weights = oracle::random_matrix(l.weights.rows(), l.weights.cols(), rng);
        l.bias = oracle::random_matrix(l.bias.size(), 1, rng);
    }
    return m;
}

// Straight-line forward pass with explicit loops.
std::vector<double> reference_proba(const FeedForwardClassifier &m, const Eigen::VectorXd &x)
{
    std::vector<double> h(x.data(), x.data() + x.size());
    for(std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto &W = m.layers[l].weights;
        std::vector<double> z(static_cast<std::size_t>(W.rows()));
        for(Eigen::Index r = 0; r < W.rows(); ++r) {
            double s = m.layers[l].bias[r];
            for(Eigen::Index c = 0; c < W.cols(); ++c)
                s += W(r, c) * h[static_cast<std::size_t>(c)];
            if(l + 1 < m.layers.size()) {
                switch(m.architecture.activation) {
                case Activation::sigmoid:
                    s = oracle::sigmoid(s);
                    break;
                case Activation::tanh:
                    s = std::tanh(s);
                    break;
                case Activation::relu:
                    s = s > 0 ? s : 0;
                    break;
                }
            }
            z[static_cast<std::size_t>(r)] = s;
        }
        h = z;
    }
    const double mx = *std::max_element(h.begin(), h.end());
    double total = 0;
    for(auto &v : h)
        total += (v = std::exp(v - mx));
    for(auto &v : h)
        v /= total;
    return h;
}

struct Separable {
    InputMatrix inputs;
    std::vector<std::string> labels;
};

Separable separable_set(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    Eigen::MatrixXd x(5, static_cast<Eigen::Index>(n));
    std::vector<std::string> labels;
    for(std::size_t i = 0; i < n; ++i) {
        const bool pos = i % 2 == 0;
        for(Eigen::Index r = 0; r < 5; ++r)
            x(r, static_cast<Eigen::Index>(i)) = rng.uniform(-1, 1);
        // margin of 0.5 along the first coordinate
        x(0, static_cast<Eigen::Index>(i)) = pos ? rng.uniform(0.5, 2) : rng.uniform(-2, -0.5);
        labels.push_back(pos ? "yes" : "no");
    }
    return {InputMatrix(x), labels};
}

double accuracy(const FeedForwardClassifier &m, const Separable &s)
{
    const auto pred = predicted_classes(predict_proba(m, s.inputs));
    double hits = 0;
    for(std::size_t i = 0; i < pred.size(); ++i)
        hits += m.classes[pred[i]] == s.labels[i];
    return hits / static_cast<double>(pred.size());
}

} // namespace

TEST(Predict, ZeroWeightsGiveUniform)
{
    const auto m = make_classifier({2, 7, Activation::tanh}, 4, {"a", "b", "c"});
    const auto p = predict_proba(m, Eigen::VectorXd::Ones(4));
    for(Eigen::Index k = 0; k < 3; ++k)
        EXPECT_NEAR(p[k], 1.0 / 3.0, 1e-15);
}

TEST(Predict, MatchesLoopRecomputationAndNormalizes)
{
    Rng rng(1);
    const Activation acts[] = {Activation::sigmoid, Activation::tanh, Activation::relu};
    for(int trial = 0; trial < 30; ++trial) {
        const std::size_t d = 2 + rng.below(6), K = 2 + rng.below(4);
        const auto m = random_model(d, rng.below(4), 2 + rng.below(6), acts[trial % 3], K, rng);
        const Eigen::VectorXd x = oracle::random_matrix(static_cast<Eigen::Index>(d), 1, rng, 3.0);
        const auto p = predict_proba(m, x);
        const auto ref = reference_proba(m, x);
        for(std::size_t k = 0; k < K; ++k)
            EXPECT_NEAR(p[static_cast<Eigen::Index>(k)], ref[k], 1e-12);
        EXPECT_NEAR(p.sum(), 1.0, 1e-9);
        EXPECT_GE(p.minCoeff(), 0.0);

        // extreme inputs stay normalized
        const Eigen::VectorXd big = x * 1e6;
        EXPECT_NEAR(predict_proba(m, big).sum(), 1.0, 1e-9);
    }
}

TEST(Predict, SparseAndDenseInputsAgree)
{
    Rng rng(2);
    const auto m = random_model(10, 2, 6, Activation::relu, 3, rng);
    std::vector<SparseVector> rows;
    Eigen::MatrixXd dense(10, 4);
    for(int i = 0; i < 4; ++i) {
        Eigen::VectorXd v = oracle::random_matrix(10, 1, rng);
        v[i] = 0.0;
        v[i + 3] = 0.0;
        rows.push_back(SparseVector::from_dense(v));
        dense.col(i) = v;
    }
    EXPECT_LT((predict_proba(m, InputMatrix(rows)) - predict_proba(m, InputMatrix(dense)))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-14);
}

TEST(Predict, DimensionMismatchThrows)
{
    const auto m = make_classifier({0, 0, Activation::sigmoid}, 4, {"0", "1"});
    EXPECT_THROW(predict_proba(m, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST(Predict, ClassPermutationPermutesOutputs)
{
    Rng rng(3);
    const auto m = random_model(6, 2, 5, Activation::tanh, 4, rng);
    const std::vector<Eigen::Index> perm = {2, 0, 3, 1};
    auto permuted = m;
    auto &out = permuted.layers.back();
    for(Eigen::Index k = 0; k < 4; ++k) {
        out.weights.row(perm[static_cast<std::size_t>(k)]) = m.layers.back().weights.row(k);
        out.bias[perm[static_cast<std::size_t>(k)]] = m.layers.back().bias[k];
    }
    for(int t = 0; t < 10; ++t) {
        const Eigen::VectorXd x = oracle::random_matrix(6, 1, rng);
        const auto p = predict_proba(m, x), q = predict_proba(permuted, x);
        for(Eigen::Index k = 0; k < 4; ++k)
            EXPECT_NEAR(q[perm[static_cast<std::size_t>(k)]], p[k], 1e-15);
        const auto a = predicted_classes(Eigen::MatrixXd(p))[0];
        const auto b = predicted_classes(Eigen::MatrixXd(q))[0];
        EXPECT_EQ(static_cast<Eigen::Index>(b), perm[a]);
    }
}

TEST(CrossEntropy, ParameterGradientsMatchFiniteDifferences)
{
    Rng rng(4);
    const Activation acts[] = {Activation::sigmoid, Activation::tanh, Activation::relu};
    for(int trial = 0; trial < 24; ++trial) {
        const std::size_t d = 2 + rng.below(5), K = 2 + rng.below(3), n = 1 + rng.below(5);
        auto m = random_model(d, rng.below(4), 2 + rng.below(4), acts[trial % 3], K, rng);
        std::vector<SparseVector> rows;
        std::vector<std::size_t> y;
        for(std::size_t i = 0; i < n; ++i) {
            rows.push_back(SparseVector::from_dense(
                oracle::random_matrix(static_cast<Eigen::Index>(d), 1, rng)));
            y.push_back(rng.below(K));
        }
        const InputMatrix x(rows);
        const auto grads = cross_entropy_gradients(m, x, y);
        for(std::size_t l = 0; l < m.layers.size(); ++l) {
            auto probe = m;
            auto &W = probe.layers[l].weights;
            const Eigen::MatrixXd base = W;
            const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(base.data(), base.size());
            const auto num = oracle::central_gradient(
                [&](const Eigen::VectorXd &p) {
                    W = Eigen::Map<const Eigen::MatrixXd>(p.data(), base.rows(), base.cols());
                    return cross_entropy(probe, x, y);
                },
                flat);
            const Eigen::MatrixXd num_m = Eigen::Map<const Eigen::MatrixXd>(num.data(), base.rows(), base.cols());
            EXPECT_LT(oracle::max_relative_error(grads[l].weights, num_m), 1e-4)
                << "trial " << trial << " layer " << l;

            probe = m;
            auto &b = probe.layers[l].bias;
            const auto num_b = oracle::central_gradient(
                [&](const Eigen::VectorXd &p) {
                    b = p;
                    return cross_entropy(probe, x, y);
                },
                Eigen::VectorXd(m.layers[l].bias));
            EXPECT_LT(oracle::max_relative_error(grads[l].bias, num_b), 1e-4);
        }
    }
}

TEST(ClassifierGradient, SoftmaxRegressionIdentity)
{
    Rng rng(5);
    auto m = make_classifier({0, 0, Activation::sigmoid}, 4, {"0", "1"});
    const Eigen::VectorXd w = oracle::random_matrix(4, 1, rng);
    m.layers[0].weights.row(1) = w.transpose();
    const Eigen::VectorXd x = oracle::random_matrix(4, 1, rng);
    const double o1 = predict_proba(m, x)[1];
    const auto g = classifier_gradient(m, x, 1);
    EXPECT_LT((g - o1 * (1 - o1) * w).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((classifier_gradient(m, x, 1, OutputMode::logit) - w).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ClassifierGradient, ZeroModelHasZeroGradient)
{
    const auto m = make_classifier({3, 4, Activation::sigmoid}, 5, {"a", "b", "c"});
    for(std::size_t k = 0; k < 3; ++k)
        EXPECT_TRUE(classifier_gradient(m, Eigen::VectorXd::Ones(5), k).isZero(0.0));
    EXPECT_THROW(classifier_gradient(m, Eigen::VectorXd::Ones(5), 3), std::invalid_argument);
}

TEST(ClassifierGradient, MatchesFiniteDifferences)
{
    Rng rng(6);
    const Activation acts[] = {Activation::sigmoid, Activation::tanh, Activation::relu};
    for(int trial = 0; trial < 30; ++trial) {
        const std::size_t d = 2 + rng.below(6), K = 2 + rng.below(3);
        const auto m = random_model(d, rng.below(4), 2 + rng.below(5), acts[trial % 3], K, rng);
        const Eigen::VectorXd x = oracle::random_matrix(static_cast<Eigen::Index>(d), 1, rng);
        const auto J = classifier_jacobian(m, x);
        for(std::size_t k = 0; k < K; ++k) {
            const auto analytic = classifier_gradient(m, x, k);
            EXPECT_EQ(analytic, J.row(static_cast<Eigen::Index>(k)).transpose());
            const auto num = oracle::central_gradient(
                [&](const Eigen::VectorXd &v) { return predict_proba(m, v)[static_cast<Eigen::Index>(k)]; },
                x);
            EXPECT_LT(oracle::max_relative_error(analytic, num), 1e-4) << trial;
        }
    }
}

TEST(TrainClassifier, SeparableSetReachesPerfectAccuracy)
{
    const auto train = separable_set(200, 7);
    ClassifierConfig cfg;
    cfg.architecture = {1, 16, Activation::relu};
    cfg.seed = 3;
    cfg.batch_size = 16;
    const auto m = train_classifier({&train.inputs, train.labels}, {}, cfg);
    EXPECT_LE(m.training_loss_trace.size(), 200u);
    EXPECT_EQ(accuracy(m, train), 1.0);
    EXPECT_EQ(m.classes, (std::vector<std::string>{"no", "yes"}));
}

TEST(TrainClassifier, EarlyStoppingRestoresBestEpoch)
{
    const auto train = separable_set(100, 8);
    const auto val = separable_set(60, 9);
    ClassifierConfig cfg;
    cfg.architecture = {2, 8, Activation::sigmoid};
    cfg.seed = 1;
    cfg.max_epochs = 60;
    const auto m = train_classifier({&train.inputs, train.labels}, {&val.inputs, val.labels}, cfg);
    const auto &trace = m.validation_loss_trace;
    ASSERT_FALSE(trace.empty());
    const auto best = std::min_element(trace.begin(), trace.end());
    EXPECT_EQ(m.best_epoch, static_cast<std::size_t>(best - trace.begin()) + 1);
    std::vector<std::size_t> y;
    for(const auto &l : val.labels)
        y.push_back(m.class_index(l));
    EXPECT_NEAR(cross_entropy(m, val.inputs, y), *best, 1e-12);
    // stopped at most `patience` epochs after the best one, or ran out of epochs
    EXPECT_TRUE(trace.size() == cfg.max_epochs || trace.size() == m.best_epoch + cfg.patience);
}

TEST(TrainClassifier, SingleClassIsAnError)
{
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 4);
    const InputMatrix in(x);
    const std::vector<std::string> labels(4, "1");
    EXPECT_THROW(train_classifier({&in, labels}, {}, {}), std::invalid_argument);
}

TEST(TrainClassifier, DeterministicPerSeed)
{
    const auto train = separable_set(80, 10);
    ClassifierConfig cfg;
    cfg.architecture = {2, 6, Activation::tanh};
    cfg.max_epochs = 10;
    cfg.seed = 42;
    const LabeledData data{&train.inputs, train.labels};
    EXPECT_TRUE(train_classifier(data, {}, cfg) == train_classifier(data, {}, cfg));
}

TEST(RandomSearch, SingleSampleReturnsSampledConfig)
{
    const auto train = separable_set(60, 11), val = separable_set(30, 12);
    HyperparameterSpace space;
    space.max_layers = 2;
    space.max_width = 60;
    space.samples = 1;
    space.seed = 5;
    ClassifierConfig base;
    base.max_epochs = 5;
    const ValidationMetric neg_ce = [](const Eigen::MatrixXd &p, std::span<const std::size_t> y) {
        double s = 0;
        for(std::size_t i = 0; i < y.size(); ++i)
            s += std::log(p(static_cast<Eigen::Index>(y[i]), static_cast<Eigen::Index>(i)));
        return s;
    };
    const auto r = random_search(space, {&train.inputs, train.labels}, {&val.inputs, val.labels},
                                 neg_ce, base);
    Rng rng(5);
    const auto expected = sample_architecture(space, rng);
    ASSERT_EQ(r.candidates.size(), 1u);
    EXPECT_EQ(r.candidates[0].architecture, expected);
    EXPECT_EQ(r.model.architecture, expected);

    // a one-point space always yields that point
    space.min_layers = space.max_layers = 2;
    space.min_width = space.max_width = 20;
    space.activations = {Activation::relu};
    space.samples = 3;
    const auto one = random_search(space, {&train.inputs, train.labels}, {&val.inputs, val.labels},
                                   neg_ce, base);
    const ClassifierArchitecture point{2, 20, Activation::relu};
    EXPECT_EQ(one.model.architecture, point);
    for(const auto &c : one.candidates)
        EXPECT_EQ(c.architecture, point);
}

TEST(RandomSearch, BestScoreIsMaxOfLog)
{
    const auto train = separable_set(60, 13), val = separable_set(40, 14);
    HyperparameterSpace space;
    space.max_layers = 3;
    space.max_width = 80;
    space.samples = 5;
    space.seed = 8;
    ClassifierConfig base;
    base.max_epochs = 8;
    const ValidationMetric acc = [](const Eigen::MatrixXd &p, std::span<const std::size_t> y) {
        const auto pred = predicted_classes(p);
        double hits = 0;
        for(std::size_t i = 0; i < y.size(); ++i)
            hits += pred[i] == y[i];
        return hits / static_cast<double>(y.size()) + 1e-3 * p(0, 0);
    };
    const auto r = random_search(space, {&train.inputs, train.labels}, {&val.inputs, val.labels},
                                 acc, base);
    ASSERT_EQ(r.candidates.size(), 5u);
    double mx = -1;
    for(const auto &c : r.candidates)
        mx = std::max(mx, c.score);
    EXPECT_EQ(r.candidates[r.best].score, mx);
    for(std::size_t i = 0; i < r.best; ++i)
        EXPECT_LT(r.candidates[i].score, mx);
    EXPECT_EQ(r.model.architecture, r.candidates[r.best].architecture);
}

TEST(SampleArchitecture, StaysOnGrid)
{
    HyperparameterSpace space;
    Rng rng(15);
    for(int i = 0; i < 2000; ++i) {
        const auto a = sample_architecture(space, rng);
        ASSERT_LE(a.hidden_layers, 10u);
        if(a.hidden_layers > 0) {
            ASSERT_GE(a.width, 50u);
            ASSERT_LE(a.width, 1000u);
            ASSERT_EQ(a.width % 10, 0u);
        }
    }
    space.activations.clear();
    EXPECT_THROW(sample_architecture(space, rng), std::invalid_argument);
}

TEST(Concat, LayoutContract)
{
    Rng rng(16);
    const DenseRepresentation a{"P1", oracle::random_matrix(300, 1, rng)};
    const DenseRepresentation b{"P1", oracle::random_matrix(800, 1, rng)};
    const auto c = concat_representations(a, b);
    ASSERT_EQ(c.values.size(), 1100);
    EXPECT_EQ(c.values.head(300), a.values);
    EXPECT_EQ(c.values.tail(800), b.values);
    EXPECT_EQ(concat_representations(a, {"P1", Eigen::VectorXd()}).values, a.values);
    EXPECT_THROW(concat_representations(a, {"P2", b.values}), std::invalid_argument);
}

TEST(ClassifierSerialization, RoundTripAndPredictions)
{
    const auto train = separable_set(50, 17);
    ClassifierConfig cfg;
    cfg.architecture = {2, 5, Activation::relu};
    cfg.max_epochs = 5;
    const auto m = train_classifier({&train.inputs, train.labels}, {}, cfg);
    const auto dir = oracle::temp_dir("classifier");
    save_classifier(m, dir / "c.rpv");
    const auto loaded = load_classifier(dir / "c.rpv");
    EXPECT_TRUE(loaded == m);
    EXPECT_EQ(predict_proba(loaded, train.inputs), predict_proba(m, train.inputs));

    std::vector<std::string> ids;
    for(std::size_t i = 0; i < 50; ++i)
        ids.push_back("P" + std::to_string(i));
    write_predictions_tsv(dir / "pred.tsv", m, ids, train.labels, predict_proba(m, train.inputs));
    std::ifstream in(dir / "pred.tsv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "patient_id\ttrue_label\tpredicted_label\tp_no\tp_yes");
}
