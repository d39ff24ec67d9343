#include <fstream>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repvec/projection.hpp"
#include "repvec/rng.hpp"

using namespace repvec;

namespace {

Eigen::MatrixXd two_clusters(std::size_t per_cluster, std::size_t dim, double separation, Rng &rng,
                             std::vector<std::string> &labels)
{
    const auto n = static_cast<Eigen::Index>(2 * per_cluster);
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(dim));
    labels.clear();
    for(Eigen::Index i = 0; i < n; ++i) {
        const bool second = i >= static_cast<Eigen::Index>(per_cluster);
        for(Eigen::Index c = 0; c < X.cols(); ++c)
            X(i, c) = rng.normal() + (second && c == 0 ? separation : 0.0);
        labels.push_back(second ? "b" : "a");
    }
    return X;
}

} // namespace

TEST(Pca, CollinearPointsHaveOneComponent)
{
    Eigen::MatrixXd X(6, 2);
    for(int i = 0; i < 6; ++i)
        X.row(i) << 1.0 + 2.0 * i, -3.0 + 0.5 * i;
    const auto r = pca(X, 2);
    EXPECT_NEAR(r.explained_variance_ratio[0], 1.0, 1e-12);
    EXPECT_EQ(r.explained_variance_ratio[1], 0.0);
    EXPECT_EQ(r.rank, 1u);
    EXPECT_TRUE(r.rank_deficient);
}

TEST(Pca, FullBasisReconstructsCenteredData)
{
    Rng rng(1);
    const auto X = oracle::random_matrix(12, 5, rng, 3.0);
    const auto r = pca(X, 5);
    const Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
    EXPECT_LT((r.projected * r.components.transpose() - centered).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_FALSE(r.rank_deficient);
}

TEST(Pca, MatchesCovarianceEigendecomposition)
{
    Rng rng(2);
    for(int trial = 0; trial < 20; ++trial) {
        const auto X = oracle::random_matrix(20, 5, rng, 1.0 + trial);
        const auto r = pca(X, 5);
        const Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
        const Eigen::MatrixXd cov = centered.transpose() * centered / 19.0;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        const Eigen::VectorXd values = eig.eigenvalues().reverse();
        const double total = values.sum();
        for(Eigen::Index c = 0; c < 5; ++c) {
            EXPECT_NEAR(r.explained_variance[c], values[c], 1e-8 * std::max(1.0, values[0]));
            EXPECT_NEAR(r.explained_variance_ratio[c], values[c] / total, 1e-8);
            const Eigen::VectorXd v = eig.eigenvectors().col(4 - c);
            EXPECT_NEAR(std::abs(v.dot(r.components.col(c))), 1.0, 1e-8);
            if(c > 0)
                EXPECT_LE(r.explained_variance_ratio[c], r.explained_variance_ratio[c - 1]);
        }
    }
}

TEST(Pca, RejectsInvalidK)
{
    Rng rng(3);
    const auto X = oracle::random_matrix(4, 6, rng);
    EXPECT_THROW(pca(X, 5), std::invalid_argument);
    EXPECT_THROW(pca(X, 0), std::invalid_argument);
    EXPECT_THROW(pca(X.topRows(1), 1), std::invalid_argument);
    EXPECT_NO_THROW(pca(X, 4));
}

TEST(TsneAffinities, PerplexityMatchedPerRow)
{
    Rng rng(4);
    const auto X = oracle::random_matrix(60, 4, rng, 2.0);
    for(const double perp : {2.0, 5.0, 15.0}) {
        const auto c = conditional_affinities(pairwise_squared_distances(X), perp);
        for(Eigen::Index i = 0; i < X.rows(); ++i) {
            // recompute entropy in bits from the returned row
            double h = 0;
            for(Eigen::Index j = 0; j < X.rows(); ++j)
                if(c.p(i, j) > 0)
                    h -= c.p(i, j) * std::log2(c.p(i, j));
            EXPECT_NEAR(std::exp2(h), perp, 1e-3);
            EXPECT_NEAR(c.p.row(i).sum(), 1.0, 1e-12);
            EXPECT_EQ(c.p(i, i), 0.0);
        }
        const auto P = joint_probabilities(c);
        EXPECT_EQ((P - P.transpose()).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_GE(P.minCoeff(), 0.0);
        EXPECT_NEAR(P.sum(), 1.0, 1e-12);
    }
}

TEST(TsneAffinities, EquidistantPointsUniform)
{
    Eigen::MatrixXd X(3, 2);
    X << 0, 0, 1, 0, 0.5, std::sqrt(3.0) / 2;
    const auto P = joint_probabilities(conditional_affinities(pairwise_squared_distances(X), 2.0));
    for(int i = 0; i < 3; ++i)
        for(int j = 0; j < 3; ++j)
            EXPECT_NEAR(P(i, j), i == j ? 0.0 : 1.0 / 6.0, 1e-15);
}

TEST(TsneGradient, MatchesFiniteDifferences)
{
    Rng rng(5);
    for(int trial = 0; trial < 25; ++trial) {
        const auto n = static_cast<Eigen::Index>(4 + rng.below(7));
        const auto X = oracle::random_matrix(n, 3, rng);
        const auto P = joint_probabilities(conditional_affinities(pairwise_squared_distances(X), 2.0));
        const Eigen::MatrixXd Y = oracle::random_matrix(n, 2, rng);
        const Eigen::MatrixXd G = tsne_gradient(P, Y);
        const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(Y.data(), Y.size());
        const auto num = oracle::central_gradient(
            [&](const Eigen::VectorXd &v) {
                const Eigen::MatrixXd Yv = Eigen::Map<const Eigen::MatrixXd>(v.data(), n, 2);
                return tsne_kl(P, Yv);
            },
            flat);
        const Eigen::VectorXd analytic = Eigen::Map<const Eigen::VectorXd>(G.data(), G.size());
        EXPECT_LT(oracle::max_relative_error(analytic, num), 1e-3) << "trial " << trial;
    }
}

TEST(Tsne, SeparatesTwoClusters)
{
    Rng rng(6);
    std::vector<std::string> labels;
    const auto X = two_clusters(100, 10, 12.0, rng, labels);
    TsneConfig cfg;
    cfg.perplexity = 30;
    cfg.iterations = 1000;
    cfg.seed = 3;
    const auto r = tsne(X, cfg);
    EXPECT_GT(silhouette_score(r.embedding, labels), 0.5);

    double at100 = 0;
    for(const auto &t : r.kl_trace)
        if(t.iteration == 100)
            at100 = t.kl;
    EXPECT_LT(r.kl_trace.back().kl, at100);
    // after exaggeration ends, consecutive 100-iteration block means do not rise
    double previous = std::numeric_limits<double>::infinity();
    for(std::size_t start = 300; start + 100 <= cfg.iterations; start += 100) {
        double sum = 0;
        int count = 0;
        for(const auto &t : r.kl_trace)
            if(t.iteration >= start && t.iteration < start + 100) {
                sum += t.kl;
                ++count;
            }
        EXPECT_LE(sum / count, previous * 1.001);
        previous = sum / count;
    }
}

TEST(Tsne, DeterministicPerSeed)
{
    Rng rng(7);
    const auto X = oracle::random_matrix(40, 5, rng);
    TsneConfig cfg;
    cfg.perplexity = 5;
    cfg.iterations = 300;
    cfg.seed = 11;
    const auto a = tsne(X, cfg), b = tsne(X, cfg);
    EXPECT_EQ(a.embedding, b.embedding);
    cfg.seed = 12;
    EXPECT_NE(tsne(X, cfg).embedding, a.embedding);
}

TEST(Tsne, RejectsInfeasibleSettings)
{
    Rng rng(8);
    const auto X = oracle::random_matrix(31, 3, rng);
    TsneConfig cfg;
    cfg.perplexity = 10; // (31 - 1) / 3 = 10, not strictly below
    EXPECT_THROW(tsne(X, cfg), std::invalid_argument);
    cfg.perplexity = 5;
    cfg.max_points = 30;
    EXPECT_THROW(tsne(X, cfg), std::invalid_argument);
}

TEST(Projection, PcaThenTsne)
{
    Rng rng(9);
    std::vector<std::string> labels;
    const auto X = two_clusters(30, 80, 15.0, rng, labels);
    ProjectionConfig cfg;
    cfg.tsne.perplexity = 10;
    cfg.tsne.iterations = 400;
    const auto r = project(X, cfg);
    EXPECT_EQ(r.pca.projected.cols(), 50);
    EXPECT_EQ(r.tsne.embedding.rows(), 60);
}

TEST(Silhouette, HandComputed)
{
    Eigen::MatrixXd X(4, 1);
    X << 0, 1, 10, 11;
    const std::vector<std::string> labels = {"a", "a", "b", "b"};
    const double expected = (9.5 / 10.5 + 8.5 / 9.5) / 2.0;
    EXPECT_NEAR(silhouette_score(X, labels), expected, 1e-15);
    const std::vector<std::string> one(4, "a");
    EXPECT_THROW(silhouette_score(X, one), std::invalid_argument);
}

TEST(Projection, TsvLayout)
{
    Eigen::MatrixXd Y(2, 2);
    Y << 0.5, -1, 2, 3.25;
    const std::vector<std::string> ids = {"p1", "p2"}, colors = {"circ", "resp"};
    const auto dir = oracle::temp_dir("projection_tsv");
    write_projection_tsv(dir / "p.tsv", ids, Y, colors);
    std::ifstream in(dir / "p.tsv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "patient_id\tx\ty\tcolor_label");
    std::getline(in, line);
    EXPECT_EQ(line, "p1\t0.5\t-1\tcirc");
}
