#include "repvec/projection.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <stdexcept>

#include <Eigen/SVD>

#include "repvec/rng.hpp"

namespace repvec {

PcaResult pca(const Eigen::MatrixXd &data, std::size_t k)
{
    const auto n = data.rows(), d = data.cols();
    if(n < 2)
        throw std::invalid_argument("pca: need at least 2 points");
    if(k == 0 || k > static_cast<std::size_t>(std::min(n, d)))
        throw std::invalid_argument("pca: k must be between 1 and min(n, d) = " +
                                    std::to_string(std::min(n, d)));
    const auto kk = static_cast<Eigen::Index>(k);

    PcaResult r;
    r.mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.rowwise() - r.mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    const double denom = static_cast<double>(n - 1);

    const double tol = std::max(1e-12, s.size() ? s[0] * 1e-10 : 0.0);
    for(Eigen::Index i = 0; i < s.size(); ++i)
        r.rank += s[i] > tol;
    r.rank_deficient = k > r.rank;

    r.components = svd.matrixV().leftCols(kk);
    for(Eigen::Index c = 0; c < kk; ++c) {
        Eigen::Index arg = 0;
        r.components.col(c).cwiseAbs().maxCoeff(&arg);
        if(r.components(arg, c) < 0)
            r.components.col(c) *= -1.0;
    }
    r.explained_variance = s.head(kk).array().square() / denom;
    const double total = centered.squaredNorm() / denom;
    r.explained_variance_ratio = total > 0 ? Eigen::VectorXd(r.explained_variance / total)
                                           : Eigen::VectorXd::Zero(kk);
    for(Eigen::Index c = static_cast<Eigen::Index>(r.rank); c < kk; ++c) {
        r.explained_variance[c] = 0.0;
        r.explained_variance_ratio[c] = 0.0;
    }
    r.projected = centered * r.components;
    return r;
}

Eigen::MatrixXd pairwise_squared_distances(const Eigen::MatrixXd &points)
{
    const auto n = points.rows();
    Eigen::MatrixXd D(n, n);
    for(Eigen::Index i = 0; i < n; ++i) {
        D(i, i) = 0.0;
        for(Eigen::Index j = i + 1; j < n; ++j)
            D(i, j) = D(j, i) = (points.row(i) - points.row(j)).squaredNorm();
    }
    return D;
}

namespace {

// fills row with p_{j|i} for the given precision and returns the entropy in nats
double row_entropy(const Eigen::MatrixXd &D, Eigen::Index i, double beta, Eigen::Ref<Eigen::RowVectorXd> row)
{
    const auto n = D.rows();
    // shift by the nearest neighbour distance so the largest term is exp(0)
    double dmin = std::numeric_limits<double>::infinity();
    for(Eigen::Index j = 0; j < n; ++j)
        if(j != i)
            dmin = std::min(dmin, D(i, j));
    double sum = 0.0, weighted = 0.0;
    for(Eigen::Index j = 0; j < n; ++j) {
        if(j == i) {
            row[j] = 0.0;
            continue;
        }
        const double shifted = D(i, j) - dmin;
        row[j] = std::exp(-beta * shifted);
        sum += row[j];
        weighted += shifted * row[j];
    }
    row /= sum;
    return std::log(sum) + beta * weighted / sum;
}

} // namespace

ConditionalAffinities conditional_affinities(const Eigen::MatrixXd &D, double perplexity)
{
    const auto n = D.rows();
    if(D.cols() != n)
        throw std::invalid_argument("conditional_affinities: distance matrix must be square");
    if(!(perplexity >= 1.0) || !(perplexity <= static_cast<double>(n - 1)))
        throw std::invalid_argument("perplexity must lie in [1, n - 1]; got " + std::to_string(perplexity) +
                                    " for n = " + std::to_string(n));
    const double target = std::log(perplexity);

    ConditionalAffinities c;
    c.p = Eigen::MatrixXd::Zero(n, n);
    c.beta.resize(n);
    c.perplexity.resize(n);
    Eigen::RowVectorXd row(n);
    for(Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        double h = row_entropy(D, i, beta, row);
        for(int it = 0; it < 200 && std::abs(h - target) > 1e-10; ++it) {
            // entropy decreases as beta grows
            if(h > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            h = row_entropy(D, i, beta, row);
        }
        c.p.row(i) = row;
        c.beta[i] = beta;
        c.perplexity[i] = std::exp(h);
    }
    return c;
}

Eigen::MatrixXd joint_probabilities(const ConditionalAffinities &conditional)
{
    const auto n = static_cast<double>(conditional.p.rows());
    return (conditional.p + conditional.p.transpose()) / (2.0 * n);
}

namespace {

// Student-t numerators (1 + |y_i - y_j|^2)^-1 with zero diagonal, and their sum
Eigen::MatrixXd kernel(const Eigen::MatrixXd &Y, double &z)
{
    const auto n = Y.rows();
    Eigen::MatrixXd W(n, n);
    z = 0.0;
    for(Eigen::Index i = 0; i < n; ++i) {
        W(i, i) = 0.0;
        for(Eigen::Index j = i + 1; j < n; ++j) {
            const double w = 1.0 / (1.0 + (Y.row(i) - Y.row(j)).squaredNorm());
            W(i, j) = W(j, i) = w;
            z += 2.0 * w;
        }
    }
    return W;
}

double kl_from_kernel(const Eigen::MatrixXd &P, const Eigen::MatrixXd &W, double z)
{
    double kl = 0.0;
    const auto n = P.rows();
    for(Eigen::Index i = 0; i < n; ++i)
        for(Eigen::Index j = 0; j < n; ++j)
            if(i != j && P(i, j) > 0.0)
                kl += P(i, j) * std::log(P(i, j) / (W(i, j) / z));
    return kl;
}

Eigen::MatrixXd gradient_from_kernel(const Eigen::MatrixXd &P, const Eigen::MatrixXd &W, double z,
                                     const Eigen::MatrixXd &Y, double exaggeration)
{
    const auto n = Y.rows();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, Y.cols());
    for(Eigen::Index i = 0; i < n; ++i)
        for(Eigen::Index j = 0; j < n; ++j) {
            if(i == j)
                continue;
            const double m = (exaggeration * P(i, j) - W(i, j) / z) * W(i, j);
            G.row(i) += 4.0 * m * (Y.row(i) - Y.row(j));
        }
    return G;
}

void check_joint(const Eigen::MatrixXd &P, const Eigen::MatrixXd &Y)
{
    if(P.rows() != P.cols() || P.rows() != Y.rows())
        throw std::invalid_argument("t-SNE: P must be n x n for n embedding rows");
}

} // namespace

double tsne_kl(const Eigen::MatrixXd &P, const Eigen::MatrixXd &Y)
{
    check_joint(P, Y);
    double z = 0.0;
    const auto W = kernel(Y, z);
    return kl_from_kernel(P, W, z);
}

Eigen::MatrixXd tsne_gradient(const Eigen::MatrixXd &P, const Eigen::MatrixXd &Y)
{
    check_joint(P, Y);
    double z = 0.0;
    const auto W = kernel(Y, z);
    return gradient_from_kernel(P, W, z, Y, 1.0);
}

TsneResult tsne(const Eigen::MatrixXd &points, const TsneConfig &config)
{
    const auto n = points.rows();
    if(static_cast<std::size_t>(n) > config.max_points)
        throw std::invalid_argument("t-SNE: " + std::to_string(n) + " points exceed the exact-method cap of " +
                                    std::to_string(config.max_points));
    if(!(config.perplexity > 0.0) || !(config.perplexity < static_cast<double>(n - 1) / 3.0))
        throw std::invalid_argument("t-SNE perplexity must satisfy 0 < perplexity < (n - 1) / 3; got " +
                                    std::to_string(config.perplexity) + " for n = " + std::to_string(n));
    if(config.iterations == 0)
        throw std::invalid_argument("t-SNE: iterations must be positive");
    const auto P = joint_probabilities(conditional_affinities(pairwise_squared_distances(points), config.perplexity));

    Rng rng(config.seed);
    TsneResult r;
    r.embedding.resize(n, 2);
    for(Eigen::Index i = 0; i < n; ++i)
        for(Eigen::Index c = 0; c < 2; ++c)
            r.embedding(i, c) = config.init_scale * rng.normal();

    Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, 2), gains = Eigen::MatrixXd::Ones(n, 2);
    const std::size_t interval = std::max<std::size_t>(1, config.trace_interval);
    for(std::size_t it = 0; it < config.iterations; ++it) {
        double z = 0.0;
        const auto W = kernel(r.embedding, z);
        if(it % interval == 0)
            r.kl_trace.push_back({it, kl_from_kernel(P, W, z)});
        const double exaggeration = it < config.exaggeration_iterations ? config.early_exaggeration : 1.0;
        const double momentum = it < config.momentum_switch ? config.initial_momentum : config.final_momentum;
        const auto G = gradient_from_kernel(P, W, z, r.embedding, exaggeration);
        for(Eigen::Index i = 0; i < n; ++i)
            for(Eigen::Index c = 0; c < 2; ++c) {
                const bool same_sign = (G(i, c) > 0) == (update(i, c) > 0);
                gains(i, c) = std::max(config.min_gain, same_sign ? gains(i, c) * 0.8 : gains(i, c) + 0.2);
                update(i, c) = momentum * update(i, c) - config.learning_rate * gains(i, c) * G(i, c);
            }
        r.embedding += update;
        r.embedding.rowwise() -= r.embedding.colwise().mean();
    }
    r.kl_trace.push_back({config.iterations, tsne_kl(P, r.embedding)});
    return r;
}

ProjectionResult project(const Eigen::MatrixXd &data, const ProjectionConfig &config)
{
    const auto k = std::min<std::size_t>(config.pca_dims, static_cast<std::size_t>(std::min(data.rows(), data.cols())));
    ProjectionResult r;
    r.pca = pca(data, k);
    r.tsne = tsne(r.pca.projected, config.tsne);
    return r;
}

double silhouette_score(const Eigen::MatrixXd &points, std::span<const std::string> labels)
{
    const auto n = points.rows();
    if(static_cast<std::size_t>(n) != labels.size())
        throw std::invalid_argument("silhouette_score: points and labels differ in length");
    std::map<std::string, std::size_t> ids;
    for(const auto &l : labels)
        ids.emplace(l, ids.size());
    if(ids.size() < 2)
        throw std::invalid_argument("silhouette_score: need at least two clusters");
    std::vector<std::size_t> cluster(labels.size()), sizes(ids.size(), 0);
    for(std::size_t i = 0; i < labels.size(); ++i) {
        cluster[i] = ids.at(labels[i]);
        ++sizes[cluster[i]];
    }

    double total = 0.0;
    std::vector<double> sums(ids.size());
    for(Eigen::Index i = 0; i < n; ++i) {
        const auto ci = cluster[static_cast<std::size_t>(i)];
        if(sizes[ci] == 1)
            continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for(Eigen::Index j = 0; j < n; ++j)
            if(j != i)
                sums[cluster[static_cast<std::size_t>(j)]] += (points.row(i) - points.row(j)).norm();
        const double a = sums[ci] / static_cast<double>(sizes[ci] - 1);
        double b = std::numeric_limits<double>::infinity();
        for(std::size_t c = 0; c < sums.size(); ++c)
            if(c != ci)
                b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        const double m = std::max(a, b);
        total += m > 0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

void write_projection_tsv(const std::filesystem::path &path, std::span<const std::string> ids,
                          const Eigen::MatrixXd &embedding, std::span<const std::string> color_labels)
{
    if(ids.size() != static_cast<std::size_t>(embedding.rows()) || color_labels.size() != ids.size() ||
       embedding.cols() != 2)
        throw std::invalid_argument("write_projection_tsv: ids, labels and n x 2 embedding must align");
    std::ofstream out(path);
    if(!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "patient_id\tx\ty\tcolor_label\n" << std::setprecision(12);
    for(std::size_t i = 0; i < ids.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out << ids[i] << '\t' << embedding(r, 0) << '\t' << embedding(r, 1) << '\t' << color_labels[i] << '\n';
    }
}

} // namespace repvec
