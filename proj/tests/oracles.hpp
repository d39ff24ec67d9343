#pragma once

// Test-only oracles: central finite differences and small helpers that never
// call into the code paths they check.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "repvec/rng.hpp"

namespace repvec::oracle {

/// d f / d x_i by central differences.
inline Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd &)> &f,
                                        const Eigen::VectorXd &x, double h = 1e-5)
{
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for(Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = xp[i];
        xp[i] = orig + h;
        const double fp = f(xp);
        xp[i] = orig - h;
        const double fm = f(xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Elementwise |a - n| / max(|a|, |n|, floor); the floor keeps entries that
/// are zero up to rounding from dominating.
inline double max_relative_error(const Eigen::MatrixXd &analytic, const Eigen::MatrixXd &numeric,
                                 double floor = 1e-7)
{
    double worst = 0.0;
    for(Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double a = analytic.data()[i];
        const double n = numeric.data()[i];
        const double denom = std::max({std::abs(a), std::abs(n), floor});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng &rng,
                                     double scale = 1.0)
{
    Eigen::MatrixXd m(rows, cols);
    for(Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.uniform(-scale, scale);
    return m;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::filesystem::path temp_dir(const std::string &name)
{
    auto dir = std::filesystem::temp_directory_path() / ("repvec_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace repvec::oracle
