#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace repvec {

/// Sparse row over a fixed-size feature space. Indices strictly increasing.
struct SparseVector {
    std::size_t dim = 0;
    std::vector<std::uint32_t> indices;
    std::vector<double> values;

    std::size_t nnz() const { return indices.size(); }
    bool empty() const { return indices.empty(); }

    Eigen::VectorXd to_dense() const
    {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
        for(std::size_t k = 0; k < indices.size(); ++k)
            out[indices[k]] = values[k];
        return out;
    }

    static SparseVector from_dense(const Eigen::VectorXd &x)
    {
        SparseVector out;
        out.dim = static_cast<std::size_t>(x.size());
        for(Eigen::Index i = 0; i < x.size(); ++i) {
            if(x[i] != 0.0) {
                out.indices.push_back(static_cast<std::uint32_t>(i));
                out.values.push_back(x[i]);
            }
        }
        return out;
    }

    bool operator==(const SparseVector &) const = default;
};

/// Either a set of sparse rows or a dense matrix with one column per
/// instance. Classifiers and the SDAE accept both.
class InputMatrix {
public:
    InputMatrix() = default;
    explicit InputMatrix(std::vector<SparseVector> rows);
    explicit InputMatrix(Eigen::MatrixXd columns);

    bool is_sparse() const { return _sparse; }
    std::size_t size() const;
    std::size_t dim() const { return _dim; }

    const SparseVector &sparse_row(std::size_t i) const { return _rows.at(i); }
    const std::vector<SparseVector> &sparse_rows() const { return _rows; }
    const Eigen::MatrixXd &dense() const { return _dense; }

    Eigen::VectorXd column(std::size_t i) const;

    /// out.col(b) = weights * x_{batch[b]}
    void multiply(const Eigen::MatrixXd &weights, std::span<const std::size_t> batch,
                  Eigen::MatrixXd &out) const;

    /// grad += delta * X_batch^T
    void accumulate_outer(const Eigen::MatrixXd &delta, std::span<const std::size_t> batch,
                          Eigen::MatrixXd &grad) const;

private:
    bool _sparse = true;
    std::size_t _dim = 0;
    std::vector<SparseVector> _rows;
    Eigen::MatrixXd _dense;
};

} // namespace repvec
