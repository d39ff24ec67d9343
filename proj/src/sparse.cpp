#include "repvec/sparse.hpp"

namespace repvec {

InputMatrix::InputMatrix(std::vector<SparseVector> rows)
    : _sparse(true), _rows(std::move(rows))
{
    if(!_rows.empty())
        _dim = _rows.front().dim;
    for(const auto &r : _rows)
        if(r.dim != _dim)
            throw std::invalid_argument("InputMatrix: rows have inconsistent dimensions");
}

InputMatrix::InputMatrix(Eigen::MatrixXd columns)
    : _sparse(false), _dim(static_cast<std::size_t>(columns.rows())), _dense(std::move(columns))
{
}

std::size_t InputMatrix::size() const
{
    return _sparse ? _rows.size() : static_cast<std::size_t>(_dense.cols());
}

Eigen::VectorXd InputMatrix::column(std::size_t i) const
{
    if(_sparse)
        return _rows.at(i).to_dense();
    return _dense.col(static_cast<Eigen::Index>(i));
}

void InputMatrix::multiply(const Eigen::MatrixXd &weights, std::span<const std::size_t> batch,
                           Eigen::MatrixXd &out) const
{
    if(static_cast<std::size_t>(weights.cols()) != _dim)
        throw std::invalid_argument("InputMatrix::multiply: dimension mismatch");
    const auto b = static_cast<Eigen::Index>(batch.size());
    out.setZero(weights.rows(), b);
    if(_sparse) {
        for(Eigen::Index c = 0; c < b; ++c) {
            const SparseVector &row = _rows[batch[c]];
            for(std::size_t k = 0; k < row.indices.size(); ++k)
                out.col(c).noalias() += row.values[k] * weights.col(row.indices[k]);
        }
    } else {
        Eigen::MatrixXd xb(_dense.rows(), b);
        for(Eigen::Index c = 0; c < b; ++c)
            xb.col(c) = _dense.col(static_cast<Eigen::Index>(batch[c]));
        out.noalias() = weights * xb;
    }
}

void InputMatrix::accumulate_outer(const Eigen::MatrixXd &delta, std::span<const std::size_t> batch,
                                   Eigen::MatrixXd &grad) const
{
    const auto b = static_cast<Eigen::Index>(batch.size());
    if(_sparse) {
        for(Eigen::Index c = 0; c < b; ++c) {
            const SparseVector &row = _rows[batch[c]];
            for(std::size_t k = 0; k < row.indices.size(); ++k)
                grad.col(row.indices[k]).noalias() += row.values[k] * delta.col(c);
        }
    } else {
        Eigen::MatrixXd xb(_dense.rows(), b);
        for(Eigen::Index c = 0; c < b; ++c)
            xb.col(c) = _dense.col(static_cast<Eigen::Index>(batch[c]));
        grad.noalias() += delta * xb.transpose();
    }
}

} // namespace repvec
