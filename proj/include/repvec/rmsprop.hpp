#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace repvec {

struct RmspropConfig {
    double learning_rate = 0.001;
    double rho = 0.9;
    double epsilon = 1e-8;
};

/// acc <- rho * acc + (1 - rho) * g^2
/// w   <- w - lr * g / (sqrt(acc) + eps)
/// One accumulator per parameter block, addressed by slot.
class Rmsprop {
public:
    explicit Rmsprop(RmspropConfig config = {}) : _config(config) {}

    const RmspropConfig &config() const { return _config; }

    template <class Param, class Grad>
    void step(std::size_t slot, Eigen::MatrixBase<Param> &param, const Eigen::MatrixBase<Grad> &grad)
    {
        if(slot >= _acc.size())
            _acc.resize(slot + 1);
        auto &acc = _acc[slot];
        if(acc.rows() != param.rows() || acc.cols() != param.cols())
            acc = Eigen::MatrixXd::Zero(param.rows(), param.cols());
        acc.array() = _config.rho * acc.array() + (1.0 - _config.rho) * grad.array().square();
        param.derived().array() -=
            _config.learning_rate * grad.array() / (acc.array().sqrt() + _config.epsilon);
    }

    const std::vector<Eigen::MatrixXd> &accumulators() const { return _acc; }

private:
    RmspropConfig _config;
    std::vector<Eigen::MatrixXd> _acc;
};

} // namespace repvec
