#pragma once

#include <stdexcept>

namespace repvec {

/// Optimization diverged or produced non-finite values.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace repvec
