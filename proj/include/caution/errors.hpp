#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace caution {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t epoch, const std::string& message)
        : std::runtime_error(message), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace caution
