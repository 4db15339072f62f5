#ifndef SIMFUSE_COMMON_HPP
#define SIMFUSE_COMMON_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace simfuse {

/// Bad or inconsistent input (missing labels, dimension mismatch, ...).
/// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical degeneracy (constant intensity range, zero variance, ...).
/// The CLI maps this to exit code 3.
class DegenerateError : public std::runtime_error {
public:
    explicit DegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense row-major matrix of doubles. Rows are samples, columns are
/// features or classes. Kept deliberately minimal; heavy linear algebra
/// is not needed anywhere in this codebase.
struct RowMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    RowMatrix() = default;
    RowMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

using Dims = std::array<int, 3>;
using Spacing = std::array<double, 3>;

/// Formats a double so that it parses back to the identical bits
/// (shortest round-trip via 17 significant digits). Used by every text
/// writer so that serialized artifacts are byte-stable.
std::string format_double(double v);

void warn(const std::string& msg);

} // namespace simfuse

#endif
