#ifndef LESITA_COMMON_HPP
#define LESITA_COMMON_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace lesita {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Thrown when a caller passes a value outside an operation's domain
// (negative threshold, rho > s, ...).
struct InvalidParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when array shapes are inconsistent.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown on malformed files, missing datasets, unreadable checkpoints.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a computation produces NaN/Inf or otherwise diverges.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_same_length(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
}

// Thresholds are stored unconstrained while training and clamped on use.
inline constexpr double kMinThreshold = 1e-8;

inline double clamp_threshold(double t) { return t < kMinThreshold ? kMinThreshold : t; }

}  // namespace lesita

#endif  // LESITA_COMMON_HPP
