#pragma once

#include "nulledit/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace nulledit {

/// Seedable generator with a fixed stream layout.
///
/// Engine: std::mt19937_64 (output fully specified by the standard).
/// uniform(): top 53 bits of one engine draw, scaled to [0, 1).
/// normal(): Box-Muller on two uniforms; both variates are used, cosine
/// branch first. Matrices are filled column by column.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Matrix gaussian_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  /// rows x cols with orthonormal columns (cols <= rows).
  Matrix orthonormal_columns(Index rows, Index cols) {
    const Matrix g = gaussian_matrix(rows, cols);
    return Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(rows, cols);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace nulledit
