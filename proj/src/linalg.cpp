#include "varmdp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "varmdp/errors.hpp"
#include "varmdp/kernels.hpp"

namespace varmdp::linalg {

namespace {
constexpr double kPivotFloor = 1e-13;
}

DenseLu::DenseLu(std::vector<double> a, std::size_t n)
    : lu_(std::move(a)), piv_(n), n_(n) {
  if (lu_.size() != n * n) throw Error("DenseLu: matrix size mismatch");
  double* lu = lu_.data();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::fabs(lu[k * n + k]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::fabs(lu[i * n + k]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best < kPivotFloor)
      throw SingularMatrix("DenseLu: pivot below floor at column " +
                           std::to_string(k));
    piv_[k] = p;
    if (p != k)
      std::swap_ranges(lu + k * n, lu + (k + 1) * n, lu + p * n);
    const double pivot = lu[k * n + k];
    for (std::size_t i = k + 1; i < n; ++i) {
      const double m = lu[i * n + k] / pivot;
      lu[i * n + k] = m;
      if (m != 0.0)
        kernels::axpy(-m, lu + k * n + k + 1, lu + i * n + k + 1, n - k - 1);
    }
  }
}

void DenseLu::solve(std::vector<double>& b) const {
  const std::size_t n = n_;
  const double* lu = lu_.data();
  for (std::size_t k = 0; k < n; ++k)
    if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
  for (std::size_t i = 1; i < n; ++i)
    b[i] -= kernels::dot(lu + i * n, b.data(), i);
  for (std::size_t i = n; i-- > 0;) {
    b[i] -= kernels::dot(lu + i * n + i + 1, b.data() + i + 1, n - i - 1);
    b[i] /= lu[i * n + i];
  }
}

void DenseLu::solve_transposed(std::vector<double>& b) const {
  const std::size_t n = n_;
  const double* lu = lu_.data();
  // U^T y = b, forward.
  for (std::size_t j = 0; j < n; ++j) {
    b[j] /= lu[j * n + j];
    if (b[j] != 0.0)
      kernels::axpy(-b[j], lu + j * n + j + 1, b.data() + j + 1, n - j - 1);
  }
  // L^T z = y, backward (L has unit diagonal).
  for (std::size_t j = n; j-- > 0;) {
    if (b[j] != 0.0) kernels::axpy(-b[j], lu + j * n, b.data(), j);
  }
  for (std::size_t k = n; k-- > 0;)
    if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
}

}  // namespace varmdp::linalg
