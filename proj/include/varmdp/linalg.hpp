#pragma once

#include <cstddef>
#include <vector>

namespace varmdp::linalg {

// LU factorization with partial pivoting of a dense row-major matrix.
// Factored once per policy: the same factorization answers both the
// gain/bias system (solve) and the stationary-distribution system, which is
// its transpose (solve_transposed).
class DenseLu {
 public:
  // a is row-major n*n, consumed. Throws SingularMatrix if a pivot falls
  // below an absolute floor of 1e-13.
  DenseLu(std::vector<double> a, std::size_t n);

  // Solves A x = b in place.
  void solve(std::vector<double>& b) const;

  // Solves A^T x = b in place.
  void solve_transposed(std::vector<double>& b) const;

  std::size_t size() const { return n_; }

 private:
  std::vector<double> lu_;
  std::vector<std::size_t> piv_;
  std::size_t n_;
};

}  // namespace varmdp::linalg
