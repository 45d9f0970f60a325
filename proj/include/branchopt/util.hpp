#ifndef BRANCHOPT_UTIL_HPP
#define BRANCHOPT_UTIL_HPP

#include <cstddef>
#include <vector>

namespace branchopt {

// Pairwise (tree) summation; stabilizes long sums and fixes the reduction
// order so totals are reproducible bit for bit.
inline double pairwise_sum(const double* data, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = data[0];
    for (std::size_t i = 1; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

}  // namespace branchopt

#endif
