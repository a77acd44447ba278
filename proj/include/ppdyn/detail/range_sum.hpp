#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ppdyn::detail {

// Bottom-up segment tree over nonnegative values. Range sums touch O(log n)
// partial sums of nonnegative terms, so they keep full relative accuracy even
// for tiny ranges next to large ones (prefix-sum differences do not).
class RangeSum {
 public:
  RangeSum() = default;
  explicit RangeSum(std::span<const double> values) : n_(values.size()), tree_(2 * values.size(), 0.0) {
    for (std::size_t i = 0; i < n_; ++i) tree_[n_ + i] = values[i];
    for (std::size_t i = n_; i-- > 1;) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
  }

  /// Sum over [first, last).
  double sum(std::size_t first, std::size_t last) const {
    double left = 0.0, right = 0.0;
    for (first += n_, last += n_; first < last; first >>= 1, last >>= 1) {
      if (first & 1) left += tree_[first++];
      if (last & 1) right += tree_[--last];
    }
    return left + right;
  }

  std::size_t size() const { return n_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> tree_;
};

}  // namespace ppdyn::detail
