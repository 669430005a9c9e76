#include "sessat/tree_builder.hpp"

#include <algorithm>
#include <numeric>

namespace sessat::detail {

SortedColumns presort(const Matrix& x) {
  SortedColumns cols;
  cols.order.resize(x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto& order = cols.order[f];
    order.resize(x.rows());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
  return cols;
}

}  // namespace sessat::detail
