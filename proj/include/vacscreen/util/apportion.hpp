#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace vacscreen {

// Largest-remainder apportionment of `total` over `weights`, capped per slot.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights,
                                          const std::vector<std::size_t>& caps) {
  const std::size_t k = weights.size();
  std::vector<std::size_t> out(k, 0);
  std::size_t remaining = total;
  std::vector<bool> open(k, true);
  // Iterate until the capped slots stop absorbing the remainder.
  while (remaining > 0) {
    double wsum = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (open[i]) wsum += weights[i];
    if (wsum <= 0) break;
    std::vector<double> quota(k, 0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (!open[i]) continue;
      quota[i] = static_cast<double>(remaining) * weights[i] / wsum;
      auto base = static_cast<std::size_t>(std::floor(quota[i]));
      base = std::min(base, caps[i] - out[i]);
      out[i] += base;
      assigned += base;
    }
    remaining -= assigned;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < k; ++i)
      if (open[i] && out[i] < caps[i]) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      double ra = quota[a] - std::floor(quota[a]);
      double rb = quota[b] - std::floor(quota[b]);
      return ra > rb;
    });
    for (std::size_t i : order) {
      if (remaining == 0) break;
      ++out[i];
      --remaining;
    }
    bool any_open = false;
    for (std::size_t i = 0; i < k; ++i) {
      if (out[i] >= caps[i]) open[i] = false;
      any_open = any_open || open[i];
    }
    if (!any_open) break;
  }
  return out;
}

}  // namespace vacscreen
