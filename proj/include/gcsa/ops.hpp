#pragma once

#include "gcsa/rng.hpp"
#include "gcsa/tensor.hpp"

namespace gcsa {

// Inverted dropout mask: entries are 0 with probability p, else 1/(1-p), so
// no rescaling is needed at inference. p = 0 yields the identity mask.
template <typename T>
Tensor<T> dropout_mask(int rows, int cols, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  Tensor<T> mask(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (auto& x : mask.data) x = (p > 0.0 && rng.uniform() < p) ? T(0) : keep;
  return mask;
}

}  // namespace gcsa
