#pragma once

#include <cmath>

#include "posesdf/rng.hpp"
#include "posesdf/tape.hpp"
#include "posesdf/tensor.hpp"

namespace posesdf {

struct Linear {
  Tensor w, b;
};

// Uniform fan-in init: U(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
inline Linear make_linear(int64_t out, int64_t in, Rng& rng) {
  Linear l;
  l.w = Tensor::zeros({out, in});
  l.b = Tensor::zeros({out});
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : l.w.data) v = rng.uniform(-bound, bound);
  for (auto& v : l.b.data) v = rng.uniform(-bound, bound);
  return l;
}

struct LinearNodes {
  int32_t w = -1, b = -1;
};

inline LinearNodes linear_params(ad::Tape& t, const Linear& l) {
  return {t.param(l.w), t.param(l.b)};
}

inline LinearNodes linear_constants(ad::Tape& t, const Linear& l) {
  return {t.constant(l.w), t.constant(l.b)};
}

inline int32_t linear_apply(ad::Tape& t, const LinearNodes& n, int32_t x) {
  return t.affine(n.w, x, n.b);
}

}  // namespace posesdf
