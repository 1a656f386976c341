#pragma once

#include <cmath>

#include "posesdf/tensor.hpp"

namespace posesdf {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter moment state. Lazily sized on first step.
struct AdamState {
  Tensor m, v;
  int64_t t = 0;
};

// Bias-corrected update. With a constant gradient the step magnitude
// approaches lr per element.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& st, const AdamConfig& cfg) {
  require(param.same_shape(grad), "adam: gradient shape " + const_cast<Tensor&>(grad).shape_str() +
                                      " does not match parameter " + param.shape_str());
  if (st.t == 0 && st.m.numel() == 0) {
    st.m = Tensor::zeros(param.shape.empty() ? std::vector<int64_t>{} : param.shape);
    if (param.shape.empty()) st.m = Tensor::scalar(0.0);
    st.v = st.m;
  }
  require(st.m.same_shape(param), "adam: state shape does not match parameter");
  st.t += 1;
  double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (int64_t i = 0; i < param.numel(); ++i) {
    double g = grad.at(i);
    st.m.at(i) = cfg.beta1 * st.m.at(i) + (1.0 - cfg.beta1) * g;
    st.v.at(i) = cfg.beta2 * st.v.at(i) + (1.0 - cfg.beta2) * g * g;
    double mhat = st.m.at(i) / c1;
    double vhat = st.v.at(i) / c2;
    param.at(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace posesdf
