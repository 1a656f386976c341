#include "posesdf/objpose.hpp"

#include <algorithm>
#include <cmath>

#include "posesdf/errors.hpp"

namespace posesdf {

std::shared_ptr<const Tensor> voxel_centers(int n, double c) {
  require(n >= 1 && c > 0.0, "voxel_centers: need n >= 1 and c > 0");
  auto t = std::make_shared<Tensor>(
      Tensor::zeros({static_cast<int64_t>(n) * n * n, 3}));
  double pitch = 2.0 * c / n;
  int64_t row = 0;
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      for (int iz = 0; iz < n; ++iz, ++row) {
        t->at(row, 0) = -c + (ix + 0.5) * pitch;
        t->at(row, 1) = -c + (iy + 0.5) * pitch;
        t->at(row, 2) = -c + (iz + 0.5) * pitch;
      }
  return t;
}

Vec3 soft_argmax(const VolumetricHeatmap& hm) {
  int64_t total = static_cast<int64_t>(hm.n) * hm.n * hm.n;
  require(hm.logits.numel() == total, "soft_argmax: logits must have n^3 entries");
  // Same max-subtracted softmax and summation order as the tape op.
  double mx = hm.logits.data[0];
  for (double v : hm.logits.data) mx = std::max(mx, v);
  double sum = 0;
  std::vector<double> p(hm.logits.data.size());
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(hm.logits.data[i] - mx);
    sum += p[i];
  }
  auto centers = voxel_centers(hm.n, hm.c);
  Vec3 out{0, 0, 0};
  for (size_t i = 0; i < p.size(); ++i) {
    double w = p[i] / sum;
    int64_t r = static_cast<int64_t>(i);
    out.x += w * centers->at(r, 0);
    out.y += w * centers->at(r, 1);
    out.z += w * centers->at(r, 2);
  }
  return out;
}

int32_t soft_argmax_on_tape(ad::Tape& tape, int32_t logits,
                            std::shared_ptr<const Tensor> centers) {
  return tape.coord_sum(tape.softmax(logits), std::move(centers));
}

int32_t canonicalize_object_on_tape(ad::Tape& tape, int32_t points, int32_t t_o3) {
  const Tensor& pv = tape.value(points);
  require(tape.value(t_o3).numel() == 3, "canonicalize_object: translation must be [3]");
  if (pv.rank() == 1) return tape.sub(points, t_o3);
  require(pv.rank() == 2 && pv.rows() == 3,
          "canonicalize_object: points must be [3] or [3,p]");
  return tape.sub(points, tape.replicate_cols(t_o3, pv.cols()));
}

HeatmapHead build_heatmap_head(uint64_t seed, int n, double c) {
  require(n >= 1 && c > 0.0, "heatmap head: need n >= 1 and c > 0");
  Rng rng(seed);
  HeatmapHead h;
  h.n = n;
  h.c = c;
  h.fc1 = make_linear(512, 256, rng);
  h.fc2 = make_linear(static_cast<int64_t>(n) * n * n, 512, rng);
  return h;
}

int32_t heatmap_head_forward(ad::Tape& tape, const LinearNodes& fc1, const LinearNodes& fc2,
                             int32_t features) {
  return linear_apply(tape, fc2, tape.relu(linear_apply(tape, fc1, features)));
}

VolumetricHeatmap predict_heatmap(const HeatmapHead& head, const Tensor& features) {
  require(features.numel() == 256, "predict_heatmap: features must be [256]");
  ad::Tape t;
  LinearNodes n1{t.constant(head.fc1.w), t.constant(head.fc1.b)};
  LinearNodes n2{t.constant(head.fc2.w), t.constant(head.fc2.b)};
  auto out = heatmap_head_forward(t, n1, n2, t.constant(features));
  VolumetricHeatmap hm;
  hm.n = head.n;
  hm.c = head.c;
  hm.logits = t.value(out);
  return hm;
}

}  // namespace posesdf
