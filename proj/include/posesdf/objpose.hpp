#pragma once

#include <cstdint>
#include <memory>

#include "posesdf/geom.hpp"
#include "posesdf/linear.hpp"
#include "posesdf/tape.hpp"
#include "posesdf/tensor.hpp"

namespace posesdf {

// Per-voxel logits over an n^3 grid spanning the wrist-centered cube
// [-c, c]^3. Flat index is z-fastest: (ix*n + iy)*n + iz.
struct VolumetricHeatmap {
  Tensor logits;  // [n^3]
  int n = 16;
  double c = 1.25;
};

// Voxel-center metric coordinates as an [n^3, 3] table in flat-index order.
// Axis coordinate of cell i is -c + (i + 0.5) * 2c/n.
std::shared_ptr<const Tensor> voxel_centers(int n, double c);

// softmax over all voxels, then probability-weighted sum of voxel centers.
// The result lies strictly inside the bounds cube.
Vec3 soft_argmax(const VolumetricHeatmap& hm);

// Tape counterpart: logits node [n^3] -> translation node [3].
int32_t soft_argmax_on_tape(ad::Tape& tape, int32_t logits,
                            std::shared_ptr<const Tensor> centers);

// x_oc = x - t_o
inline Vec3 canonicalize_object(const Vec3& x, const Vec3& t_o) { return x - t_o; }

// Point batch [3] or [3,p] minus a broadcast translation node [3].
int32_t canonicalize_object_on_tape(ad::Tape& tape, int32_t points, int32_t t_o3);

// Image features [256] -> relu fc 512 -> n^3 logits.
struct HeatmapHead {
  Linear fc1, fc2;
  int n = 16;
  double c = 1.25;
};

HeatmapHead build_heatmap_head(uint64_t seed, int n, double c);

int32_t heatmap_head_forward(ad::Tape& tape, const LinearNodes& fc1, const LinearNodes& fc2,
                             int32_t features);

VolumetricHeatmap predict_heatmap(const HeatmapHead& head, const Tensor& features);

}  // namespace posesdf
