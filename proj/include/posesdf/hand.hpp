#pragma once

#include <array>
#include <vector>

#include "posesdf/geom.hpp"
#include "posesdf/linear.hpp"
#include "posesdf/tape.hpp"

namespace posesdf {

// Capsule-skeleton hand. 21 joints: wrist = 0, then per finger f in
// {thumb 0, index 1, middle 2, ring 3, pinky 4} the chain
// MCP 1+4f -> PIP 2+4f -> DIP 3+4f -> TIP 4+4f. Bone b (0..19) connects
// parent(b+1) -> b+1. 16 rotation sites: site 0 = wrist (global rotation,
// applied about the wrist), then per finger MCP 1+3f, PIP 2+3f, DIP 3+3f;
// fingertips carry no rotation. The wrist sits at the origin in the rest
// pose and the shape basis rescales bone lengths only, so the root never
// moves: the hand rotation center is the origin by construction.
struct HandTemplate {
  std::array<int, 21> parent;
  std::array<Vec3, 20> offset;                     // rest bone vectors, meters
  std::array<double, 20> radius;                   // capsule radii, meters
  std::array<std::array<double, 10>, 20> basis;    // bone scale = 1 + basis[b] . shape

  // Rotation site whose rotation orients bone b, ordered root-to-leaf.
  std::vector<int> bone_sites(int bone) const;
};

HandTemplate default_hand_template();

// Uniformly rescales offsets and radii (dataset normalization).
HandTemplate scale_template(const HandTemplate& tpl, double s);

struct HandParams {
  std::array<double, 48> pose{};   // 16 axis-angle triplets; [0..2] = global
  std::array<double, 10> shape{};
};

struct HandState {
  std::array<Vec3, 21> joints;
  std::vector<Vec3> surface;   // deterministic per-capsule samples
  Vec3 global_rot;             // copy of pose[0..2]
  Vec3 rot_center;             // origin by construction
};

// Positions by accumulating rotated, shape-scaled bone vectors.
// Throws NumericError on non-finite params or non-positive bone scale.
HandState forward_kinematics(const HandParams& params, const HandTemplate& tpl);

std::array<double, 20> bone_scales(const std::array<double, 10>& shape, const HandTemplate& tpl);

// Exact signed distance of a capsule around segment [a,b] with radius r.
double capsule_sdf(const Vec3& p, const Vec3& a, const Vec3& b, double r);

// min over bone capsules; negative inside.
double hand_sdf(const Vec3& p, const std::array<Vec3, 21>& joints, const HandTemplate& tpl);

// x_hc = R(global_rot)^-1 (x - rot_center) + rot_center
Vec3 canonicalize_hand(const Vec3& x, const Vec3& global_rot, const Vec3& rot_center);

// Area-weighted uniform sample of one capsule surface point.
Vec3 sample_capsule_surface(const Vec3& a, const Vec3& b, double r, Rng& rng);

// Tape graph of the 21 joint positions as one [63] node (xyz interleaved),
// differentiable in pose [48] and shape [10].
int32_t fk_on_tape(ad::Tape& tape, int32_t pose48, int32_t shape10, const HandTemplate& tpl);

// Canonicalization of a [3,p] point batch on the tape. R(w)^-1 = R(-w), and
// negation is exact, so this matches the transpose path bitwise.
int32_t canonicalize_hand_on_tape(ad::Tape& tape, int32_t points, int32_t global_rot3);

// Image features [256] -> relu fc 256 -> 58 (48 pose + 10 shape).
struct HandHead {
  Linear fc1, fc2;
};

HandHead build_hand_head(uint64_t seed);

struct HandHeadNodes {
  int32_t pose48;
  int32_t shape10;
};

HandHeadNodes hand_head_forward(ad::Tape& tape, const LinearNodes& fc1, const LinearNodes& fc2,
                                int32_t features);

}  // namespace posesdf
