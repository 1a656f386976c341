#pragma once
// Synthetic hand+object scene generation: primitive SDFs, rejection-sampled
// placement, point sampling, orthographic depth rendering, dataset IO.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "posesdf/geom.hpp"
#include "posesdf/hand.hpp"
#include "posesdf/rng.hpp"

namespace posesdf {

enum class PrimitiveKind : uint32_t { Sphere = 0, Box = 1, Capsule = 2, Torus = 3 };

const char* primitive_kind_name(PrimitiveKind k);

// Rigid-placed analytic solid. size slots by kind:
//   Sphere:  [radius]
//   Box:     [hx, hy, hz] half extents
//   Capsule: [radius, half_length] axis along local z
//   Torus:   [major_R, minor_r] ring in local xy plane
// Unused slots are zero.
struct ObjectPrimitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 orientation{0, 0, 0};  // axis-angle, local -> world
  Vec3 t_o{0, 0, 0};          // centroid in world
  std::array<double, 4> size{0, 0, 0, 0};
};

// Exact signed distance to the primitive at world point x.
double analytic_object_sdf(const Vec3& x, const ObjectPrimitive& prim);

// Support distance: max over the solid of dot(p - t_o, u) for unit u.
double primitive_support(const ObjectPrimitive& prim, const Vec3& u);

// Largest |coordinate| any point of the solid can reach.
double primitive_extent(const ObjectPrimitive& prim);

// Uniform-area sample of the primitive surface (world frame).
Vec3 sample_primitive_surface(const ObjectPrimitive& prim, Rng& rng);

struct LabeledPoints {
  std::vector<Vec3> x;
  std::vector<double> sdf;
  uint32_t n_pos = 0;  // sdf > 0
  uint32_t n_neg = 0;  // sdf < 0
};

struct SceneSample {
  uint64_t id = 0;
  uint64_t seed = 0;
  int render_w = 0;
  int render_h = 0;
  std::vector<float> render;  // row-major depth image, 0 = background
  HandParams params;
  std::array<Vec3, 21> joints{};
  ObjectPrimitive prim;
  LabeledPoints hand_pts;
  LabeledPoints obj_pts;
  // Generator-measured min signed hand-surface-to-object distance.
  // In-memory diagnostic only, not serialized.
  double min_surface_dist = 0.0;
};

struct GenConfig {
  // hand pose ranges (radians)
  double global_rot_max = 1.2;
  double curl_mcp_max = 1.2;
  double curl_pip_max = 1.4;
  double curl_dip_max = 1.0;
  double abd_max = 0.15;
  double shape_amp = 0.8;
  // object size ranges (meters)
  double sphere_r_min = 0.025, sphere_r_max = 0.05;
  double box_h_min = 0.02, box_h_max = 0.045;
  double cap_r_min = 0.015, cap_r_max = 0.03;
  double cap_hl_min = 0.02, cap_hl_max = 0.05;
  double torus_R_min = 0.025, torus_R_max = 0.045;
  double torus_r_min = 0.008, torus_r_max = 0.02;
  // placement: accepted min hand-surface-to-object distance window (meters)
  double prox_min = -0.004;
  double prox_max = 0.005;
  int retry_budget = 1000;
  int prox_surface_samples = 40000;
  // point sampling (normalized units)
  int points_per_branch = 40000;
  double sigma_near = 0.05;
  double sigma_tight = 0.005;
  double frac_near = 0.475;
  double frac_tight = 0.475;  // remainder is uniform in the cube
  // rendering (normalized units)
  int render_w = 32;
  int render_h = 32;
  double render_half_window = 1.15;
  double render_z0 = 1.5;
  double render_far = 3.0;
  // heatmap coordinate bound the object centroid must respect after scaling
  double heatmap_c = 1.25;
};

// Min over dense hand capsule-surface samples of the object SDF. Negative
// values measure interpenetration depth of the hand surface into the object.
double min_hand_object_distance(const std::array<Vec3, 21>& joints, const HandTemplate& tpl,
                                const ObjectPrimitive& prim, int n_samples, uint64_t sample_seed);

// Draws pose/shape/object and places the object against the hand by rejection
// until min_hand_object_distance lands in [prox_min, prox_max]. Geometry is in
// meters; no points or render yet. Throws DataError when the budget runs out.
SceneSample generate_scene(uint64_t seed, const GenConfig& cfg, const HandTemplate& tpl);

// s = 0.99 / M where M is the largest |coordinate| any hand-capsule or object
// point reaches across all scenes. Scaling by s keeps every interior (sdf<0)
// point inside the unit cube with a 1% margin.
double compute_dataset_scale(const std::vector<SceneSample>& scenes, const HandTemplate& tpl);

double scene_extent(const SceneSample& scene, const HandTemplate& tpl);

// Multiplies all lengths (joints, t_o, sizes) by s. Rotations are untouched.
// Template scaling is the caller's job (scale_template).
void scale_scene(SceneSample& scene, double s);

// Mixture sampler: frac_near at N(0, sigma_near), frac_tight at N(0,
// sigma_tight) around surface points, remainder uniform in [-1,1]^3.
// Labels are the branch's analytic SDF at each point.
LabeledPoints sample_points_hand(const SceneSample& scene, const HandTemplate& tpl, int n,
                                 const GenConfig& cfg, Rng& rng);
LabeledPoints sample_points_object(const SceneSample& scene, int n, const GenConfig& cfg,
                                   Rng& rng);

// Orthographic sphere-traced depth along -z. Background pixels are exactly 0;
// hits map to (0,1] via 1 - t/render_far.
std::vector<float> render_scene(const SceneSample& scene, const HandTemplate& tpl,
                                const GenConfig& cfg, int w, int h);

// Rotates the whole scene by `angle` radians about world z and re-renders.
// SDF labels are invariant. angle == 0 returns the scene bitwise unchanged.
SceneSample augment_rotation(const SceneSample& scene, double angle, const HandTemplate& tpl,
                             const GenConfig& cfg);

struct DatasetManifest {
  uint32_t version = 1;
  uint64_t sample_count = 0;
  double scale = 1.0;  // normalized units per meter
  double heatmap_c = 1.25;
  HandTemplate tpl;  // already scaled
  std::vector<std::pair<std::string, std::string>> config_echo;
};

// Builds n scenes from seed: generate in meters, compute the shared scale,
// scale, sample points, render. Fails loudly if any scaled object centroid
// leaves the heatmap bound.
std::pair<std::vector<SceneSample>, DatasetManifest> build_dataset(uint64_t seed, int n,
                                                                   const GenConfig& cfg);

// dir/manifest.json + dir/samples/NNNNNN.asdf, one record per scene.
void write_dataset(const std::string& dir, const std::vector<SceneSample>& scenes,
                   const DatasetManifest& manifest);

std::pair<std::vector<SceneSample>, DatasetManifest> read_dataset(const std::string& dir);

// Single-record binary IO (exposed for corruption tests).
std::string encode_sample(const SceneSample& scene);
SceneSample decode_sample(const std::string& bytes, const std::string& path_for_errors);

}  // namespace posesdf
