#pragma once
// Reconstruction evaluation: chamfer distances after similarity alignment,
// wrist-relative joint error, translation error, and hand-object
// interaction measures, plus the report they aggregate into.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "posesdf/geom.hpp"
#include "posesdf/meshops.hpp"
#include "posesdf/rng.hpp"

namespace posesdf {

// Points drawn from each mesh before alignment and chamfer evaluation.
inline constexpr int kChamferSamples = 30000;

// Exact nearest-neighbor queries over a fixed point set (median-split
// kd-tree; no approximation, results feed acceptance thresholds).
class NearestNeighbors {
 public:
  explicit NearestNeighbors(std::vector<Vec3> pts);
  // Index of the closest stored point; optionally its squared distance.
  int32_t nearest(const Vec3& q, double* sq = nullptr) const;
  // Squared distance from q to the closest stored point.
  double nearest_sq(const Vec3& q) const;
  const std::vector<Vec3>& points() const { return pts_; }

 private:
  struct Node {
    int32_t left = -1, right = -1;  // children; -1 for leaves
    int32_t begin = 0, end = 0;     // index range for leaves
    int8_t axis = 0;
    double split = 0;
  };
  int32_t build(int32_t begin, int32_t end);
  void query(int32_t node, const Vec3& q, double& best, int32_t& best_idx) const;
  std::vector<Vec3> pts_;
  std::vector<int32_t> idx_;
  std::vector<Node> nodes_;
  int32_t root_ = -1;
};

// Sum of both directional means of squared nearest-neighbor distances.
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Area-weighted surface draw; deterministic for a given rng state.
std::vector<Vec3> sample_mesh_surface(const TriMesh& mesh, int n, Rng& rng);

struct SimilarityTransform {
  double s = 1.0;
  Mat3 R = Mat3::identity();
  Vec3 t{0, 0, 0};
  Vec3 apply(const Vec3& p) const { return R * p * s + t; }
  std::vector<Vec3> apply(const std::vector<Vec3>& pts) const;
  SimilarityTransform inverse() const;
};

enum class AlignMode { ScaleTranslation, Procrustes };

// Closed-form least-squares similarity from matched pairs (Horn's quaternion
// method for the rotation when enabled). Throws NumericError for a
// zero-variance source or a non-positive fitted scale.
SimilarityTransform fit_similarity_corresponded(const std::vector<Vec3>& src,
                                                const std::vector<Vec3>& dst, AlignMode mode);

// Iterated closest points: nearest-neighbor correspondences, closed-form
// refit from the original source, candidates scored by symmetric chamfer.
// Runs at most 30 iterations, stops at relative improvement < 1e-9, and only
// ever accepts improvements over `init`, so the returned transform is never
// worse than the initial one.
SimilarityTransform align_similarity(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                                     AlignMode mode,
                                     const SimilarityTransform& init = SimilarityTransform{});

// Per-pair aligned chamfer over a test set. Samples kChamferSamples points
// per mesh with one stream per sample index shared by pred and gt, aligns
// scale+translation, then re-aligns with rotation starting from that
// solution. Pairs with an empty or zero-area mesh are excluded and flagged.
struct ShapeErrorResult {
  std::vector<double> h_se;  // aligned chamfer; NaN for excluded samples
  std::vector<double> h_ve;  // chamfer after the rotation-augmented alignment
  std::vector<SimilarityTransform> tf;  // scale+translation solutions
  std::vector<bool> valid;
  double med_h_se = 0, med_h_ve = 0;  // medians over valid samples
  size_t excluded_count = 0;
};
ShapeErrorResult hand_shape_error(const std::vector<TriMesh>& pred,
                                  const std::vector<TriMesh>& gt, uint64_t seed,
                                  int n_samples = kChamferSamples);

// Chamfer of the hand-transformed predicted object against the ground truth;
// the transform is reused, never re-optimized.
struct ObjectErrorResult {
  std::vector<double> o_se;
  std::vector<bool> valid;
  double med_o_se = 0;
  size_t excluded_count = 0;
};
ObjectErrorResult object_shape_error(const std::vector<TriMesh>& pred,
                                     const std::vector<TriMesh>& gt,
                                     const std::vector<SimilarityTransform>& hand_tf,
                                     const std::vector<bool>& hand_valid, uint64_t seed,
                                     int n_samples = kChamferSamples);

// Mean Euclidean error over 21 wrist-relative joints (joint 0 is the wrist),
// then the mean over samples.
struct JointErrorResult {
  std::vector<double> per_sample;
  double mean = 0;
};
JointErrorResult joint_error(const std::vector<std::array<Vec3, 21>>& pred,
                             const std::vector<std::array<Vec3, 21>>& gt);

// Euclidean centroid distance, mean over samples.
struct TranslationErrorResult {
  std::vector<double> per_sample;
  double mean = 0;
};
TranslationErrorResult translation_error(const std::vector<Vec3>& pred,
                                         const std::vector<Vec3>& gt);

// Penetration depth, contact flag, and voxelized intersection volume.
// Inside tests use ray parity; the object mesh must be watertight. The depth
// of an inside hand vertex is its distance to the nearest object vertex.
struct InteractionResult {
  bool penetrating = false;
  double p_d = 0;  // max depth over penetrating hand vertices
  double i_v = 0;  // overlap voxel count * pitch^3
};
InteractionResult interaction_metrics(const TriMesh& hand, const TriMesh& object,
                                      double voxel_pitch);

double median(std::vector<double> v);  // UsageError when empty
double mean(const std::vector<double>& v);

// Full evaluation output: per-sample arrays (NaN where excluded) plus the
// aggregate block. Object arrays stay empty for hand-only models.
struct MetricsReport {
  size_t sample_count = 0;
  std::vector<uint32_t> excluded;  // indices with an empty mesh in the pair
  std::vector<double> h_se, h_ve, o_se, h_je, o_te, p_d, i_v;
  double agg_h_se = 0, agg_h_ve = 0, agg_o_se = 0;
  double agg_h_je = 0, agg_o_te = 0, agg_p_d = 0, agg_i_v = 0;
  double c_r = 0;  // fraction of evaluated samples with p_d > 0
};

// Fills the aggregate block from the per-sample arrays: medians for the
// shape errors, means for the rest, penetrating fraction for c_r. NaN
// entries are skipped; an all-NaN or empty array aggregates to NaN.
void finalize_report(MetricsReport& rep);
// Invariant check: non-negative values, c_r in [0,1], consistent lengths.
void validate_metrics_report(const MetricsReport& rep);
std::string metrics_report_json(const MetricsReport& rep);
// Two-line fixed-order table: H_se H_ve O_se H_je O_te C_r P_d I_v.
std::string format_metrics_table(const MetricsReport& rep);

}  // namespace posesdf
