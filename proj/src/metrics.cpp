#include "posesdf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "posesdf/errors.hpp"

namespace posesdf {

namespace {

double sq_dist(const Vec3& a, const Vec3& b) {
  double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

double coord(const Vec3& p, int axis) { return axis == 0 ? p.x : axis == 1 ? p.y : p.z; }

}  // namespace

NearestNeighbors::NearestNeighbors(std::vector<Vec3> pts) : pts_(std::move(pts)) {
  if (pts_.empty()) throw UsageError("nearest neighbors: empty point set");
  idx_.resize(pts_.size());
  std::iota(idx_.begin(), idx_.end(), 0);
  nodes_.reserve(2 * pts_.size() / 8 + 4);
  root_ = build(0, static_cast<int32_t>(pts_.size()));
}

int32_t NearestNeighbors::build(int32_t begin, int32_t end) {
  int32_t id = static_cast<int32_t>(nodes_.size());
  nodes_.push_back(Node{});
  if (end - begin <= 8) {
    nodes_[static_cast<size_t>(id)].begin = begin;
    nodes_[static_cast<size_t>(id)].end = end;
    return id;
  }
  Vec3 lo = pts_[static_cast<size_t>(idx_[static_cast<size_t>(begin)])];
  Vec3 hi = lo;
  for (int32_t i = begin; i < end; ++i) {
    const Vec3& p = pts_[static_cast<size_t>(idx_[static_cast<size_t>(i)])];
    lo.x = std::min(lo.x, p.x); hi.x = std::max(hi.x, p.x);
    lo.y = std::min(lo.y, p.y); hi.y = std::max(hi.y, p.y);
    lo.z = std::min(lo.z, p.z); hi.z = std::max(hi.z, p.z);
  }
  Vec3 ext{hi.x - lo.x, hi.y - lo.y, hi.z - lo.z};
  int axis = 0;
  if (ext.y > ext.x) axis = 1;
  if (ext.z > coord(ext, axis)) axis = 2;
  int32_t mid = begin + (end - begin) / 2;
  std::nth_element(idx_.begin() + begin, idx_.begin() + mid, idx_.begin() + end,
                   [&](int32_t a, int32_t b) {
                     return coord(pts_[static_cast<size_t>(a)], axis) <
                            coord(pts_[static_cast<size_t>(b)], axis);
                   });
  double split = coord(pts_[static_cast<size_t>(idx_[static_cast<size_t>(mid)])], axis);
  int32_t left = build(begin, mid);
  int32_t right = build(mid, end);
  Node& n = nodes_[static_cast<size_t>(id)];
  n.axis = static_cast<int8_t>(axis);
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void NearestNeighbors::query(int32_t node, const Vec3& q, double& best,
                             int32_t& best_idx) const {
  const Node& n = nodes_[static_cast<size_t>(node)];
  if (n.left < 0) {
    for (int32_t i = n.begin; i < n.end; ++i) {
      int32_t pi = idx_[static_cast<size_t>(i)];
      double d = sq_dist(q, pts_[static_cast<size_t>(pi)]);
      if (d < best) {
        best = d;
        best_idx = pi;
      }
    }
    return;
  }
  double delta = coord(q, n.axis) - n.split;
  int32_t near = delta < 0 ? n.left : n.right;
  int32_t far = delta < 0 ? n.right : n.left;
  query(near, q, best, best_idx);
  if (delta * delta < best) query(far, q, best, best_idx);
}

int32_t NearestNeighbors::nearest(const Vec3& q, double* sq) const {
  double best = std::numeric_limits<double>::infinity();
  int32_t best_idx = -1;
  query(root_, q, best, best_idx);
  if (sq) *sq = best;
  return best_idx;
}

double NearestNeighbors::nearest_sq(const Vec3& q) const {
  double best = 0;
  nearest(q, &best);
  return best;
}

namespace {

// Shared by chamfer() and the ICP scorer so both produce identical values.
double chamfer_with(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                    const NearestNeighbors& nn_b) {
  NearestNeighbors nn_a(a);
  double da = 0;
  for (const Vec3& p : a) da += nn_b.nearest_sq(p);
  double db = 0;
  for (const Vec3& p : b) db += nn_a.nearest_sq(p);
  return da / static_cast<double>(a.size()) + db / static_cast<double>(b.size());
}

}  // namespace

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw UsageError("chamfer: empty point set");
  NearestNeighbors nn_b(b);
  return chamfer_with(a, b, nn_b);
}

std::vector<Vec3> sample_mesh_surface(const TriMesh& mesh, int n, Rng& rng) {
  if (n < 1) throw UsageError("sample_mesh_surface: need at least one sample");
  if (mesh.vertices.empty() || mesh.triangles.empty())
    throw DataError("sample_mesh_surface: empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double total = 0;
  for (size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& tr = mesh.triangles[i];
    const Vec3& v0 = mesh.vertices[static_cast<size_t>(tr[0])];
    const Vec3& v1 = mesh.vertices[static_cast<size_t>(tr[1])];
    const Vec3& v2 = mesh.vertices[static_cast<size_t>(tr[2])];
    total += 0.5 * (v1 - v0).cross(v2 - v0).norm();
    cum[i] = total;
  }
  if (!(total > 0)) throw DataError("sample_mesh_surface: mesh has no area");
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    double r = rng.uniform() * total;
    size_t ti = static_cast<size_t>(
        std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
    if (ti >= cum.size()) ti = cum.size() - 1;
    const auto& tr = mesh.triangles[ti];
    const Vec3& v0 = mesh.vertices[static_cast<size_t>(tr[0])];
    const Vec3& v1 = mesh.vertices[static_cast<size_t>(tr[1])];
    const Vec3& v2 = mesh.vertices[static_cast<size_t>(tr[2])];
    double u = rng.uniform();
    double v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    out.push_back(v0 + (v1 - v0) * u + (v2 - v0) * v);
  }
  return out;
}

std::vector<Vec3> SimilarityTransform::apply(const std::vector<Vec3>& pts) const {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const Vec3& p : pts) out.push_back(apply(p));
  return out;
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.s = 1.0 / s;
  inv.R = R.transposed();
  Vec3 rt = inv.R * t;
  inv.t = Vec3{-rt.x * inv.s, -rt.y * inv.s, -rt.z * inv.s};
  return inv;
}

namespace {

// Largest-eigenvalue eigenvector of a symmetric 4x4 via cyclic Jacobi.
std::array<double, 4> max_eigenvector4(std::array<std::array<double, 4>, 4> a) {
  std::array<std::array<double, 4>, 4> v{};
  for (int i = 0; i < 4; ++i) v[static_cast<size_t>(i)][static_cast<size_t>(i)] = 1.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (int p = 0; p < 4; ++p)
      for (int q = p + 1; q < 4; ++q)
        off += a[static_cast<size_t>(p)][static_cast<size_t>(q)] *
               a[static_cast<size_t>(p)][static_cast<size_t>(q)];
    if (off < 1e-28) break;
    for (int p = 0; p < 4; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        double apq = a[static_cast<size_t>(p)][static_cast<size_t>(q)];
        if (apq == 0.0) continue;
        double tau = (a[static_cast<size_t>(q)][static_cast<size_t>(q)] -
                      a[static_cast<size_t>(p)][static_cast<size_t>(p)]) /
                     (2.0 * apq);
        double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        for (int k = 0; k < 4; ++k) {
          double akp = a[static_cast<size_t>(k)][static_cast<size_t>(p)];
          double akq = a[static_cast<size_t>(k)][static_cast<size_t>(q)];
          a[static_cast<size_t>(k)][static_cast<size_t>(p)] = c * akp - s * akq;
          a[static_cast<size_t>(k)][static_cast<size_t>(q)] = s * akp + c * akq;
        }
        for (int k = 0; k < 4; ++k) {
          double apk = a[static_cast<size_t>(p)][static_cast<size_t>(k)];
          double aqk = a[static_cast<size_t>(q)][static_cast<size_t>(k)];
          a[static_cast<size_t>(p)][static_cast<size_t>(k)] = c * apk - s * aqk;
          a[static_cast<size_t>(q)][static_cast<size_t>(k)] = s * apk + c * aqk;
        }
        for (int k = 0; k < 4; ++k) {
          double vkp = v[static_cast<size_t>(k)][static_cast<size_t>(p)];
          double vkq = v[static_cast<size_t>(k)][static_cast<size_t>(q)];
          v[static_cast<size_t>(k)][static_cast<size_t>(p)] = c * vkp - s * vkq;
          v[static_cast<size_t>(k)][static_cast<size_t>(q)] = s * vkp + c * vkq;
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (a[static_cast<size_t>(i)][static_cast<size_t>(i)] >
        a[static_cast<size_t>(best)][static_cast<size_t>(best)])
      best = i;
  std::array<double, 4> q{};
  double norm = 0;
  for (int k = 0; k < 4; ++k) {
    q[static_cast<size_t>(k)] = v[static_cast<size_t>(k)][static_cast<size_t>(best)];
    norm += q[static_cast<size_t>(k)] * q[static_cast<size_t>(k)];
  }
  norm = std::sqrt(norm);
  for (double& x : q) x /= norm;
  return q;
}

Mat3 quat_to_matrix(const std::array<double, 4>& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
         2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  return r;
}

}  // namespace

SimilarityTransform fit_similarity_corresponded(const std::vector<Vec3>& src,
                                                const std::vector<Vec3>& dst, AlignMode mode) {
  if (src.empty() || src.size() != dst.size())
    throw UsageError("fit_similarity: need equal-sized nonempty point sets");
  double n = static_cast<double>(src.size());
  Vec3 cs{0, 0, 0}, cd{0, 0, 0};
  for (const Vec3& p : src) cs = cs + p;
  for (const Vec3& p : dst) cd = cd + p;
  cs = cs * (1.0 / n);
  cd = cd * (1.0 / n);
  double sxx = 0;
  for (const Vec3& p : src) sxx += (p - cs).norm2();
  if (!(sxx > 0)) throw NumericError("fit_similarity: source has zero variance");

  SimilarityTransform out;
  if (mode == AlignMode::Procrustes) {
    // Sab = sum over pairs of src'_a * dst'_b feeds Horn's 4x4 form.
    double S[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    for (size_t i = 0; i < src.size(); ++i) {
      Vec3 x = src[i] - cs;
      Vec3 y = dst[i] - cd;
      double xv[3] = {x.x, x.y, x.z};
      double yv[3] = {y.x, y.y, y.z};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) S[a][b] += xv[a] * yv[b];
    }
    std::array<std::array<double, 4>, 4> N{};
    N[0] = {S[0][0] + S[1][1] + S[2][2], S[1][2] - S[2][1], S[2][0] - S[0][2],
            S[0][1] - S[1][0]};
    N[1] = {S[1][2] - S[2][1], S[0][0] - S[1][1] - S[2][2], S[0][1] + S[1][0],
            S[2][0] + S[0][2]};
    N[2] = {S[2][0] - S[0][2], S[0][1] + S[1][0], -S[0][0] + S[1][1] - S[2][2],
            S[1][2] + S[2][1]};
    N[3] = {S[0][1] - S[1][0], S[2][0] + S[0][2], S[1][2] + S[2][1],
            -S[0][0] - S[1][1] + S[2][2]};
    out.R = quat_to_matrix(max_eigenvector4(N));
  }
  double num = 0;
  for (size_t i = 0; i < src.size(); ++i) num += (dst[i] - cd).dot(out.R * (src[i] - cs));
  out.s = num / sxx;
  if (!(out.s > 0)) throw NumericError("fit_similarity: non-positive scale fit");
  Vec3 rs = out.R * cs;
  out.t = cd - rs * out.s;
  return out;
}

SimilarityTransform align_similarity(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                                     AlignMode mode, const SimilarityTransform& init) {
  if (src.size() < 4 || dst.size() < 4)
    throw UsageError("align_similarity: need at least 4 points in each set");
  Vec3 cs{0, 0, 0};
  for (const Vec3& p : src) cs = cs + p;
  cs = cs * (1.0 / static_cast<double>(src.size()));
  double var = 0;
  for (const Vec3& p : src) var += (p - cs).norm2();
  if (!(var > 0))
    throw NumericError("align_similarity: source points are degenerate (zero variance)");

  NearestNeighbors nn_dst(dst);
  auto cost_of = [&](const SimilarityTransform& tf) {
    return chamfer_with(tf.apply(src), dst, nn_dst);
  };
  SimilarityTransform best = init;
  double best_cost = cost_of(init);
  for (int iter = 0; iter < 30; ++iter) {
    std::vector<Vec3> matched;
    matched.reserve(src.size());
    for (const Vec3& p : src)
      matched.push_back(nn_dst.points()[static_cast<size_t>(nn_dst.nearest(best.apply(p)))]);
    SimilarityTransform cand;
    try {
      cand = fit_similarity_corresponded(src, matched, mode);
    } catch (const NumericError&) {
      break;  // degenerate correspondences; keep the best seen
    }
    double c = cost_of(cand);
    if (!(c < best_cost)) break;
    double prev = best_cost;
    best = cand;
    best_cost = c;
    if (prev - c <= 1e-9 * prev) break;
  }
  return best;
}

namespace {

bool usable_mesh(const TriMesh& mesh) {
  if (mesh.vertices.empty() || mesh.triangles.empty()) return false;
  double total = 0;
  for (const auto& tr : mesh.triangles) {
    const Vec3& v0 = mesh.vertices[static_cast<size_t>(tr[0])];
    const Vec3& v1 = mesh.vertices[static_cast<size_t>(tr[1])];
    const Vec3& v2 = mesh.vertices[static_cast<size_t>(tr[2])];
    total += 0.5 * (v1 - v0).cross(v2 - v0).norm();
  }
  return total > 0;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

ShapeErrorResult hand_shape_error(const std::vector<TriMesh>& pred,
                                  const std::vector<TriMesh>& gt, uint64_t seed,
                                  int n_samples) {
  if (pred.size() != gt.size())
    throw UsageError("hand_shape_error: pred and gt counts differ");
  ShapeErrorResult res;
  size_t n = pred.size();
  res.h_se.assign(n, kNaN);
  res.h_ve.assign(n, kNaN);
  res.tf.assign(n, SimilarityTransform{});
  res.valid.assign(n, false);
  std::vector<double> se, ve;
  for (size_t i = 0; i < n; ++i) {
    if (!usable_mesh(pred[i]) || !usable_mesh(gt[i])) {
      ++res.excluded_count;
      continue;
    }
    // One stream per sample index, shared by pred and gt, so identical
    // meshes yield identical samples and an exactly zero chamfer.
    Rng rp(Rng::mix(seed, i));
    std::vector<Vec3> pts_p = sample_mesh_surface(pred[i], n_samples, rp);
    Rng rg(Rng::mix(seed, i));
    std::vector<Vec3> pts_g = sample_mesh_surface(gt[i], n_samples, rg);
    SimilarityTransform st = align_similarity(pts_p, pts_g, AlignMode::ScaleTranslation);
    double hse = chamfer(st.apply(pts_p), pts_g);
    SimilarityTransform pr = align_similarity(pts_p, pts_g, AlignMode::Procrustes, st);
    double hve = chamfer(pr.apply(pts_p), pts_g);
    res.h_se[i] = hse;
    res.h_ve[i] = hve;
    res.tf[i] = st;
    res.valid[i] = true;
    se.push_back(hse);
    ve.push_back(hve);
  }
  res.med_h_se = se.empty() ? kNaN : median(se);
  res.med_h_ve = ve.empty() ? kNaN : median(ve);
  return res;
}

ObjectErrorResult object_shape_error(const std::vector<TriMesh>& pred,
                                     const std::vector<TriMesh>& gt,
                                     const std::vector<SimilarityTransform>& hand_tf,
                                     const std::vector<bool>& hand_valid, uint64_t seed,
                                     int n_samples) {
  if (pred.size() != gt.size())
    throw UsageError("object_shape_error: pred and gt counts differ");
  if (hand_tf.size() != pred.size() || hand_valid.size() != pred.size())
    throw UsageError("object_shape_error: missing hand transforms for the sample count");
  ObjectErrorResult res;
  size_t n = pred.size();
  res.o_se.assign(n, kNaN);
  res.valid.assign(n, false);
  std::vector<double> vals;
  for (size_t i = 0; i < n; ++i) {
    if (!hand_valid[i] || !usable_mesh(pred[i]) || !usable_mesh(gt[i])) {
      ++res.excluded_count;
      continue;
    }
    Rng rp(Rng::mix(seed, Rng::mix(i, 0xB0)));
    std::vector<Vec3> pts_p = sample_mesh_surface(pred[i], n_samples, rp);
    Rng rg(Rng::mix(seed, Rng::mix(i, 0xB0)));
    std::vector<Vec3> pts_g = sample_mesh_surface(gt[i], n_samples, rg);
    // The hand-derived transform is applied verbatim, never re-fit here.
    double ose = chamfer(hand_tf[i].apply(pts_p), pts_g);
    res.o_se[i] = ose;
    res.valid[i] = true;
    vals.push_back(ose);
  }
  res.med_o_se = vals.empty() ? kNaN : median(vals);
  return res;
}

JointErrorResult joint_error(const std::vector<std::array<Vec3, 21>>& pred,
                             const std::vector<std::array<Vec3, 21>>& gt) {
  if (pred.size() != gt.size()) throw UsageError("joint_error: pred and gt counts differ");
  JointErrorResult res;
  for (size_t i = 0; i < pred.size(); ++i) {
    double acc = 0;
    for (int j = 0; j < 21; ++j) {
      Vec3 dp = pred[i][static_cast<size_t>(j)] - pred[i][0];
      Vec3 dg = gt[i][static_cast<size_t>(j)] - gt[i][0];
      acc += (dp - dg).norm();
    }
    res.per_sample.push_back(acc / 21.0);
  }
  res.mean = res.per_sample.empty() ? kNaN : mean(res.per_sample);
  return res;
}

TranslationErrorResult translation_error(const std::vector<Vec3>& pred,
                                         const std::vector<Vec3>& gt) {
  if (pred.size() != gt.size())
    throw UsageError("translation_error: pred and gt counts differ");
  TranslationErrorResult res;
  for (size_t i = 0; i < pred.size(); ++i) res.per_sample.push_back((pred[i] - gt[i]).norm());
  res.mean = res.per_sample.empty() ? kNaN : mean(res.per_sample);
  return res;
}

namespace {

// Fixed generic ray direction; never parallel to the axis-aligned faces and
// edges that test meshes and marching-cubes output are full of.
const Vec3 kRayDir = Vec3{0.57735026918962584, 0.35682208977308993, 0.73994007284712329}
                         .normalized();

bool ray_hits_triangle(const Vec3& origin, const Vec3& dir, const Vec3& v0, const Vec3& v1,
                       const Vec3& v2) {
  Vec3 e1 = v1 - v0;
  Vec3 e2 = v2 - v0;
  Vec3 h = dir.cross(e2);
  double a = e1.dot(h);
  if (std::abs(a) < 1e-14) return false;
  double f = 1.0 / a;
  Vec3 s = origin - v0;
  double u = f * s.dot(h);
  if (u < 0.0 || u > 1.0) return false;
  Vec3 q = s.cross(e1);
  double v = f * dir.dot(q);
  if (v < 0.0 || u + v > 1.0) return false;
  return f * e2.dot(q) > 1e-12;
}

bool inside_mesh(const TriMesh& mesh, const Vec3& p) {
  int crossings = 0;
  for (const auto& tr : mesh.triangles) {
    if (ray_hits_triangle(p, kRayDir, mesh.vertices[static_cast<size_t>(tr[0])],
                          mesh.vertices[static_cast<size_t>(tr[1])],
                          mesh.vertices[static_cast<size_t>(tr[2])]))
      ++crossings;
  }
  return crossings % 2 == 1;
}

Box3 mesh_bounds(const TriMesh& mesh) {
  Box3 b{mesh.vertices[0], mesh.vertices[0]};
  for (const Vec3& v : mesh.vertices) {
    b.lo.x = std::min(b.lo.x, v.x); b.hi.x = std::max(b.hi.x, v.x);
    b.lo.y = std::min(b.lo.y, v.y); b.hi.y = std::max(b.hi.y, v.y);
    b.lo.z = std::min(b.lo.z, v.z); b.hi.z = std::max(b.hi.z, v.z);
  }
  return b;
}

}  // namespace

InteractionResult interaction_metrics(const TriMesh& hand, const TriMesh& object,
                                      double voxel_pitch) {
  if (!(voxel_pitch > 0)) throw UsageError("interaction_metrics: voxel pitch must be positive");
  WatertightReport wt = is_watertight(object);
  if (!wt.watertight)
    throw DataError("interaction_metrics: object mesh is not watertight");
  InteractionResult res;
  if (hand.vertices.empty() || object.vertices.empty()) return res;

  NearestNeighbors obj_verts(object.vertices);
  for (const Vec3& v : hand.vertices) {
    if (!inside_mesh(object, v)) continue;
    double sq = 0;
    obj_verts.nearest(v, &sq);
    res.p_d = std::max(res.p_d, std::sqrt(sq));
  }
  res.penetrating = res.p_d > 0;

  Box3 hb = mesh_bounds(hand);
  Box3 ob = mesh_bounds(object);
  Vec3 lo{std::max(hb.lo.x, ob.lo.x), std::max(hb.lo.y, ob.lo.y), std::max(hb.lo.z, ob.lo.z)};
  Vec3 hi{std::min(hb.hi.x, ob.hi.x), std::min(hb.hi.y, ob.hi.y), std::min(hb.hi.z, ob.hi.z)};
  if (lo.x >= hi.x || lo.y >= hi.y || lo.z >= hi.z) return res;
  int64_t nx = static_cast<int64_t>(std::ceil((hi.x - lo.x) / voxel_pitch));
  int64_t ny = static_cast<int64_t>(std::ceil((hi.y - lo.y) / voxel_pitch));
  int64_t nz = static_cast<int64_t>(std::ceil((hi.z - lo.z) / voxel_pitch));
  if (nx * ny * nz > 50'000'000)
    throw DataError("interaction_metrics: voxel grid too large (" + std::to_string(nx) + "x" +
                    std::to_string(ny) + "x" + std::to_string(nz) + ")");
  int64_t count = 0;
  for (int64_t ix = 0; ix < nx; ++ix) {
    for (int64_t iy = 0; iy < ny; ++iy) {
      for (int64_t iz = 0; iz < nz; ++iz) {
        Vec3 c{lo.x + (static_cast<double>(ix) + 0.5) * voxel_pitch,
               lo.y + (static_cast<double>(iy) + 0.5) * voxel_pitch,
               lo.z + (static_cast<double>(iz) + 0.5) * voxel_pitch};
        if (inside_mesh(object, c) && inside_mesh(hand, c)) ++count;
      }
    }
  }
  res.i_v = static_cast<double>(count) * voxel_pitch * voxel_pitch * voxel_pitch;
  return res;
}

double median(std::vector<double> v) {
  if (v.empty()) throw UsageError("median: empty input");
  std::sort(v.begin(), v.end());
  size_t mid = v.size() / 2;
  if (v.size() % 2 == 1) return v[mid];
  return 0.5 * (v[mid - 1] + v[mid]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) throw UsageError("mean: empty input");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

namespace {

std::vector<double> drop_nan(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v)
    if (!std::isnan(x)) out.push_back(x);
  return out;
}

double agg_median(const std::vector<double>& v) {
  std::vector<double> f = drop_nan(v);
  return f.empty() ? kNaN : median(f);
}

double agg_mean(const std::vector<double>& v) {
  std::vector<double> f = drop_nan(v);
  return f.empty() ? kNaN : mean(f);
}

}  // namespace

void finalize_report(MetricsReport& rep) {
  rep.agg_h_se = agg_median(rep.h_se);
  rep.agg_h_ve = agg_median(rep.h_ve);
  rep.agg_o_se = agg_median(rep.o_se);
  rep.agg_h_je = agg_mean(rep.h_je);
  rep.agg_o_te = agg_mean(rep.o_te);
  rep.agg_p_d = agg_mean(rep.p_d);
  rep.agg_i_v = agg_mean(rep.i_v);
  std::vector<double> pd = drop_nan(rep.p_d);
  if (pd.empty()) {
    rep.c_r = kNaN;
  } else {
    size_t hits = 0;
    for (double d : pd)
      if (d > 0) ++hits;
    rep.c_r = static_cast<double>(hits) / static_cast<double>(pd.size());
  }
}

void validate_metrics_report(const MetricsReport& rep) {
  auto check_array = [&](const char* name, const std::vector<double>& v) {
    if (!v.empty() && v.size() != rep.sample_count)
      throw DataError(std::string("metrics report: ") + name + " has " +
                      std::to_string(v.size()) + " entries for " +
                      std::to_string(rep.sample_count) + " samples");
    for (double x : v)
      if (!std::isnan(x) && x < 0)
        throw DataError(std::string("metrics report: negative ") + name + " entry");
  };
  check_array("H_se", rep.h_se);
  check_array("H_ve", rep.h_ve);
  check_array("O_se", rep.o_se);
  check_array("H_je", rep.h_je);
  check_array("O_te", rep.o_te);
  check_array("P_d", rep.p_d);
  check_array("I_v", rep.i_v);
  if (!std::isnan(rep.c_r) && (rep.c_r < 0 || rep.c_r > 1))
    throw DataError("metrics report: C_r outside [0,1]");
  for (uint32_t i : rep.excluded)
    if (i >= rep.sample_count) throw DataError("metrics report: excluded index out of range");
}

std::string metrics_report_json(const MetricsReport& rep) {
  nlohmann::ordered_json j;
  j["sample_count"] = rep.sample_count;
  j["excluded"] = rep.excluded;
  nlohmann::ordered_json agg;
  agg["H_se"] = rep.agg_h_se;
  agg["H_ve"] = rep.agg_h_ve;
  agg["O_se"] = rep.agg_o_se;
  agg["H_je"] = rep.agg_h_je;
  agg["O_te"] = rep.agg_o_te;
  agg["C_r"] = rep.c_r;
  agg["P_d"] = rep.agg_p_d;
  agg["I_v"] = rep.agg_i_v;
  j["aggregate"] = agg;
  nlohmann::ordered_json per;
  per["H_se"] = rep.h_se;
  per["H_ve"] = rep.h_ve;
  per["O_se"] = rep.o_se;
  per["H_je"] = rep.h_je;
  per["O_te"] = rep.o_te;
  per["P_d"] = rep.p_d;
  per["I_v"] = rep.i_v;
  j["per_sample"] = per;
  return j.dump(2);
}

std::string format_metrics_table(const MetricsReport& rep) {
  const char* names[] = {"H_se", "H_ve", "O_se", "H_je", "O_te", "C_r", "P_d", "I_v"};
  double vals[] = {rep.agg_h_se, rep.agg_h_ve, rep.agg_o_se, rep.agg_h_je,
                   rep.agg_o_te, rep.c_r,      rep.agg_p_d,  rep.agg_i_v};
  std::string head, row;
  char buf[64];
  for (int i = 0; i < 8; ++i) {
    std::snprintf(buf, sizeof buf, "%12s", names[i]);
    head += buf;
    if (std::isnan(vals[i]))
      std::snprintf(buf, sizeof buf, "%12s", "-");
    else
      std::snprintf(buf, sizeof buf, "%12.6g", vals[i]);
    row += buf;
  }
  return head + "\n" + row + "\n";
}

}  // namespace posesdf
