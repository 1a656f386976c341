#include "posesdf/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>

#include "json.hpp"
#include "posesdf/errors.hpp"
#include "posesdf/io.hpp"

namespace posesdf {

namespace {

constexpr double kPi = 3.14159265358979323846;

double local_sdf(const Vec3& p, PrimitiveKind kind, const std::array<double, 4>& s) {
  switch (kind) {
    case PrimitiveKind::Sphere:
      return p.norm() - s[0];
    case PrimitiveKind::Box: {
      double qx = std::abs(p.x) - s[0];
      double qy = std::abs(p.y) - s[1];
      double qz = std::abs(p.z) - s[2];
      double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0), oz = std::max(qz, 0.0);
      double outside = std::sqrt(ox * ox + oy * oy + oz * oz);
      double inside = std::min(std::max(qx, std::max(qy, qz)), 0.0);
      return outside + inside;
    }
    case PrimitiveKind::Capsule: {
      double z = std::clamp(p.z, -s[1], s[1]);
      double dz = p.z - z;
      return std::sqrt(p.x * p.x + p.y * p.y + dz * dz) - s[0];
    }
    case PrimitiveKind::Torus: {
      double q = std::sqrt(p.x * p.x + p.y * p.y) - s[0];
      return std::sqrt(q * q + p.z * p.z) - s[1];
    }
  }
  throw NumericError("local_sdf: unknown primitive kind");
}

// Rotation applied once per query batch; the local frame does the rest.
struct PrimFrame {
  Mat3 to_local;  // world -> local rotation
  Vec3 t;
  PrimitiveKind kind;
  std::array<double, 4> size;

  explicit PrimFrame(const ObjectPrimitive& prim)
      : to_local(axis_angle_to_matrix(prim.orientation).transposed()),
        t(prim.t_o),
        kind(prim.kind),
        size(prim.size) {}

  double sdf(const Vec3& x) const { return local_sdf(to_local * (x - t), kind, size); }
};

Vec3 random_unit(Rng& rng) {
  for (;;) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    double n = v.norm();
    if (n > 1e-6) return v * (1.0 / n);
  }
}

std::array<double, 20> posed_capsule_areas(const std::array<Vec3, 21>& joints,
                                           const HandTemplate& tpl) {
  std::array<double, 20> a{};
  for (int b = 0; b < 20; ++b) {
    const Vec3& pa = joints[static_cast<size_t>(tpl.parent[static_cast<size_t>(b + 1)])];
    const Vec3& pb = joints[static_cast<size_t>(b + 1)];
    double r = tpl.radius[static_cast<size_t>(b)];
    double len = (pb - pa).norm();
    a[static_cast<size_t>(b)] = 2.0 * kPi * r * len + 4.0 * kPi * r * r;
  }
  return a;
}

int pick_weighted(const std::array<double, 20>& w, double total, Rng& rng) {
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (int i = 0; i < 20; ++i) {
    acc += w[static_cast<size_t>(i)];
    if (u < acc) return i;
  }
  return 19;
}

Vec3 sample_hand_surface(const std::array<Vec3, 21>& joints, const HandTemplate& tpl,
                         const std::array<double, 20>& areas, double total, Rng& rng) {
  int b = pick_weighted(areas, total, rng);
  const Vec3& pa = joints[static_cast<size_t>(tpl.parent[static_cast<size_t>(b + 1)])];
  const Vec3& pb = joints[static_cast<size_t>(b + 1)];
  return sample_capsule_surface(pa, pb, tpl.radius[static_cast<size_t>(b)], rng);
}

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const char* primitive_kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Capsule: return "capsule";
    case PrimitiveKind::Torus: return "torus";
  }
  return "unknown";
}

double analytic_object_sdf(const Vec3& x, const ObjectPrimitive& prim) {
  return PrimFrame(prim).sdf(x);
}

double primitive_support(const ObjectPrimitive& prim, const Vec3& u) {
  Vec3 v = axis_angle_to_matrix(prim.orientation).transposed() * u;
  const auto& s = prim.size;
  switch (prim.kind) {
    case PrimitiveKind::Sphere:
      return s[0];
    case PrimitiveKind::Box:
      return std::abs(v.x) * s[0] + std::abs(v.y) * s[1] + std::abs(v.z) * s[2];
    case PrimitiveKind::Capsule:
      return std::abs(v.z) * s[1] + s[0];
    case PrimitiveKind::Torus:
      // Minkowski sum of the major circle and a ball of the minor radius.
      return std::sqrt(v.x * v.x + v.y * v.y) * s[0] + s[1];
  }
  throw NumericError("primitive_support: unknown primitive kind");
}

double primitive_extent(const ObjectPrimitive& prim) {
  double m = 0.0;
  const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int k = 0; k < 3; ++k)
    m = std::max(m, std::abs(prim.t_o[k]) + primitive_support(prim, axes[k]));
  return m;
}

Vec3 sample_primitive_surface(const ObjectPrimitive& prim, Rng& rng) {
  const auto& s = prim.size;
  Vec3 p{0, 0, 0};
  switch (prim.kind) {
    case PrimitiveKind::Sphere: {
      double z = rng.uniform(-1.0, 1.0);
      double a = rng.uniform(0.0, 2.0 * kPi);
      double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      p = Vec3{rho * std::cos(a), rho * std::sin(a), z} * s[0];
      break;
    }
    case PrimitiveKind::Box: {
      double areas[3] = {s[1] * s[2], s[0] * s[2], s[0] * s[1]};
      double total = areas[0] + areas[1] + areas[2];
      double u = rng.uniform() * total;
      int axis = u < areas[0] ? 0 : (u < areas[0] + areas[1] ? 1 : 2);
      double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      double c[3];
      for (int k = 0; k < 3; ++k) c[k] = rng.uniform(-s[static_cast<size_t>(k)], s[static_cast<size_t>(k)]);
      c[axis] = sign * s[static_cast<size_t>(axis)];
      p = Vec3{c[0], c[1], c[2]};
      break;
    }
    case PrimitiveKind::Capsule:
      p = sample_capsule_surface(Vec3{0, 0, -s[1]}, Vec3{0, 0, s[1]}, s[0], rng);
      break;
    case PrimitiveKind::Torus: {
      double u = rng.uniform(0.0, 2.0 * kPi);
      double v;
      // Surface element scales with R + r cos(v); thin the oversampled side.
      for (;;) {
        v = rng.uniform(0.0, 2.0 * kPi);
        double w = (s[0] + s[1] * std::cos(v)) / (s[0] + s[1]);
        if (rng.uniform() < w) break;
      }
      double ring = s[0] + s[1] * std::cos(v);
      p = Vec3{ring * std::cos(u), ring * std::sin(u), s[1] * std::sin(v)};
      break;
    }
  }
  return axis_angle_to_matrix(prim.orientation) * p + prim.t_o;
}

double min_hand_object_distance(const std::array<Vec3, 21>& joints, const HandTemplate& tpl,
                                const ObjectPrimitive& prim, int n_samples, uint64_t sample_seed) {
  PrimFrame frame(prim);
  auto areas = posed_capsule_areas(joints, tpl);
  double total = 0.0;
  for (double a : areas) total += a;
  double best = std::numeric_limits<double>::infinity();
  // Per-bone streams: sample counts follow area so density is uniform.
  for (int b = 0; b < 20; ++b) {
    const Vec3& pa = joints[static_cast<size_t>(tpl.parent[static_cast<size_t>(b + 1)])];
    const Vec3& pb = joints[static_cast<size_t>(b + 1)];
    double r = tpl.radius[static_cast<size_t>(b)];
    int nb = std::max(8, static_cast<int>(std::lround(n_samples * areas[static_cast<size_t>(b)] / total)));
    Rng rng(Rng::mix(sample_seed, static_cast<uint64_t>(b)));
    for (int i = 0; i < nb; ++i) {
      Vec3 q = sample_capsule_surface(pa, pb, r, rng);
      best = std::min(best, frame.sdf(q));
    }
  }
  return best;
}

SceneSample generate_scene(uint64_t seed, const GenConfig& cfg, const HandTemplate& tpl) {
  Rng rng(seed);
  SceneSample sc;
  sc.seed = seed;

  Vec3 gaxis = random_unit(rng);
  double gang = rng.uniform(0.0, cfg.global_rot_max);
  sc.params.pose[0] = gaxis.x * gang;
  sc.params.pose[1] = gaxis.y * gang;
  sc.params.pose[2] = gaxis.z * gang;

  for (int f = 0; f < 5; ++f) {
    // Proximal bone direction in the rest pose fixes the curl axis.
    Vec3 u = tpl.offset[static_cast<size_t>(4 * f + 1)].normalized();
    Vec3 curl_axis{-u.y, u.x, 0.0};
    double mcp = rng.uniform(0.0, cfg.curl_mcp_max);
    double abd = rng.uniform(-cfg.abd_max, cfg.abd_max);
    double pip = rng.uniform(0.0, cfg.curl_pip_max);
    double dip = rng.uniform(0.0, cfg.curl_dip_max);
    int s_mcp = 1 + 3 * f, s_pip = 2 + 3 * f, s_dip = 3 + 3 * f;
    Vec3 w_mcp = curl_axis * mcp + Vec3{0, 0, abd};
    Vec3 w_pip = curl_axis * pip;
    Vec3 w_dip = curl_axis * dip;
    for (int k = 0; k < 3; ++k) {
      sc.params.pose[static_cast<size_t>(3 * s_mcp + k)] = w_mcp[k];
      sc.params.pose[static_cast<size_t>(3 * s_pip + k)] = w_pip[k];
      sc.params.pose[static_cast<size_t>(3 * s_dip + k)] = w_dip[k];
    }
  }
  for (int k = 0; k < 10; ++k)
    sc.params.shape[static_cast<size_t>(k)] = rng.uniform(-cfg.shape_amp, cfg.shape_amp);

  HandState st = forward_kinematics(sc.params, tpl);
  sc.joints = st.joints;

  ObjectPrimitive prim;
  prim.kind = static_cast<PrimitiveKind>(rng.index(4));
  switch (prim.kind) {
    case PrimitiveKind::Sphere:
      prim.size[0] = rng.uniform(cfg.sphere_r_min, cfg.sphere_r_max);
      break;
    case PrimitiveKind::Box:
      for (int k = 0; k < 3; ++k)
        prim.size[static_cast<size_t>(k)] = rng.uniform(cfg.box_h_min, cfg.box_h_max);
      break;
    case PrimitiveKind::Capsule:
      prim.size[0] = rng.uniform(cfg.cap_r_min, cfg.cap_r_max);
      prim.size[1] = rng.uniform(cfg.cap_hl_min, cfg.cap_hl_max);
      break;
    case PrimitiveKind::Torus:
      prim.size[0] = rng.uniform(cfg.torus_R_min, cfg.torus_R_max);
      prim.size[1] = rng.uniform(cfg.torus_r_min, cfg.torus_r_max);
      break;
  }
  prim.orientation = random_unit(rng) * rng.uniform(0.0, kPi);

  auto areas = posed_capsule_areas(sc.joints, tpl);
  double total = 0.0;
  for (double a : areas) total += a;

  for (int attempt = 0; attempt < cfg.retry_budget; ++attempt) {
    Vec3 h = sample_hand_surface(sc.joints, tpl, areas, total, rng);
    Vec3 dir = random_unit(rng);
    double gap = rng.uniform(cfg.prox_min, cfg.prox_max);
    prim.t_o = h + dir * (primitive_support(prim, -dir) + gap);
    double m = min_hand_object_distance(sc.joints, tpl, prim, cfg.prox_surface_samples,
                                        Rng::mix(seed, 0x70DDull));
    if (m >= cfg.prox_min && m <= cfg.prox_max) {
      sc.prim = prim;
      sc.min_surface_dist = m;
      return sc;
    }
  }
  throw DataError("generate_scene: placement retry budget (" + std::to_string(cfg.retry_budget) +
                  ") exhausted for seed " + std::to_string(seed));
}

double scene_extent(const SceneSample& scene, const HandTemplate& tpl) {
  double m = 0.0;
  for (int b = 0; b < 20; ++b) {
    const Vec3& pa = scene.joints[static_cast<size_t>(tpl.parent[static_cast<size_t>(b + 1)])];
    const Vec3& pb = scene.joints[static_cast<size_t>(b + 1)];
    double r = tpl.radius[static_cast<size_t>(b)];
    for (int k = 0; k < 3; ++k)
      m = std::max(m, std::max(std::abs(pa[k]), std::abs(pb[k])) + r);
  }
  return std::max(m, primitive_extent(scene.prim));
}

double compute_dataset_scale(const std::vector<SceneSample>& scenes, const HandTemplate& tpl) {
  if (scenes.empty()) throw UsageError("compute_dataset_scale: no scenes");
  double m = 0.0;
  for (const auto& sc : scenes) m = std::max(m, scene_extent(sc, tpl));
  if (!(m > 0.0)) throw NumericError("compute_dataset_scale: degenerate extent");
  return 0.99 / m;
}

void scale_scene(SceneSample& scene, double s) {
  for (auto& j : scene.joints) j = j * s;
  scene.prim.t_o = scene.prim.t_o * s;
  for (auto& v : scene.prim.size) v *= s;
  scene.min_surface_dist *= s;
}

namespace {

LabeledPoints sample_points_impl(int n, const GenConfig& cfg, Rng& rng,
                                 const std::function<Vec3(Rng&)>& surface,
                                 const std::function<double(const Vec3&)>& field) {
  if (n < 2) throw UsageError("sample_points: need at least 2 points, got " + std::to_string(n));
  LabeledPoints out;
  out.x.reserve(static_cast<size_t>(n));
  out.sdf.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    Vec3 x;
    if (u < cfg.frac_near + cfg.frac_tight) {
      double sigma = u < cfg.frac_near ? cfg.sigma_near : cfg.sigma_tight;
      Vec3 p = surface(rng);
      x = p + Vec3{rng.normal(), rng.normal(), rng.normal()} * sigma;
    } else {
      x = Vec3{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    }
    double d = field(x);
    if (!std::isfinite(d)) throw NumericError("sample_points: non-finite label");
    out.x.push_back(x);
    out.sdf.push_back(d);
    if (d > 0.0) ++out.n_pos;
    if (d < 0.0) ++out.n_neg;
  }
  return out;
}

}  // namespace

LabeledPoints sample_points_hand(const SceneSample& scene, const HandTemplate& tpl, int n,
                                 const GenConfig& cfg, Rng& rng) {
  auto areas = posed_capsule_areas(scene.joints, tpl);
  double total = 0.0;
  for (double a : areas) total += a;
  return sample_points_impl(
      n, cfg, rng,
      [&](Rng& r) { return sample_hand_surface(scene.joints, tpl, areas, total, r); },
      [&](const Vec3& x) { return hand_sdf(x, scene.joints, tpl); });
}

LabeledPoints sample_points_object(const SceneSample& scene, int n, const GenConfig& cfg,
                                   Rng& rng) {
  PrimFrame frame(scene.prim);
  return sample_points_impl(
      n, cfg, rng, [&](Rng& r) { return sample_primitive_surface(scene.prim, r); },
      [&](const Vec3& x) { return frame.sdf(x); });
}

std::vector<float> render_scene(const SceneSample& scene, const HandTemplate& tpl,
                                const GenConfig& cfg, int w, int h) {
  if (w < 1 || h < 1) throw UsageError("render_scene: image size must be positive");
  PrimFrame frame(scene.prim);
  std::vector<float> img(static_cast<size_t>(w) * static_cast<size_t>(h), 0.0f);
  double sx = 2.0 * cfg.render_half_window / w;
  double sy = 2.0 * cfg.render_half_window / h;
  constexpr double kHitEps = 1e-4;
  constexpr int kMaxSteps = 256;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      // Half-integer offsets from the center keep mirrored pixels at exactly
      // negated coordinates, so symmetric scenes render symmetrically.
      double x = (px + 0.5 - 0.5 * w) * sx;
      double y = (0.5 * h - (py + 0.5)) * sy;
      double t = 0.0;
      for (int step = 0; step < kMaxSteps; ++step) {
        Vec3 p{x, y, cfg.render_z0 - t};
        double d = std::min(hand_sdf(p, scene.joints, tpl), frame.sdf(p));
        if (d < kHitEps) {
          img[static_cast<size_t>(py) * static_cast<size_t>(w) + static_cast<size_t>(px)] =
              static_cast<float>(1.0 - t / cfg.render_far);
          break;
        }
        t += d;
        if (t > cfg.render_far) break;
      }
    }
  }
  return img;
}

SceneSample augment_rotation(const SceneSample& scene, double angle, const HandTemplate& tpl,
                             const GenConfig& cfg) {
  if (angle == 0.0) return scene;
  SceneSample out = scene;
  Vec3 wz{0.0, 0.0, angle};
  Mat3 rot = axis_angle_to_matrix(wz);
  Vec3 g{scene.params.pose[0], scene.params.pose[1], scene.params.pose[2]};
  Vec3 g2 = compose_axis_angle(wz, g);
  out.params.pose[0] = g2.x;
  out.params.pose[1] = g2.y;
  out.params.pose[2] = g2.z;
  for (auto& j : out.joints) j = rot * j;
  out.prim.t_o = rot * scene.prim.t_o;
  out.prim.orientation = compose_axis_angle(wz, scene.prim.orientation);
  for (auto& x : out.hand_pts.x) x = rot * x;
  for (auto& x : out.obj_pts.x) x = rot * x;
  if (out.render_w > 0 && out.render_h > 0)
    out.render = render_scene(out, tpl, cfg, out.render_w, out.render_h);
  return out;
}

namespace {

void put_points(std::string& buf, const LabeledPoints& pts) {
  put_u32(buf, static_cast<uint32_t>(pts.x.size()));
  for (const auto& v : pts.x) {
    put_f64(buf, v.x);
    put_f64(buf, v.y);
    put_f64(buf, v.z);
  }
  for (double d : pts.sdf) put_f64(buf, d);
  put_u32(buf, pts.n_pos);
  put_u32(buf, pts.n_neg);
}

LabeledPoints take_points(BinReader& r) {
  constexpr uint32_t kMaxPoints = 100u * 1000u * 1000u;
  uint32_t n = r.u32();
  if (n > kMaxPoints)
    throw DataError(r.name() + ": implausible point count " + std::to_string(n));
  LabeledPoints pts;
  pts.x.resize(n);
  pts.sdf.resize(n);
  for (auto& v : pts.x) {
    v.x = r.f64();
    v.y = r.f64();
    v.z = r.f64();
  }
  for (auto& d : pts.sdf) d = r.f64();
  pts.n_pos = r.u32();
  pts.n_neg = r.u32();
  if (pts.n_pos + pts.n_neg > n)
    throw DataError(r.name() + ": sign counts exceed point count");
  return pts;
}

}  // namespace

std::string encode_sample(const SceneSample& scene) {
  if (scene.render.size() !=
      static_cast<size_t>(scene.render_w) * static_cast<size_t>(scene.render_h))
    throw UsageError("encode_sample: render buffer does not match its declared size");
  std::string buf;
  buf += "ASDF";
  put_u32(buf, 1u);
  put_u64(buf, scene.id);
  put_u64(buf, scene.seed);
  put_u32(buf, static_cast<uint32_t>(scene.render_w));
  put_u32(buf, static_cast<uint32_t>(scene.render_h));
  for (float v : scene.render) put_f32(buf, v);
  for (double v : scene.params.pose) put_f64(buf, v);
  for (double v : scene.params.shape) put_f64(buf, v);
  for (const auto& j : scene.joints) {
    put_f64(buf, j.x);
    put_f64(buf, j.y);
    put_f64(buf, j.z);
  }
  put_u32(buf, static_cast<uint32_t>(scene.prim.kind));
  put_f64(buf, scene.prim.orientation.x);
  put_f64(buf, scene.prim.orientation.y);
  put_f64(buf, scene.prim.orientation.z);
  put_f64(buf, scene.prim.t_o.x);
  put_f64(buf, scene.prim.t_o.y);
  put_f64(buf, scene.prim.t_o.z);
  for (double v : scene.prim.size) put_f64(buf, v);
  put_points(buf, scene.hand_pts);
  put_points(buf, scene.obj_pts);
  return buf;
}

SceneSample decode_sample(const std::string& bytes, const std::string& path_for_errors) {
  BinReader r(bytes, path_for_errors);
  if (r.str(4) != "ASDF") throw DataError(path_for_errors + ": bad magic, not an ASDF record");
  uint32_t version = r.u32();
  if (version != 1)
    throw DataError(path_for_errors + ": unsupported record version " + std::to_string(version));
  SceneSample sc;
  sc.id = r.u64();
  sc.seed = r.u64();
  sc.render_w = static_cast<int>(r.u32());
  sc.render_h = static_cast<int>(r.u32());
  constexpr int kMaxSide = 65536;
  if (sc.render_w < 0 || sc.render_h < 0 || sc.render_w > kMaxSide || sc.render_h > kMaxSide)
    throw DataError(path_for_errors + ": implausible render size");
  sc.render.resize(static_cast<size_t>(sc.render_w) * static_cast<size_t>(sc.render_h));
  for (auto& v : sc.render) v = r.f32();
  for (auto& v : sc.params.pose) v = r.f64();
  for (auto& v : sc.params.shape) v = r.f64();
  for (auto& j : sc.joints) {
    j.x = r.f64();
    j.y = r.f64();
    j.z = r.f64();
  }
  uint32_t kind = r.u32();
  if (kind > 3) throw DataError(path_for_errors + ": unknown primitive kind " + std::to_string(kind));
  sc.prim.kind = static_cast<PrimitiveKind>(kind);
  sc.prim.orientation.x = r.f64();
  sc.prim.orientation.y = r.f64();
  sc.prim.orientation.z = r.f64();
  sc.prim.t_o.x = r.f64();
  sc.prim.t_o.y = r.f64();
  sc.prim.t_o.z = r.f64();
  for (auto& v : sc.prim.size) v = r.f64();
  sc.hand_pts = take_points(r);
  sc.obj_pts = take_points(r);
  if (r.remaining() != 0)
    throw DataError(path_for_errors + ": " + std::to_string(r.remaining()) +
                    " trailing bytes after record");
  return sc;
}

std::pair<std::vector<SceneSample>, DatasetManifest> build_dataset(uint64_t seed, int n,
                                                                   const GenConfig& cfg) {
  if (n < 1) throw UsageError("build_dataset: need at least 1 scene");
  HandTemplate tpl = default_hand_template();
  std::vector<SceneSample> scenes;
  scenes.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    SceneSample sc = generate_scene(Rng::mix(seed, static_cast<uint64_t>(i)), cfg, tpl);
    sc.id = static_cast<uint64_t>(i);
    scenes.push_back(std::move(sc));
  }
  double s = compute_dataset_scale(scenes, tpl);
  HandTemplate stpl = scale_template(tpl, s);
  for (auto& sc : scenes) {
    scale_scene(sc, s);
    for (int k = 0; k < 3; ++k) {
      if (std::abs(sc.prim.t_o[k]) > cfg.heatmap_c)
        throw DataError("build_dataset: scene " + std::to_string(sc.id) +
                        " object centroid coordinate " + fmt_g17(sc.prim.t_o[k]) +
                        " outside heatmap bound " + fmt_g17(cfg.heatmap_c));
    }
    Rng hand_rng(Rng::mix(sc.seed, 0xA1ull));
    Rng obj_rng(Rng::mix(sc.seed, 0xB2ull));
    sc.hand_pts = sample_points_hand(sc, stpl, cfg.points_per_branch, cfg, hand_rng);
    sc.obj_pts = sample_points_object(sc, cfg.points_per_branch, cfg, obj_rng);
    sc.render_w = cfg.render_w;
    sc.render_h = cfg.render_h;
    sc.render = render_scene(sc, stpl, cfg, cfg.render_w, cfg.render_h);
  }
  DatasetManifest man;
  man.version = 1;
  man.sample_count = static_cast<uint64_t>(n);
  man.scale = s;
  man.heatmap_c = cfg.heatmap_c;
  man.tpl = stpl;
  man.config_echo = {
      {"abd_max", fmt_g17(cfg.abd_max)},
      {"curl_dip_max", fmt_g17(cfg.curl_dip_max)},
      {"curl_mcp_max", fmt_g17(cfg.curl_mcp_max)},
      {"curl_pip_max", fmt_g17(cfg.curl_pip_max)},
      {"frac_near", fmt_g17(cfg.frac_near)},
      {"frac_tight", fmt_g17(cfg.frac_tight)},
      {"global_rot_max", fmt_g17(cfg.global_rot_max)},
      {"points_per_branch", std::to_string(cfg.points_per_branch)},
      {"prox_max", fmt_g17(cfg.prox_max)},
      {"prox_min", fmt_g17(cfg.prox_min)},
      {"render_far", fmt_g17(cfg.render_far)},
      {"render_h", std::to_string(cfg.render_h)},
      {"render_half_window", fmt_g17(cfg.render_half_window)},
      {"render_w", std::to_string(cfg.render_w)},
      {"render_z0", fmt_g17(cfg.render_z0)},
      {"seed", std::to_string(seed)},
      {"shape_amp", fmt_g17(cfg.shape_amp)},
      {"sigma_near", fmt_g17(cfg.sigma_near)},
      {"sigma_tight", fmt_g17(cfg.sigma_tight)},
  };
  return {std::move(scenes), std::move(man)};
}

void write_dataset(const std::string& dir, const std::vector<SceneSample>& scenes,
                   const DatasetManifest& manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "samples");
  nlohmann::ordered_json j;
  j["version"] = manifest.version;
  j["sample_count"] = manifest.sample_count;
  j["scale"] = manifest.scale;
  j["heatmap_c"] = manifest.heatmap_c;
  nlohmann::ordered_json jt;
  jt["parent"] = manifest.tpl.parent;
  auto& joff = jt["offset"] = nlohmann::ordered_json::array();
  for (const auto& o : manifest.tpl.offset) joff.push_back({o.x, o.y, o.z});
  jt["radius"] = manifest.tpl.radius;
  jt["basis"] = manifest.tpl.basis;
  j["hand_template"] = std::move(jt);
  nlohmann::ordered_json jc = nlohmann::ordered_json::object();
  for (const auto& [k, v] : manifest.config_echo) jc[k] = v;
  j["config"] = std::move(jc);
  write_file_bytes((fs::path(dir) / "manifest.json").string(), j.dump(2) + "\n");

  if (scenes.size() != manifest.sample_count)
    throw UsageError("write_dataset: manifest count " + std::to_string(manifest.sample_count) +
                     " does not match " + std::to_string(scenes.size()) + " scenes");
  for (size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.asdf", i);
    write_file_bytes((fs::path(dir) / "samples" / name).string(), encode_sample(scenes[i]));
  }
}

std::pair<std::vector<SceneSample>, DatasetManifest> read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::string mpath = (fs::path(dir) / "manifest.json").string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(mpath + ": manifest parse failed: " + e.what());
  }
  DatasetManifest man;
  try {
    man.version = j.at("version").get<uint32_t>();
    if (man.version != 1)
      throw DataError(mpath + ": unsupported manifest version " + std::to_string(man.version));
    man.sample_count = j.at("sample_count").get<uint64_t>();
    man.scale = j.at("scale").get<double>();
    man.heatmap_c = j.at("heatmap_c").get<double>();
    const auto& jt = j.at("hand_template");
    auto parent = jt.at("parent").get<std::vector<int>>();
    auto offset = jt.at("offset").get<std::vector<std::array<double, 3>>>();
    auto radius = jt.at("radius").get<std::vector<double>>();
    auto basis = jt.at("basis").get<std::vector<std::array<double, 10>>>();
    if (parent.size() != 21 || offset.size() != 20 || radius.size() != 20 || basis.size() != 20)
      throw DataError(mpath + ": hand_template has wrong cardinalities");
    std::copy(parent.begin(), parent.end(), man.tpl.parent.begin());
    for (size_t b = 0; b < 20; ++b) {
      man.tpl.offset[b] = Vec3{offset[b][0], offset[b][1], offset[b][2]};
      man.tpl.radius[b] = radius[b];
      man.tpl.basis[b] = basis[b];
    }
    if (j.contains("config"))
      for (const auto& [k, v] : j.at("config").items())
        man.config_echo.emplace_back(k, v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(mpath + ": manifest field error: " + e.what());
  }

  size_t present = 0;
  fs::path sdir = fs::path(dir) / "samples";
  if (fs::exists(sdir))
    for (const auto& ent : fs::directory_iterator(sdir))
      if (ent.path().extension() == ".asdf") ++present;
  if (present != man.sample_count)
    throw DataError(dir + ": manifest says " + std::to_string(man.sample_count) +
                    " samples but " + std::to_string(present) + " records present");

  std::vector<SceneSample> scenes;
  scenes.reserve(man.sample_count);
  for (uint64_t i = 0; i < man.sample_count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06llu.asdf", static_cast<unsigned long long>(i));
    std::string path = (sdir / name).string();
    scenes.push_back(decode_sample(read_file_bytes(path), path));
  }
  return {std::move(scenes), std::move(man)};
}

}  // namespace posesdf
