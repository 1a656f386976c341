#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "posesdf/errors.hpp"
#include "posesdf/io.hpp"
#include "posesdf/scenegen.hpp"

using namespace posesdf;

namespace {

constexpr double kPi = 3.14159265358979323846;

GenConfig small_config() {
  GenConfig cfg;
  cfg.points_per_branch = 3000;
  cfg.render_w = 16;
  cfg.render_h = 16;
  cfg.prox_surface_samples = 20000;
  return cfg;
}

ObjectPrimitive make_prim(PrimitiveKind kind, std::array<double, 4> size,
                          Vec3 orient = {0, 0, 0}, Vec3 t = {0, 0, 0}) {
  ObjectPrimitive p;
  p.kind = kind;
  p.size = size;
  p.orientation = orient;
  p.t_o = t;
  return p;
}

std::vector<Vec3> surface_cloud(const ObjectPrimitive& prim, int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pts.push_back(sample_primitive_surface(prim, rng));
  return pts;
}

double min_dist_to_cloud(const Vec3& x, const std::vector<Vec3>& cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& p : cloud) best = std::min(best, (x - p).norm2());
  return std::sqrt(best);
}

std::string temp_dir(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() / (std::string("posesdf_") + tag);
  std::filesystem::remove_all(dir);
  return dir.string();
}

bool points_equal(const LabeledPoints& a, const LabeledPoints& b) {
  if (a.x.size() != b.x.size() || a.n_pos != b.n_pos || a.n_neg != b.n_neg) return false;
  for (size_t i = 0; i < a.x.size(); ++i) {
    if (a.x[i].x != b.x[i].x || a.x[i].y != b.x[i].y || a.x[i].z != b.x[i].z) return false;
    if (a.sdf[i] != b.sdf[i]) return false;
  }
  return true;
}

bool scenes_equal(const SceneSample& a, const SceneSample& b) {
  if (a.id != b.id || a.seed != b.seed) return false;
  if (a.render_w != b.render_w || a.render_h != b.render_h || a.render != b.render) return false;
  for (int k = 0; k < 48; ++k)
    if (a.params.pose[static_cast<size_t>(k)] != b.params.pose[static_cast<size_t>(k)]) return false;
  for (int k = 0; k < 10; ++k)
    if (a.params.shape[static_cast<size_t>(k)] != b.params.shape[static_cast<size_t>(k)]) return false;
  for (int j = 0; j < 21; ++j) {
    const Vec3 &ja = a.joints[static_cast<size_t>(j)], &jb = b.joints[static_cast<size_t>(j)];
    if (ja.x != jb.x || ja.y != jb.y || ja.z != jb.z) return false;
  }
  if (a.prim.kind != b.prim.kind || a.prim.size != b.prim.size) return false;
  if (a.prim.orientation.x != b.prim.orientation.x || a.prim.t_o.x != b.prim.t_o.x) return false;
  if (a.prim.orientation.y != b.prim.orientation.y || a.prim.t_o.y != b.prim.t_o.y) return false;
  if (a.prim.orientation.z != b.prim.orientation.z || a.prim.t_o.z != b.prim.t_o.z) return false;
  return points_equal(a.hand_pts, b.hand_pts) && points_equal(a.obj_pts, b.obj_pts);
}

}  // namespace

TEST_CASE("primitive sdfs reproduce exact distances") {
  auto sphere = make_prim(PrimitiveKind::Sphere, {0.5, 0, 0, 0});
  CHECK(analytic_object_sdf({0, 0, 0}, sphere) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(analytic_object_sdf({2, 0, 0}, sphere) == doctest::Approx(1.5).epsilon(1e-15));

  auto box = make_prim(PrimitiveKind::Box, {0.5, 0.5, 0.5, 0});
  CHECK(analytic_object_sdf({1, 0, 0}, box) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(analytic_object_sdf({0, 0, 0}, box) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(analytic_object_sdf({1, 1, 1}, box) == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
  CHECK(analytic_object_sdf({0.25, 0.1, 0}, box) == doctest::Approx(-0.25).epsilon(1e-15));

  auto cap = make_prim(PrimitiveKind::Capsule, {0.1, 0.3, 0, 0});
  CHECK(analytic_object_sdf({0, 0, 0.45}, cap) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(analytic_object_sdf({0.25, 0, 0.1}, cap) == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(analytic_object_sdf({0, 0, 0}, cap) == doctest::Approx(-0.1).epsilon(1e-15));

  auto torus = make_prim(PrimitiveKind::Torus, {0.5, 0.1, 0, 0});
  CHECK(analytic_object_sdf({0.6, 0, 0}, torus) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(analytic_object_sdf({0.5, 0, 0.1}, torus) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(analytic_object_sdf({0, 0, 0}, torus) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(analytic_object_sdf({0.5, 0, 0}, torus) == doctest::Approx(-0.1).epsilon(1e-15));

  // Rigid placement: rotating a capsule 90 degrees about x sends its axis to y.
  auto placed = make_prim(PrimitiveKind::Capsule, {0.1, 0.3, 0, 0}, {kPi / 2, 0, 0}, {1, 2, 3});
  CHECK(analytic_object_sdf({1.0, 2.45, 3.0}, placed) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(analytic_object_sdf({1.0, 2.0, 3.25}, placed) == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("primitive sdfs agree with dense surface clouds") {
  const std::array<double, 4> sizes[4] = {
      {0.4, 0, 0, 0}, {0.3, 0.2, 0.25, 0}, {0.15, 0.3, 0, 0}, {0.35, 0.12, 0, 0}};
  for (int k = 0; k < 4; ++k) {
    Rng rng(900 + static_cast<uint64_t>(k));
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    axis = axis.normalized();
    auto prim = make_prim(static_cast<PrimitiveKind>(k), sizes[static_cast<size_t>(k)],
                          axis * rng.uniform(0.0, 3.0),
                          {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)});
    auto cloud = surface_cloud(prim, 300000, 7000 + static_cast<uint64_t>(k));
    for (int q = 0; q < 60; ++q) {
      Vec3 x = prim.t_o + Vec3{rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7)};
      double sd = analytic_object_sdf(x, prim);
      double cd = min_dist_to_cloud(x, cloud);
      CHECK(std::abs(std::abs(sd) - cd) < 2e-3);
    }
    // Every surface sample sits on the zero level set.
    for (int i = 0; i < 200; ++i)
      CHECK(std::abs(analytic_object_sdf(cloud[static_cast<size_t>(i * 37)], prim)) < 1e-12);
  }
}

TEST_CASE("support function bounds the surface in every direction") {
  Rng rng(41);
  for (int k = 0; k < 4; ++k) {
    std::array<double, 4> size{0, 0, 0, 0};
    switch (static_cast<PrimitiveKind>(k)) {
      case PrimitiveKind::Sphere: size = {0.3, 0, 0, 0}; break;
      case PrimitiveKind::Box: size = {0.2, 0.35, 0.15, 0}; break;
      case PrimitiveKind::Capsule: size = {0.1, 0.25, 0, 0}; break;
      case PrimitiveKind::Torus: size = {0.3, 0.08, 0, 0}; break;
    }
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    auto prim = make_prim(static_cast<PrimitiveKind>(k), size, axis.normalized() * 1.3,
                          {0.2, -0.1, 0.4});
    auto cloud = surface_cloud(prim, 200000, 52 + static_cast<uint64_t>(k));
    for (int d = 0; d < 12; ++d) {
      Vec3 u{rng.normal(), rng.normal(), rng.normal()};
      u = u.normalized();
      double sup = primitive_support(prim, u);
      double far = -std::numeric_limits<double>::infinity();
      for (const Vec3& p : cloud) far = std::max(far, (p - prim.t_o).dot(u));
      CHECK(far <= sup + 1e-12);
      // Attainment is corner-extremal for boxes, so the cloud lands a few
      // sample spacings short of the exact support point.
      CHECK(far >= sup - 5e-3);
    }
    double ext = primitive_extent(prim);
    for (const Vec3& p : cloud)
      for (int c = 0; c < 3; ++c) CHECK(std::abs(p[c]) <= ext + 1e-12);
  }
}

TEST_CASE("scene generation is deterministic per seed") {
  GenConfig cfg = small_config();
  HandTemplate tpl = default_hand_template();
  SceneSample a = generate_scene(1234, cfg, tpl);
  SceneSample b = generate_scene(1234, cfg, tpl);
  CHECK(a.params.pose == b.params.pose);
  CHECK(a.params.shape == b.params.shape);
  for (int j = 0; j < 21; ++j) {
    CHECK(a.joints[static_cast<size_t>(j)].x == b.joints[static_cast<size_t>(j)].x);
    CHECK(a.joints[static_cast<size_t>(j)].y == b.joints[static_cast<size_t>(j)].y);
    CHECK(a.joints[static_cast<size_t>(j)].z == b.joints[static_cast<size_t>(j)].z);
  }
  CHECK(a.prim.kind == b.prim.kind);
  CHECK(a.prim.size == b.prim.size);
  CHECK(a.prim.t_o.x == b.prim.t_o.x);
  CHECK(a.min_surface_dist == b.min_surface_dist);

  SceneSample c = generate_scene(1235, cfg, tpl);
  CHECK(a.params.pose != c.params.pose);
}

TEST_CASE("generated scenes satisfy the proximity window") {
  GenConfig cfg = small_config();
  HandTemplate tpl = default_hand_template();
  for (uint64_t seed = 50; seed < 60; ++seed) {
    SceneSample sc = generate_scene(seed, cfg, tpl);
    CHECK(sc.min_surface_dist >= cfg.prox_min);
    CHECK(sc.min_surface_dist <= cfg.prox_max);
    // Independent re-measurement: 4x denser sampling, different stream.
    double m2 = min_hand_object_distance(sc.joints, tpl, sc.prim,
                                         4 * cfg.prox_surface_samples, 0xFEEDull + seed);
    CHECK(std::abs(m2 - sc.min_surface_dist) < 1e-3);
  }
}

TEST_CASE("placement rejection gives up loudly") {
  GenConfig cfg = small_config();
  cfg.retry_budget = 0;
  HandTemplate tpl = default_hand_template();
  CHECK_THROWS_WITH_AS(generate_scene(77, cfg, tpl), doctest::Contains("seed 77"), DataError);
}

TEST_CASE("built dataset labels re-evaluate to the stored values") {
  GenConfig cfg = small_config();
  auto [scenes, man] = build_dataset(2024, 2, cfg);
  REQUIRE(scenes.size() == 2);
  CHECK(man.sample_count == 2);
  CHECK(man.scale > 0.0);
  for (const auto& sc : scenes) {
    REQUIRE(sc.hand_pts.x.size() == 3000);
    REQUIRE(sc.obj_pts.x.size() == 3000);
    uint32_t hp = 0, hn = 0;
    for (size_t i = 0; i < sc.hand_pts.x.size(); ++i) {
      double d = hand_sdf(sc.hand_pts.x[i], sc.joints, man.tpl);
      CHECK(std::abs(d - sc.hand_pts.sdf[i]) <= 1e-9);
      if (d > 0) ++hp;
      if (d < 0) ++hn;
    }
    CHECK(hp == sc.hand_pts.n_pos);
    CHECK(hn == sc.hand_pts.n_neg);
    for (size_t i = 0; i < sc.obj_pts.x.size(); ++i) {
      double d = analytic_object_sdf(sc.obj_pts.x[i], sc.prim);
      CHECK(std::abs(d - sc.obj_pts.sdf[i]) <= 1e-9);
    }
    // Object centroid must stay inside the heatmap coordinate bound.
    for (int k = 0; k < 3; ++k) CHECK(std::abs(sc.prim.t_o[k]) <= cfg.heatmap_c);
  }
}

TEST_CASE("near-surface samples dominate the mixture") {
  GenConfig cfg = small_config();
  auto [scenes, man] = build_dataset(99, 1, cfg);
  for (const LabeledPoints* pts : {&scenes[0].hand_pts, &scenes[0].obj_pts}) {
    int near = 0;
    for (double d : pts->sdf)
      if (std::abs(d) < 0.1) ++near;
    CHECK(static_cast<double>(near) / static_cast<double>(pts->sdf.size()) >= 0.8);
    CHECK(pts->n_pos >= 2u);
    CHECK(pts->n_neg >= 2u);
  }
}

TEST_CASE("point sampling rejects degenerate counts") {
  GenConfig cfg = small_config();
  HandTemplate tpl = default_hand_template();
  SceneSample sc = generate_scene(5, cfg, tpl);
  Rng rng(1);
  CHECK_THROWS_AS(sample_points_hand(sc, tpl, 1, cfg, rng), UsageError);
  CHECK_THROWS_AS(sample_points_object(sc, 0, cfg, rng), UsageError);
}

TEST_CASE("dataset scale fits interior points inside the unit cube") {
  GenConfig cfg = small_config();
  auto [scenes, man] = build_dataset(31, 2, cfg);
  HandTemplate tpl = man.tpl;
  for (const auto& sc : scenes)
    for (const LabeledPoints* pts : {&sc.hand_pts, &sc.obj_pts})
      for (size_t i = 0; i < pts->x.size(); ++i)
        if (pts->sdf[i] < 0.0)
          for (int k = 0; k < 3; ++k) CHECK(std::abs(pts->x[i][k]) <= 1.0);
  // Scaling is idempotent: the scaled dataset re-scales by 1.
  double s2 = compute_dataset_scale(scenes, tpl);
  CHECK(std::abs(s2 - 1.0) <= 1e-9);
}

TEST_CASE("doubling every extent halves the scale") {
  GenConfig cfg = small_config();
  HandTemplate tpl = default_hand_template();
  SceneSample sc = generate_scene(8, cfg, tpl);
  std::vector<SceneSample> one{sc};
  double s1 = compute_dataset_scale(one, tpl);
  scale_scene(one[0], 2.0);
  HandTemplate tpl2 = scale_template(tpl, 2.0);
  double s2 = compute_dataset_scale(one, tpl2);
  CHECK(s2 == 0.5 * s1);
}

TEST_CASE("empty scenes render to exact background zeros") {
  GenConfig cfg = small_config();
  HandTemplate tpl = default_hand_template();
  SceneSample sc;
  for (auto& j : sc.joints) j = Vec3{50, 50, 50};
  sc.prim = make_prim(PrimitiveKind::Sphere, {0.01, 0, 0, 0}, {0, 0, 0}, {50, 0, 0});
  auto img = render_scene(sc, tpl, cfg, 16, 16);
  for (float v : img) CHECK(v == 0.0f);
}

TEST_CASE("on-axis sphere renders rotationally symmetric") {
  GenConfig cfg = small_config();
  HandTemplate tpl = default_hand_template();
  SceneSample sc;
  for (auto& j : sc.joints) j = Vec3{-50, 0, 0};
  sc.prim = make_prim(PrimitiveKind::Sphere, {0.5, 0, 0, 0});
  for (int n : {32, 33}) {
    auto img = render_scene(sc, tpl, cfg, n, n);
    double worst = 0.0;
    for (int py = 0; py < n; ++py)
      for (int px = 0; px < n; ++px) {
        // Quarter turn about the view axis: (px, py) -> (py, n-1-px).
        float a = img[static_cast<size_t>(py) * static_cast<size_t>(n) + static_cast<size_t>(px)];
        float b = img[static_cast<size_t>(n - 1 - px) * static_cast<size_t>(n) +
                      static_cast<size_t>(py)];
        worst = std::max(worst, static_cast<double>(std::abs(a - b)));
      }
    CHECK(worst < 1e-6);
    bool any_hit = false;
    for (float v : img) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      if (v > 0.0f) any_hit = true;
    }
    CHECK(any_hit);
  }
}

TEST_CASE("sphere silhouette area matches the analytic disk") {
  GenConfig cfg = small_config();
  HandTemplate tpl = default_hand_template();
  SceneSample sc;
  for (auto& j : sc.joints) j = Vec3{-50, 0, 0};
  sc.prim = make_prim(PrimitiveKind::Sphere, {0.5, 0, 0, 0});
  int n = 128;
  auto img = render_scene(sc, tpl, cfg, n, n);
  int hits = 0;
  for (float v : img)
    if (v > 0.0f) ++hits;
  double pixel = 2.0 * cfg.render_half_window / n;
  double area = hits * pixel * pixel;
  double disk = kPi * 0.25;
  CHECK(std::abs(area - disk) / disk < 0.05);
}

TEST_CASE("rotation augmentation preserves labels and kinematics") {
  GenConfig cfg = small_config();
  auto [scenes, man] = build_dataset(63, 1, cfg);
  const SceneSample& sc = scenes[0];

  SceneSample same = augment_rotation(sc, 0.0, man.tpl, cfg);
  CHECK(encode_sample(same) == encode_sample(sc));

  double angle = 0.7;
  SceneSample rot = augment_rotation(sc, angle, man.tpl, cfg);
  for (size_t i = 0; i < rot.hand_pts.x.size(); ++i) {
    CHECK(rot.hand_pts.sdf[i] == sc.hand_pts.sdf[i]);
    CHECK(std::abs(hand_sdf(rot.hand_pts.x[i], rot.joints, man.tpl) - rot.hand_pts.sdf[i]) <= 1e-9);
  }
  for (size_t i = 0; i < rot.obj_pts.x.size(); ++i)
    CHECK(std::abs(analytic_object_sdf(rot.obj_pts.x[i], rot.prim) - rot.obj_pts.sdf[i]) <= 1e-9);

  // Composed global pose reproduces the rotated joints through kinematics.
  HandState st = forward_kinematics(rot.params, man.tpl);
  for (int j = 0; j < 21; ++j)
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(st.joints[static_cast<size_t>(j)][k] -
                     rot.joints[static_cast<size_t>(j)][k]) <= 1e-9);
  CHECK(rot.render.size() == sc.render.size());
}

TEST_CASE("dataset round trip is bitwise") {
  GenConfig cfg = small_config();
  cfg.points_per_branch = 500;
  auto [scenes, man] = build_dataset(7, 2, cfg);
  std::string dir = temp_dir("roundtrip");
  write_dataset(dir, scenes, man);
  auto [back, man2] = read_dataset(dir);
  REQUIRE(back.size() == scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) CHECK(scenes_equal(scenes[i], back[i]));
  CHECK(man2.scale == man.scale);
  CHECK(man2.sample_count == man.sample_count);
  CHECK(man2.heatmap_c == man.heatmap_c);
  for (size_t b = 0; b < 20; ++b) {
    CHECK(man2.tpl.offset[b].x == man.tpl.offset[b].x);
    CHECK(man2.tpl.offset[b].y == man.tpl.offset[b].y);
    CHECK(man2.tpl.offset[b].z == man.tpl.offset[b].z);
    CHECK(man2.tpl.radius[b] == man.tpl.radius[b]);
    CHECK(man2.tpl.basis[b] == man.tpl.basis[b]);
  }
  CHECK(man2.tpl.parent == man.tpl.parent);
  CHECK(man2.config_echo == man.config_echo);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt records are refused with the file named") {
  GenConfig cfg = small_config();
  cfg.points_per_branch = 100;
  auto [scenes, man] = build_dataset(11, 1, cfg);
  std::string dir = temp_dir("corrupt");
  write_dataset(dir, scenes, man);
  std::string rec = dir + "/samples/000000.asdf";
  std::string bytes = read_file_bytes(rec);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write_file_bytes(rec, bad_magic);
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("000000.asdf"), DataError);
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("magic"), DataError);

  write_file_bytes(rec, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("truncated"), DataError);

  std::string bad_version = bytes;
  bad_version[4] = 2;
  write_file_bytes(rec, bad_version);
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("version"), DataError);

  write_file_bytes(rec, bytes);
  CHECK_NOTHROW(read_dataset(dir));

  // A stray record makes the on-disk count disagree with the manifest.
  write_file_bytes(dir + "/samples/000099.asdf", bytes);
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("manifest says"), DataError);
  std::filesystem::remove(dir + "/samples/000099.asdf");

  // Manifest claiming more samples than exist is a count mismatch too.
  std::string mpath = dir + "/manifest.json";
  std::string mtext = read_file_bytes(mpath);
  size_t pos = mtext.find("\"sample_count\": 1");
  REQUIRE(pos != std::string::npos);
  mtext.replace(pos, std::string("\"sample_count\": 1").size(), "\"sample_count\": 3");
  write_file_bytes(mpath, mtext);
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("3"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("heatmap bound violations fail the build loudly") {
  GenConfig cfg = small_config();
  cfg.heatmap_c = 1e-4;
  CHECK_THROWS_WITH_AS(build_dataset(3, 1, cfg), doctest::Contains("heatmap"), DataError);
}
