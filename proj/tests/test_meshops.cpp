#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "posesdf/io.hpp"
#include "posesdf/meshops.hpp"
#include "posesdf/rng.hpp"

using namespace posesdf;

namespace {

const Box3 kUnitBox{{-1, -1, -1}, {1, 1, 1}};

double sphere_field(const Vec3& p) { return p.norm() - 0.5; }

double max_sphere_deviation(const TriMesh& m) {
  double worst = 0;
  for (const Vec3& v : m.vertices) worst = std::max(worst, std::fabs(v.norm() - 0.5));
  return worst;
}

}  // namespace

TEST_CASE("sphere extraction: accuracy, watertightness, volume, orientation") {
  auto mesh = marching_cubes(sphere_field, 64, kUnitBox);
  double voxel = 2.0 / 63.0;
  CHECK(max_sphere_deviation(mesh) < 1.5 * voxel);
  auto rep = is_watertight(mesh);
  CHECK(rep.watertight);
  CHECK(rep.defects.empty());
  double vol = signed_volume(mesh);
  double expect = 4.0 / 3.0 * 3.14159265358979323846 * 0.125;
  CHECK(vol > 0.0);
  CHECK(std::fabs(vol - expect) < 0.10 * expect);
}

TEST_CASE("doubling resolution does not worsen sphere accuracy") {
  auto coarse = marching_cubes(sphere_field, 32, kUnitBox);
  auto fine = marching_cubes(sphere_field, 64, kUnitBox);
  CHECK(max_sphere_deviation(fine) <= max_sphere_deviation(coarse));
}

TEST_CASE("half-space field produces a plane at zero") {
  auto mesh = marching_cubes([](const Vec3& p) { return p.x; }, 64, kUnitBox);
  CHECK(!mesh.triangles.empty());
  for (const Vec3& v : mesh.vertices) CHECK(std::fabs(v.x) < 1e-12);
}

TEST_CASE("grid-aligned zeros are handled without degenerate triangles") {
  // resolution 65 puts grid points exactly on the x = 0 plane
  auto mesh = marching_cubes([](const Vec3& p) { return p.x; }, 65, kUnitBox);
  CHECK(!mesh.triangles.empty());
  for (const Vec3& v : mesh.vertices) CHECK(std::fabs(v.x) < 1e-12);
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(t[2])];
    CHECK(0.5 * (b - a).cross(c - a).norm() > 1e-14);
  }
}

TEST_CASE("field without sign change raises the empty-field error") {
  CHECK_THROWS_AS((void)marching_cubes([](const Vec3&) { return 1.0; }, 16, kUnitBox),
                  EmptyFieldError);
  CHECK_THROWS_AS((void)marching_cubes([](const Vec3&) { return -2.0; }, 16, kUnitBox),
                  EmptyFieldError);
}

TEST_CASE("precondition violations are rejected") {
  CHECK_THROWS_AS((void)marching_cubes(sphere_field, 1, kUnitBox), Error);
  Box3 bad{{1, -1, -1}, {-1, 1, 1}};
  CHECK_THROWS_AS((void)marching_cubes(sphere_field, 16, bad), Error);
  CHECK_THROWS_AS((void)marching_cubes([](const Vec3&) { return std::nan(""); }, 4, kUnitBox),
                  NumericError);
}

TEST_CASE("watertight report flags boundary edges") {
  TriMesh single;
  single.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  single.triangles = {{0, 1, 2}};
  auto rep = is_watertight(single);
  CHECK(!rep.watertight);
  CHECK(rep.defects.size() == 3);

  TriMesh empty;
  CHECK(is_watertight(empty).watertight);
}

TEST_CASE("obj export format for a single triangle") {
  TriMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.triangles = {{0, 1, 2}};
  std::string path = "/tmp/test_meshops_tri.obj";
  export_obj(path, m);
  std::string text = read_file_bytes(path);
  CHECK(text == "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  std::remove(path.c_str());
}

TEST_CASE("obj round trip preserves topology and coordinates") {
  Rng rng(3);
  TriMesh m;
  for (int i = 0; i < 200; ++i)
    m.vertices.push_back(Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  for (int i = 0; i < 300; ++i) {
    int32_t a = static_cast<int32_t>(rng.index(200));
    int32_t b = static_cast<int32_t>(rng.index(200));
    int32_t c = static_cast<int32_t>(rng.index(200));
    m.triangles.push_back({a, b, c});
  }
  std::string path = "/tmp/test_meshops_rt.obj";
  export_obj(path, m);
  auto back = import_obj(path);
  REQUIRE(back.vertices.size() == m.vertices.size());
  REQUIRE(back.triangles.size() == m.triangles.size());
  for (size_t i = 0; i < m.vertices.size(); ++i)
    CHECK((back.vertices[i] - m.vertices[i]).norm() < 1e-8);
  for (size_t i = 0; i < m.triangles.size(); ++i) CHECK(back.triangles[i] == m.triangles[i]);
  std::remove(path.c_str());
}

TEST_CASE("obj import rejects malformed lines with the line number") {
  std::string path = "/tmp/test_meshops_bad.obj";
  write_file_bytes(path, "v 0 0 0\nv 1 0 0\nf 1 2\n");
  try {
    (void)import_obj(path);
    CHECK(false);
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  write_file_bytes(path, "v 0 0\n");
  CHECK_THROWS_AS((void)import_obj(path), DataError);
  write_file_bytes(path, "v 0 0 0\nf 1 1 7\n");
  CHECK_THROWS_AS((void)import_obj(path), DataError);
  // comments and unknown records are ignored
  write_file_bytes(path, "# header\no thing\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  auto m = import_obj(path);
  CHECK(m.vertices.size() == 3);
  CHECK(m.triangles.size() == 1);
  std::remove(path.c_str());
}
