#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "posesdf/errors.hpp"
#include "posesdf/geom.hpp"

namespace posesdf {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int32_t, 3>> triangles;
};

struct Box3 {
  Vec3 lo, hi;
};

// Field evaluated on a point batch; values in the same order as the query.
using BatchField = std::function<std::vector<double>(const std::vector<Vec3>&)>;

// Zero level set of the field over the box, sampled at resolution grid
// points per axis (so voxel size = extent / (resolution - 1)). Negative
// inside. Vertices on shared cube edges are welded, exact-zero samples are
// nudged to the outside, and zero-area triangles are dropped, so closed
// surfaces come out watertight with outward orientation.
// Throws EmptyFieldError when the field has no sign change on the grid.
TriMesh marching_cubes(const BatchField& field, int resolution, const Box3& bounds);
TriMesh marching_cubes(const std::function<double(const Vec3&)>& field, int resolution,
                       const Box3& bounds);

struct WatertightReport {
  bool watertight = true;
  // Edges (vertex index pairs, lo < hi) not shared by exactly 2 triangles.
  std::vector<std::pair<int32_t, int32_t>> defects;
};

// Empty mesh counts as watertight.
WatertightReport is_watertight(const TriMesh& mesh);

// Divergence-theorem volume; positive for outward-oriented closed meshes.
double signed_volume(const TriMesh& mesh);

// ASCII OBJ, "v"/"f" records only, 9 significant digits, 1-based indices.
void export_obj(const std::string& path, const TriMesh& mesh);

// Inverse of export_obj. Ignores comments and unknown record types; throws
// DataError naming the line on malformed v/f records.
TriMesh import_obj(const std::string& path);

}  // namespace posesdf
