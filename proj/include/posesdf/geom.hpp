#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "posesdf/errors.hpp"

namespace posesdf {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
  Vec3 normalized() const {
    double n = norm();
    require(n > 0, "vec3: cannot normalize zero vector");
    return {x / n, y / n, z / n};
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return r;
  }

  double& operator()(int i, int j) { return m[static_cast<size_t>(i * 3 + j)]; }
  double operator()(int i, int j) const { return m[static_cast<size_t>(i * 3 + j)]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        r(i, j) = (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j) + (*this)(i, 2) * o(2, j);
    return r;
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  double trace() const { return m[0] + m[4] + m[8]; }
};

// Coefficients of R = I + A[w]x + B[w]x^2 and their derivatives w.r.t.
// s = |w|^2. The series branch below |w| = 1e-2 covers the removable
// singularity at 0; the closed forms for dA/ds, dB/ds cancel catastrophically
// for small angles, which is why the branch is this wide.
struct RodriguesCoeffs {
  double a, b, da, db;
};

inline RodriguesCoeffs rodrigues_coeffs(double s) {
  RodriguesCoeffs c{};
  if (s < 1e-4) {
    c.a = 1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0;
    c.b = 0.5 - s / 24.0 + s * s / 720.0 - s * s * s / 40320.0;
    c.da = -1.0 / 6.0 + s / 60.0 - s * s / 1680.0 + s * s * s / 90720.0;
    c.db = -1.0 / 24.0 + s / 360.0 - s * s / 13440.0 + s * s * s / 907200.0;
  } else {
    double al = std::sqrt(s);
    double sa = std::sin(al), ca = std::cos(al);
    c.a = sa / al;
    c.b = (1.0 - ca) / s;
    c.da = (al * ca - sa) / (2.0 * s * al);
    c.db = (al * sa - 2.0 * (1.0 - ca)) / (2.0 * s * s);
  }
  return c;
}

inline Mat3 skew(const Vec3& w) {
  Mat3 k;
  k.m = {0, -w.z, w.y, w.z, 0, -w.x, -w.y, w.x, 0};
  return k;
}

// Axis-angle (axis * angle) to rotation matrix.
inline Mat3 axis_angle_to_matrix(const Vec3& w) {
  double s = w.norm2();
  RodriguesCoeffs c = rodrigues_coeffs(s);
  Mat3 k = skew(w);
  Mat3 k2 = k * k;
  Mat3 r = Mat3::identity();
  for (int i = 0; i < 9; ++i) r.m[i] += c.a * k.m[i] + c.b * k2.m[i];
  return r;
}

// Principal log map: returns axis * angle with angle in [0, pi].
inline Vec3 matrix_to_axis_angle(const Mat3& r) {
  double ct = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  Vec3 v{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
  // atan2 of (sin, cos) stays accurate at both ends where acos does not.
  double st = 0.5 * v.norm();
  double angle = std::atan2(st, ct);
  if (angle < 1e-7) {
    // R ~ I + [w]x, so v ~ 2w.
    return v * 0.5;
  }
  if (angle < 3.0) {
    return v * (angle / (2.0 * std::sin(angle)));
  }
  // Near pi the skew part vanishes; recover the axis from the symmetric part
  // R = 2*aa^T - I + small. Pick the dominant diagonal for stability.
  double xx = (r(0, 0) + 1.0) * 0.5;
  double yy = (r(1, 1) + 1.0) * 0.5;
  double zz = (r(2, 2) + 1.0) * 0.5;
  Vec3 a;
  if (xx >= yy && xx >= zz) {
    a.x = std::sqrt(std::max(xx, 0.0));
    a.y = (r(0, 1) + r(1, 0)) * 0.25 / std::max(a.x, 1e-12);
    a.z = (r(0, 2) + r(2, 0)) * 0.25 / std::max(a.x, 1e-12);
  } else if (yy >= zz) {
    a.y = std::sqrt(std::max(yy, 0.0));
    a.x = (r(0, 1) + r(1, 0)) * 0.25 / std::max(a.y, 1e-12);
    a.z = (r(1, 2) + r(2, 1)) * 0.25 / std::max(a.y, 1e-12);
  } else {
    a.z = std::sqrt(std::max(zz, 0.0));
    a.x = (r(0, 2) + r(2, 0)) * 0.25 / std::max(a.z, 1e-12);
    a.y = (r(1, 2) + r(2, 1)) * 0.25 / std::max(a.z, 1e-12);
  }
  double n = a.norm();
  if (n < 1e-12) return {angle, 0, 0};
  // Sign of the axis from the (possibly tiny) skew part.
  if (a.dot(v) < 0) a = -a;
  return a * (angle / n);
}

// log(R(a) * R(b)), principal value. Composes through unit quaternions,
// which stays accurate for results near angle pi where the matrix log does
// not.
inline Vec3 compose_axis_angle(const Vec3& a, const Vec3& b) {
  auto to_quat = [](const Vec3& w) {
    double th = w.norm();
    double half = 0.5 * th;
    // sin(th/2)/th with a series at the origin
    double k = th > 1e-6 ? std::sin(half) / th : 0.5 - th * th / 48.0;
    return std::array<double, 4>{std::cos(half), w.x * k, w.y * k, w.z * k};
  };
  auto qa = to_quat(a);
  auto qb = to_quat(b);
  std::array<double, 4> q{
      qa[0] * qb[0] - qa[1] * qb[1] - qa[2] * qb[2] - qa[3] * qb[3],
      qa[0] * qb[1] + qa[1] * qb[0] + qa[2] * qb[3] - qa[3] * qb[2],
      qa[0] * qb[2] - qa[1] * qb[3] + qa[2] * qb[0] + qa[3] * qb[1],
      qa[0] * qb[3] + qa[1] * qb[2] - qa[2] * qb[1] + qa[3] * qb[0]};
  if (q[0] < 0)
    for (double& v : q) v = -v;
  Vec3 qv{q[1], q[2], q[3]};
  double nv = qv.norm();
  double angle = 2.0 * std::atan2(nv, q[0]);
  // angle/nv with a series at the origin (q[0] ~ 1)
  double k = nv > 1e-9 ? angle / nv : 2.0 / q[0];
  return qv * k;
}

}  // namespace posesdf
