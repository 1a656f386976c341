#include "posesdf/hand.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "posesdf/errors.hpp"

namespace posesdf {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

std::vector<int> HandTemplate::bone_sites(int bone) const {
  std::vector<int> sites;
  int within = bone % 4;
  int finger = bone / 4;
  sites.push_back(0);
  for (int k = 1; k <= within; ++k) sites.push_back(k + 3 * finger);
  return sites;
}

HandTemplate default_hand_template() {
  HandTemplate t{};
  t.parent[0] = -1;
  for (int f = 0; f < 5; ++f) {
    t.parent[1 + 4 * f] = 0;
    t.parent[2 + 4 * f] = 1 + 4 * f;
    t.parent[3 + 4 * f] = 2 + 4 * f;
    t.parent[4 + 4 * f] = 3 + 4 * f;
  }

  // Rest pose: straight fingers fanned in the xy-plane, palm normal +z.
  const double dir[5] = {-1.00, -0.25, 0.00, 0.22, 0.45};
  const double len[5][4] = {
      {0.045, 0.032, 0.024, 0.023},  // thumb
      {0.090, 0.042, 0.026, 0.021},  // index
      {0.095, 0.046, 0.029, 0.023},  // middle
      {0.088, 0.042, 0.027, 0.022},  // ring
      {0.078, 0.032, 0.020, 0.019},  // pinky
  };
  const double rad[5][4] = {
      {0.0140, 0.0120, 0.0110, 0.0100},
      {0.0130, 0.0100, 0.0090, 0.0080},
      {0.0130, 0.0100, 0.0090, 0.0080},
      {0.0125, 0.0095, 0.0085, 0.0075},
      {0.0120, 0.0090, 0.0080, 0.0070},
  };
  for (int f = 0; f < 5; ++f) {
    Vec3 u{std::cos(dir[f]), std::sin(dir[f]), 0.0};
    for (int k = 0; k < 4; ++k) {
      int b = 4 * f + k;
      t.offset[b] = u * len[f][k];
      t.radius[b] = rad[f][k];
    }
  }

  // Length channels: 0 uniform, 1 non-metacarpal, 2..6 exact per-finger,
  // 7 metacarpal, 8 distal, 9 alternating.
  for (int f = 0; f < 5; ++f) {
    for (int k = 0; k < 4; ++k) {
      int b = 4 * f + k;
      t.basis[b][0] = 0.08;
      t.basis[b][1] = k >= 1 ? 0.10 : 0.0;
      t.basis[b][2 + f] = 0.12;
      t.basis[b][7] = k == 0 ? 0.10 : 0.0;
      t.basis[b][8] = k == 3 ? 0.10 : 0.0;
      t.basis[b][9] = (b % 2 == 0) ? 0.05 : -0.05;
    }
  }
  return t;
}

HandTemplate scale_template(const HandTemplate& tpl, double s) {
  HandTemplate t = tpl;
  for (int b = 0; b < 20; ++b) {
    t.offset[b] = tpl.offset[b] * s;
    t.radius[b] = tpl.radius[b] * s;
  }
  return t;
}

std::array<double, 20> bone_scales(const std::array<double, 10>& shape, const HandTemplate& tpl) {
  std::array<double, 20> s{};
  for (int b = 0; b < 20; ++b) {
    double acc = 1.0;
    for (int k = 0; k < 10; ++k) acc += tpl.basis[b][k] * shape[k];
    s[b] = acc;
  }
  return s;
}

HandState forward_kinematics(const HandParams& params, const HandTemplate& tpl) {
  for (double v : params.pose)
    if (!std::isfinite(v)) throw NumericError("fk: non-finite pose");
  for (double v : params.shape)
    if (!std::isfinite(v)) throw NumericError("fk: non-finite shape");
  auto scales = bone_scales(params.shape, tpl);
  for (int b = 0; b < 20; ++b)
    if (!(scales[b] > 0.0))
      throw NumericError("fk: non-positive scale for bone " + std::to_string(b));

  std::array<Mat3, 16> site_rot;
  for (int s = 0; s < 16; ++s) {
    Vec3 w{params.pose[3 * s], params.pose[3 * s + 1], params.pose[3 * s + 2]};
    site_rot[s] = axis_angle_to_matrix(w);
  }

  HandState st;
  st.joints[0] = Vec3{0, 0, 0};
  st.global_rot = Vec3{params.pose[0], params.pose[1], params.pose[2]};
  st.rot_center = Vec3{0, 0, 0};

  // Cumulative rotation at each joint (applied to its child bones).
  std::array<Mat3, 21> cum;
  cum[0] = site_rot[0];
  for (int j = 1; j <= 20; ++j) {
    int b = j - 1;
    int par = tpl.parent[j];
    Vec3 d = tpl.offset[b] * scales[b];
    st.joints[j] = st.joints[par] + cum[par] * d;
    // The site at this joint (MCP/PIP/DIP, none at tips) composes onto the
    // parent's cumulative rotation and orients the child bone.
    int within = b % 4;
    int finger = b / 4;
    if (within < 3)
      cum[j] = cum[par] * site_rot[(within + 1) + 3 * finger];
    else
      cum[j] = cum[par];
  }

  // Fixed parametric capsule samples: 5 axial stations x 8 angles + poles.
  st.surface.reserve(20 * 42);
  for (int b = 0; b < 20; ++b) {
    Vec3 a = st.joints[tpl.parent[b + 1]];
    Vec3 c = st.joints[b + 1];
    double r = tpl.radius[b];
    Vec3 axis = c - a;
    double L = axis.norm();
    Vec3 dir = L > 1e-12 ? axis * (1.0 / L) : Vec3{1, 0, 0};
    // Deterministic frame: pick the smallest |component| axis as helper.
    Vec3 pick = std::fabs(dir.x) <= std::fabs(dir.y) && std::fabs(dir.x) <= std::fabs(dir.z)
                    ? Vec3{1, 0, 0}
                    : (std::fabs(dir.y) <= std::fabs(dir.z) ? Vec3{0, 1, 0} : Vec3{0, 0, 1});
    Vec3 u = dir.cross(pick).normalized();
    Vec3 w = dir.cross(u);
    for (int sta = 0; sta < 5; ++sta) {
      Vec3 base = a + axis * (static_cast<double>(sta) / 4.0);
      for (int ang = 0; ang < 8; ++ang) {
        double al = 2.0 * kPi * static_cast<double>(ang) / 8.0;
        st.surface.push_back(base + (u * std::cos(al) + w * std::sin(al)) * r);
      }
    }
    st.surface.push_back(a - dir * r);
    st.surface.push_back(c + dir * r);
  }
  return st;
}

double capsule_sdf(const Vec3& p, const Vec3& a, const Vec3& b, double r) {
  Vec3 pa = p - a;
  Vec3 ba = b - a;
  double denom = ba.dot(ba);
  double h = denom > 0.0 ? std::clamp(pa.dot(ba) / denom, 0.0, 1.0) : 0.0;
  return (pa - ba * h).norm() - r;
}

double hand_sdf(const Vec3& p, const std::array<Vec3, 21>& joints, const HandTemplate& tpl) {
  double d = capsule_sdf(p, joints[tpl.parent[1]], joints[1], tpl.radius[0]);
  for (int b = 1; b < 20; ++b)
    d = std::min(d, capsule_sdf(p, joints[tpl.parent[b + 1]], joints[b + 1], tpl.radius[b]));
  return d;
}

Vec3 canonicalize_hand(const Vec3& x, const Vec3& global_rot, const Vec3& rot_center) {
  Mat3 rt = axis_angle_to_matrix(global_rot).transposed();
  return rt * (x - rot_center) + rot_center;
}

Vec3 sample_capsule_surface(const Vec3& a, const Vec3& b, double r, Rng& rng) {
  Vec3 axis = b - a;
  double L = axis.norm();
  double cyl_area = 2.0 * kPi * r * L;
  double cap_area = 4.0 * kPi * r * r;
  double pick = rng.uniform() * (cyl_area + cap_area);
  Vec3 dir = L > 1e-12 ? axis * (1.0 / L) : Vec3{1, 0, 0};
  Vec3 helper = std::fabs(dir.x) <= std::fabs(dir.y) && std::fabs(dir.x) <= std::fabs(dir.z)
                    ? Vec3{1, 0, 0}
                    : (std::fabs(dir.y) <= std::fabs(dir.z) ? Vec3{0, 1, 0} : Vec3{0, 0, 1});
  Vec3 u = dir.cross(helper).normalized();
  Vec3 w = dir.cross(u);
  if (pick < cyl_area && L > 1e-12) {
    double t = rng.uniform();
    double al = rng.uniform(0.0, 2.0 * kPi);
    return a + axis * t + (u * std::cos(al) + w * std::sin(al)) * r;
  }
  // Uniform on the union of the two hemispherical caps = uniform sphere
  // point attached to the matching end.
  double z = rng.uniform(-1.0, 1.0);
  double al = rng.uniform(0.0, 2.0 * kPi);
  double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
  Vec3 n = u * (rho * std::cos(al)) + w * (rho * std::sin(al)) + dir * z;
  return (n.dot(dir) >= 0.0 ? b : a) + n * r;
}

int32_t fk_on_tape(ad::Tape& t, int32_t pose48, int32_t shape10, const HandTemplate& tpl) {
  require(t.value(pose48).numel() == 48, "fk_on_tape: pose must be [48]");
  require(t.value(shape10).numel() == 10, "fk_on_tape: shape must be [10]");

  std::array<int32_t, 16> site;
  for (int s = 0; s < 16; ++s) site[s] = t.slice(pose48, 3 * s, 3);

  std::array<int32_t, 21> joint;
  joint[0] = t.constant(Tensor::vec({0.0, 0.0, 0.0}));
  int32_t out = joint[0];
  for (int b = 0; b < 20; ++b) {
    int j = b + 1;
    // Shape-scaled bone vector as an affine map of the shape coefficients:
    // d = offset * (1 + basis . shape) = W shape + offset.
    Tensor w = Tensor::zeros({3, 10});
    for (int k = 0; k < 10; ++k) {
      w.at(0, k) = tpl.offset[b].x * tpl.basis[b][k];
      w.at(1, k) = tpl.offset[b].y * tpl.basis[b][k];
      w.at(2, k) = tpl.offset[b].z * tpl.basis[b][k];
    }
    Tensor bias = Tensor::vec({tpl.offset[b].x, tpl.offset[b].y, tpl.offset[b].z});
    int32_t d = t.affine(t.constant(w), shape10, t.constant(bias));
    // Apply the ancestor chain deepest-first so the composition matches
    // cum = R_root ... R_parent.
    auto sites = tpl.bone_sites(b);
    int32_t v = d;
    for (auto it = sites.rbegin(); it != sites.rend(); ++it) v = t.rotate(site[*it], v);
    joint[j] = t.add(joint[tpl.parent[j]], v);
  }
  for (int j = 1; j <= 20; ++j) out = t.concat_rows(out, joint[j]);
  return out;
}

int32_t canonicalize_hand_on_tape(ad::Tape& t, int32_t points, int32_t global_rot3) {
  return t.rotate(t.scale(global_rot3, -1.0), points);
}

HandHead build_hand_head(uint64_t seed) {
  Rng rng(seed);
  HandHead h;
  h.fc1 = make_linear(256, 256, rng);
  h.fc2 = make_linear(58, 256, rng);
  return h;
}

HandHeadNodes hand_head_forward(ad::Tape& t, const LinearNodes& fc1, const LinearNodes& fc2,
                                int32_t features) {
  int32_t h = t.relu(linear_apply(t, fc1, features));
  int32_t out = linear_apply(t, fc2, h);
  return {t.slice(out, 0, 48), t.slice(out, 48, 10)};
}

}  // namespace posesdf
