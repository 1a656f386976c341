#include "posesdf/tape.hpp"

#include <cmath>

#include "posesdf/geom.hpp"

namespace posesdf::ad {

namespace {

// Eight-lane dot: the reassociation is fixed in source, so the result is
// deterministic and the compiler can vectorize without -ffast-math.
double dot8(const double* a, const double* b, int64_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  int64_t j = 0;
  for (; j + 8 <= n; j += 8) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
    s4 += a[j + 4] * b[j + 4];
    s5 += a[j + 5] * b[j + 5];
    s6 += a[j + 6] * b[j + 6];
    s7 += a[j + 7] * b[j + 7];
  }
  double s = ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
  for (; j < n; ++j) s += a[j] * b[j];
  return s;
}

void axpy(double a, const double* x, double* y, int64_t n) {
  for (int64_t j = 0; j < n; ++j) y[j] += a * x[j];
}

// C [m,p] += A [m,k] @ B [k,p]
void gemm_nn(int64_t m, int64_t k, int64_t p, const double* A, const double* B, double* C) {
  for (int64_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * p;
    for (int64_t kk = 0; kk < k; ++kk) axpy(a[kk], B + kk * p, c, p);
  }
}

// C [m,n] += G [m,p] @ X [n,p]^T
void gemm_nt(int64_t m, int64_t p, int64_t n, const double* G, const double* X, double* C) {
  for (int64_t i = 0; i < m; ++i) {
    const double* g = G + i * p;
    double* c = C + i * n;
    for (int64_t jn = 0; jn < n; ++jn) c[jn] += dot8(g, X + jn * p, p);
  }
}

// C [n,p] += W [m,n]^T @ G [m,p]
void gemm_tn(int64_t m, int64_t n, int64_t p, const double* W, const double* G, double* C) {
  for (int64_t i = 0; i < m; ++i) {
    const double* w = W + i * n;
    const double* g = G + i * p;
    for (int64_t jn = 0; jn < n; ++jn) axpy(w[jn], g, C + jn * p, p);
  }
}

// d(R(w))/dw_k as three 3x3 matrices, w unnormalized axis-angle.
void rotation_jacobian(const Vec3& w, Mat3 dr[3]) {
  double s = w.norm2();
  RodriguesCoeffs c = rodrigues_coeffs(s);
  Mat3 k = skew(w);
  Mat3 k2 = k * k;
  for (int ax = 0; ax < 3; ++ax) {
    Vec3 e{ax == 0 ? 1.0 : 0.0, ax == 1 ? 1.0 : 0.0, ax == 2 ? 1.0 : 0.0};
    Mat3 ek = skew(e);
    Mat3 ekk = ek * k;
    Mat3 kek = k * ek;
    double wk2 = 2.0 * w[ax];
    for (int i = 0; i < 9; ++i) {
      dr[ax].m[i] = wk2 * c.da * k.m[i] + c.a * ek.m[i] + wk2 * c.db * k2.m[i] +
                    c.b * (ekk.m[i] + kek.m[i]);
    }
  }
}

}  // namespace

const std::vector<std::string>& op_set() {
  static const std::vector<std::string> names = {
      "affine", "relu",           "tanh",    "add",       "sub",     "mul",
      "scale",  "concat_rows",    "slice",   "replicate_cols", "softmax",
      "coord_sum", "l1_mean",     "l2_mean", "rotate",
  };
  return names;
}

Kind op_kind(const std::string& name) {
  static const std::vector<std::pair<std::string, Kind>> table = {
      {"affine", Kind::Affine},
      {"relu", Kind::Relu},
      {"tanh", Kind::Tanh},
      {"add", Kind::Add},
      {"sub", Kind::Sub},
      {"mul", Kind::Mul},
      {"scale", Kind::Scale},
      {"concat_rows", Kind::ConcatRows},
      {"slice", Kind::Slice},
      {"replicate_cols", Kind::ReplicateCols},
      {"softmax", Kind::Softmax},
      {"coord_sum", Kind::CoordSum},
      {"l1_mean", Kind::L1Mean},
      {"l2_mean", Kind::L2Mean},
      {"rotate", Kind::Rotate},
  };
  for (const auto& [n, k] : table)
    if (n == name) return k;
  std::string msg = "tape: unsupported op \"" + name + "\"; supported:";
  for (const auto& n : op_set()) msg += " " + n;
  throw Error(msg);
}

int32_t Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int32_t>(nodes_.size() - 1);
}

int32_t Tape::leaf(Tensor v, bool requires_grad) {
  require(v.numel() > 0, "tape: leaf tensor is empty");
  Node n;
  n.kind = Kind::Leaf;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  int32_t id = push(std::move(n));
  if (requires_grad) params_.push_back(id);
  return id;
}

int32_t Tape::affine(int32_t w, int32_t x, int32_t b) {
  const Node& nw = node(w);
  const Node& nx = node(x);
  const Node& nb = node(b);
  require(nw.value.rank() == 2, "affine: W must be rank 2, got " + nw.value.shape_str());
  int64_t m = nw.value.shape[0], k = nw.value.shape[1];
  require(nb.value.rank() == 1 && nb.value.shape[0] == m,
          "affine: bias shape " + nb.value.shape_str() + " vs W " + nw.value.shape_str());
  Node n;
  n.kind = Kind::Affine;
  n.in = {w, x, b};
  n.requires_grad = nw.requires_grad || nx.requires_grad || nb.requires_grad;
  if (nx.value.rank() == 1) {
    require(nx.value.shape[0] == k,
            "affine: x shape " + nx.value.shape_str() + " vs W " + nw.value.shape_str());
    n.value = Tensor::zeros({m});
    for (int64_t i = 0; i < m; ++i)
      n.value.at(i) = nb.value.at(i) + dot8(nw.value.data.data() + i * k, nx.value.data.data(), k);
  } else {
    require(nx.value.rank() == 2 && nx.value.shape[0] == k,
            "affine: X shape " + nx.value.shape_str() + " vs W " + nw.value.shape_str());
    int64_t p = nx.value.shape[1];
    n.value = Tensor::zeros({m, p});
    for (int64_t i = 0; i < m; ++i) {
      double bi = nb.value.at(i);
      double* row = n.value.data.data() + i * p;
      for (int64_t j = 0; j < p; ++j) row[j] = bi;
    }
    gemm_nn(m, k, p, nw.value.data.data(), nx.value.data.data(), n.value.data.data());
  }
  return push(std::move(n));
}

int32_t Tape::relu(int32_t x) {
  const Node& nx = node(x);
  Node n;
  n.kind = Kind::Relu;
  n.in = {x, -1, -1};
  n.requires_grad = nx.requires_grad;
  n.value = nx.value;
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

int32_t Tape::tanh_(int32_t x) {
  const Node& nx = node(x);
  Node n;
  n.kind = Kind::Tanh;
  n.in = {x, -1, -1};
  n.requires_grad = nx.requires_grad;
  n.value = nx.value;
  for (double& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

int32_t Tape::add(int32_t a, int32_t b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.same_shape(nb.value),
          "add: shape mismatch " + na.value.shape_str() + " vs " + nb.value.shape_str());
  Node n;
  n.kind = Kind::Add;
  n.in = {a, b, -1};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = na.value;
  for (int64_t i = 0; i < n.value.numel(); ++i) n.value.at(i) += nb.value.at(i);
  return push(std::move(n));
}

int32_t Tape::sub(int32_t a, int32_t b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.same_shape(nb.value),
          "sub: shape mismatch " + na.value.shape_str() + " vs " + nb.value.shape_str());
  Node n;
  n.kind = Kind::Sub;
  n.in = {a, b, -1};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = na.value;
  for (int64_t i = 0; i < n.value.numel(); ++i) n.value.at(i) -= nb.value.at(i);
  return push(std::move(n));
}

int32_t Tape::mul(int32_t a, int32_t b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.same_shape(nb.value),
          "mul: shape mismatch " + na.value.shape_str() + " vs " + nb.value.shape_str());
  Node n;
  n.kind = Kind::Mul;
  n.in = {a, b, -1};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = na.value;
  for (int64_t i = 0; i < n.value.numel(); ++i) n.value.at(i) *= nb.value.at(i);
  return push(std::move(n));
}

int32_t Tape::scale(int32_t x, double c) {
  const Node& nx = node(x);
  Node n;
  n.kind = Kind::Scale;
  n.in = {x, -1, -1};
  n.requires_grad = nx.requires_grad;
  n.c = c;
  n.value = nx.value;
  for (double& v : n.value.data) v *= c;
  return push(std::move(n));
}

int32_t Tape::concat_rows(int32_t a, int32_t b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.rank() == nb.value.rank() && (na.value.rank() == 1 || na.value.rank() == 2),
          "concat_rows: ranks " + na.value.shape_str() + " vs " + nb.value.shape_str());
  Node n;
  n.kind = Kind::ConcatRows;
  n.in = {a, b, -1};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  if (na.value.rank() == 1) {
    n.value = Tensor::zeros({na.value.shape[0] + nb.value.shape[0]});
  } else {
    require(na.value.shape[1] == nb.value.shape[1],
            "concat_rows: column mismatch " + na.value.shape_str() + " vs " + nb.value.shape_str());
    n.value = Tensor::zeros({na.value.shape[0] + nb.value.shape[0], na.value.shape[1]});
  }
  std::copy(na.value.data.begin(), na.value.data.end(), n.value.data.begin());
  std::copy(nb.value.data.begin(), nb.value.data.end(),
            n.value.data.begin() + static_cast<ptrdiff_t>(na.value.numel()));
  return push(std::move(n));
}

int32_t Tape::slice(int32_t x, int64_t offset, int64_t len) {
  const Node& nx = node(x);
  require(nx.value.rank() == 1, "slice: rank-1 input required, got " + nx.value.shape_str());
  require(offset >= 0 && len >= 1 && offset + len <= nx.value.shape[0],
          "slice: range [" + std::to_string(offset) + "," + std::to_string(offset + len) +
              ") out of " + nx.value.shape_str());
  Node n;
  n.kind = Kind::Slice;
  n.in = {x, -1, -1};
  n.requires_grad = nx.requires_grad;
  n.i0 = offset;
  n.i1 = len;
  n.value = Tensor::zeros({len});
  for (int64_t i = 0; i < len; ++i) n.value.at(i) = nx.value.at(offset + i);
  return push(std::move(n));
}

int32_t Tape::replicate_cols(int32_t v, int64_t ncols) {
  const Node& nv = node(v);
  require(nv.value.rank() == 1, "replicate_cols: rank-1 input required");
  require(ncols >= 1, "replicate_cols: ncols must be positive");
  Node n;
  n.kind = Kind::ReplicateCols;
  n.in = {v, -1, -1};
  n.requires_grad = nv.requires_grad;
  n.i1 = ncols;
  int64_t r = nv.value.shape[0];
  n.value = Tensor::zeros({r, ncols});
  for (int64_t i = 0; i < r; ++i) {
    double vi = nv.value.at(i);
    double* row = n.value.data.data() + i * ncols;
    for (int64_t j = 0; j < ncols; ++j) row[j] = vi;
  }
  return push(std::move(n));
}

int32_t Tape::softmax(int32_t logits) {
  const Node& nx = node(logits);
  require(nx.value.rank() == 1, "softmax: rank-1 input required, got " + nx.value.shape_str());
  Node n;
  n.kind = Kind::Softmax;
  n.in = {logits, -1, -1};
  n.requires_grad = nx.requires_grad;
  n.value = nx.value;
  double mx = n.value.data[0];
  for (double v : n.value.data) mx = std::max(mx, v);
  double sum = 0;
  for (double& v : n.value.data) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : n.value.data) v /= sum;
  return push(std::move(n));
}

int32_t Tape::coord_sum(int32_t probs, std::shared_ptr<const Tensor> coords) {
  const Node& np = node(probs);
  require(np.value.rank() == 1, "coord_sum: rank-1 probs required");
  require(coords && coords->rank() == 2 && coords->shape[1] == 3 &&
              coords->shape[0] == np.value.shape[0],
          "coord_sum: coords must be [n,3] matching probs");
  Node n;
  n.kind = Kind::CoordSum;
  n.in = {probs, -1, -1};
  n.requires_grad = np.requires_grad;
  n.aux = coords;
  n.value = Tensor::zeros({3});
  int64_t cnt = np.value.shape[0];
  for (int64_t i = 0; i < cnt; ++i) {
    double p = np.value.at(i);
    n.value.at(0) += p * coords->at(i, 0);
    n.value.at(1) += p * coords->at(i, 1);
    n.value.at(2) += p * coords->at(i, 2);
  }
  return push(std::move(n));
}

int32_t Tape::l1_mean(int32_t a, int32_t b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.same_shape(nb.value),
          "l1_mean: shape mismatch " + na.value.shape_str() + " vs " + nb.value.shape_str());
  Node n;
  n.kind = Kind::L1Mean;
  n.in = {a, b, -1};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  double s = 0;
  int64_t cnt = na.value.numel();
  for (int64_t i = 0; i < cnt; ++i) s += std::fabs(na.value.at(i) - nb.value.at(i));
  n.value = Tensor::scalar(s / static_cast<double>(cnt));
  return push(std::move(n));
}

int32_t Tape::l2_mean(int32_t a, int32_t b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.same_shape(nb.value),
          "l2_mean: shape mismatch " + na.value.shape_str() + " vs " + nb.value.shape_str());
  Node n;
  n.kind = Kind::L2Mean;
  n.in = {a, b, -1};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  double s = 0;
  int64_t cnt = na.value.numel();
  for (int64_t i = 0; i < cnt; ++i) {
    double d = na.value.at(i) - nb.value.at(i);
    s += d * d;
  }
  n.value = Tensor::scalar(s / static_cast<double>(cnt));
  return push(std::move(n));
}

int32_t Tape::rotate(int32_t axis_angle, int32_t x) {
  const Node& nw = node(axis_angle);
  const Node& nx = node(x);
  require(nw.value.rank() == 1 && nw.value.shape[0] == 3, "rotate: axis_angle must be [3]");
  bool mat = nx.value.rank() == 2;
  require((mat && nx.value.shape[0] == 3) || (!mat && nx.value.rank() == 1 && nx.value.shape[0] == 3),
          "rotate: x must be [3] or [3,p], got " + nx.value.shape_str());
  Vec3 w{nw.value.at(0), nw.value.at(1), nw.value.at(2)};
  Mat3 r = axis_angle_to_matrix(w);
  Node n;
  n.kind = Kind::Rotate;
  n.in = {axis_angle, x, -1};
  n.requires_grad = nw.requires_grad || nx.requires_grad;
  n.value = nx.value;
  int64_t p = mat ? nx.value.shape[1] : 1;
  const double* src = nx.value.data.data();
  double* dst = n.value.data.data();
  for (int64_t j = 0; j < p; ++j) {
    double vx = src[0 * p + j], vy = src[1 * p + j], vz = src[2 * p + j];
    dst[0 * p + j] = r.m[0] * vx + r.m[1] * vy + r.m[2] * vz;
    dst[1 * p + j] = r.m[3] * vx + r.m[4] * vy + r.m[5] * vz;
    dst[2 * p + j] = r.m[6] * vx + r.m[7] * vy + r.m[8] * vz;
  }
  return push(std::move(n));
}

double Tape::value_scalar(int32_t id) const {
  const Tensor& v = node(id).value;
  require(v.numel() == 1, "tape: scalar expected, got " + v.shape_str());
  return v.data[0];
}

const Tensor& Tape::grad(int32_t id) const {
  require(swept_, "tape: backward() has not run");
  const Tensor& g = grads_[static_cast<size_t>(id)];
  require(g.numel() > 0, "tape: node has no gradient (does not reach a parameter)");
  return g;
}

void Tape::backward(int32_t loss) {
  require(loss >= 0 && static_cast<size_t>(loss) < nodes_.size(), "tape: bad loss node");
  const Node& ln = node(loss);
  if (ln.value.numel() != 1)
    throw NumericError("tape: backward needs a scalar loss, got " + ln.value.shape_str());

  grads_.assign(nodes_.size(), Tensor{});
  auto ensure = [&](int32_t id) -> Tensor& {
    Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.numel() == 0) {
      g.shape = nodes_[static_cast<size_t>(id)].value.shape;
      g.data.assign(nodes_[static_cast<size_t>(id)].value.data.size(), 0.0);
    }
    return g;
  };
  ensure(loss).data[0] = 1.0;

  for (int32_t id = loss; id >= 0; --id) {
    const Node& n = node(id);
    if (!n.requires_grad) continue;
    const Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.numel() == 0) continue;

    auto rg = [&](int idx) { return node(n.in[static_cast<size_t>(idx)]).requires_grad; };

    switch (n.kind) {
      case Kind::Leaf:
        break;
      case Kind::Affine: {
        const Node& nw = node(n.in[0]);
        const Node& nx = node(n.in[1]);
        int64_t m = nw.value.shape[0], k = nw.value.shape[1];
        if (nx.value.rank() == 1) {
          if (rg(0)) {
            Tensor& gw = ensure(n.in[0]);
            for (int64_t i = 0; i < m; ++i)
              axpy(g.at(i), nx.value.data.data(), gw.data.data() + i * k, k);
          }
          if (rg(1)) {
            Tensor& gx = ensure(n.in[1]);
            for (int64_t i = 0; i < m; ++i)
              axpy(g.at(i), nw.value.data.data() + i * k, gx.data.data(), k);
          }
          if (rg(2)) {
            Tensor& gb = ensure(n.in[2]);
            for (int64_t i = 0; i < m; ++i) gb.at(i) += g.at(i);
          }
        } else {
          int64_t p = nx.value.shape[1];
          if (rg(0))
            gemm_nt(m, p, k, g.data.data(), nx.value.data.data(), ensure(n.in[0]).data.data());
          if (rg(1))
            gemm_tn(m, k, p, nw.value.data.data(), g.data.data(), ensure(n.in[1]).data.data());
          if (rg(2)) {
            Tensor& gb = ensure(n.in[2]);
            for (int64_t i = 0; i < m; ++i) {
              const double* row = g.data.data() + i * p;
              double s = 0;
              for (int64_t j = 0; j < p; ++j) s += row[j];
              gb.at(i) += s;
            }
          }
        }
        break;
      }
      case Kind::Relu: {
        if (!rg(0)) break;
        const Node& nx = node(n.in[0]);
        Tensor& gx = ensure(n.in[0]);
        for (int64_t i = 0; i < g.numel(); ++i)
          if (nx.value.at(i) > 0.0) gx.at(i) += g.at(i);
        break;
      }
      case Kind::Tanh: {
        if (!rg(0)) break;
        Tensor& gx = ensure(n.in[0]);
        for (int64_t i = 0; i < g.numel(); ++i) {
          double y = n.value.at(i);
          gx.at(i) += g.at(i) * (1.0 - y * y);
        }
        break;
      }
      case Kind::Add: {
        for (int idx = 0; idx < 2; ++idx)
          if (rg(idx)) {
            Tensor& gi = ensure(n.in[static_cast<size_t>(idx)]);
            for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i);
          }
        break;
      }
      case Kind::Sub: {
        if (rg(0)) {
          Tensor& ga = ensure(n.in[0]);
          for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
        }
        if (rg(1)) {
          Tensor& gb = ensure(n.in[1]);
          for (int64_t i = 0; i < g.numel(); ++i) gb.at(i) -= g.at(i);
        }
        break;
      }
      case Kind::Mul: {
        const Node& na = node(n.in[0]);
        const Node& nb = node(n.in[1]);
        if (rg(0)) {
          Tensor& ga = ensure(n.in[0]);
          for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * nb.value.at(i);
        }
        if (rg(1)) {
          Tensor& gb = ensure(n.in[1]);
          for (int64_t i = 0; i < g.numel(); ++i) gb.at(i) += g.at(i) * na.value.at(i);
        }
        break;
      }
      case Kind::Scale: {
        if (!rg(0)) break;
        Tensor& gx = ensure(n.in[0]);
        for (int64_t i = 0; i < g.numel(); ++i) gx.at(i) += n.c * g.at(i);
        break;
      }
      case Kind::ConcatRows: {
        const Node& na = node(n.in[0]);
        int64_t cut = na.value.numel();
        if (rg(0)) {
          Tensor& ga = ensure(n.in[0]);
          for (int64_t i = 0; i < cut; ++i) ga.at(i) += g.at(i);
        }
        if (rg(1)) {
          Tensor& gb = ensure(n.in[1]);
          for (int64_t i = cut; i < g.numel(); ++i) gb.at(i - cut) += g.at(i);
        }
        break;
      }
      case Kind::Slice: {
        if (!rg(0)) break;
        Tensor& gx = ensure(n.in[0]);
        for (int64_t i = 0; i < n.i1; ++i) gx.at(n.i0 + i) += g.at(i);
        break;
      }
      case Kind::ReplicateCols: {
        if (!rg(0)) break;
        Tensor& gv = ensure(n.in[0]);
        int64_t r = gv.numel();
        for (int64_t i = 0; i < r; ++i) {
          const double* row = g.data.data() + i * n.i1;
          double s = 0;
          for (int64_t j = 0; j < n.i1; ++j) s += row[j];
          gv.at(i) += s;
        }
        break;
      }
      case Kind::Softmax: {
        if (!rg(0)) break;
        Tensor& gx = ensure(n.in[0]);
        double s = 0;
        for (int64_t i = 0; i < g.numel(); ++i) s += g.at(i) * n.value.at(i);
        for (int64_t i = 0; i < g.numel(); ++i) gx.at(i) += n.value.at(i) * (g.at(i) - s);
        break;
      }
      case Kind::CoordSum: {
        if (!rg(0)) break;
        Tensor& gp = ensure(n.in[0]);
        const Tensor& c = *n.aux;
        for (int64_t i = 0; i < gp.numel(); ++i)
          gp.at(i) += g.at(0) * c.at(i, 0) + g.at(1) * c.at(i, 1) + g.at(2) * c.at(i, 2);
        break;
      }
      case Kind::L1Mean: {
        const Node& na = node(n.in[0]);
        const Node& nb = node(n.in[1]);
        int64_t cnt = na.value.numel();
        double gs = g.data[0] / static_cast<double>(cnt);
        for (int idx = 0; idx < 2; ++idx) {
          if (!rg(idx)) continue;
          Tensor& gi = ensure(n.in[static_cast<size_t>(idx)]);
          double sgn = idx == 0 ? 1.0 : -1.0;
          for (int64_t i = 0; i < cnt; ++i) {
            double d = na.value.at(i) - nb.value.at(i);
            double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            gi.at(i) += sgn * gs * sg;
          }
        }
        break;
      }
      case Kind::L2Mean: {
        const Node& na = node(n.in[0]);
        const Node& nb = node(n.in[1]);
        int64_t cnt = na.value.numel();
        double gs = 2.0 * g.data[0] / static_cast<double>(cnt);
        for (int idx = 0; idx < 2; ++idx) {
          if (!rg(idx)) continue;
          Tensor& gi = ensure(n.in[static_cast<size_t>(idx)]);
          double sgn = idx == 0 ? 1.0 : -1.0;
          for (int64_t i = 0; i < cnt; ++i)
            gi.at(i) += sgn * gs * (na.value.at(i) - nb.value.at(i));
        }
        break;
      }
      case Kind::Rotate: {
        const Node& nw = node(n.in[0]);
        const Node& nx = node(n.in[1]);
        Vec3 w{nw.value.at(0), nw.value.at(1), nw.value.at(2)};
        Mat3 r = axis_angle_to_matrix(w);
        int64_t p = nx.value.rank() == 2 ? nx.value.shape[1] : 1;
        const double* gd = g.data.data();
        if (rg(1)) {
          Tensor& gx = ensure(n.in[1]);
          double* gxd = gx.data.data();
          for (int64_t j = 0; j < p; ++j) {
            double gx0 = gd[0 * p + j], gx1 = gd[1 * p + j], gx2 = gd[2 * p + j];
            gxd[0 * p + j] += r.m[0] * gx0 + r.m[3] * gx1 + r.m[6] * gx2;
            gxd[1 * p + j] += r.m[1] * gx0 + r.m[4] * gx1 + r.m[7] * gx2;
            gxd[2 * p + j] += r.m[2] * gx0 + r.m[5] * gx1 + r.m[8] * gx2;
          }
        }
        if (rg(0)) {
          // M = sum_j g_j x_j^T, then gw_k = <dR/dw_k, M>_F.
          const double* xd = nx.value.data.data();
          Mat3 macc{};
          for (int64_t j = 0; j < p; ++j) {
            double x0 = xd[0 * p + j], x1 = xd[1 * p + j], x2 = xd[2 * p + j];
            double g0 = gd[0 * p + j], g1 = gd[1 * p + j], g2 = gd[2 * p + j];
            macc.m[0] += g0 * x0;
            macc.m[1] += g0 * x1;
            macc.m[2] += g0 * x2;
            macc.m[3] += g1 * x0;
            macc.m[4] += g1 * x1;
            macc.m[5] += g1 * x2;
            macc.m[6] += g2 * x0;
            macc.m[7] += g2 * x1;
            macc.m[8] += g2 * x2;
          }
          Mat3 dr[3];
          rotation_jacobian(w, dr);
          Tensor& gw = ensure(n.in[0]);
          for (int ax = 0; ax < 3; ++ax) {
            double s = 0;
            for (int i = 0; i < 9; ++i) s += dr[ax].m[i] * macc.m[i];
            gw.at(ax) += s;
          }
        }
        break;
      }
    }
  }
  swept_ = true;
}

}  // namespace posesdf::ad
