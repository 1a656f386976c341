#include "posesdf/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "json.hpp"
#include "posesdf/adam.hpp"
#include "posesdf/errors.hpp"

namespace posesdf {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string shape_of(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

ModelVariant parse_variant(const std::string& name) {
  static const std::pair<const char*, ModelVariant> kNames[] = {
      {"a", ModelVariant::A},     {"b", ModelVariant::B},
      {"c", ModelVariant::C},     {"c_star", ModelVariant::CStar},
      {"d", ModelVariant::D},     {"e", ModelVariant::E},
      {"f", ModelVariant::F},     {"g", ModelVariant::G},
      {"g_star", ModelVariant::GStar}};
  for (const auto& [n, v] : kNames)
    if (name == n) return v;
  throw UsageError("unknown variant '" + name +
                   "', expected one of a, b, c, c_star, d, e, f, g, g_star");
}

const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::A: return "a";
    case ModelVariant::B: return "b";
    case ModelVariant::C: return "c";
    case ModelVariant::CStar: return "c_star";
    case ModelVariant::D: return "d";
    case ModelVariant::E: return "e";
    case ModelVariant::F: return "f";
    case ModelVariant::G: return "g";
    case ModelVariant::GStar: return "g_star";
  }
  return "?";
}

VariantSpec variant_spec(ModelVariant v) {
  using TS = TransformSource;
  VariantSpec s;
  switch (v) {
    case ModelVariant::A: break;
    case ModelVariant::B: s.pose_losses = true; break;
    case ModelVariant::C: s.pose_losses = true; s.hand_tf = TS::Predicted; break;
    case ModelVariant::CStar: s.hand_tf = TS::GroundTruth; break;
    case ModelVariant::D: s.obj_branch = true; break;
    case ModelVariant::E:
      s.obj_branch = true; s.pose_losses = true; s.hand_tf = TS::Predicted;
      break;
    case ModelVariant::F:
      s.obj_branch = true; s.to_loss = true; s.obj_tf = TS::Predicted;
      break;
    case ModelVariant::G:
      s.obj_branch = true; s.pose_losses = true; s.hand_tf = TS::Predicted;
      s.to_loss = true; s.obj_tf = TS::Predicted;
      break;
    case ModelVariant::GStar:
      s.obj_branch = true; s.hand_tf = TS::GroundTruth; s.obj_tf = TS::GroundTruth;
      break;
  }
  return s;
}

HandLossRaw hand_loss(const std::array<Vec3, 21>& pred, const std::array<Vec3, 21>& gt,
                      const std::array<double, 10>& shape, const std::array<double, 48>& pose) {
  HandLossRaw r;
  for (int j = 0; j < 21; ++j) {
    Vec3 d = pred[static_cast<size_t>(j)] - gt[static_cast<size_t>(j)];
    r.jh += d.norm2();
  }
  r.jh /= 21.0;
  for (double b : shape) r.bh += b * b;
  for (int k = 3; k < 48; ++k) r.th += pose[static_cast<size_t>(k)] * pose[static_cast<size_t>(k)];
  return r;
}

double object_loss(const Vec3& pred_t, const Vec3& gt_t) { return (pred_t - gt_t).norm2(); }

double recon_l1(const std::vector<double>& pred, const std::vector<double>& gt) {
  if (pred.empty() || pred.size() != gt.size())
    throw UsageError("recon_l1: need equal-sized nonempty vectors");
  double s = 0;
  for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(pred.size());
}

Model build_model(ModelVariant v, uint64_t seed, double out_scale_h, double out_scale_o,
                  int hm_n, double hm_c) {
  Model m;
  m.variant = v;
  m.spec = variant_spec(v);
  Rng enc_rng(Rng::mix(seed, 1));
  m.enc1 = make_linear(512, m.render_dim, enc_rng);
  m.enc2 = make_linear(256, 512, enc_rng);
  if (m.spec.pose_losses) m.hand_head = build_hand_head(Rng::mix(seed, 2));
  if (m.spec.to_loss) m.hm_head = build_heatmap_head(Rng::mix(seed, 3), hm_n, hm_c);
  m.dec_h = build_decoder(Rng::mix(seed, 4), out_scale_h);
  if (m.spec.obj_branch) m.dec_o = build_decoder(Rng::mix(seed, 5), out_scale_o);
  return m;
}

std::vector<std::pair<std::string, Tensor*>> model_params(Model& m) {
  std::vector<std::pair<std::string, Tensor*>> v;
  auto lin = [&v](const char* base, Linear& l) {
    v.emplace_back(std::string(base) + ".w", &l.w);
    v.emplace_back(std::string(base) + ".b", &l.b);
  };
  lin("enc.l1", m.enc1);
  lin("enc.l2", m.enc2);
  if (m.spec.pose_losses) {
    lin("hand.fc1", m.hand_head.fc1);
    lin("hand.fc2", m.hand_head.fc2);
  }
  if (m.spec.to_loss) {
    lin("hm.fc1", m.hm_head.fc1);
    lin("hm.fc2", m.hm_head.fc2);
  }
  lin("sdf_h.l1", m.dec_h.l1);
  lin("sdf_h.l2", m.dec_h.l2);
  lin("sdf_h.l3", m.dec_h.l3);
  lin("sdf_h.l4", m.dec_h.l4);
  lin("sdf_h.l5", m.dec_h.l5);
  if (m.spec.obj_branch) {
    lin("sdf_o.l1", m.dec_o.l1);
    lin("sdf_o.l2", m.dec_o.l2);
    lin("sdf_o.l3", m.dec_o.l3);
    lin("sdf_o.l4", m.dec_o.l4);
    lin("sdf_o.l5", m.dec_o.l5);
  }
  return v;
}

TapeModel params_on_tape(ad::Tape& t, const Model& m) {
  TapeModel tm;
  auto lin = [&](const Linear& l) {
    LinearNodes n = linear_params(t, l);
    tm.ordered.push_back(n.w);
    tm.ordered.push_back(n.b);
    return n;
  };
  tm.enc1 = lin(m.enc1);
  tm.enc2 = lin(m.enc2);
  if (m.spec.pose_losses) {
    tm.hand1 = lin(m.hand_head.fc1);
    tm.hand2 = lin(m.hand_head.fc2);
  }
  if (m.spec.to_loss) {
    tm.hm1 = lin(m.hm_head.fc1);
    tm.hm2 = lin(m.hm_head.fc2);
  }
  tm.dec_h.l1 = lin(m.dec_h.l1);
  tm.dec_h.l2 = lin(m.dec_h.l2);
  tm.dec_h.l3 = lin(m.dec_h.l3);
  tm.dec_h.l4 = lin(m.dec_h.l4);
  tm.dec_h.l5 = lin(m.dec_h.l5);
  tm.dec_h.output_scale = m.dec_h.output_scale;
  if (m.spec.obj_branch) {
    tm.dec_o.l1 = lin(m.dec_o.l1);
    tm.dec_o.l2 = lin(m.dec_o.l2);
    tm.dec_o.l3 = lin(m.dec_o.l3);
    tm.dec_o.l4 = lin(m.dec_o.l4);
    tm.dec_o.l5 = lin(m.dec_o.l5);
    tm.dec_o.output_scale = m.dec_o.output_scale;
  }
  return tm;
}

void save_model(const std::string& path, const Model& m,
                const std::vector<std::pair<std::string, std::string>>& extra_meta) {
  Checkpoint ck;
  ck.meta = {{"format", "posesdf-model"},
             {"version", "1"},
             {"variant", variant_name(m.variant)},
             {"hm_n", std::to_string(m.hm_head.n)},
             {"hm_c", fmt_g17(m.hm_head.c)},
             {"render_dim", std::to_string(m.render_dim)}};
  for (const auto& kv : extra_meta) ck.meta.push_back(kv);
  auto params = model_params(const_cast<Model&>(m));
  for (auto& [name, ten] : params)
    if (name.rfind("sdf_", 0) != 0) ck.params.emplace_back(name, *ten);
  save_decoder(ck, "sdf_h", m.dec_h);
  if (m.spec.obj_branch) save_decoder(ck, "sdf_o", m.dec_o);
  save_checkpoint(path, ck);
}

namespace {

Tensor take_param(const Checkpoint& ck, const std::string& name,
                  const std::vector<int64_t>& shape) {
  const Tensor* p = ck.find_param(name);
  if (!p) throw DataError("checkpoint missing parameter " + name);
  if (p->shape != shape)
    throw DataError(name + ": expected shape " + shape_of(shape) + ", found " +
                    shape_of(p->shape));
  return *p;
}

int meta_int(const Checkpoint& ck, const std::string& key) {
  const std::string* s = ck.find_meta(key);
  if (!s) throw DataError("checkpoint missing meta key " + key);
  try {
    return std::stoi(*s);
  } catch (const std::exception&) {
    throw DataError("checkpoint meta " + key + ": not an integer: " + *s);
  }
}

double meta_double(const Checkpoint& ck, const std::string& key) {
  const std::string* s = ck.find_meta(key);
  if (!s) throw DataError("checkpoint missing meta key " + key);
  try {
    return std::stod(*s);
  } catch (const std::exception&) {
    throw DataError("checkpoint meta " + key + ": not a number: " + *s);
  }
}

}  // namespace

Model load_model(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  const std::string* fmt = ck.find_meta("format");
  if (!fmt || *fmt != "posesdf-model")
    throw DataError(path + ": not a model checkpoint (format meta missing or wrong)");
  const std::string* var = ck.find_meta("variant");
  if (!var) throw DataError(path + ": checkpoint missing meta key variant");
  Model m;
  m.variant = parse_variant(*var);
  m.spec = variant_spec(m.variant);
  m.render_dim = meta_int(ck, "render_dim");
  int hm_n = meta_int(ck, "hm_n");
  double hm_c = meta_double(ck, "hm_c");
  m.enc1.w = take_param(ck, "enc.l1.w", {512, m.render_dim});
  m.enc1.b = take_param(ck, "enc.l1.b", {512});
  m.enc2.w = take_param(ck, "enc.l2.w", {256, 512});
  m.enc2.b = take_param(ck, "enc.l2.b", {256});
  if (m.spec.pose_losses) {
    m.hand_head.fc1.w = take_param(ck, "hand.fc1.w", {256, 256});
    m.hand_head.fc1.b = take_param(ck, "hand.fc1.b", {256});
    m.hand_head.fc2.w = take_param(ck, "hand.fc2.w", {58, 256});
    m.hand_head.fc2.b = take_param(ck, "hand.fc2.b", {58});
  }
  if (m.spec.to_loss) {
    int64_t n3 = static_cast<int64_t>(hm_n) * hm_n * hm_n;
    m.hm_head.n = hm_n;
    m.hm_head.c = hm_c;
    m.hm_head.fc1.w = take_param(ck, "hm.fc1.w", {512, 256});
    m.hm_head.fc1.b = take_param(ck, "hm.fc1.b", {512});
    m.hm_head.fc2.w = take_param(ck, "hm.fc2.w", {n3, 512});
    m.hm_head.fc2.b = take_param(ck, "hm.fc2.b", {n3});
  } else {
    m.hm_head.n = hm_n;
    m.hm_head.c = hm_c;
  }
  m.dec_h = load_decoder(ck, "sdf_h");
  if (m.spec.obj_branch) m.dec_o = load_decoder(ck, "sdf_o");
  return m;
}

PointBatch sample_training_points(const LabeledPoints& pts, int n_pos, int n_neg, Rng& rng) {
  if (n_pos < 0 || n_neg < 0 || n_pos + n_neg < 1)
    throw UsageError("sample_training_points: need a positive total draw");
  std::vector<int> pos, neg;
  for (size_t i = 0; i < pts.sdf.size(); ++i)
    (pts.sdf[i] >= 0.0 ? pos : neg).push_back(static_cast<int>(i));
  if (static_cast<int>(pos.size()) < n_pos || static_cast<int>(neg.size()) < n_neg)
    throw DataError("sample_training_points: need " + std::to_string(n_pos) + " positive and " +
                    std::to_string(n_neg) + " negative, sample has " +
                    std::to_string(pos.size()) + " positive and " + std::to_string(neg.size()) +
                    " negative");
  auto draw = [&rng](std::vector<int>& idx, int k) {
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(rng.index(static_cast<int64_t>(idx.size()) - i));
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
  };
  draw(pos, n_pos);
  draw(neg, n_neg);
  int k = n_pos + n_neg;
  PointBatch b;
  b.x = Tensor::zeros({3, k});
  b.y = Tensor::zeros({1, k});
  int col = 0;
  for (const auto* set : {&pos, &neg}) {
    for (int i : *set) {
      const Vec3& p = pts.x[static_cast<size_t>(i)];
      b.x.at(0, col) = p.x;
      b.x.at(1, col) = p.y;
      b.x.at(2, col) = p.z;
      b.y.at(0, col) = pts.sdf[static_cast<size_t>(i)];
      ++col;
    }
  }
  return b;
}

namespace {

// x - relu(x - d) + relu(-x - d) == clamp(x, -d, d), gradient 0 outside.
int32_t clamp_node(ad::Tape& t, int32_t x, double delta) {
  Tensor d = t.value(x);
  for (auto& v : d.data) v = delta;
  int32_t dn = t.constant(d);
  int32_t hi = t.relu(t.sub(x, dn));
  int32_t lo = t.relu(t.sub(t.scale(x, -1.0), dn));
  return t.add(t.sub(x, hi), lo);
}

int32_t sum_or_zero(ad::Tape& t, const std::vector<int32_t>& terms) {
  if (terms.empty()) return t.constant(Tensor::scalar(0.0));
  int32_t acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = t.add(acc, terms[i]);
  return acc;
}

int32_t stop_grad(ad::Tape& t, int32_t x) { return t.constant(t.value(x)); }

}  // namespace

SceneForward scene_forward(ad::Tape& t, const Model& m, const TapeModel& tm,
                           const SceneSample& scene, const HandTemplate& tpl,
                           const PointBatch& hand_pts, const PointBatch& obj_pts,
                           const LossWeights& w, const TrainOptions& opt) {
  if (static_cast<int>(scene.render.size()) != m.render_dim)
    throw DataError("scene_forward: render has " + std::to_string(scene.render.size()) +
                    " pixels, model expects " + std::to_string(m.render_dim));
  Tensor img = Tensor::zeros({m.render_dim});
  for (int i = 0; i < m.render_dim; ++i)
    img.at(i) = static_cast<double>(scene.render[static_cast<size_t>(i)]);
  int32_t feat = linear_apply(t, tm.enc2, t.relu(linear_apply(t, tm.enc1, t.constant(img))));

  SceneForward out;
  std::vector<int32_t> hand_terms, obj_terms, rec_terms;
  int32_t rot = -1;

  if (m.spec.pose_losses) {
    HandHeadNodes hh = hand_head_forward(t, tm.hand1, tm.hand2, feat);
    int32_t joints = fk_on_tape(t, hh.pose48, hh.shape10, tpl);
    Tensor gt = Tensor::zeros({63});
    for (int j = 0; j < 21; ++j)
      for (int k = 0; k < 3; ++k) gt.at(3 * j + k) = scene.joints[static_cast<size_t>(j)][k];
    int32_t jh = t.scale(t.l2_mean(joints, t.constant(gt)), 3.0);
    int32_t bh = t.scale(t.l2_mean(hh.shape10, t.constant(Tensor::zeros({10}))), 10.0);
    int32_t th = t.scale(t.l2_mean(t.slice(hh.pose48, 3, 45), t.constant(Tensor::zeros({45}))), 45.0);
    out.report.jh = t.value_scalar(jh);
    out.report.bh = t.value_scalar(bh);
    out.report.th = t.value_scalar(th);
    // Zero weights are omitted outright so their gradients are exactly zero.
    if (w.jh != 0.0) hand_terms.push_back(t.scale(jh, w.jh));
    if (w.bh != 0.0) hand_terms.push_back(t.scale(bh, w.bh));
    if (w.th != 0.0) hand_terms.push_back(t.scale(th, w.th));
    if (m.spec.hand_tf == TransformSource::Predicted) {
      rot = t.slice(hh.pose48, 0, 3);
      if (opt.stop_pose_grad) rot = stop_grad(t, rot);
    }
  }
  if (m.spec.hand_tf == TransformSource::GroundTruth)
    rot = t.constant(Tensor::vec(
        {scene.params.pose[0], scene.params.pose[1], scene.params.pose[2]}));

  int32_t xh = t.constant(hand_pts.x);
  int32_t xch = rot >= 0 ? canonicalize_hand_on_tape(t, xh, rot) : xh;
  int32_t pred_h = decode_on_tape(t, tm.dec_h, feat, xh, xch);
  Tensor yh = hand_pts.y;
  if (opt.clamp_sdf) {
    for (auto& v : yh.data) v = std::clamp(v, -opt.clamp_delta, opt.clamp_delta);
    pred_h = clamp_node(t, pred_h, opt.clamp_delta);
  }
  int32_t rec_h = t.l1_mean(pred_h, t.constant(yh));
  out.report.rec_h = w.rec_h * t.value_scalar(rec_h);
  if (w.rec_h != 0.0) rec_terms.push_back(t.scale(rec_h, w.rec_h));

  if (m.spec.obj_branch) {
    int32_t t_pred = -1;
    if (m.spec.to_loss) {
      int32_t logits = heatmap_head_forward(t, tm.hm1, tm.hm2, feat);
      t_pred = soft_argmax_on_tape(t, logits, voxel_centers(m.hm_head.n, m.hm_head.c));
      int32_t gt_t = t.constant(
          Tensor::vec({scene.prim.t_o.x, scene.prim.t_o.y, scene.prim.t_o.z}));
      int32_t to = t.scale(t.l2_mean(t_pred, gt_t), 3.0);
      out.report.to = t.value_scalar(to);
      if (w.to != 0.0) obj_terms.push_back(t.scale(to, w.to));
    }
    int32_t tr = -1;
    if (m.spec.obj_tf == TransformSource::Predicted) {
      tr = t_pred;
      if (opt.stop_pose_grad) tr = stop_grad(t, tr);
    } else if (m.spec.obj_tf == TransformSource::GroundTruth) {
      tr = t.constant(Tensor::vec({scene.prim.t_o.x, scene.prim.t_o.y, scene.prim.t_o.z}));
    }
    int32_t xo = t.constant(obj_pts.x);
    int32_t xco = tr >= 0 ? canonicalize_object_on_tape(t, xo, tr) : xo;
    int32_t pred_o = decode_on_tape(t, tm.dec_o, feat, xo, xco);
    Tensor yo = obj_pts.y;
    if (opt.clamp_sdf) {
      for (auto& v : yo.data) v = std::clamp(v, -opt.clamp_delta, opt.clamp_delta);
      pred_o = clamp_node(t, pred_o, opt.clamp_delta);
    }
    int32_t rec_o = t.l1_mean(pred_o, t.constant(yo));
    out.report.rec_o = w.rec_o * t.value_scalar(rec_o);
    if (w.rec_o != 0.0) rec_terms.push_back(t.scale(rec_o, w.rec_o));
  }

  int32_t hand_n = sum_or_zero(t, hand_terms);
  int32_t obj_n = sum_or_zero(t, obj_terms);
  int32_t rec_n = sum_or_zero(t, rec_terms);
  out.loss = t.add(t.add(hand_n, obj_n), rec_n);
  out.report.hand = t.value_scalar(hand_n);
  out.report.obj = t.value_scalar(obj_n);
  out.report.rec = t.value_scalar(rec_n);
  out.report.total = t.value_scalar(out.loss);
  return out;
}

void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto bad = [&](const char* want) {
    throw UsageError("config: key " + key + " needs " + want + ", got '" + value + "'");
  };
  auto as_i64 = [&]() {
    try {
      size_t pos = 0;
      long long v = std::stoll(value, &pos);
      if (pos != value.size()) bad("an integer");
      return v;
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      bad("an integer");
      return 0ll;
    }
  };
  auto as_f64 = [&]() {
    try {
      size_t pos = 0;
      double v = std::stod(value, &pos);
      if (pos != value.size()) bad("a number");
      return v;
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      bad("a number");
      return 0.0;
    }
  };
  auto as_bool = [&]() {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad("a boolean (true/false/1/0)");
    return false;
  };
  if (key == "seed") cfg.seed = static_cast<uint64_t>(as_i64());
  else if (key == "init_seed") cfg.init_seed = static_cast<uint64_t>(as_i64());
  else if (key == "epochs") cfg.epochs = static_cast<int>(as_i64());
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(as_i64());
  else if (key == "n_pos") cfg.n_pos = static_cast<int>(as_i64());
  else if (key == "n_neg") cfg.n_neg = static_cast<int>(as_i64());
  else if (key == "lr") cfg.lr = as_f64();
  else if (key == "lr_halve_every") cfg.lr_halve_every = static_cast<int>(as_i64());
  else if (key == "max_deg") cfg.max_deg = as_f64();
  else if (key == "log_every") cfg.log_every = static_cast<int>(as_i64());
  else if (key == "hm_n") cfg.hm_n = static_cast<int>(as_i64());
  else if (key == "clamp_sdf") cfg.clamp_sdf = as_bool();
  else if (key == "clamp_delta") cfg.clamp_delta = as_f64();
  else if (key == "stop_pose_grad") cfg.stop_pose_grad = as_bool();
  else if (key == "lambda_jh") cfg.weights.jh = as_f64();
  else if (key == "lambda_bh") cfg.weights.bh = as_f64();
  else if (key == "lambda_th") cfg.weights.th = as_f64();
  else if (key == "lambda_to") cfg.weights.to = as_f64();
  else if (key == "lambda_rec_h") cfg.weights.rec_h = as_f64();
  else if (key == "lambda_rec_o") cfg.weights.rec_o = as_f64();
  else throw UsageError("config: unknown key " + key);
}

std::vector<std::pair<std::string, std::string>> train_config_echo(const TrainConfig& cfg) {
  return {
      {"batch_size", std::to_string(cfg.batch_size)},
      {"clamp_delta", fmt_g17(cfg.clamp_delta)},
      {"clamp_sdf", cfg.clamp_sdf ? "true" : "false"},
      {"epochs", std::to_string(cfg.epochs)},
      {"hm_n", std::to_string(cfg.hm_n)},
      {"init_seed", std::to_string(cfg.init_seed)},
      {"lambda_bh", fmt_g17(cfg.weights.bh)},
      {"lambda_jh", fmt_g17(cfg.weights.jh)},
      {"lambda_rec_h", fmt_g17(cfg.weights.rec_h)},
      {"lambda_rec_o", fmt_g17(cfg.weights.rec_o)},
      {"lambda_th", fmt_g17(cfg.weights.th)},
      {"lambda_to", fmt_g17(cfg.weights.to)},
      {"log_every", std::to_string(cfg.log_every)},
      {"lr", fmt_g17(cfg.lr)},
      {"lr_halve_every", std::to_string(cfg.lr_halve_every)},
      {"max_deg", fmt_g17(cfg.max_deg)},
      {"n_neg", std::to_string(cfg.n_neg)},
      {"n_pos", std::to_string(cfg.n_pos)},
      {"seed", std::to_string(cfg.seed)},
      {"stop_pose_grad", cfg.stop_pose_grad ? "true" : "false"},
  };
}

std::string history_json_line(const HistoryRow& row) {
  nlohmann::ordered_json j;
  j["step"] = row.step;
  j["epoch"] = row.epoch;
  j["lr"] = row.lr;
  j["total"] = row.rep.total;
  j["hand"] = row.rep.hand;
  j["obj"] = row.rep.obj;
  j["rec"] = row.rep.rec;
  j["jh"] = row.rep.jh;
  j["bh"] = row.rep.bh;
  j["th"] = row.rep.th;
  j["to"] = row.rep.to;
  j["rec_h"] = row.rep.rec_h;
  j["rec_o"] = row.rep.rec_o;
  return j.dump();
}

GenConfig gen_config_from_manifest(const DatasetManifest& man) {
  GenConfig g;
  g.heatmap_c = man.heatmap_c;
  for (const auto& [k, v] : man.config_echo) {
    try {
      if (k == "render_w") g.render_w = std::stoi(v);
      else if (k == "render_h") g.render_h = std::stoi(v);
      else if (k == "render_half_window") g.render_half_window = std::stod(v);
      else if (k == "render_z0") g.render_z0 = std::stod(v);
      else if (k == "render_far") g.render_far = std::stod(v);
    } catch (const std::exception&) {
      throw DataError("manifest config key " + k + ": malformed value '" + v + "'");
    }
  }
  return g;
}

SceneSample augment_sample(const SceneSample& scene, double max_deg, Rng& rng,
                           const HandTemplate& tpl, const GenConfig& gcfg) {
  if (max_deg == 0.0) return scene;
  if (max_deg < 0.0 || max_deg > 180.0)
    throw UsageError("augment_sample: max_deg must lie in [0, 180], got " + fmt_g17(max_deg));
  double angle = rng.uniform(-max_deg, max_deg) * (kPi / 180.0);
  return augment_rotation(scene, angle, tpl, gcfg);
}

namespace {

void add_report(LossReport& acc, const LossReport& r) {
  acc.jh += r.jh;
  acc.bh += r.bh;
  acc.th += r.th;
  acc.to += r.to;
  acc.rec_h += r.rec_h;
  acc.rec_o += r.rec_o;
  acc.hand += r.hand;
  acc.obj += r.obj;
  acc.rec += r.rec;
  acc.total += r.total;
}

void scale_report(LossReport& acc, double s) {
  acc.jh *= s;
  acc.bh *= s;
  acc.th *= s;
  acc.to *= s;
  acc.rec_h *= s;
  acc.rec_o *= s;
  acc.hand *= s;
  acc.obj *= s;
  acc.rec *= s;
  acc.total *= s;
}

}  // namespace

TrainResult train(const std::vector<SceneSample>& scenes, const DatasetManifest& man,
                  ModelVariant variant, const TrainConfig& cfg) {
  if (scenes.empty()) throw UsageError("train: dataset is empty");
  if (cfg.epochs < 1) throw UsageError("train: epochs must be at least 1");
  if (cfg.batch_size < 1) throw UsageError("train: batch_size must be at least 1");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr))
    throw UsageError("train: lr must be a positive number");
  if (cfg.log_every < 1) throw UsageError("train: log_every must be at least 1");
  if (cfg.hm_n < 2) throw UsageError("train: hm_n must be at least 2");

  VariantSpec spec = variant_spec(variant);
  double mh = 0.0, mo = 0.0;
  for (const auto& sc : scenes) {
    for (double v : sc.hand_pts.sdf) mh = std::max(mh, std::abs(v));
    for (double v : sc.obj_pts.sdf) mo = std::max(mo, std::abs(v));
  }
  if (!(mh > 0.0)) throw NumericError("train: hand labels are all zero");
  if (spec.obj_branch && !(mo > 0.0)) throw NumericError("train: object labels are all zero");
  double out_scale_h = 1.1 * mh;
  double out_scale_o = spec.obj_branch ? 1.1 * mo : 1.0;

  TrainResult res;
  res.out_scale_h = out_scale_h;
  res.out_scale_o = out_scale_o;
  res.model = build_model(variant, cfg.init_seed, out_scale_h, out_scale_o, cfg.hm_n, man.heatmap_c);
  Model& model = res.model;
  auto params = model_params(model);
  std::vector<AdamState> adam(params.size());
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  GenConfig gcfg = gen_config_from_manifest(man);
  TrainOptions opt{cfg.clamp_sdf, cfg.clamp_delta, cfg.stop_pose_grad};

  int64_t step = 0;
  bool last_logged = false;
  HistoryRow last_row;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.lr_halve_every > 0 && epoch > 0 && epoch % cfg.lr_halve_every == 0) acfg.lr *= 0.5;
    std::vector<size_t> order(scenes.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuf(Rng::mix(cfg.seed, 0x5113FF1Eull + static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(shuf.index(static_cast<int64_t>(i)));
      std::swap(order[i - 1], order[j]);
    }
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t bcount = std::min(static_cast<size_t>(cfg.batch_size), order.size() - start);
      std::vector<Tensor> acc(params.size());
      for (size_t i = 0; i < params.size(); ++i) acc[i] = Tensor::zeros(params[i].second->shape);
      LossReport mean;
      for (size_t bi = 0; bi < bcount; ++bi) {
        const SceneSample& base = scenes[order[start + bi]];
        uint64_t skey = Rng::mix(cfg.seed, Rng::mix(static_cast<uint64_t>(step), bi));
        try {
          const SceneSample* sp = &base;
          SceneSample aug;
          if (cfg.max_deg != 0.0) {
            Rng arng(Rng::mix(skey, 0xA060ull));
            aug = augment_sample(base, cfg.max_deg, arng, man.tpl, gcfg);
            sp = &aug;
          }
          // Point streams depend only on (seed, step, slot), never the variant.
          Rng hrng(Rng::mix(skey, 0x4A1Dull));
          PointBatch hb = sample_training_points(sp->hand_pts, cfg.n_pos, cfg.n_neg, hrng);
          PointBatch ob;
          if (spec.obj_branch) {
            Rng orng(Rng::mix(skey, 0x4B2Eull));
            ob = sample_training_points(sp->obj_pts, cfg.n_pos, cfg.n_neg, orng);
          }
          ad::Tape t;
          TapeModel tm = params_on_tape(t, model);
          SceneForward fw = scene_forward(t, model, tm, *sp, man.tpl, hb, ob, cfg.weights, opt);
          if (!std::isfinite(fw.report.total))
            throw NumericError("non-finite loss " + fmt_g17(fw.report.total));
          t.backward(fw.loss);
          for (size_t i = 0; i < params.size(); ++i) {
            int32_t id = tm.ordered[i];
            if (!t.has_grad(id)) continue;
            const Tensor& g = t.grad(id);
            for (int64_t e = 0; e < g.numel(); ++e) acc[i].at(e) += g.at(e);
          }
          add_report(mean, fw.report);
        } catch (const NumericError& e) {
          throw NumericError("train: aborted at step " + std::to_string(step) + ": " + e.what());
        }
      }
      double inv = 1.0 / static_cast<double>(bcount);
      for (size_t i = 0; i < params.size(); ++i) {
        for (auto& v : acc[i].data) v *= inv;
        adam_step(*params[i].second, acc[i], adam[i], acfg);
      }
      scale_report(mean, inv);
      last_row = HistoryRow{step, epoch, acfg.lr, mean};
      last_logged = step % cfg.log_every == 0;
      if (last_logged) res.history.push_back(last_row);
      ++step;
    }
  }
  if (!last_logged && step > 0) res.history.push_back(last_row);
  res.steps = step;
  return res;
}

}  // namespace posesdf
