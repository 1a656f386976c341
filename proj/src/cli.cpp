#include "posesdf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

#include "posesdf/errors.hpp"
#include "posesdf/hand.hpp"
#include "posesdf/io.hpp"
#include "posesdf/meshops.hpp"
#include "posesdf/metrics.hpp"
#include "posesdf/objpose.hpp"
#include "posesdf/sdfnet.hpp"

namespace posesdf {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Mesh extraction box: the unit cube plus margin so surfaces touching the
// cube boundary still close.
constexpr double kMeshBound = 1.1;

int64_t kv_i64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: key " + key + " needs an integer, got '" + value + "'");
  }
}

double kv_f64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: key " + key + " needs a number, got '" + value + "'");
  }
}

bool kv_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("config: key " + key + " needs a boolean (true/false/1/0), got '" + value +
                   "'");
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// [512] then [256] image features, mirroring the tape encoder arithmetic:
// affine, relu, affine.
std::vector<double> matvec(const Linear& l, const std::vector<double>& x) {
  int64_t out = l.w.shape[0], in = l.w.shape[1];
  if (static_cast<int64_t>(x.size()) != in)
    throw DataError("matvec: expected " + std::to_string(in) + " inputs, got " +
                    std::to_string(x.size()));
  std::vector<double> y(out);
  for (int64_t o = 0; o < out; ++o) {
    double acc = l.b.data[static_cast<size_t>(o)];
    const double* row = l.w.data.data() + o * in;
    for (int64_t k = 0; k < in; ++k) acc += row[k] * x[static_cast<size_t>(k)];
    y[static_cast<size_t>(o)] = acc;
  }
  return y;
}

struct HandPrediction {
  std::array<double, 48> pose{};
  std::array<double, 10> shape{};
};

HandPrediction hand_head_predict(const HandHead& head, const std::vector<double>& feat) {
  std::vector<double> h = matvec(head.fc1, feat);
  for (double& v : h) v = v > 0.0 ? v : 0.0;
  std::vector<double> out = matvec(head.fc2, h);
  if (out.size() != 58) throw DataError("hand head: expected 58 outputs");
  HandPrediction p;
  std::copy_n(out.begin(), 48, p.pose.begin());
  std::copy_n(out.begin() + 48, 10, p.shape.begin());
  return p;
}

using CanonFn = std::function<Vec3(const Vec3&)>;

TriMesh extract_mesh(const SdfDecoder& dec, const Tensor& feat, const CanonFn& canon, int res) {
  Box3 box{Vec3{-kMeshBound, -kMeshBound, -kMeshBound}, Vec3{kMeshBound, kMeshBound, kMeshBound}};
  return extract_sdf_mesh(dec, feat, canon, res, box);
}

TriMesh extract_analytic(const std::function<double(const Vec3&)>& sdf, int res) {
  Box3 box{Vec3{-kMeshBound, -kMeshBound, -kMeshBound}, Vec3{kMeshBound, kMeshBound, kMeshBound}};
  return marching_cubes(sdf, res, box);
}

// Checkpoint/dataset/config agreement shared by recon and eval.
void check_compat(const Model& m, const DatasetManifest& man, const SceneSample& sc,
                  const RunConfig& cfg, const std::string& cmd) {
  int64_t pixels = static_cast<int64_t>(sc.render_w) * sc.render_h;
  if (pixels != m.render_dim)
    throw DataError(cmd + ": checkpoint expects " + std::to_string(m.render_dim) +
                    " render pixels, dataset sample has " + std::to_string(pixels));
  if (m.spec.to_loss) {
    if (m.hm_head.n != cfg.train.hm_n)
      throw DataError(cmd + ": checkpoint heatmap grid " + std::to_string(m.hm_head.n) +
                      " does not match configured hm_n " + std::to_string(cfg.train.hm_n));
    if (m.hm_head.c != man.heatmap_c)
      throw DataError(cmd + ": checkpoint heatmap bound " + fmt_g17(m.hm_head.c) +
                      " does not match dataset heatmap bound " + fmt_g17(man.heatmap_c));
  }
}

CanonFn hand_canon(const VariantSpec& spec, const HandPrediction& pred, const SceneSample& sc) {
  Vec3 center{0, 0, 0};
  switch (spec.hand_tf) {
    case TransformSource::None: return nullptr;
    case TransformSource::Predicted: {
      Vec3 rot{pred.pose[0], pred.pose[1], pred.pose[2]};
      return [rot, center](const Vec3& x) { return canonicalize_hand(x, rot, center); };
    }
    case TransformSource::GroundTruth: {
      Vec3 rot{sc.params.pose[0], sc.params.pose[1], sc.params.pose[2]};
      return [rot, center](const Vec3& x) { return canonicalize_hand(x, rot, center); };
    }
  }
  return nullptr;
}

CanonFn object_canon(const VariantSpec& spec, const Vec3& pred_t, const SceneSample& sc) {
  switch (spec.obj_tf) {
    case TransformSource::None: return nullptr;
    case TransformSource::Predicted:
      return [pred_t](const Vec3& x) { return canonicalize_object(x, pred_t); };
    case TransformSource::GroundTruth: {
      Vec3 t = sc.prim.t_o;
      return [t](const Vec3& x) { return canonicalize_object(x, t); };
    }
  }
  return nullptr;
}

}  // namespace

std::vector<double> encode_render(const Model& m, const std::vector<float>& render) {
  if (static_cast<int64_t>(render.size()) != m.render_dim)
    throw DataError("forward: checkpoint expects " + std::to_string(m.render_dim) +
                    " render pixels, sample provides " + std::to_string(render.size()));
  std::vector<double> x(render.begin(), render.end());
  std::vector<double> h = matvec(m.enc1, x);
  for (double& v : h) v = v > 0.0 ? v : 0.0;
  return matvec(m.enc2, h);
}

TriMesh extract_sdf_mesh(const SdfDecoder& dec, const Tensor& feat,
                         const std::function<Vec3(const Vec3&)>& canon, int res,
                         const Box3& bounds) {
  BatchField field = [&](const std::vector<Vec3>& pts) {
    std::vector<Vec3> xc(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) xc[i] = canon ? canon(pts[i]) : pts[i];
    return decode_batch(dec, feat, pts, xc);
  };
  return marching_cubes(field, res, bounds);
}

void apply_run_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  GenConfig& g = cfg.gen;
  // generation keys
  if (key == "points_per_branch") g.points_per_branch = static_cast<int>(kv_i64(key, value));
  else if (key == "sigma_near") g.sigma_near = kv_f64(key, value);
  else if (key == "sigma_tight") g.sigma_tight = kv_f64(key, value);
  else if (key == "frac_near") g.frac_near = kv_f64(key, value);
  else if (key == "frac_tight") g.frac_tight = kv_f64(key, value);
  else if (key == "render_w") g.render_w = static_cast<int>(kv_i64(key, value));
  else if (key == "render_h") g.render_h = static_cast<int>(kv_i64(key, value));
  else if (key == "render_half_window") g.render_half_window = kv_f64(key, value);
  else if (key == "render_z0") g.render_z0 = kv_f64(key, value);
  else if (key == "render_far") g.render_far = kv_f64(key, value);
  else if (key == "prox_min") g.prox_min = kv_f64(key, value);
  else if (key == "prox_max") g.prox_max = kv_f64(key, value);
  else if (key == "retry_budget") g.retry_budget = static_cast<int>(kv_i64(key, value));
  else if (key == "prox_surface_samples")
    g.prox_surface_samples = static_cast<int>(kv_i64(key, value));
  else if (key == "global_rot_max") g.global_rot_max = kv_f64(key, value);
  else if (key == "curl_mcp_max") g.curl_mcp_max = kv_f64(key, value);
  else if (key == "curl_pip_max") g.curl_pip_max = kv_f64(key, value);
  else if (key == "curl_dip_max") g.curl_dip_max = kv_f64(key, value);
  else if (key == "abd_max") g.abd_max = kv_f64(key, value);
  else if (key == "shape_amp") g.shape_amp = kv_f64(key, value);
  else if (key == "heatmap_c") g.heatmap_c = kv_f64(key, value);
  // evaluation / reconstruction keys
  else if (key == "mc_res") cfg.mc_res = static_cast<int>(kv_i64(key, value));
  else if (key == "chamfer_samples") cfg.chamfer_samples = static_cast<int>(kv_i64(key, value));
  else if (key == "voxel_pitch") cfg.voxel_pitch = kv_f64(key, value);
  else if (key == "test_frac") {
    cfg.test_frac = kv_f64(key, value);
    if (!(cfg.test_frac >= 0.0 && cfg.test_frac <= 1.0))
      throw UsageError("config: test_frac must be in [0,1], got '" + value + "'");
  } else if (key == "eval_max_samples")
    cfg.eval_max_samples = static_cast<int>(kv_i64(key, value));
  else if (key == "eval_oracle") cfg.eval_oracle = kv_bool(key, value);
  // everything else belongs to the training config, which rejects unknowns
  else apply_config_kv(cfg.train, key, value);
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::string bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const std::exception& e) {
    throw DataError("config: cannot read " + path + ": " + e.what());
  }
  std::istringstream in(bytes);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw UsageError("config: " + path + ":" + std::to_string(lineno) +
                       ": expected key=value, got '" + s + "'");
    apply_run_kv(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
}

std::vector<std::pair<std::string, std::string>> run_config_echo(const RunConfig& cfg) {
  const GenConfig& g = cfg.gen;
  std::vector<std::pair<std::string, std::string>> kv = {
      {"points_per_branch", std::to_string(g.points_per_branch)},
      {"sigma_near", fmt_g17(g.sigma_near)},
      {"sigma_tight", fmt_g17(g.sigma_tight)},
      {"frac_near", fmt_g17(g.frac_near)},
      {"frac_tight", fmt_g17(g.frac_tight)},
      {"render_w", std::to_string(g.render_w)},
      {"render_h", std::to_string(g.render_h)},
      {"render_half_window", fmt_g17(g.render_half_window)},
      {"render_z0", fmt_g17(g.render_z0)},
      {"render_far", fmt_g17(g.render_far)},
      {"prox_min", fmt_g17(g.prox_min)},
      {"prox_max", fmt_g17(g.prox_max)},
      {"retry_budget", std::to_string(g.retry_budget)},
      {"prox_surface_samples", std::to_string(g.prox_surface_samples)},
      {"global_rot_max", fmt_g17(g.global_rot_max)},
      {"curl_mcp_max", fmt_g17(g.curl_mcp_max)},
      {"curl_pip_max", fmt_g17(g.curl_pip_max)},
      {"curl_dip_max", fmt_g17(g.curl_dip_max)},
      {"abd_max", fmt_g17(g.abd_max)},
      {"shape_amp", fmt_g17(g.shape_amp)},
      {"heatmap_c", fmt_g17(g.heatmap_c)},
      {"mc_res", std::to_string(cfg.mc_res)},
      {"chamfer_samples", std::to_string(cfg.chamfer_samples)},
      {"voxel_pitch", fmt_g17(cfg.voxel_pitch)},
      {"test_frac", fmt_g17(cfg.test_frac)},
      {"eval_max_samples", std::to_string(cfg.eval_max_samples)},
      {"eval_oracle", cfg.eval_oracle ? "true" : "false"},
  };
  auto train_kv = train_config_echo(cfg.train);
  kv.insert(kv.end(), train_kv.begin(), train_kv.end());
  std::sort(kv.begin(), kv.end());
  return kv;
}

void write_config_echo(const std::string& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  std::string out;
  for (const auto& [k, v] : run_config_echo(cfg)) out += k + "=" + v + "\n";
  write_file_bytes((fs::path(dir) / "config.txt").string(), out);
}

std::pair<std::vector<int>, std::vector<int>> split_train_test(int n, double frac) {
  if (n < 0) throw UsageError("split: negative sample count");
  if (!(frac >= 0.0 && frac <= 1.0)) throw UsageError("split: test_frac must be in [0,1]");
  int n_test = 0;
  if (frac > 0.0 && n > 0)
    n_test = std::clamp(static_cast<int>(std::floor(n * frac)), 1, n);
  std::vector<int> train, test;
  for (int i = 0; i < n - n_test; ++i) train.push_back(i);
  for (int i = n - n_test; i < n; ++i) test.push_back(i);
  return {std::move(train), std::move(test)};
}

void check_report_schema(const ordered_json& r) {
  auto fail = [](const std::string& path, const std::string& what) {
    throw DataError("report schema: " + path + ": " + what);
  };
  if (!r.is_object()) fail("$", "expected an object");
  for (const char* k : {"sample_count", "excluded", "aggregate", "per_sample"})
    if (!r.contains(k)) fail("$", std::string("missing key ") + k);
  for (auto it = r.begin(); it != r.end(); ++it) {
    std::string k = it.key();
    if (k != "sample_count" && k != "excluded" && k != "aggregate" && k != "per_sample")
      fail("$", "unexpected key " + k);
  }
  if (!r["sample_count"].is_number_unsigned()) fail("$.sample_count", "expected a non-negative integer");
  uint64_t count = r["sample_count"].get<uint64_t>();
  if (!r["excluded"].is_array()) fail("$.excluded", "expected an array");
  for (const auto& e : r["excluded"]) {
    if (!e.is_number_unsigned()) fail("$.excluded", "expected non-negative indices");
    if (e.get<uint64_t>() >= count) fail("$.excluded", "index out of range");
  }
  const char* agg_keys[] = {"H_se", "H_ve", "O_se", "H_je", "O_te", "C_r", "P_d", "I_v"};
  if (!r["aggregate"].is_object()) fail("$.aggregate", "expected an object");
  if (r["aggregate"].size() != 8) fail("$.aggregate", "expected exactly 8 metrics");
  for (const char* k : agg_keys) {
    std::string path = std::string("$.aggregate.") + k;
    if (!r["aggregate"].contains(k)) fail(path, "missing");
    const auto& v = r["aggregate"][k];
    if (!v.is_null() && !v.is_number()) fail(path, "expected a number or null");
  }
  const char* per_keys[] = {"H_se", "H_ve", "O_se", "H_je", "O_te", "P_d", "I_v"};
  if (!r["per_sample"].is_object()) fail("$.per_sample", "expected an object");
  if (r["per_sample"].size() != 7) fail("$.per_sample", "expected exactly 7 metric arrays");
  for (const char* k : per_keys) {
    std::string path = std::string("$.per_sample.") + k;
    if (!r["per_sample"].contains(k)) fail(path, "missing");
    const auto& v = r["per_sample"][k];
    if (!v.is_array()) fail(path, "expected an array");
    if (v.size() != 0 && v.size() != count) fail(path, "expected length 0 or sample_count");
    for (const auto& e : v)
      if (!e.is_null() && !e.is_number()) fail(path, "expected numbers or nulls");
  }
}

void cmd_gen(const GenArgs& a) {
  RunConfig cfg;
  if (!a.config_path.empty()) load_config_file(cfg, a.config_path);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.workers && *a.workers < 1) throw UsageError("gen: --workers must be at least 1");
  if (a.n < 1) throw UsageError("gen: --n must be at least 1");
  if (a.out.empty()) throw UsageError("gen: --out is required");
  auto [scenes, man] = build_dataset(cfg.train.seed, static_cast<int>(a.n), cfg.gen);
  write_dataset(a.out, scenes, man);
  write_config_echo(a.out, cfg);
}

void cmd_train(const TrainArgs& a) {
  RunConfig cfg;
  if (!a.config_path.empty()) load_config_file(cfg, a.config_path);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.data.empty()) throw UsageError("train: --data is required");
  if (a.out.empty()) throw UsageError("train: --out is required");
  ModelVariant variant = parse_variant(a.variant);

  auto [scenes, man] = read_dataset(a.data);
  auto [train_idx, test_idx] = split_train_test(static_cast<int>(scenes.size()), cfg.test_frac);
  if (train_idx.empty())
    throw UsageError("train: no training samples left after holding out " +
                     std::to_string(test_idx.size()) + " test samples");
  std::vector<SceneSample> train_scenes;
  train_scenes.reserve(train_idx.size());
  for (int i : train_idx) train_scenes.push_back(std::move(scenes[static_cast<size_t>(i)]));

  TrainResult res = train(train_scenes, man, variant, cfg.train);

  fs::create_directories(a.out);
  save_model((fs::path(a.out) / "model.ckpt").string(), res.model,
             {{"train_steps", std::to_string(res.steps)}});
  std::string hist;
  for (const auto& row : res.history) hist += history_json_line(row) + "\n";
  write_file_bytes((fs::path(a.out) / "history.jsonl").string(), hist);
  write_config_echo(a.out, cfg);
}

void cmd_recon(const ReconArgs& a) {
  RunConfig cfg;
  if (!a.config_path.empty()) load_config_file(cfg, a.config_path);
  if (a.res) cfg.mc_res = *a.res;
  if (cfg.mc_res < 2) throw UsageError("recon: resolution must be at least 2");
  if (a.ckpt.empty()) throw UsageError("recon: --ckpt is required");
  if (a.data.empty()) throw UsageError("recon: --data is required");
  if (a.out.empty()) throw UsageError("recon: --out is required");

  auto [scenes, man] = read_dataset(a.data);
  if (a.sample < 0 || a.sample >= static_cast<int64_t>(scenes.size()))
    throw UsageError("recon: --sample " + std::to_string(a.sample) + " out of range for " +
                     std::to_string(scenes.size()) + " samples");
  const SceneSample& sc = scenes[static_cast<size_t>(a.sample)];
  Model m = load_model(a.ckpt);
  check_compat(m, man, sc, cfg, "recon");

  std::vector<double> feat = encode_render(m, sc.render);
  Tensor feat_t = Tensor::vec(feat);
  HandPrediction hp;
  bool have_pose = m.spec.pose_losses;
  if (have_pose) hp = hand_head_predict(m.hand_head, feat);
  Vec3 pred_t{0, 0, 0};
  bool have_t = m.spec.to_loss;
  if (have_t) pred_t = soft_argmax(predict_heatmap(m.hm_head, feat_t));

  fs::create_directories(a.out);
  int branches = 1 + (m.spec.obj_branch ? 1 : 0);
  int failures = 0;
  std::string fail_notes;

  ordered_json side;
  side["sample"] = sc.id;
  side["variant"] = variant_name(m.variant);
  side["res"] = cfg.mc_res;
  if (have_pose) {
    side["theta_h"] = hp.pose;
    side["beta_h"] = hp.shape;
  } else {
    side["theta_h"] = nullptr;
    side["beta_h"] = nullptr;
  }
  if (have_t)
    side["t_o"] = std::array<double, 3>{pred_t[0], pred_t[1], pred_t[2]};
  else
    side["t_o"] = nullptr;
  side["out_scale_h"] = m.dec_h.output_scale;
  side["out_scale_o"] = m.spec.obj_branch ? ordered_json(m.dec_o.output_scale) : ordered_json();

  try {
    TriMesh hand = extract_mesh(m.dec_h, feat_t, hand_canon(m.spec, hp, sc), cfg.mc_res);
    export_obj((fs::path(a.out) / "hand.obj").string(), hand);
    side["hand"] = {{"file", "hand.obj"},
                    {"vertices", hand.vertices.size()},
                    {"triangles", hand.triangles.size()}};
  } catch (const EmptyFieldError& e) {
    ++failures;
    fail_notes += std::string("hand: ") + e.what() + "; ";
    std::fprintf(stderr, "recon: hand branch produced no surface: %s\n", e.what());
    side["hand"] = nullptr;
  }
  if (m.spec.obj_branch) {
    try {
      TriMesh obj = extract_mesh(m.dec_o, feat_t, object_canon(m.spec, pred_t, sc), cfg.mc_res);
      export_obj((fs::path(a.out) / "object.obj").string(), obj);
      side["object"] = {{"file", "object.obj"},
                        {"vertices", obj.vertices.size()},
                        {"triangles", obj.triangles.size()}};
    } catch (const EmptyFieldError& e) {
      ++failures;
      fail_notes += std::string("object: ") + e.what() + "; ";
      std::fprintf(stderr, "recon: object branch produced no surface: %s\n", e.what());
      side["object"] = nullptr;
    }
  } else {
    side["object"] = nullptr;
  }

  write_file_bytes((fs::path(a.out) / "sidecar.json").string(), side.dump(2) + "\n");
  write_config_echo(a.out, cfg);
  if (failures == branches)
    throw EmptyFieldError("recon: every branch produced an empty field: " + fail_notes);
}

void cmd_eval(const EvalArgs& a) {
  RunConfig cfg;
  if (!a.config_path.empty()) load_config_file(cfg, a.config_path);
  if (a.workers && *a.workers < 1) throw UsageError("eval: --workers must be at least 1");
  if (cfg.mc_res < 2) throw UsageError("eval: mc_res must be at least 2");
  if (cfg.chamfer_samples < 1) throw UsageError("eval: chamfer_samples must be at least 1");
  if (a.ckpt.empty()) throw UsageError("eval: --ckpt is required");
  if (a.data.empty()) throw UsageError("eval: --data is required");
  if (a.report.empty()) throw UsageError("eval: --report is required");

  auto [scenes, man] = read_dataset(a.data);
  Model m = load_model(a.ckpt);
  if (!scenes.empty()) check_compat(m, man, scenes[0], cfg, "eval");
  auto [train_idx, test_idx] = split_train_test(static_cast<int>(scenes.size()), cfg.test_frac);
  if (test_idx.empty())
    throw UsageError("eval: test split is empty; raise test_frac or the dataset size");
  if (cfg.eval_max_samples > 0 &&
      static_cast<int>(test_idx.size()) > cfg.eval_max_samples)
    test_idx.resize(static_cast<size_t>(cfg.eval_max_samples));
  size_t n = test_idx.size();

  bool oracle = cfg.eval_oracle;
  bool emit_obj = m.spec.obj_branch || oracle;
  bool emit_hje = m.spec.pose_losses || oracle;
  bool emit_ote = m.spec.to_loss || oracle;
  double pitch = cfg.voxel_pitch > 0.0 ? cfg.voxel_pitch : 0.005 * man.scale;
  double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<TriMesh> pred_h(n), gt_h(n), pred_o, gt_o;
  if (emit_obj) {
    pred_o.resize(n);
    gt_o.resize(n);
  }
  std::vector<double> hje(emit_hje ? n : 0, nan), ote(emit_ote ? n : 0, nan);
  std::vector<std::string> notes(n);

  for (size_t k = 0; k < n; ++k) {
    const SceneSample& sc = scenes[static_cast<size_t>(test_idx[k])];
    auto note = [&](const std::string& s) {
      if (!notes[k].empty()) notes[k] += "; ";
      notes[k] += s;
    };
    try {
      gt_h[k] = extract_analytic(
          [&](const Vec3& p) { return hand_sdf(p, sc.joints, man.tpl); }, cfg.mc_res);
      if (emit_obj)
        gt_o[k] = extract_analytic(
            [&](const Vec3& p) { return analytic_object_sdf(p, sc.prim); }, cfg.mc_res);
      if (oracle) {
        pred_h[k] = gt_h[k];
        if (emit_obj) pred_o[k] = gt_o[k];
        hje[k] = joint_error({sc.joints}, {sc.joints}).per_sample[0];
        ote[k] = translation_error({sc.prim.t_o}, {sc.prim.t_o}).per_sample[0];
      } else {
        std::vector<double> feat = encode_render(m, sc.render);
        Tensor feat_t = Tensor::vec(feat);
        HandPrediction hp;
        if (m.spec.pose_losses) {
          hp = hand_head_predict(m.hand_head, feat);
          try {
            HandParams params;
            params.pose = hp.pose;
            params.shape = hp.shape;
            hje[k] = joint_error({forward_kinematics(params, man.tpl).joints}, {sc.joints})
                         .per_sample[0];
          } catch (const NumericError& e) {
            note(std::string("joints: ") + e.what());
          }
        }
        Vec3 pred_t{0, 0, 0};
        if (m.spec.to_loss) {
          pred_t = soft_argmax(predict_heatmap(m.hm_head, feat_t));
          ote[k] = translation_error({pred_t}, {sc.prim.t_o}).per_sample[0];
        }
        try {
          pred_h[k] = extract_mesh(m.dec_h, feat_t, hand_canon(m.spec, hp, sc), cfg.mc_res);
        } catch (const EmptyFieldError& e) {
          note(std::string("hand mesh: ") + e.what());
        }
        if (m.spec.obj_branch) {
          try {
            pred_o[k] =
                extract_mesh(m.dec_o, feat_t, object_canon(m.spec, pred_t, sc), cfg.mc_res);
          } catch (const EmptyFieldError& e) {
            note(std::string("object mesh: ") + e.what());
          }
        }
      }
    } catch (const std::exception& e) {
      note(e.what());
    }
  }

  MetricsReport rep;
  rep.sample_count = n;
  ShapeErrorResult hs = hand_shape_error(pred_h, gt_h, cfg.train.seed, cfg.chamfer_samples);
  rep.h_se = hs.h_se;
  rep.h_ve = hs.h_ve;
  std::vector<bool> pair_valid(n, true);
  if (emit_obj) {
    ObjectErrorResult os =
        object_shape_error(pred_o, gt_o, hs.tf, hs.valid, cfg.train.seed, cfg.chamfer_samples);
    rep.o_se = os.o_se;
    rep.p_d.assign(n, nan);
    rep.i_v.assign(n, nan);
    for (size_t k = 0; k < n; ++k) {
      pair_valid[k] = hs.valid[k] && os.valid[k];
      if (pred_h[k].vertices.empty() || pred_o[k].vertices.empty()) continue;
      try {
        InteractionResult ir = interaction_metrics(pred_h[k], pred_o[k], pitch);
        rep.p_d[k] = ir.p_d;
        rep.i_v[k] = ir.i_v;
      } catch (const std::exception& e) {
        if (!notes[k].empty()) notes[k] += "; ";
        notes[k] += std::string("interaction: ") + e.what();
      }
    }
  } else {
    for (size_t k = 0; k < n; ++k) pair_valid[k] = hs.valid[k];
  }
  rep.h_je = hje;
  rep.o_te = ote;
  for (size_t k = 0; k < n; ++k) {
    if (!pair_valid[k]) rep.excluded.push_back(static_cast<uint32_t>(k));
    if (!pair_valid[k] || !notes[k].empty())
      std::fprintf(stderr, "eval: sample %llu%s: %s\n",
                   static_cast<unsigned long long>(scenes[static_cast<size_t>(test_idx[k])].id),
                   pair_valid[k] ? "" : " excluded", notes[k].empty() ? "empty mesh" : notes[k].c_str());
  }
  finalize_report(rep);
  validate_metrics_report(rep);

  std::string json = metrics_report_json(rep);
  check_report_schema(ordered_json::parse(json));
  fs::path report_path(a.report);
  if (!report_path.parent_path().empty()) fs::create_directories(report_path.parent_path());
  write_file_bytes(report_path.string(), json + "\n");
  std::string dir = report_path.parent_path().empty() ? std::string(".")
                                                      : report_path.parent_path().string();
  write_config_echo(dir, cfg);
  std::fputs(format_metrics_table(rep).c_str(), stdout);
  std::fprintf(stdout, "report: %s (%zu samples, %zu excluded)\n", a.report.c_str(), n,
               rep.excluded.size());
}

}  // namespace posesdf
