#pragma once
// Loss assembly, the ablation-variant switchboard, and the end-to-end
// training loop over synthetic scene datasets.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "posesdf/checkpoint.hpp"
#include "posesdf/hand.hpp"
#include "posesdf/linear.hpp"
#include "posesdf/objpose.hpp"
#include "posesdf/scenegen.hpp"
#include "posesdf/sdfnet.hpp"
#include "posesdf/tape.hpp"

namespace posesdf {

enum class ModelVariant { A, B, C, CStar, D, E, F, G, GStar };

// Throws UsageError listing the valid names on anything else.
ModelVariant parse_variant(const std::string& name);
const char* variant_name(ModelVariant v);

enum class TransformSource { None, Predicted, GroundTruth };

// Which branches exist and where canonicalization transforms come from.
struct VariantSpec {
  bool obj_branch = false;       // object decoder present
  bool pose_losses = false;      // hand head + joint/shape/pose losses
  TransformSource hand_tf = TransformSource::None;
  bool to_loss = false;          // heatmap head + translation loss
  TransformSource obj_tf = TransformSource::None;
};
VariantSpec variant_spec(ModelVariant v);

struct LossWeights {
  double jh = 5e-1;
  double bh = 5e-7;
  double th = 5e-5;
  double to = 5e-1;
  double rec_h = 5e-1;
  double rec_o = 5e-1;
};

// Raw components are unweighted; hand/obj/rec/total carry the weights.
struct LossReport {
  double jh = 0, bh = 0, th = 0, to = 0;  // raw
  double rec_h = 0, rec_o = 0;            // weighted per-branch L1
  double hand = 0, obj = 0, rec = 0, total = 0;
};

// Pure loss components (the reference definitions; the tape mirrors them).
struct HandLossRaw {
  double jh = 0;  // mean over joints of squared position error
  double bh = 0;  // squared norm of the shape vector
  double th = 0;  // squared norm of the 45 local rotation parameters
};
HandLossRaw hand_loss(const std::array<Vec3, 21>& pred, const std::array<Vec3, 21>& gt,
                      const std::array<double, 10>& shape, const std::array<double, 48>& pose);
double object_loss(const Vec3& pred_t, const Vec3& gt_t);  // squared distance
double recon_l1(const std::vector<double>& pred, const std::vector<double>& gt);  // mean abs

struct Model {
  ModelVariant variant = ModelVariant::A;
  VariantSpec spec;
  Linear enc1, enc2;  // flattened render 1024 -> 512 relu -> 256
  HandHead hand_head;
  HeatmapHead hm_head;
  SdfDecoder dec_h;
  SdfDecoder dec_o;
  int render_dim = 1024;
};

Model build_model(ModelVariant v, uint64_t seed, double out_scale_h, double out_scale_o,
                  int hm_n, double hm_c);

// Trainable tensors in a fixed order shared with params_on_tape.
std::vector<std::pair<std::string, Tensor*>> model_params(Model& m);

void save_model(const std::string& path, const Model& m,
                const std::vector<std::pair<std::string, std::string>>& extra_meta);
Model load_model(const std::string& path);

// Node ids of the trainable tensors, aligned with model_params order.
struct TapeModel {
  LinearNodes enc1, enc2;
  LinearNodes hand1, hand2;
  LinearNodes hm1, hm2;
  SdfDecoderNodes dec_h, dec_o;
  std::vector<int32_t> ordered;  // flat list matching model_params
};
TapeModel params_on_tape(ad::Tape& t, const Model& m);

struct PointBatch {
  Tensor x;  // [3, k]
  Tensor y;  // [1, k] signed-distance labels, shaped like the decoder output
};

// Uniform without-replacement draw of n_pos labels >= 0 and n_neg labels < 0.
// Throws DataError with both counts when the pool is too small.
PointBatch sample_training_points(const LabeledPoints& pts, int n_pos, int n_neg, Rng& rng);

struct TrainOptions {
  bool clamp_sdf = false;
  double clamp_delta = 0.1;
  bool stop_pose_grad = false;
};

struct SceneForward {
  int32_t loss = -1;  // scalar node
  LossReport report;
};

// Builds the variant's active losses for one scene on the tape.
SceneForward scene_forward(ad::Tape& t, const Model& m, const TapeModel& tm,
                           const SceneSample& scene, const HandTemplate& tpl,
                           const PointBatch& hand_pts, const PointBatch& obj_pts,
                           const LossWeights& w, const TrainOptions& opt);

struct TrainConfig {
  uint64_t seed = 1;
  uint64_t init_seed = 7;
  int epochs = 1;
  int batch_size = 8;
  int n_pos = 500;
  int n_neg = 500;
  double lr = 1e-4;
  int lr_halve_every = 0;  // epochs between halvings; 0 disables
  double max_deg = 45.0;   // augmentation rotation range
  int log_every = 50;
  int hm_n = 16;  // heatmap grid resolution per axis
  bool clamp_sdf = false;
  double clamp_delta = 0.1;
  bool stop_pose_grad = false;
  LossWeights weights;
};

// key=value application; unknown keys or malformed values raise UsageError.
void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);
// Sorted key/value echo of every decision in the config.
std::vector<std::pair<std::string, std::string>> train_config_echo(const TrainConfig& cfg);

struct HistoryRow {
  int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  LossReport rep;  // batch mean
};
std::string history_json_line(const HistoryRow& row);

struct TrainResult {
  Model model;
  std::vector<HistoryRow> history;
  int64_t steps = 0;
  double out_scale_h = 0;
  double out_scale_o = 0;
};

// Deterministic given config: seeded shuffling, per-(step, slot) sampling
// streams independent of the variant, fixed-order batch reduction.
TrainResult train(const std::vector<SceneSample>& scenes, const DatasetManifest& man,
                  ModelVariant variant, const TrainConfig& cfg);

// Rotation augmentation driver: angle uniform in +-max_deg about the view
// axis; max_deg 0 returns the sample unchanged.
SceneSample augment_sample(const SceneSample& scene, double max_deg, Rng& rng,
                           const HandTemplate& tpl, const GenConfig& gcfg);

// Render geometry for re-rendering augmented samples, recovered from the
// manifest's config echo (falls back to defaults for missing keys).
GenConfig gen_config_from_manifest(const DatasetManifest& man);

}  // namespace posesdf
