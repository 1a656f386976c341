#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "posesdf/meshops.hpp"
#include "posesdf/scenegen.hpp"
#include "posesdf/training.hpp"

namespace posesdf {

// Every tunable knob across all commands in one flat key=value namespace.
// Keys are unique across the sub-configs, so dispatch is by name alone.
struct RunConfig {
  GenConfig gen;
  TrainConfig train;
  int mc_res = 64;             // mesh extraction grid resolution
  int chamfer_samples = 30000; // surface samples per mesh for chamfer
  double voxel_pitch = 0.0;    // normalized units; 0 = 0.005 * dataset scale
  double test_frac = 0.1;      // tail fraction of the dataset held out
  int eval_max_samples = 0;    // cap on evaluated test samples; 0 = all
  bool eval_oracle = false;    // score ground truth against itself
};

// Unknown keys or malformed values raise UsageError naming the key.
void apply_run_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// key=value lines; '#' starts a comment, blank lines are skipped.
// Unreadable file is a DataError, bad content a UsageError.
void load_config_file(RunConfig& cfg, const std::string& path);

// Sorted echo of every key apply_run_kv accepts.
std::vector<std::pair<std::string, std::string>> run_config_echo(const RunConfig& cfg);

// Writes the echo to dir/config.txt, creating dir if needed.
void write_config_echo(const std::string& dir, const RunConfig& cfg);

// Deterministic tail split: the last clamp(floor(n*frac), 1, n) indices are
// test when frac > 0; frac == 0 keeps everything in train.
std::pair<std::vector<int>, std::vector<int>> split_train_test(int n, double frac);

// Structural check of a metrics report against the shipped schema
// (schema/metrics_report.schema.json). Throws DataError naming the offending
// path on any mismatch.
void check_report_schema(const nlohmann::ordered_json& report);

// Tape-free image encoder: affine, relu, affine. Rejects renders whose pixel
// count differs from the model input width.
std::vector<double> encode_render(const Model& m, const std::vector<float>& render);

// Zero-level mesh of one decoder branch over the box. canon maps world
// queries to the decoder's canonical frame; nullptr decodes raw coordinates.
TriMesh extract_sdf_mesh(const SdfDecoder& dec, const Tensor& feat,
                         const std::function<Vec3(const Vec3&)>& canon, int res,
                         const Box3& bounds);

struct GenArgs {
  int64_t n = 0;
  std::optional<uint64_t> seed;  // overrides the config's seed key
  std::string out;
  std::string config_path;
  std::optional<int> workers;
};

struct TrainArgs {
  std::string data;
  std::string variant;
  std::optional<int> epochs;  // overrides the config's epochs key
  std::string out;
  std::string config_path;
};

struct ReconArgs {
  std::string ckpt;
  std::string data;
  int64_t sample = 0;
  std::optional<int> res;  // overrides the config's mc_res key
  std::string out;
  std::string config_path;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string report;  // output JSON path; the table goes to stdout
  std::string config_path;
  std::optional<int> workers;
};

// Command bodies. All throw (UsageError/DataError/NumericError) on failure;
// the binary maps exceptions to exit codes 1/2/3.
void cmd_gen(const GenArgs& a);
void cmd_train(const TrainArgs& a);
void cmd_recon(const ReconArgs& a);
void cmd_eval(const EvalArgs& a);

}  // namespace posesdf
