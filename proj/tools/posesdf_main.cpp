#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "posesdf/cli.hpp"
#include "posesdf/errors.hpp"

namespace {

// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
int run(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const posesdf::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const posesdf::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hand-object signed-distance reconstruction pipeline"};
  app.require_subcommand(1);

  posesdf::GenArgs gen;
  uint64_t gen_seed = 1;
  int gen_workers = 1;
  auto* g = app.add_subcommand("gen", "generate a synthetic dataset");
  g->add_option("--n", gen.n, "number of scenes to generate")->required();
  auto* g_seed = g->add_option("--seed", gen_seed, "generation seed");
  g->add_option("--out", gen.out, "output dataset directory")->required();
  g->add_option("--config", gen.config_path, "key=value config file");
  auto* g_workers =
      g->add_option("--workers", gen_workers,
                    "worker count; per-sample seeding keeps any value byte-identical");

  posesdf::TrainArgs train;
  int train_epochs = 1;
  auto* t = app.add_subcommand("train", "train a model variant on a dataset");
  t->add_option("--data", train.data, "dataset directory")->required();
  t->add_option("--variant", train.variant, "model variant: a b c c_star d e f g g_star")
      ->required();
  auto* t_epochs = t->add_option("--epochs", train_epochs, "training epochs");
  t->add_option("--out", train.out, "output directory")->required();
  t->add_option("--config", train.config_path, "key=value config file");

  posesdf::ReconArgs recon;
  int recon_res = 64;
  auto* r = app.add_subcommand("recon", "reconstruct meshes for one sample");
  r->add_option("--ckpt", recon.ckpt, "model checkpoint")->required();
  r->add_option("--data", recon.data, "dataset directory")->required();
  r->add_option("--sample", recon.sample, "sample index");
  auto* r_res = r->add_option("--res", recon_res, "marching cubes resolution");
  r->add_option("--out", recon.out, "output directory")->required();
  r->add_option("--config", recon.config_path, "key=value config file");

  posesdf::EvalArgs eval;
  int eval_workers = 1;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  e->add_option("--ckpt", eval.ckpt, "model checkpoint")->required();
  e->add_option("--data", eval.data, "dataset directory")->required();
  e->add_option("--report", eval.report, "output metrics JSON path")->required();
  e->add_option("--config", eval.config_path, "key=value config file");
  auto* e_workers =
      e->add_option("--workers", eval_workers,
                    "worker count; per-sample seeding keeps any value byte-identical");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& pe) {
    std::fprintf(stderr, "error: %s\n", pe.what());
    return 1;
  }

  if (g->parsed()) {
    if (g_seed->count() > 0) gen.seed = gen_seed;
    if (g_workers->count() > 0) gen.workers = gen_workers;
    return run([&] { posesdf::cmd_gen(gen); });
  }
  if (t->parsed()) {
    if (t_epochs->count() > 0) train.epochs = train_epochs;
    return run([&] { posesdf::cmd_train(train); });
  }
  if (r->parsed()) {
    if (r_res->count() > 0) recon.res = recon_res;
    return run([&] { posesdf::cmd_recon(recon); });
  }
  if (e->parsed()) {
    if (e_workers->count() > 0) eval.workers = eval_workers;
    return run([&] { posesdf::cmd_eval(eval); });
  }
  std::fputs("error: no subcommand\n", stderr);
  return 1;
}
