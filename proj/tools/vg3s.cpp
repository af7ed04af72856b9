// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver. Exit codes: 0 ok, 1 failed check or run, 2 usage or
// configuration error, 3 I/O error.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "vg3s/config.hpp"
#include "vg3s/error.hpp"
#include "vg3s/pipeline.hpp"
#include "vg3s/selftest.hpp"
#include "vg3s/splat.hpp"
#include "vg3s/train.hpp"
#include "vg3s/voxel.hpp"

namespace {

using namespace vg3s;

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "flat key = value config file (defaults when omitted)");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
}

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_config_text("") : parse_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vg3s: token adapter, Gaussian decoder and voxel splatting"};
  app.require_subcommand(1);

  Common c_self, c_tok, c_train, c_eval, c_splat, c_ply;

  auto* selftest = app.add_subcommand("selftest", "run the invariant and gradient checks");
  add_common(selftest, c_self);
  bool full = false;
  std::string config_dir = VG3S_CONFIG_DIR;
  selftest->add_flag("--full", full, "include the toy training run");
  selftest->add_option("--config-dir", config_dir, "directory holding toy.cfg and full_scale.cfg");

  auto* gen = app.add_subcommand("gen-tokens", "write the synthetic token stack of the configured scene");
  add_common(gen, c_tok);
  std::string tok_out, gt_out;
  gen->add_option("--out", tok_out, "token file")->required();
  gen->add_option("--gt", gt_out, "also write the ground-truth voxel file");

  auto* train_cmd = app.add_subcommand("train", "train and write a checkpoint");
  add_common(train_cmd, c_train);
  std::string ckpt_out, resume, log_path;
  std::optional<std::uint64_t> until;
  bool quiet = false;
  train_cmd->add_option("--out", ckpt_out, "checkpoint file")->required();
  train_cmd->add_option("--resume", resume, "continue from this checkpoint");
  train_cmd->add_option("--until", until, "stop after this many total steps");
  train_cmd->add_option("--log", log_path, "also write the step log here");
  train_cmd->add_flag("--quiet", quiet, "do not echo the step log");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the configured scene");
  add_common(eval, c_eval);
  std::string eval_ckpt, report_path, gau_out, pred_out;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint (untrained model when omitted)");
  eval->add_option("--report", report_path, "also write the report here");
  eval->add_option("--gaussians", gau_out, "write the decoded Gaussian set");
  eval->add_option("--labels", pred_out, "write the predicted voxel labels");

  auto* splat_cmd = app.add_subcommand("splat", "splat a Gaussian file into a voxel label file");
  add_common(splat_cmd, c_splat);
  std::string splat_in, splat_out;
  splat_cmd->add_option("--in", splat_in, "Gaussian file")->required();
  splat_cmd->add_option("--out", splat_out, "voxel file")->required();

  auto* ply = app.add_subcommand("export-ply", "convert a voxel file to an ASCII PLY point cloud");
  add_common(ply, c_ply);
  std::string ply_in, ply_out;
  ply->add_option("--in", ply_in, "voxel file")->required();
  ply->add_option("--out", ply_out, "PLY file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*selftest) {
      load(c_self);  // rejects a bad --config early
      SelftestOptions opts;
      opts.include_training = full;
      opts.config_dir = config_dir;
      bool ok = true;
      for (const CheckResult& r : run_selftest(opts)) {
        std::cout << r.line() << std::endl;
        ok = ok && r.passed;
      }
      return ok ? kOk : kFailed;
    }
    if (*gen) {
      const RunConfig cfg = load(c_tok);
      const Dataset data = make_dataset(cfg);
      write_token_file(data.tokens, tok_out);
      if (!gt_out.empty()) write_voxel_file(data.gt, gt_out);
      return kOk;
    }
    if (*train_cmd) {
      RunConfig cfg = load(c_train);
      const Dataset data = make_dataset(cfg);
      TrainState state = init_train_state(cfg);
      if (!resume.empty()) {
        state = read_checkpoint(resume);
        check_compatible(state, cfg);
      }
      const std::uint64_t stop = until ? std::min<std::uint64_t>(*until, cfg.optim.steps) : cfg.optim.steps;
      std::ofstream log_file;
      if (!log_path.empty()) {
        log_file.open(log_path, std::ios::binary | (resume.empty() ? std::ios::trunc : std::ios::app));
        if (!log_file) throw IoError("cannot open " + log_path + " for writing");
      }
      try {
        while (state.step < stop) {
          const std::string line = train_step(cfg, data, state).line();
          if (!quiet) std::cout << line << std::endl;
          if (log_file.is_open()) log_file << line << '\n';
        }
      } catch (const NumericError& e) {
        std::cerr << "vg3s train: " << e.what() << std::endl;
        return kFailed;
      }
      write_checkpoint(state, ckpt_out);
      return kOk;
    }
    if (*eval) {
      const RunConfig cfg = load(c_eval);
      const Dataset data = make_dataset(cfg);
      TrainState state = init_train_state(cfg);
      if (!eval_ckpt.empty()) {
        state = read_checkpoint(eval_ckpt);
        check_compatible(state, cfg);
      }
      GaussianSet decoded;
      const EvalReport report = evaluate(cfg, data, state.params, &decoded);
      std::cout << report.text();
      if (!report_path.empty()) write_text(report_path, report.text());
      if (!gau_out.empty()) write_gaussian_file(decoded, gau_out);
      if (!pred_out.empty()) write_voxel_file(labels_from(splat(decoded, cfg.grid, cfg.splat), cfg.threshold), pred_out);
      return kOk;
    }
    if (*splat_cmd) {
      const RunConfig cfg = load(c_splat);
      const GaussianSet set = read_gaussian_file(splat_in);
      if (set.num_classes != cfg.num_classes) {
        throw ConfigError("Gaussian file has " + std::to_string(set.num_classes) + " classes but classes = " +
                          std::to_string(cfg.num_classes));
      }
      write_voxel_file(labels_from(splat(set, cfg.grid, cfg.splat), cfg.threshold), splat_out);
      return kOk;
    }
    if (*ply) {
      load(c_ply);
      write_ply(read_voxel_file(ply_in), ply_out);
      return kOk;
    }
  } catch (const IoError& e) {
    std::cerr << "vg3s: " << e.what() << std::endl;
    return kIo;
  } catch (const ConfigError& e) {
    std::cerr << "vg3s: " << e.what() << std::endl;
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "vg3s: " << e.what() << std::endl;
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "vg3s: " << e.what() << std::endl;
    return kFailed;
  }
  return kUsage;
}
