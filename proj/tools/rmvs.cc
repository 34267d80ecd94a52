// rmvs: synthetic scenes, plane-sweep depth, fusion and evaluation.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rmvs/evaluation.h"
#include "rmvs/pipeline.h"

namespace {

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string scene;
  std::string output;
  int threads = -1;
  long long seed = -1;
};

void AddCommon(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_file, "key = value configuration file");
  cmd->add_option("-s,--set", args.overrides, "override a configuration key (key=value)");
  cmd->add_option("--scene", args.scene, "scene directory");
  cmd->add_option("-o,--output", args.output, "output directory (defaults to the scene)");
  cmd->add_option("-j,--threads", args.threads, "worker threads (0 = all cores)");
  cmd->add_option("--seed", args.seed, "random seed");
}

rmvs::PipelineConfig BuildConfig(const CommonArgs& args) {
  rmvs::PipelineConfig cfg;
  if (!args.config_file.empty()) rmvs::LoadConfigFile(cfg, args.config_file);
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    }
    rmvs::SetConfigValue(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.scene.empty()) cfg.scene_dir = args.scene;
  if (!args.output.empty()) cfg.output_dir = args.output;
  if (args.threads >= 0) cfg.threads = args.threads;
  if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust multi-view stereo toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args, depth_args, fuse_args, eval_args, ablate_args, grad_args;
  std::string kind;
  auto* synth = app.add_subcommand("synth", "render a synthetic scene directory");
  AddCommon(synth, synth_args);
  synth->add_option("--kind", kind,
                    "textured_plane | lighting_shift | occlusion | textureless_patch");

  auto* depth = app.add_subcommand("depth", "estimate a depth map for every view");
  AddCommon(depth, depth_args);

  auto* fuse = app.add_subcommand("fuse", "fuse depth maps into a point cloud");
  AddCommon(fuse, fuse_args);

  std::string reconstruction, reference;
  auto* eval = app.add_subcommand("eval", "compare a reconstruction with a reference cloud");
  AddCommon(eval, eval_args);
  eval->add_option("--reconstruction", reconstruction, "PLY to evaluate (default <output>/fused.ply)");
  eval->add_option("--reference", reference, "reference PLY (default <scene>/gt_cloud.ply)");

  auto* ablate = app.add_subcommand("ablate", "K sweep and cost ablation on view 0");
  AddCommon(ablate, ablate_args);

  int grad_pixels = 100;
  double grad_step = 1e-3;
  auto* grad = app.add_subcommand("check-gradients",
                                  "compare the analytic loss gradient with finite differences");
  AddCommon(grad, grad_args);
  grad->add_option("--pixels", grad_pixels, "number of pixels to check");
  grad->add_option("--step", grad_step, "finite-difference step in depth units");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) {
      rmvs::PipelineConfig cfg = BuildConfig(synth_args);
      if (!kind.empty()) cfg.scene_kind = kind;
      rmvs::RunSynth(cfg);
    } else if (depth->parsed()) {
      rmvs::RunDepth(BuildConfig(depth_args));
    } else if (fuse->parsed()) {
      const rmvs::FusionResult r = rmvs::RunFuse(BuildConfig(fuse_args));
      std::cout << rmvs::FormatFusionStats(r);
    } else if (eval->parsed()) {
      const rmvs::CloudMetrics m = rmvs::RunEval(BuildConfig(eval_args), reconstruction, reference);
      std::cout << rmvs::FormatCloudMetrics(m);
    } else if (ablate->parsed()) {
      std::cout << rmvs::FormatAblationReport(rmvs::RunAblation(BuildConfig(ablate_args)));
    } else if (grad->parsed()) {
      const rmvs::GradientCheckReport r =
          rmvs::RunGradientCheck(BuildConfig(grad_args), grad_pixels, grad_step);
      std::cout << "checked " << r.checked << "\nskipped " << r.skipped
                << "\nmax_abs_gradient " << r.max_abs_gradient
                << "\nmax_relative_error " << r.max_relative_error << "\n";
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
