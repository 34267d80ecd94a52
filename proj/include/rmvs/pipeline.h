#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmvs/evaluation.h"
#include "rmvs/fusion.h"
#include "rmvs/geometry.h"
#include "rmvs/image.h"
#include "rmvs/loss.h"
#include "rmvs/sweep.h"

namespace rmvs {

struct PipelineConfig {
  std::string scene_dir;
  std::string output_dir;  // defaults to scene_dir
  LossConfig loss;
  FusionConfig fusion;

  int num_depths = 128;
  // Soft-argmin temperature; <= 0 selects temperature_scale times the median
  // positive cost of each volume.
  double temperature = 0.0;
  double temperature_scale = 0.05;
  Aggregation aggregation = Aggregation::kTopK;
  int window = 1;
  double confidence_threshold = 0.8;
  double view_angle = 10.0;  // target triangulation angle, degrees
  int refine_steps = 0;
  double refine_step_size = 1.0;
  // Hypothesis count used to read depth_max from camera files.
  int camera_depth_count = 128;

  int threads = 0;
  uint64_t seed = 0;
  std::string scene_kind = "textured_plane";
  bool ascii_ply = false;
  std::vector<double> eval_thresholds = {1.0, 2.0, 3.0};

  // Throws std::invalid_argument naming the offending key.
  void Validate() const;
};

// Sets one configuration key from its text form. Unknown keys throw.
void SetConfigValue(PipelineConfig& cfg, const std::string& key,
                    const std::string& value);
// Flat "key = value" lines; '#' starts a comment.
void LoadConfigFile(PipelineConfig& cfg, const std::string& path);
std::string FormatConfig(const PipelineConfig& cfg);

struct SceneData {
  std::vector<std::string> names;  // view file stems, sorted
  std::vector<Image> images;
  std::vector<Camera> cameras;
};

// Reads images/<name>.png and cams/<name>_cam.txt for every image.
SceneData LoadSceneDirectory(const std::string& dir, int camera_depth_count);

struct DepthEstimate {
  DepthMap depth;
  Grid<double> confidence;
  ValidityMask filtered;
  std::vector<int> views;  // selected source views, best first
  double temperature = 0.0;
  LossBreakdown loss;
};

DepthEstimate EstimateDepth(const SceneData& scene, int reference,
                            const PipelineConfig& cfg);

// Subcommands. Each validates the configuration before writing anything and
// writes files atomically.
void RunSynth(const PipelineConfig& cfg);
void RunDepth(const PipelineConfig& cfg);
FusionResult RunFuse(const PipelineConfig& cfg);
CloudMetrics RunEval(const PipelineConfig& cfg, const std::string& reconstruction,
                     const std::string& reference);

struct AblationRow {
  std::string name;
  int top_k = 0;
  PhotometricCost cost = PhotometricCost::kFirstOrder;
  Aggregation aggregation = Aggregation::kTopK;
  DepthValidation metrics;
};

struct AblationReport {
  int reference = 0;
  std::vector<AblationRow> rows;
  // Selections per view rank of the K = M/2 first-order run.
  std::vector<int64_t> selection_histogram;
};

AblationReport RunAblation(const PipelineConfig& cfg);
std::string FormatAblationReport(const AblationReport& report);

struct GradientCheckReport {
  int checked = 0;
  int skipped = 0;
  double max_relative_error = 0.0;
  double max_abs_gradient = 0.0;
};

// Compares LossGradient with central differences of TotalLoss on a rendered
// scene at a perturbed depth.
GradientCheckReport RunGradientCheck(const PipelineConfig& cfg,
                                     int num_pixels = 100, double step = 1e-3);

}  // namespace rmvs
