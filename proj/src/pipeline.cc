#include "rmvs/pipeline.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rmvs/image_io.h"
#include "rmvs/parallel.h"
#include "rmvs/ply.h"
#include "rmvs/synth.h"

namespace fs = std::filesystem;

namespace rmvs {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double ParseDouble(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + value + "'");
  }
}

long long ParseInt(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + value + "'");
  }
}

bool ParseBool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + value + "'");
}

std::string CostName(PhotometricCost c) {
  return c == PhotometricCost::kFirstOrder ? "first_order" : "naive";
}

std::string AggregationName(Aggregation a) {
  return a == Aggregation::kTopK ? "topk" : "variance";
}

std::string OutputDir(const PipelineConfig& cfg) {
  return cfg.output_dir.empty() ? cfg.scene_dir : cfg.output_dir;
}

void WriteText(const std::string& path, const std::string& text) {
  WriteFileAtomically(path, [&](const std::string& tmp) {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error(tmp + ": cannot open for writing");
    out << text;
    if (!out) throw std::runtime_error(tmp + ": write failed");
  });
}

void WritePfmAtomic(const std::string& path, const Grid<double>& map) {
  WriteFileAtomically(path, [&](const std::string& tmp) { WritePfm(tmp, map); });
}

std::string ViewName(int i) {
  std::ostringstream s;
  s << std::setw(8) << std::setfill('0') << i;
  return s.str();
}

std::vector<View> GatherViews(const SceneData& scene, std::span<const int> ids) {
  std::vector<View> views;
  for (int v : ids) views.push_back({scene.images[v], scene.cameras[v]});
  return views;
}

DepthMap LoadTruth(const PipelineConfig& cfg, const std::string& name) {
  const std::string path = cfg.scene_dir + "/depths_gt/" + name + ".pfm";
  if (!fs::exists(path)) {
    throw std::runtime_error(path + ": ground-truth depth not found");
  }
  const Grid<double> g = ReadPfm(path);
  return DepthMap(g.width(), g.height(), g.vec());
}

void RequireSceneDir(const PipelineConfig& cfg) {
  if (cfg.scene_dir.empty()) throw std::invalid_argument("config: scene directory not set");
  if (!fs::is_directory(cfg.scene_dir)) {
    throw std::invalid_argument("config: scene directory '" + cfg.scene_dir + "' does not exist");
  }
}

}  // namespace

void PipelineConfig::Validate() const {
  loss.Validate();
  fusion.Validate();
  if (num_depths < 2) throw std::invalid_argument("config: num_depths must be >= 2");
  if (!std::isfinite(temperature)) throw std::invalid_argument("config: temperature must be finite");
  if (!(temperature_scale > 0.0)) {
    throw std::invalid_argument("config: temperature_scale must be positive");
  }
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("config: window must be odd and >= 1");
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
    throw std::invalid_argument("config: confidence_threshold must lie in [0, 1]");
  }
  if (refine_steps < 0) throw std::invalid_argument("config: refine_steps must be >= 0");
  if (!(refine_step_size > 0.0)) throw std::invalid_argument("config: refine_step_size must be positive");
  if (camera_depth_count < 2) throw std::invalid_argument("config: camera_depth_count must be >= 2");
  if (eval_thresholds.empty()) throw std::invalid_argument("config: thresholds must not be empty");
  for (double t : eval_thresholds) {
    if (!(t > 0.0)) throw std::invalid_argument("config: thresholds must be positive");
  }
  ParseSceneKind(scene_kind);
}

void SetConfigValue(PipelineConfig& cfg, const std::string& raw_key,
                    const std::string& raw_value) {
  const std::string key = Trim(raw_key);
  const std::string value = Trim(raw_value);
  if (key == "scene") cfg.scene_dir = value;
  else if (key == "output") cfg.output_dir = value;
  else if (key == "alpha") cfg.loss.alpha = ParseDouble(key, value);
  else if (key == "beta") cfg.loss.beta = ParseDouble(key, value);
  else if (key == "gamma") cfg.loss.gamma = ParseDouble(key, value);
  else if (key == "num_views") cfg.loss.num_views = ParseInt(key, value);
  else if (key == "top_k") cfg.loss.top_k = ParseInt(key, value);
  else if (key == "huber_delta") cfg.loss.huber_delta = ParseDouble(key, value);
  else if (key == "ssim_window") cfg.loss.ssim_window = ParseInt(key, value);
  else if (key == "cost") {
    if (value == "first_order") cfg.loss.cost = PhotometricCost::kFirstOrder;
    else if (value == "naive") cfg.loss.cost = PhotometricCost::kNaive;
    else throw std::invalid_argument("config: cost must be first_order or naive");
  } else if (key == "num_depths") cfg.num_depths = ParseInt(key, value);
  else if (key == "temperature") cfg.temperature = ParseDouble(key, value);
  else if (key == "temperature_scale") cfg.temperature_scale = ParseDouble(key, value);
  else if (key == "aggregation") {
    if (value == "topk") cfg.aggregation = Aggregation::kTopK;
    else if (value == "variance") cfg.aggregation = Aggregation::kVariance;
    else throw std::invalid_argument("config: aggregation must be topk or variance");
  } else if (key == "window") cfg.window = ParseInt(key, value);
  else if (key == "confidence_threshold") cfg.confidence_threshold = ParseDouble(key, value);
  else if (key == "view_angle") cfg.view_angle = ParseDouble(key, value);
  else if (key == "refine_steps") cfg.refine_steps = ParseInt(key, value);
  else if (key == "refine_step_size") cfg.refine_step_size = ParseDouble(key, value);
  else if (key == "camera_depth_count") cfg.camera_depth_count = ParseInt(key, value);
  else if (key == "depth_tolerance") cfg.fusion.depth_tolerance = ParseDouble(key, value);
  else if (key == "reprojection_tolerance") cfg.fusion.reprojection_tolerance = ParseDouble(key, value);
  else if (key == "min_consistent_views") cfg.fusion.min_consistent_views = ParseInt(key, value);
  else if (key == "threads") cfg.threads = ParseInt(key, value);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(ParseInt(key, value));
  else if (key == "scene_kind") cfg.scene_kind = value;
  else if (key == "ascii_ply") cfg.ascii_ply = ParseBool(key, value);
  else if (key == "thresholds") {
    cfg.eval_thresholds.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) cfg.eval_thresholds.push_back(ParseDouble(key, Trim(item)));
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

void LoadConfigFile(PipelineConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      SetConfigValue(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string FormatConfig(const PipelineConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "scene = " << cfg.scene_dir << "\n"
      << "output = " << cfg.output_dir << "\n"
      << "alpha = " << cfg.loss.alpha << "\n"
      << "beta = " << cfg.loss.beta << "\n"
      << "gamma = " << cfg.loss.gamma << "\n"
      << "num_views = " << cfg.loss.num_views << "\n"
      << "top_k = " << cfg.loss.top_k << "\n"
      << "huber_delta = " << cfg.loss.huber_delta << "\n"
      << "ssim_window = " << cfg.loss.ssim_window << "\n"
      << "cost = " << CostName(cfg.loss.cost) << "\n"
      << "num_depths = " << cfg.num_depths << "\n"
      << "temperature = " << cfg.temperature << "\n"
      << "temperature_scale = " << cfg.temperature_scale << "\n"
      << "aggregation = " << AggregationName(cfg.aggregation) << "\n"
      << "window = " << cfg.window << "\n"
      << "confidence_threshold = " << cfg.confidence_threshold << "\n"
      << "view_angle = " << cfg.view_angle << "\n"
      << "refine_steps = " << cfg.refine_steps << "\n"
      << "refine_step_size = " << cfg.refine_step_size << "\n"
      << "camera_depth_count = " << cfg.camera_depth_count << "\n"
      << "depth_tolerance = " << cfg.fusion.depth_tolerance << "\n"
      << "reprojection_tolerance = " << cfg.fusion.reprojection_tolerance << "\n"
      << "min_consistent_views = " << cfg.fusion.min_consistent_views << "\n"
      << "threads = " << cfg.threads << "\n"
      << "seed = " << cfg.seed << "\n"
      << "scene_kind = " << cfg.scene_kind << "\n"
      << "ascii_ply = " << (cfg.ascii_ply ? "true" : "false") << "\n"
      << "thresholds = ";
  for (size_t i = 0; i < cfg.eval_thresholds.size(); ++i) {
    out << (i ? "," : "") << cfg.eval_thresholds[i];
  }
  out << "\n";
  return out.str();
}

SceneData LoadSceneDirectory(const std::string& dir, int camera_depth_count) {
  const fs::path image_dir = fs::path(dir) / "images";
  if (!fs::is_directory(image_dir)) {
    throw std::runtime_error(image_dir.string() + ": image directory not found");
  }
  SceneData scene;
  for (const auto& entry : fs::directory_iterator(image_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      scene.names.push_back(entry.path().stem().string());
    }
  }
  std::sort(scene.names.begin(), scene.names.end());
  if (scene.names.empty()) throw std::runtime_error(image_dir.string() + ": no PNG images");
  for (const std::string& name : scene.names) {
    const std::string cam_path = (fs::path(dir) / "cams" / (name + "_cam.txt")).string();
    if (!fs::exists(cam_path)) {
      throw std::runtime_error(cam_path + ": camera file missing for view " + name);
    }
    Image img = ReadImagePng((image_dir / (name + ".png")).string());
    scene.cameras.push_back(
        ReadCameraFile(cam_path, img.width(), img.height(), camera_depth_count));
    scene.images.push_back(std::move(img));
  }
  return scene;
}

DepthEstimate EstimateDepth(const SceneData& scene, int reference,
                            const PipelineConfig& cfg) {
  const ViewSelection selection =
      SelectViews(scene.cameras, reference, cfg.loss.num_views, cfg.view_angle);
  if (selection.views.empty()) {
    throw std::invalid_argument("depth: view " + scene.names[reference] + " has no source views");
  }
  LossConfig loss = cfg.loss;
  loss.num_views = static_cast<int>(selection.views.size());
  loss.top_k = std::min(loss.top_k, loss.num_views);
  const std::vector<View> views = GatherViews(scene, selection.views);
  const Image& ref = scene.images[reference];
  const Camera& cam = scene.cameras[reference];

  const std::vector<double> hypotheses =
      UniformDepthHypotheses(cam.depth_min, cam.depth_max, cfg.num_depths);
  SweepOptions options;
  options.num_depths = cfg.num_depths;
  options.aggregation = cfg.aggregation;
  options.window = cfg.window;
  const CostVolume volume = BuildCostVolume(ref, cam, views, hypotheses, loss, options);

  DepthEstimate out;
  out.views = selection.views;
  out.temperature = cfg.temperature > 0.0
                        ? cfg.temperature
                        : cfg.temperature_scale * MedianPositiveCost(volume);
  SoftArgminResult soft = SoftArgminDepth(volume, out.temperature);
  ConfidenceMap conf = ComputeConfidence(soft.probability, soft.depth, cfg.confidence_threshold);
  out.depth = std::move(soft.depth);
  if (cfg.refine_steps > 0) {
    out.depth = RefineDepthDescent(ref, cam, views, out.depth, loss, cfg.refine_steps,
                                   cfg.refine_step_size);
  }
  out.confidence = std::move(conf.confidence);
  out.filtered = std::move(conf.filtered);
  out.loss = TotalLoss(ref, cam, views, out.depth, loss);
  return out;
}

void RunSynth(const PipelineConfig& cfg) {
  cfg.Validate();
  if (cfg.scene_dir.empty()) throw std::invalid_argument("config: scene directory not set");
  SetNumThreads(cfg.threads);
  const Scene scene = MakeAblationScene(ParseSceneKind(cfg.scene_kind), cfg.seed);
  const fs::path root(cfg.scene_dir);
  for (const char* sub : {"images", "cams", "depths_gt", "covis"}) {
    fs::create_directories(root / sub);
  }
  const int n = static_cast<int>(scene.cameras.size());
  for (int i = 0; i < n; ++i) {
    const Render r = RenderView(scene, i);
    const std::string name = ViewName(i);
    WriteFileAtomically((root / "images" / (name + ".png")).string(),
                        [&](const std::string& tmp) { WriteImagePng(tmp, r.image, 16); });
    WriteFileAtomically((root / "cams" / (name + "_cam.txt")).string(),
                        [&](const std::string& tmp) {
                          WriteCameraFile(tmp, scene.cameras[i], cfg.camera_depth_count);
                        });
    WritePfmAtomic((root / "depths_gt" / (name + ".pfm")).string(), r.depth);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      Grid<uint8_t> covisible(r.image.width(), r.image.height(), 1);
      for (size_t p = 0; p < covisible.size(); ++p) {
        covisible.vec()[p] =
            r.labels[j].vec()[p] == static_cast<uint8_t>(Covisibility::kCovisible);
      }
      WriteFileAtomically((root / "covis" / (name + "_" + ViewName(j) + ".png")).string(),
                          [&](const std::string& tmp) { WriteMaskPng(tmp, covisible); });
    }
  }
  PointCloud gt;
  for (const Eigen::Vector3d& p : SampleVisibleSurface(scene)) gt.Add(p, {0, 0, 0}, 0);
  WriteFileAtomically((root / "gt_cloud.ply").string(),
                      [&](const std::string& tmp) { WritePly(tmp, gt, cfg.ascii_ply); });
  std::ostringstream info;
  info << "kind " << cfg.scene_kind << "\nseed " << cfg.seed << "\nviews " << n << "\n";
  WriteText((root / "scene.txt").string(), info.str());
}

void RunDepth(const PipelineConfig& cfg) {
  cfg.Validate();
  RequireSceneDir(cfg);
  SetNumThreads(cfg.threads);
  const SceneData scene = LoadSceneDirectory(cfg.scene_dir, cfg.camera_depth_count);
  if (scene.names.size() < 2) throw std::invalid_argument("depth: need at least two views");
  const fs::path out(OutputDir(cfg));
  for (const char* sub : {"depths", "confidence", "reports"}) fs::create_directories(out / sub);
  for (size_t i = 0; i < scene.names.size(); ++i) {
    const DepthEstimate est = EstimateDepth(scene, static_cast<int>(i), cfg);
    const std::string& name = scene.names[i];
    WritePfmAtomic((out / "depths" / (name + ".pfm")).string(), est.depth);
    WritePfmAtomic((out / "confidence" / (name + ".pfm")).string(), est.confidence);
    std::ostringstream report;
    report.precision(17);
    report << "views";
    for (int v : est.views) report << " " << scene.names[v];
    report << "\ntemperature " << est.temperature << "\n"
           << "filtered " << est.filtered.CountValid() << "\n"
           << FormatLossReport(est.loss);
    WriteText((out / "reports" / (name + "_loss.txt")).string(), report.str());
  }
}

FusionResult RunFuse(const PipelineConfig& cfg) {
  cfg.Validate();
  RequireSceneDir(cfg);
  SetNumThreads(cfg.threads);
  const SceneData scene = LoadSceneDirectory(cfg.scene_dir, cfg.camera_depth_count);
  const fs::path out(OutputDir(cfg));
  std::vector<FusionView> views;
  for (size_t i = 0; i < scene.names.size(); ++i) {
    const std::string depth_path = (out / "depths" / (scene.names[i] + ".pfm")).string();
    if (!fs::exists(depth_path)) continue;
    FusionView v;
    v.camera = scene.cameras[i];
    v.image = scene.images[i];
    const Grid<double> d = ReadPfm(depth_path);
    v.depth = DepthMap(d.width(), d.height(), d.vec());
    const std::string conf_path = (out / "confidence" / (scene.names[i] + ".pfm")).string();
    if (fs::exists(conf_path)) {
      const Grid<double> conf = ReadPfm(conf_path);
      if (!conf.SameShape(v.depth)) throw std::runtime_error(conf_path + ": shape mismatch");
      v.filtered = ValidityMask(conf.width(), conf.height());
      for (size_t p = 0; p < conf.size(); ++p) {
        v.filtered.vec()[p] = conf.vec()[p] < cfg.confidence_threshold;
      }
    }
    views.push_back(std::move(v));
  }
  if (views.empty()) {
    throw std::runtime_error((out / "depths").string() + ": no depth maps found");
  }
  const bool single = views.size() == 1 && cfg.fusion.min_consistent_views == 1;
  if (!single && static_cast<int>(views.size()) < cfg.fusion.min_consistent_views + 1) {
    throw std::invalid_argument("fuse: need at least " +
                                std::to_string(cfg.fusion.min_consistent_views + 1) +
                                " depth maps, found " + std::to_string(views.size()));
  }
  FusionResult result = Fuse(views, cfg.fusion);
  WriteFileAtomically((out / "fused.ply").string(), [&](const std::string& tmp) {
    WritePly(tmp, result.cloud, cfg.ascii_ply);
  });
  WriteText((out / "fusion_stats.txt").string(), FormatFusionStats(result));
  return result;
}

CloudMetrics RunEval(const PipelineConfig& cfg, const std::string& reconstruction,
                     const std::string& reference) {
  cfg.Validate();
  SetNumThreads(cfg.threads);
  const std::string recon_path =
      reconstruction.empty() ? (fs::path(OutputDir(cfg)) / "fused.ply").string() : reconstruction;
  const std::string ref_path =
      reference.empty() ? (fs::path(cfg.scene_dir) / "gt_cloud.ply").string() : reference;
  const PointCloud recon = ReadPly(recon_path);
  const PointCloud ref = ReadPly(ref_path);
  if (recon.empty()) throw std::invalid_argument(recon_path + ": reconstruction cloud is empty");
  if (ref.empty()) throw std::invalid_argument(ref_path + ": reference cloud is empty");
  const CloudMetrics metrics = CloudDistanceMetrics(recon, ref, cfg.eval_thresholds);
  const std::string out_dir = OutputDir(cfg);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    WriteText((fs::path(out_dir) / "eval.txt").string(), FormatCloudMetrics(metrics));
  }
  return metrics;
}

AblationReport RunAblation(const PipelineConfig& cfg) {
  cfg.Validate();
  RequireSceneDir(cfg);
  SetNumThreads(cfg.threads);
  const SceneData scene = LoadSceneDirectory(cfg.scene_dir, cfg.camera_depth_count);
  AblationReport report;
  report.reference = 0;
  const DepthMap truth = LoadTruth(cfg, scene.names[0]);
  const int available = static_cast<int>(scene.names.size()) - 1;
  const int m = std::min(cfg.loss.num_views, available);
  if (m < 1) throw std::invalid_argument("ablate: need at least two views");
  const int half = std::max(1, m / 2);

  std::vector<int> ks = {1, half, m};
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  for (PhotometricCost cost : {PhotometricCost::kNaive, PhotometricCost::kFirstOrder}) {
    for (int k : ks) {
      PipelineConfig run = cfg;
      run.loss.num_views = m;
      run.loss.top_k = k;
      run.loss.cost = cost;
      run.aggregation = Aggregation::kTopK;
      run.refine_steps = 0;
      const DepthEstimate est = EstimateDepth(scene, 0, run);
      AblationRow row;
      row.name = "topk_" + CostName(cost) + "_k" + std::to_string(k);
      row.top_k = k;
      row.cost = cost;
      row.aggregation = Aggregation::kTopK;
      row.metrics = DepthValidationMetrics(est.depth, truth);
      report.rows.push_back(row);
      if (cost == PhotometricCost::kFirstOrder && k == half) {
        std::vector<int> ranking(m);
        for (int i = 0; i < m; ++i) ranking[i] = i;
        const std::vector<uint8_t>& sel = est.loss.topk.selection;
        report.selection_histogram =
            TopKSelectionFrequency(std::span<const std::vector<uint8_t>>(&sel, 1), m, ranking);
      }
    }
  }
  PipelineConfig run = cfg;
  run.loss.num_views = m;
  run.loss.top_k = std::min(cfg.loss.top_k, m);
  run.aggregation = Aggregation::kVariance;
  run.refine_steps = 0;
  const DepthEstimate est = EstimateDepth(scene, 0, run);
  AblationRow row;
  row.name = "variance";
  row.top_k = m;
  row.aggregation = Aggregation::kVariance;
  row.metrics = DepthValidationMetrics(est.depth, truth);
  report.rows.push_back(row);

  const std::string out_dir = OutputDir(cfg);
  fs::create_directories(out_dir);
  WriteText((fs::path(out_dir) / "ablation.txt").string(), FormatAblationReport(report));
  return report;
}

std::string FormatAblationReport(const AblationReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "reference " << report.reference << "\n";
  out << "# name k cost aggregation l1 within_1 within_3 within_3_percent\n";
  for (const AblationRow& r : report.rows) {
    out << r.name << " " << r.top_k << " " << CostName(r.cost) << " "
        << AggregationName(r.aggregation) << " " << r.metrics.l1 << " " << r.metrics.within_1
        << " " << r.metrics.within_3 << " " << r.metrics.within_3_percent << "\n";
  }
  out << "selection_histogram";
  for (int64_t c : report.selection_histogram) out << " " << c;
  out << "\n";
  return out.str();
}

GradientCheckReport RunGradientCheck(const PipelineConfig& cfg, int num_pixels,
                                     double step) {
  cfg.Validate();
  SetNumThreads(cfg.threads);
  const Scene scene = MakeAblationScene(ParseSceneKind(cfg.scene_kind), cfg.seed);
  std::vector<Render> renders;
  for (int i = 0; i < static_cast<int>(scene.cameras.size()); ++i) {
    renders.push_back(RenderView(scene, i));
  }
  const ViewSelection sel = SelectViews(scene.cameras, 0, cfg.loss.num_views, cfg.view_angle);
  LossConfig loss = cfg.loss;
  loss.num_views = static_cast<int>(sel.views.size());
  loss.top_k = std::min(loss.top_k, loss.num_views);
  std::vector<View> views;
  for (int v : sel.views) views.push_back({renders[v].image, scene.cameras[v]});
  const Image& ref = renders[0].image;
  const Camera& cam = scene.cameras[0];
  const int w = cam.width;
  const int h = cam.height;

  // Smooth perturbation far enough from the truth that photometric residuals
  // are not clustered at the kinks of |.|, with neighbor differences bounded
  // away from zero for the smoothness term.
  DepthMap depth = renders[0].depth;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (depth.valid(x, y)) {
        depth(x, y) += 12.0 + 0.05 * x + 0.06 * y + 0.2 * std::sin(x / 7.0) * std::cos(y / 5.0);
      }
    }
  }
  const Grid<double> grad = LossGradient(ref, cam, views, depth, loss);
  const LossBreakdown base = TotalLoss(ref, cam, views, depth, loss);

  std::vector<int> candidates;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      if (depth.valid(x, y)) candidates.push_back(y * w + x);
    }
  }
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);

  std::vector<PixelWarper> warpers;
  for (const View& v : views) warpers.emplace_back(cam, v.camera);

  GradientCheckReport report;
  for (int p : candidates) {
    if (report.checked >= num_pixels) break;
    const int x = p % w;
    const int y = p / w;
    const double d = depth(x, y);
    bool skip = false;
    for (size_t m = 0; m < views.size() && !skip; ++m) {
      if (renders[0].labels[sel.views[m]](x, y) != static_cast<uint8_t>(Covisibility::kCovisible)) {
        skip = true;
        break;
      }
      const ViewProjection lo = warpers[m].Warp(x, y, d - step);
      const ViewProjection hi = warpers[m].Warp(x, y, d + step);
      // The bilinear cell must not change across the finite-difference stencil.
      skip = lo.coord.valid != hi.coord.valid ||
             std::floor(lo.coord.x) != std::floor(hi.coord.x) ||
             std::floor(lo.coord.y) != std::floor(hi.coord.y);
    }
    if (skip) {
      ++report.skipped;
      continue;
    }
    DepthMap plus = depth;
    DepthMap minus = depth;
    plus(x, y) = d + step;
    minus(x, y) = d - step;
    const LossBreakdown lp = TotalLoss(ref, cam, views, plus, loss);
    const LossBreakdown lm = TotalLoss(ref, cam, views, minus, loss);
    if (lp.topk.selection != base.topk.selection || lm.topk.selection != base.topk.selection) {
      ++report.skipped;
      continue;
    }
    const double fd = (lp.total - lm.total) / (2.0 * step);
    const double g = grad(x, y);
    const double scale = std::max(std::abs(fd), std::abs(g));
    const double rel = scale > 0.0 ? std::abs(fd - g) / scale : 0.0;
    report.max_relative_error = std::max(report.max_relative_error, rel);
    report.max_abs_gradient = std::max(report.max_abs_gradient, std::abs(g));
    ++report.checked;
  }
  return report;
}

}  // namespace rmvs
