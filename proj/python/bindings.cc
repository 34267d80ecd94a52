#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rmvs/evaluation.h"
#include "rmvs/fusion.h"
#include "rmvs/geometry.h"
#include "rmvs/loss.h"
#include "rmvs/sweep.h"
#include "rmvs/synth.h"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

rmvs::Image ToImage(const DoubleArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("image must be HxW or HxWxC");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  return rmvs::Image(w, h, c, std::vector<double>(a.data(), a.data() + a.size()));
}

rmvs::DepthMap ToDepth(const DoubleArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("depth map must be HxW");
  return rmvs::DepthMap(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                        std::vector<double>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> FromGrid(const rmvs::Grid<T>& g) {
  std::vector<py::ssize_t> shape = {g.height(), g.width()};
  if (g.channels() > 1) shape.push_back(g.channels());
  py::array_t<T> out(shape);
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

std::vector<rmvs::View> ToViews(const std::vector<std::pair<DoubleArray, rmvs::Camera>>& views) {
  std::vector<rmvs::View> out;
  for (const auto& [img, cam] : views) out.push_back({ToImage(img), cam});
  return out;
}

py::dict TermDict(const rmvs::LossTerm& t) {
  py::dict d;
  d["value"] = t.value;
  d["sum"] = t.sum;
  d["count"] = t.count;
  d["no_signal"] = t.no_signal;
  return d;
}

py::array_t<double> PointsArray(const std::vector<Eigen::Vector3d>& pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  double* p = out.mutable_data();
  for (const auto& v : pts) {
    *p++ = v.x();
    *p++ = v.y();
    *p++ = v.z();
  }
  return out;
}

rmvs::PointCloud ToCloud(const DoubleArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument("points must be Nx3");
  rmvs::PointCloud cloud;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    cloud.Add({a.at(i, 0), a.at(i, 1), a.at(i, 2)}, {0, 0, 0}, 0);
  }
  return cloud;
}

py::dict CloudDict(const rmvs::PointCloud& c) {
  py::dict d;
  d["points"] = PointsArray(c.points);
  py::array_t<uint8_t> colors({static_cast<py::ssize_t>(c.size()), py::ssize_t{3}});
  uint8_t* p = colors.mutable_data();
  for (const auto& col : c.colors) {
    for (uint8_t v : col) *p++ = v;
  }
  d["colors"] = colors;
  py::array_t<uint8_t> support(static_cast<py::ssize_t>(c.size()));
  std::copy(c.support.begin(), c.support.end(), support.mutable_data());
  d["support"] = support;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robust multi-view stereo core";

  py::class_<rmvs::Camera>(m, "Camera")
      .def(py::init<>())
      .def(py::init([](const Eigen::Matrix3d& K, const Eigen::Matrix4d& T, double dmin,
                       double dmax, int width, int height) {
             rmvs::Camera c;
             c.K = K;
             c.T = T;
             c.depth_min = dmin;
             c.depth_max = dmax;
             c.width = width;
             c.height = height;
             c.Validate();
             return c;
           }),
           py::arg("K"), py::arg("T"), py::arg("depth_min"), py::arg("depth_max"),
           py::arg("width"), py::arg("height"))
      .def_readwrite("K", &rmvs::Camera::K)
      .def_readwrite("T", &rmvs::Camera::T)
      .def_readwrite("depth_min", &rmvs::Camera::depth_min)
      .def_readwrite("depth_max", &rmvs::Camera::depth_max)
      .def_readwrite("width", &rmvs::Camera::width)
      .def_readwrite("height", &rmvs::Camera::height)
      .def("validate", &rmvs::Camera::Validate)
      .def("center", &rmvs::Camera::Center);

  py::class_<rmvs::LossConfig>(m, "LossConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &rmvs::LossConfig::alpha)
      .def_readwrite("beta", &rmvs::LossConfig::beta)
      .def_readwrite("gamma", &rmvs::LossConfig::gamma)
      .def_readwrite("num_views", &rmvs::LossConfig::num_views)
      .def_readwrite("top_k", &rmvs::LossConfig::top_k)
      .def_readwrite("huber_delta", &rmvs::LossConfig::huber_delta)
      .def_readwrite("ssim_window", &rmvs::LossConfig::ssim_window)
      .def_property(
          "cost",
          [](const rmvs::LossConfig& c) {
            return c.cost == rmvs::PhotometricCost::kFirstOrder ? "first_order" : "naive";
          },
          [](rmvs::LossConfig& c, const std::string& v) {
            if (v == "first_order") c.cost = rmvs::PhotometricCost::kFirstOrder;
            else if (v == "naive") c.cost = rmvs::PhotometricCost::kNaive;
            else throw std::invalid_argument("cost must be 'first_order' or 'naive'");
          });

  py::class_<rmvs::FusionConfig>(m, "FusionConfig")
      .def(py::init<>())
      .def_readwrite("depth_tolerance", &rmvs::FusionConfig::depth_tolerance)
      .def_readwrite("reprojection_tolerance", &rmvs::FusionConfig::reprojection_tolerance)
      .def_readwrite("min_consistent_views", &rmvs::FusionConfig::min_consistent_views);

  py::class_<rmvs::Scene>(m, "Scene")
      .def_readonly("cameras", &rmvs::Scene::cameras)
      .def_readonly("seed", &rmvs::Scene::seed);

  m.def("relative_transform", &rmvs::RelativeTransform, py::arg("cam_src"), py::arg("cam_view"));
  m.def(
      "warp_pixel",
      [](double x, double y, double depth, const rmvs::Camera& src, const rmvs::Camera& view) {
        const rmvs::PixelCoord p = rmvs::WarpPixel({x, y, true}, depth, src, view);
        return py::make_tuple(p.x, p.y, p.valid);
      },
      py::arg("x"), py::arg("y"), py::arg("depth"), py::arg("cam_src"), py::arg("cam_view"));
  m.def("homography_for_depth", &rmvs::HomographyForDepth, py::arg("cam_src"),
        py::arg("cam_view"), py::arg("depth"));

  m.def(
      "robust_topk_loss",
      [](const DoubleArray& loss, const ByteArray& valid, int k) {
        if (loss.ndim() != 3 || valid.ndim() != 3 || loss.size() != valid.size()) {
          throw std::invalid_argument("loss and valid must both be HxWxM");
        }
        rmvs::LossVolume vol(static_cast<int>(loss.shape(1)), static_cast<int>(loss.shape(0)),
                             static_cast<int>(loss.shape(2)));
        vol.loss.assign(loss.data(), loss.data() + loss.size());
        vol.valid.assign(valid.data(), valid.data() + valid.size());
        for (size_t i = 0; i < vol.loss.size(); ++i) {
          if (!vol.valid[i]) vol.loss[i] = 0.0;
        }
        const rmvs::TopKResult r = rmvs::RobustTopKLoss(vol, k);
        py::array_t<uint8_t> sel({loss.shape(0), loss.shape(1), loss.shape(2)});
        std::copy(r.selection.begin(), r.selection.end(), sel.mutable_data());
        py::dict d = TermDict(r.term);
        d["selection"] = sel;
        return d;
      },
      py::arg("loss"), py::arg("valid"), py::arg("k"));

  m.def(
      "total_loss",
      [](const DoubleArray& img, const rmvs::Camera& cam,
         const std::vector<std::pair<DoubleArray, rmvs::Camera>>& views,
         const DoubleArray& depth, const rmvs::LossConfig& cfg) {
        const auto v = ToViews(views);
        const rmvs::LossBreakdown b = rmvs::TotalLoss(ToImage(img), cam, v, ToDepth(depth), cfg);
        py::dict d;
        d["photo"] = TermDict(b.photo);
        d["ssim"] = TermDict(b.ssim);
        d["smooth"] = TermDict(b.smooth);
        d["total"] = b.total;
        return d;
      },
      py::arg("image"), py::arg("camera"), py::arg("views"), py::arg("depth"),
      py::arg("cfg") = rmvs::LossConfig{});

  m.def(
      "loss_gradient",
      [](const DoubleArray& img, const rmvs::Camera& cam,
         const std::vector<std::pair<DoubleArray, rmvs::Camera>>& views,
         const DoubleArray& depth, const rmvs::LossConfig& cfg) {
        const auto v = ToViews(views);
        return FromGrid(rmvs::LossGradient(ToImage(img), cam, v, ToDepth(depth), cfg));
      },
      py::arg("image"), py::arg("camera"), py::arg("views"), py::arg("depth"),
      py::arg("cfg") = rmvs::LossConfig{});

  m.def(
      "select_views",
      [](const std::vector<rmvs::Camera>& cams, int reference, int n, double angle) {
        const rmvs::ViewSelection s = rmvs::SelectViews(cams, reference, n, angle);
        return py::make_tuple(s.views, s.truncated);
      },
      py::arg("cameras"), py::arg("reference"), py::arg("n"), py::arg("target_angle_deg") = 10.0);

  m.def(
      "build_cost_volume",
      [](const DoubleArray& ref, const rmvs::Camera& cam,
         const std::vector<std::pair<DoubleArray, rmvs::Camera>>& views,
         const std::vector<double>& hypotheses, const rmvs::LossConfig& cfg,
         const std::string& aggregation, int window) {
        rmvs::SweepOptions opt;
        opt.num_depths = static_cast<int>(hypotheses.size());
        if (aggregation == "topk") opt.aggregation = rmvs::Aggregation::kTopK;
        else if (aggregation == "variance") opt.aggregation = rmvs::Aggregation::kVariance;
        else throw std::invalid_argument("aggregation must be 'topk' or 'variance'");
        opt.window = window;
        const auto v = ToViews(views);
        const rmvs::CostVolume vol = rmvs::BuildCostVolume(ToImage(ref), cam, v, hypotheses, cfg, opt);
        py::array_t<double> out({static_cast<py::ssize_t>(vol.height),
                                 static_cast<py::ssize_t>(vol.width),
                                 static_cast<py::ssize_t>(vol.num_depths())});
        std::copy(vol.cost.begin(), vol.cost.end(), out.mutable_data());
        return out;
      },
      py::arg("ref"), py::arg("camera"), py::arg("views"), py::arg("hypotheses"),
      py::arg("cfg") = rmvs::LossConfig{}, py::arg("aggregation") = "topk",
      py::arg("window") = 1);

  m.def(
      "soft_argmin_depth",
      [](const DoubleArray& cost, const std::vector<double>& depths, double temperature) {
        if (cost.ndim() != 3 || cost.shape(2) != static_cast<py::ssize_t>(depths.size())) {
          throw std::invalid_argument("cost must be HxWxD with D = len(depths)");
        }
        rmvs::CostVolume vol;
        vol.height = static_cast<int>(cost.shape(0));
        vol.width = static_cast<int>(cost.shape(1));
        vol.depths = depths;
        vol.cost.assign(cost.data(), cost.data() + cost.size());
        const rmvs::SoftArgminResult r = rmvs::SoftArgminDepth(vol, temperature);
        py::array_t<double> prob({cost.shape(0), cost.shape(1), cost.shape(2)});
        std::copy(r.probability.prob.begin(), r.probability.prob.end(), prob.mutable_data());
        return py::make_tuple(FromGrid<double>(r.depth), prob);
      },
      py::arg("cost"), py::arg("depths"), py::arg("temperature"));

  m.def(
      "confidence_map",
      [](const DoubleArray& prob, const std::vector<double>& depths, const DoubleArray& depth,
         double threshold) {
        rmvs::ProbabilityVolume p;
        p.height = static_cast<int>(prob.shape(0));
        p.width = static_cast<int>(prob.shape(1));
        p.depths = depths;
        p.prob.assign(prob.data(), prob.data() + prob.size());
        const rmvs::ConfidenceMap c = rmvs::ComputeConfidence(p, ToDepth(depth), threshold);
        return py::make_tuple(FromGrid(c.confidence), FromGrid<uint8_t>(c.filtered));
      },
      py::arg("prob"), py::arg("depths"), py::arg("depth"), py::arg("threshold") = 0.8);

  m.def(
      "backproject",
      [](const DoubleArray& depth, const rmvs::Camera& cam, const DoubleArray& image) {
        return CloudDict(rmvs::Backproject(ToDepth(depth), cam, ToImage(image)));
      },
      py::arg("depth"), py::arg("camera"), py::arg("image"));

  m.def(
      "fuse",
      [](const py::list& views, const rmvs::FusionConfig& cfg) {
        std::vector<rmvs::FusionView> fv;
        for (const py::handle& item : views) {
          const py::tuple t = item.cast<py::tuple>();
          rmvs::FusionView v;
          v.camera = t[0].cast<rmvs::Camera>();
          v.image = ToImage(t[1].cast<DoubleArray>());
          v.depth = ToDepth(t[2].cast<DoubleArray>());
          if (t.size() > 3 && !t[3].is_none()) {
            const ByteArray f = t[3].cast<ByteArray>();
            v.filtered = rmvs::ValidityMask(v.depth.width(), v.depth.height());
            std::copy(f.data(), f.data() + f.size(), v.filtered.vec().begin());
          }
          fv.push_back(std::move(v));
        }
        const rmvs::FusionResult r = rmvs::Fuse(fv, cfg);
        py::dict d = CloudDict(r.cloud);
        py::list status;
        for (const auto& s : r.status) status.append(FromGrid<uint8_t>(s));
        d["status"] = status;
        return d;
      },
      py::arg("views"), py::arg("cfg") = rmvs::FusionConfig{},
      "views: list of (camera, image, depth[, filtered]) tuples");

  m.def(
      "cloud_distance_metrics",
      [](const DoubleArray& recon, const DoubleArray& ref, const std::vector<double>& thresholds) {
        const rmvs::CloudMetrics c =
            rmvs::CloudDistanceMetrics(ToCloud(recon), ToCloud(ref), thresholds);
        py::dict d;
        d["accuracy_mean"] = c.accuracy_mean;
        d["accuracy_median"] = c.accuracy_median;
        d["completeness_mean"] = c.completeness_mean;
        d["completeness_median"] = c.completeness_median;
        d["overall"] = c.overall;
        py::list per;
        for (const auto& t : c.thresholds) {
          py::dict e;
          e["threshold"] = t.threshold;
          e["precision"] = t.precision;
          e["recall"] = t.recall;
          e["f_score"] = t.f_score;
          per.append(e);
        }
        d["thresholds"] = per;
        return d;
      },
      py::arg("reconstruction"), py::arg("reference"),
      py::arg("thresholds") = std::vector<double>{1.0, 2.0, 3.0});

  m.def(
      "depth_validation_metrics",
      [](const DoubleArray& pred, const DoubleArray& truth) {
        const rmvs::DepthValidation v = rmvs::DepthValidationMetrics(ToDepth(pred), ToDepth(truth));
        py::dict d;
        d["l1"] = v.l1;
        d["within_1"] = v.within_1;
        d["within_3"] = v.within_3;
        d["within_3_percent"] = v.within_3_percent;
        d["evaluated"] = v.evaluated;
        return d;
      },
      py::arg("predicted"), py::arg("truth"));

  m.def(
      "make_scene",
      [](const std::string& kind, uint64_t seed) {
        return rmvs::MakeAblationScene(rmvs::ParseSceneKind(kind), seed);
      },
      py::arg("kind"), py::arg("seed") = 0);

  m.def(
      "render",
      [](const rmvs::Scene& scene, int view) {
        const rmvs::Render r = rmvs::RenderView(scene, view);
        py::list labels;
        for (const auto& l : r.labels) labels.append(FromGrid<uint8_t>(l));
        return py::make_tuple(FromGrid<double>(r.image), FromGrid<double>(r.depth), labels);
      },
      py::arg("scene"), py::arg("view"));
}
