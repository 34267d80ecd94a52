#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rmvs/geometry.h"
#include "rmvs/image.h"

namespace rmvs {

// Per-view matching cost used to fill the loss volume.
enum class PhotometricCost {
  kFirstOrder,  // Huber intensity difference + absolute gradient differences
  kNaive,       // absolute intensity difference
};

struct LossConfig {
  double alpha = 0.8;    // photometric weight
  double beta = 0.2;     // SSIM weight
  double gamma = 0.0067; // smoothness weight
  int num_views = 6;     // M, views entering the loss volume
  int top_k = 3;         // K, per-pixel selections out of M
  double huber_delta = 0.2;
  int ssim_window = 3;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  PhotometricCost cost = PhotometricCost::kFirstOrder;

  void Validate() const;
};

// A normalized loss term. `value` is what enters the weighted total; `sum` is
// the raw sum of contributions and `count` the number of contributions.
struct LossTerm {
  double value = 0.0;
  double sum = 0.0;
  int64_t count = 0;
  bool no_signal = true;
};

// H x W x M stack of per-view per-pixel losses; entry (x, y, m) is stored at
// (y * width + x) * num_views + m. Invalid entries hold loss 0.
struct LossVolume {
  int width = 0;
  int height = 0;
  int num_views = 0;
  std::vector<double> loss;
  std::vector<uint8_t> valid;

  LossVolume() = default;
  LossVolume(int width, int height, int num_views);

  size_t index(int x, int y, int m) const {
    return (static_cast<size_t>(y) * width + x) * num_views + m;
  }
  // Copies one per-view loss map into slice m; entries are zeroed where the
  // mask is 0.
  void SetView(int m, const Grid<double>& map, const ValidityMask& mask);
};

struct TopKResult {
  // sum = sum of selected entries; count = pixels with at least one valid
  // view; value = sum / count.
  LossTerm term;
  // Same layout as LossVolume::loss, 1 where the entry was selected.
  std::vector<uint8_t> selection;
};

double Huber(double r, double delta);

// Sum over views of the masked mean absolute difference (channel mean).
LossTerm NaivePhotometricLoss(const Image& img_src,
                              std::span<const WarpedImage> warped);

// Per-pixel Huber(I_s - I_w) + |dx I_s - dx I_w| + |dy I_s - dy I_w|,
// averaged over channels and multiplied by the mask.
Grid<double> FirstOrderLossMap(const Image& img_src, const Image& warped_img,
                               const ValidityMask& mask, const LossConfig& cfg);
Grid<double> NaiveLossMap(const Image& img_src, const Image& warped_img,
                          const ValidityMask& mask);

// Per pixel, sums the K smallest valid entries (all of them when fewer than
// K are valid). Ties go to the lower view index.
TopKResult RobustTopKLoss(const LossVolume& volume, int k);

// SSIM over two equally sized windows using population statistics.
double Ssim(std::span<const double> x, std::span<const double> y, double c1,
            double c2);

// Masked mean of 1 - SSIM over the supplied views (one or two). A window
// contributes only when it lies inside the image and all of its pixels are
// valid in the view's mask.
LossTerm SsimLoss(const Image& img_src, std::span<const WarpedImage> warped,
                  const LossConfig& cfg);

// mean_x |dx D| exp(-|dx I|) + mean_y |dy D| exp(-|dy I|), with forward
// differences over pairs of valid depths and channel-mean image gradients.
LossTerm SmoothnessLoss(const DepthMap& depth, const Image& img);

struct View {
  Image image;
  Camera camera;
};

struct LossBreakdown {
  LossTerm photo;
  LossTerm ssim;
  LossTerm smooth;
  double total = 0.0;
  LossVolume volume;
  TopKResult topk;
};

// alpha * photo + beta * SSIM + gamma * smoothness. `views` must be ordered
// by rank; the first two feed the SSIM term.
LossBreakdown TotalLoss(const Image& img_src, const Camera& cam_src,
                        std::span<const View> views, const DepthMap& depth,
                        const LossConfig& cfg);

// Analytic d(total)/d(depth) per pixel. The top-K selection, validity masks
// and normalizers are frozen at `depth`, and |.| has zero slope at 0.
Grid<double> LossGradient(const Image& img_src, const Camera& cam_src,
                          std::span<const View> views, const DepthMap& depth,
                          const LossConfig& cfg);

// Histogram over view ranks of how often each view was selected.
// ranking[m] is the rank of view m.
std::vector<int64_t> TopKSelectionFrequency(
    std::span<const std::vector<uint8_t>> selections, int num_views,
    std::span<const int> ranking);

// Flat key-value report: <term>.sum, <term>.mean, <term>.count,
// <term>.no_signal for each term plus total.
std::string FormatLossReport(const LossBreakdown& breakdown);

}  // namespace rmvs
