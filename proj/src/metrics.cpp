#include "semfoam/metrics.hpp"

#include <cmath>
#include <limits>

#include "semfoam/error.hpp"
#include "semfoam/image_io.hpp"

namespace semfoam {

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts) t += c;
  return t;
}

void ConfusionMatrix::add(std::span<const int> gt, std::span<const int> pred, int ignore_id) {
  if (gt.size() != pred.size()) throw FoamError(ErrorCode::ShapeMismatch, "mask sizes differ");
  for (size_t p = 0; p < gt.size(); ++p) {
    if (gt[p] == ignore_id) continue;
    if (gt[p] < 0 || gt[p] >= num_classes || pred[p] < 0 || pred[p] >= num_classes)
      throw FoamError(ErrorCode::InvalidArgument, "class id out of range");
    ++at(gt[p], pred[p]);
  }
}

SegmentationScores miou_macc(const ConfusionMatrix& conf) {
  const int k = conf.num_classes;
  double iou_sum = 0.0, acc_sum = 0.0;
  int iou_n = 0, acc_n = 0;
  for (int c = 0; c < k; ++c) {
    const int64_t tp = conf.at(c, c);
    int64_t fn = 0, fp = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fn += conf.at(c, o);
      fp += conf.at(o, c);
    }
    if (tp + fp + fn > 0) {
      iou_sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
      ++iou_n;
    }
    if (tp + fn > 0) {
      acc_sum += static_cast<double>(tp) / static_cast<double>(tp + fn);
      ++acc_n;
    }
  }
  if (acc_n == 0) throw FoamError(ErrorCode::EmptyMatrix, "no ground-truth pixels");
  return {iou_sum / iou_n, acc_sum / acc_n};
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double psnr_8bit(std::span<const double> render, std::span<const double> truth) {
  if (render.size() != truth.size() || render.empty()) throw FoamError(ErrorCode::ShapeMismatch, "image sizes differ");
  double se = 0.0;
  for (size_t k = 0; k < render.size(); ++k) {
    const double a = quantize(render[k]) / 255.0, b = quantize(truth[k]) / 255.0;
    se += (a - b) * (a - b);
  }
  return psnr_from_mse(se / static_cast<double>(render.size()));
}

}  // namespace semfoam
