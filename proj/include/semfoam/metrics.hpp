#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace semfoam {

/// K x K counts, rows = ground truth, columns = prediction.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<int64_t> counts;

  explicit ConfusionMatrix(int k = 0)
      : num_classes(k), counts(static_cast<size_t>(k) * static_cast<size_t>(k), 0) {}
  int64_t& at(int gt, int pred) { return counts[static_cast<size_t>(gt * num_classes + pred)]; }
  int64_t at(int gt, int pred) const { return counts[static_cast<size_t>(gt * num_classes + pred)]; }
  int64_t total() const;
  /// Adds every pixel whose ground truth is not `ignore_id`.
  void add(std::span<const int> gt, std::span<const int> pred, int ignore_id);
};

struct SegmentationScores {
  double miou = 0.0;
  double macc = 0.0;
};

/// Mean IoU over classes present in ground truth or prediction, mean accuracy
/// over classes present in ground truth. Throws EmptyMatrix when no class has
/// ground-truth pixels.
SegmentationScores miou_macc(const ConfusionMatrix& conf);

/// PSNR in dB of 8-bit quantized renders against 8-bit-exact ground truth,
/// both given as [0, 1] doubles.
double psnr_8bit(std::span<const double> render, std::span<const double> truth);

/// PSNR from an accumulated squared error over `count` values on the 0..255
/// scale divided by 255.
double psnr_from_mse(double mse);

}  // namespace semfoam
