#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "voxreg/field.hpp"
#include "voxreg/volume.hpp"

namespace voxreg {

/// Integer label map (0 = background), x-fastest.
struct LabelVolume {
  GridGeometry geometry;
  std::vector<std::int32_t> labels;

  LabelVolume() = default;
  explicit LabelVolume(const GridGeometry& g, std::int32_t fill = 0);
  /// Throws ConfigError on size mismatch or negative labels.
  LabelVolume(const GridGeometry& g, std::vector<std::int32_t> values);

  std::int32_t operator()(int i, int j, int k) const { return labels[geometry.index(i, j, k)]; }
  std::int32_t& operator()(int i, int j, int k) { return labels[geometry.index(i, j, k)]; }

  /// Sorted distinct non-zero labels.
  std::vector<std::int32_t> inventory() const;
};

struct DiceResult {
  std::map<std::int32_t, double> per_label;
  double mean = 0.0;
};

/// Dice per label present in either volume; a label present in only one
/// scores 0. The mean is 0 when no foreground label exists.
DiceResult dice(const LabelVolume& a, const LabelVolume& b);

/// Nearest-neighbour pullback: out(x) = seg[round(clamp(x + u(x)))].
LabelVolume warp_labels(const LabelVolume& seg, const DisplacementField& u);

struct JacobianStats {
  double sdlogj = 0.0;
  double folding_pct = 0.0;
  // Determinants over the interior, x-fastest over (nx-2)(ny-2)(nz-2).
  std::vector<double> determinants;
};

/// det(I + grad u) by central differences on the interior (1-voxel border
/// excluded). folding = 100 * #{det <= 0} / #interior; sdlogj is the
/// population standard deviation of log(max(det, 1e-6)).
JacobianStats jacobian_stats(const DisplacementField& u);

struct MetricsReport {
  std::map<std::int32_t, double> dice_per_label;
  double dice_mean = 0.0;
  double sdlogj = 0.0;
  double folding_pct = 0.0;
  int evaluated_label_count = 0;
};

MetricsReport evaluate(const LabelVolume& warped_seg, const LabelVolume& fixed_seg,
                       const DisplacementField& u);

std::string to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

}  // namespace voxreg
