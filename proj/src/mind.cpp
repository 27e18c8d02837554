#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "voxreg/error.hpp"
#include "voxreg/features.hpp"

namespace voxreg {

void MindConfig::validate() const {
  if (dilation < 1) throw ConfigError("mind.dilation must be >= 1");
  if (patch_radius < 1) throw ConfigError("mind.patch_radius must be >= 1");
  if (!(lo_factor > 0.0 && lo_factor < 1.0 && hi_factor > 1.0))
    throw ConfigError("mind clamp factors must satisfy 0 < lo < 1 < hi");
}

namespace {

// Six axis-aligned unit offsets and the 12 pairs of them that are edge
// neighbours (orthogonal, squared distance 2).
constexpr std::array<std::array<int, 3>, 6> kSix{{
    {{-1, 0, 0}}, {{1, 0, 0}}, {{0, -1, 0}}, {{0, 1, 0}}, {{0, 0, -1}}, {{0, 0, 1}},
}};

std::vector<std::pair<int, int>> ssc_pairs() {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) {
      int d2 = 0;
      for (int t = 0; t < 3; ++t) d2 += (kSix[a][t] - kSix[b][t]) * (kSix[a][t] - kSix[b][t]);
      if (d2 == 2) pairs.emplace_back(a, b);
    }
  return pairs;
}

}  // namespace

FeatureVolume mind_ssc(const Volume3& vol, const MindConfig& cfg) {
  cfg.validate();
  const auto& d = vol.geometry.dims;
  const int reach = 2 * (cfg.dilation + cfg.patch_radius);
  for (int a = 0; a < 3; ++a)
    if (d[a] <= reach) throw ConfigError("volume too small for the MIND neighbourhood");

  const auto pairs = ssc_pairs();
  const int channels = int(pairs.size());
  const std::size_t n = vol.geometry.voxel_count();
  std::vector<std::vector<double>> dist(static_cast<std::size_t>(channels), std::vector<double>(n));

  auto at = [&](int i, int j, int k) {
    return double(vol(std::clamp(i, 0, d[0] - 1), std::clamp(j, 0, d[1] - 1), std::clamp(k, 0, d[2] - 1)));
  };

#pragma omp parallel for
  for (int c = 0; c < channels; ++c) {
    const auto& a = kSix[std::size_t(pairs[std::size_t(c)].first)];
    const auto& b = kSix[std::size_t(pairs[std::size_t(c)].second)];
    const int dd = cfg.dilation;
    auto& out = dist[std::size_t(c)];
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          const double diff = at(i + dd * a[0], j + dd * a[1], k + dd * a[2]) -
                              at(i + dd * b[0], j + dd * b[1], k + dd * b[2]);
          out[vol.geometry.index(i, j, k)] = diff * diff;
        }
    box_mean(std::span<double>(out), d, cfg.patch_radius);
  }

  std::vector<double> variance(n, 0.0);
  for (const auto& plane : dist)
    for (std::size_t v = 0; v < n; ++v) variance[v] += plane[v];
  double global = 0.0;
  for (auto& v : variance) {
    v /= channels;
    global += v;
  }
  global /= double(n);
  const double lo = cfg.lo_factor * global;
  const double hi = cfg.hi_factor * global;
  for (auto& v : variance) v = std::max(std::clamp(v, lo, hi), std::numeric_limits<double>::min());

  FeatureVolume out(vol.geometry, channels, 1);
#pragma omp parallel for
  for (int c = 0; c < channels; ++c) {
    const auto& plane = dist[std::size_t(c)];
    auto col = out.data.col(c);
    for (std::size_t v = 0; v < n; ++v) col[Eigen::Index(v)] = float(std::exp(-plane[v] / variance[v]));
  }
  return out;
}

}  // namespace voxreg
