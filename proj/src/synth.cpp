#include "voxreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "voxreg/error.hpp"
#include "voxreg/log.hpp"
#include "voxreg/pipeline.hpp"

namespace voxreg {

void SynthConfig::validate() const {
  if (!(magnitude_cap > 0.0)) throw ConfigError("synth magnitude_cap must be positive");
  if (!(smoothing_sigma > 0.0)) throw ConfigError("synth smoothing_sigma must be positive");
  if (!(texture_scale > 0.0)) throw ConfigError("synth texture scale must be positive");
  for (int a = 0; a < 3; ++a)
    if (coarse_grid[std::size_t(a)] < 2) throw ConfigError("synth coarse grid needs >= 2 nodes per axis");
  if (blob_count < 0) throw ConfigError("synth blob_count must be >= 0");
}

DisplacementField random_smooth_field(const GridGeometry& geom, const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<float> gauss;
  const GridGeometry coarse(cfg.coarse_grid);
  const auto& d = geom.dims;

  DisplacementField u(geom, 1);
  for (int c = 0; c < 3; ++c) {
    std::vector<float> noise(coarse.voxel_count());
    for (auto& v : noise) v = gauss(rng);
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          const double x = double(i) * (cfg.coarse_grid[0] - 1) / (d[0] - 1);
          const double y = double(j) * (cfg.coarse_grid[1] - 1) / (d[1] - 1);
          const double z = double(k) * (cfg.coarse_grid[2] - 1) / (d[2] - 1);
          u.vectors(Eigen::Index(geom.index(i, j, k)), c) = float(sample_plane(noise, coarse.dims, x, y, z));
        }
    gaussian_smooth(std::span<float>(u.vectors.col(c).data(), geom.voxel_count()), d, cfg.smoothing_sigma);
  }
  const float peak = u.vectors.cwiseAbs().maxCoeff();
  if (peak > 0.0f) u.vectors *= float(cfg.magnitude_cap) / peak;

  for (int attempt = 0; attempt <= 5; ++attempt) {
    if (jacobian_stats(u).folding_pct == 0.0) return u;
    if (attempt == 5) break;
    log::info("synthetic field folds; halving its magnitude");
    u.vectors *= 0.5f;
  }
  throw NumericalError("could not generate a folding-free field after 5 halvings", 5);
}

Volume3 make_texture(const GridGeometry& geom, const SynthConfig& cfg) {
  cfg.validate();
  Volume3 vol(geom);
  const auto& d = geom.dims;
  if (cfg.texture == Texture::checker) {
    const int period = std::max(1, int(std::lround(cfg.texture_scale)));
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) vol(i, j, k) = float((i / period + j / period + k / period) % 2);
    return vol;
  }
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  std::normal_distribution<float> gauss;
  for (Eigen::Index v = 0; v < vol.data.size(); ++v) vol.data[v] = gauss(rng);
  vol = gaussian_smooth(vol, cfg.texture_scale);
  const float lo = vol.data.minCoeff(), hi = vol.data.maxCoeff();
  vol.data = (vol.data - lo) / (hi - lo);
  return vol;
}

LabelVolume make_blobs(const GridGeometry& geom, const SynthConfig& cfg) {
  cfg.validate();
  LabelVolume seg(geom);
  std::mt19937_64 rng(cfg.seed ^ 0x2545f4914f6cdd1dULL);
  const auto& d = geom.dims;
  const int shortest = *std::min_element(d.begin(), d.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int b = 0; b < cfg.blob_count; ++b) {
    const double radius = shortest * (0.1 + 0.1 * unit(rng));
    Eigen::Vector3d centre;
    for (int a = 0; a < 3; ++a) centre[a] = radius + unit(rng) * (d[std::size_t(a)] - 1 - 2 * radius);
    const Eigen::Vector3d axes = radius * Eigen::Vector3d(0.8 + 0.4 * unit(rng), 0.8 + 0.4 * unit(rng), 0.8 + 0.4 * unit(rng));
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          const Eigen::Vector3d q = (Eigen::Vector3d(i, j, k) - centre).cwiseQuotient(axes);
          if (q.squaredNorm() <= 1.0) seg(i, j, k) = b + 1;
        }
  }
  return seg;
}

DisplacementField invert_field(const DisplacementField& u, int iterations) {
  if (u.stride != 1) throw ConfigError("invert_field expects a full-resolution field");
  DisplacementField v(u.geometry, 1, VectorPlanes(-u.vectors));
  const auto& d = u.geometry.dims;
  for (int it = 0; it < iterations; ++it) {
    DisplacementField next(u.geometry, 1);
#pragma omp parallel for
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          const Eigen::Vector3d y = Eigen::Vector3d(i, j, k) + v.at(i, j, k).cast<double>();
          next.set(i, j, k, (-sample_field(u, y)).cast<float>());
        }
    v = std::move(next);
  }
  return v;
}

SynthPair make_pair(const GridGeometry& geom, const SynthConfig& cfg) {
  return make_pair(geom, cfg, random_smooth_field(geom, cfg));
}

SynthPair make_pair(const GridGeometry& geom, const SynthConfig& cfg, DisplacementField truth) {
  if (truth.stride != 1 || truth.geometry.dims != geom.dims) throw ConfigError("truth field does not match the grid");
  SynthPair p;
  p.fixed = make_texture(geom, cfg);
  p.fixed_seg = make_blobs(geom, cfg);
  const DisplacementField inverse = invert_field(truth);
  p.moving = warp_volume(p.fixed, inverse);
  p.moving_seg = warp_labels(p.fixed_seg, inverse);
  p.truth = std::move(truth);
  return p;
}

}  // namespace voxreg
