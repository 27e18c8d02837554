#pragma once

#include <Eigen/Core>

#include <cstdint>

#include "voxreg/volume.hpp"

namespace voxreg {

/// Dense multi-channel feature grid. `data` is voxels x channels in
/// column-major order, so every column is one x-fastest channel plane.
/// `stride` is the number of image voxels per feature cell along each axis.
struct FeatureVolume {
  GridGeometry geometry;
  int stride = 1;
  Eigen::MatrixXf data;

  FeatureVolume() = default;
  FeatureVolume(const GridGeometry& g, int channels, int stride_ = 1);
  /// Throws ConfigError on shape mismatch, stride < 1 or non-finite values.
  FeatureVolume(const GridGeometry& g, int stride_, Eigen::MatrixXf values);

  int channels() const { return int(data.cols()); }
  std::span<const float> plane(int c) const {
    return {data.col(c).data(), std::size_t(data.rows())};
  }
  std::span<float> plane(int c) { return {data.col(c).data(), std::size_t(data.rows())}; }
};

struct MindConfig {
  int dilation = 2;
  int patch_radius = 1;
  double lo_factor = 0.001;
  double hi_factor = 1000.0;

  void validate() const;
};

/// 12-channel MIND self-similarity-context descriptor. Each channel compares
/// two edge-adjacent members of the 6-neighbourhood at distance `dilation`
/// via a box-averaged squared patch difference D_c; the output is
/// exp(-D_c / V) with V the per-voxel mean of the 12 distances clamped to
/// [lo, hi] times its volume-wide mean.
FeatureVolume mind_ssc(const Volume3& vol, const MindConfig& cfg = {});

/// Trilinear resampling of token-resolution features onto an image grid.
/// Token t covers image voxels [t*s, (t+1)*s) and is anchored at its centre.
FeatureVolume upsample_features(const FeatureVolume& fv, const GridGeometry& image);

/// Throws ConfigError unless ceil(image / stride) == tokens on every axis.
void check_token_coverage(const Index3& tokens, int stride, const Index3& image);

/// Per-voxel L2 normalisation across channels (zero vectors stay zero).
FeatureVolume normalize_channels(const FeatureVolume& fv);

struct PcaConfig {
  int components = 24;
  int oversampling = 8;
  int power_iterations = 2;
  std::size_t sample_cap = 100000;
  std::uint64_t seed = 0;

  void validate(int channels) const;
};

/// Affine projection y = W^T (x - mean) with orthonormal W (C x k).
struct PcaBasis {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;
  Eigen::VectorXd singular_values;

  int input_channels() const { return int(components.rows()); }
  int rank() const { return int(components.cols()); }
};

/// Randomized range-finder SVD of the centred sample matrix (rows are
/// samples). Columns of the result are sign-normalised so the entry of
/// largest magnitude is positive.
PcaBasis fit_pca(const Eigen::MatrixXd& samples, const PcaConfig& cfg);

/// Joint basis from voxels pooled over both volumes, subsampled to
/// `sample_cap` deterministically from `seed`.
PcaBasis fit_pca(const FeatureVolume& a, const FeatureVolume& b, const PcaConfig& cfg);

FeatureVolume project(const FeatureVolume& fv, const PcaBasis& basis);

/// W y + mean for every row of `projected` (voxels x k).
Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& projected, const PcaBasis& basis);

}  // namespace voxreg
