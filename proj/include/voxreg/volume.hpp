#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <span>

namespace voxreg {

using Index3 = std::array<int, 3>;

/// Voxel grid: dimensions plus millimetre spacing. Voxel (i,j,k) sits at
/// physical position (i*sx, j*sy, k*sz); orientation is not modelled.
struct GridGeometry {
  Index3 dims{2, 2, 2};
  Eigen::Vector3f spacing = Eigen::Vector3f::Ones();

  GridGeometry() = default;
  /// Throws ConfigError unless every dim >= 2 and every spacing > 0.
  explicit GridGeometry(Index3 d, Eigen::Vector3f s = Eigen::Vector3f::Ones());

  std::size_t voxel_count() const {
    return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
  }
  /// x-fastest linear index.
  std::size_t index(int i, int j, int k) const {
    return std::size_t(i) + std::size_t(dims[0]) * (std::size_t(j) + std::size_t(dims[1]) * std::size_t(k));
  }
  Eigen::Vector3d physical(double i, double j, double k) const {
    return {i * spacing.x(), j * spacing.y(), k * spacing.z()};
  }

  friend bool operator==(const GridGeometry& a, const GridGeometry& b) {
    return a.dims == b.dims && a.spacing == b.spacing;
  }
};

/// Scalar 32-bit volume, x-fastest layout, always finite.
struct Volume3 {
  GridGeometry geometry;
  Eigen::ArrayXf data;

  Volume3() = default;
  explicit Volume3(const GridGeometry& g, float fill = 0.0f);
  /// Throws ConfigError on size mismatch or non-finite values.
  Volume3(const GridGeometry& g, Eigen::ArrayXf values);

  float operator()(int i, int j, int k) const { return data[Eigen::Index(geometry.index(i, j, k))]; }
  float& operator()(int i, int j, int k) { return data[Eigen::Index(geometry.index(i, j, k))]; }
};

/// Eight-corner trilinear stencil with edge clamping. Positions outside the
/// grid are clamped onto the border; along a clamped axis the derivative
/// weights are zero. At exact interior nodes the left cell is used, so the
/// derivative is the left-cell sub-gradient.
struct TrilinearStencil {
  std::array<std::size_t, 8> offsets{};
  std::array<double, 8> weights{};
  // d(weights)/d(position) per axis, in voxel units.
  std::array<std::array<double, 8>, 3> dweights{};

  template <class Plane>
  double sample(const Plane& plane) const {
    double v = 0.0;
    for (int c = 0; c < 8; ++c) v += weights[c] * double(plane[offsets[c]]);
    return v;
  }
};

TrilinearStencil trilinear_stencil(const Index3& dims, double x, double y, double z);

/// Trilinear sample of a single x-fastest plane at continuous voxel
/// coordinates, edge-clamped.
double sample_plane(std::span<const float> plane, const Index3& dims, double x, double y, double z);

float sample_trilinear(const Volume3& vol, const Eigen::Vector3d& pos);

/// Resample onto `target` by mapping each target voxel's physical position
/// back to source voxel coordinates.
Volume3 resample(const Volume3& vol, const GridGeometry& target);

/// Isotropic grid covering the same physical extent at the given spacing.
GridGeometry isotropic_geometry(const GridGeometry& g, float spacing_mm);

/// Percentile with linear interpolation between order statistics at rank
/// q*(n-1), q in [0, 1].
double percentile(std::span<const float> values, double q);

/// Clip to the 0.01th / 99.9th percentiles and rescale to [0, 1].
/// A degenerate range yields zeros, sets *degenerate and logs a warning.
Volume3 preprocess_mri(const Volume3& vol, bool* degenerate = nullptr);

/// Min-max rescale to [0, 1]; degenerate range handled as for MRI.
Volume3 preprocess_ct(const Volume3& vol, bool* degenerate = nullptr);

// Separable filters on x-fastest planes; borders replicate the edge voxel.
void box_mean(std::span<float> plane, const Index3& dims, int radius);
void box_mean(std::span<double> plane, const Index3& dims, int radius);
void gaussian_smooth(std::span<float> plane, const Index3& dims, double sigma);

Volume3 gaussian_smooth(const Volume3& vol, double sigma);

}  // namespace voxreg
