#include "voxreg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "voxreg/error.hpp"
#include "voxreg/log.hpp"

namespace voxreg {

GridGeometry::GridGeometry(Index3 d, Eigen::Vector3f s) : dims(d), spacing(s) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw ConfigError("grid dimensions must be >= 2");
    if (!(spacing[a] > 0.0f) || !std::isfinite(spacing[a]))
      throw ConfigError("grid spacing must be positive");
  }
}

Volume3::Volume3(const GridGeometry& g, float fill)
    : geometry(g), data(Eigen::ArrayXf::Constant(Eigen::Index(g.voxel_count()), fill)) {}

Volume3::Volume3(const GridGeometry& g, Eigen::ArrayXf values) : geometry(g), data(std::move(values)) {
  if (std::size_t(data.size()) != g.voxel_count())
    throw ConfigError("volume data length does not match geometry");
  if (!data.isFinite().all()) throw ConfigError("volume contains non-finite values");
}

namespace {

// Cell index and fraction along one axis; left cell at exact nodes.
struct AxisCell {
  int lo;
  double frac;
  bool clamped;
};

AxisCell axis_cell(double x, int n) {
  if (!(x > 0.0)) return {0, 0.0, x < 0.0};
  const double top = double(n - 1);
  if (x >= top) return {n - 2, 1.0, x > top};
  int lo = int(std::ceil(x)) - 1;
  lo = std::clamp(lo, 0, n - 2);
  return {lo, x - lo, false};
}

}  // namespace

TrilinearStencil trilinear_stencil(const Index3& dims, double x, double y, double z) {
  const AxisCell cx = axis_cell(x, dims[0]);
  const AxisCell cy = axis_cell(y, dims[1]);
  const AxisCell cz = axis_cell(z, dims[2]);
  const std::size_t sx = 1, sy = std::size_t(dims[0]), sz = sy * std::size_t(dims[1]);
  const std::size_t base = std::size_t(cx.lo) * sx + std::size_t(cy.lo) * sy + std::size_t(cz.lo) * sz;
  const double wx[2] = {1.0 - cx.frac, cx.frac};
  const double wy[2] = {1.0 - cy.frac, cy.frac};
  const double wz[2] = {1.0 - cz.frac, cz.frac};
  const double dx[2] = {cx.clamped ? 0.0 : -1.0, cx.clamped ? 0.0 : 1.0};
  const double dy[2] = {cy.clamped ? 0.0 : -1.0, cy.clamped ? 0.0 : 1.0};
  const double dz[2] = {cz.clamped ? 0.0 : -1.0, cz.clamped ? 0.0 : 1.0};

  TrilinearStencil s;
  int c = 0;
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i, ++c) {
        s.offsets[c] = base + i * sx + j * sy + k * sz;
        s.weights[c] = wx[i] * wy[j] * wz[k];
        s.dweights[0][c] = dx[i] * wy[j] * wz[k];
        s.dweights[1][c] = wx[i] * dy[j] * wz[k];
        s.dweights[2][c] = wx[i] * wy[j] * dz[k];
      }
  return s;
}

double sample_plane(std::span<const float> plane, const Index3& dims, double x, double y, double z) {
  return trilinear_stencil(dims, x, y, z).sample(plane);
}

float sample_trilinear(const Volume3& vol, const Eigen::Vector3d& pos) {
  return float(sample_plane({vol.data.data(), std::size_t(vol.data.size())}, vol.geometry.dims,
                            pos.x(), pos.y(), pos.z()));
}

Volume3 resample(const Volume3& vol, const GridGeometry& target) {
  if (target == vol.geometry) return vol;
  Volume3 out(target);
  const Eigen::Vector3d scale =
      (target.spacing.cast<double>().array() / vol.geometry.spacing.cast<double>().array()).matrix();
  const std::span<const float> src(vol.data.data(), std::size_t(vol.data.size()));
  const auto& d = target.dims;
#pragma omp parallel for
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i)
        out(i, j, k) = float(sample_plane(src, vol.geometry.dims, i * scale.x(), j * scale.y(),
                                          k * scale.z()));
  return out;
}

GridGeometry isotropic_geometry(const GridGeometry& g, float spacing_mm) {
  Index3 dims{};
  for (int a = 0; a < 3; ++a) {
    const double extent = double(g.dims[a] - 1) * g.spacing[a];
    dims[a] = std::max(2, int(std::floor(extent / spacing_mm + 1e-6)) + 1);
  }
  return GridGeometry(dims, Eigen::Vector3f::Constant(spacing_mm));
}

double percentile(std::span<const float> values, double q) {
  if (values.empty()) throw ConfigError("percentile of an empty set");
  q = std::clamp(q, 0.0, 1.0);
  const double rank = q * double(values.size() - 1);
  const std::size_t lo = std::size_t(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  std::vector<float> v(values.begin(), values.end());
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(lo), v.end());
  const double a = v[lo];
  double b = a;
  if (hi != lo) b = *std::min_element(v.begin() + std::ptrdiff_t(lo) + 1, v.end());
  return a + (rank - double(lo)) * (b - a);
}

namespace {

Volume3 rescale(const Volume3& vol, double lo, double hi, bool* degenerate, const char* what) {
  if (degenerate) *degenerate = false;
  if (!(hi > lo)) {
    log::warn(std::string(what) + ": degenerate intensity range, output set to zero");
    if (degenerate) *degenerate = true;
    return Volume3(vol.geometry, 0.0f);
  }
  const double span = hi - lo;
  Eigen::ArrayXf out =
      ((vol.data.cast<double>().max(lo).min(hi) - lo) / span).cast<float>().max(0.0f).min(1.0f);
  return Volume3(vol.geometry, std::move(out));
}

}  // namespace

Volume3 preprocess_mri(const Volume3& vol, bool* degenerate) {
  const std::span<const float> v(vol.data.data(), std::size_t(vol.data.size()));
  return rescale(vol, percentile(v, 0.0001), percentile(v, 0.999), degenerate, "preprocess_mri");
}

Volume3 preprocess_ct(const Volume3& vol, bool* degenerate) {
  return rescale(vol, vol.data.minCoeff(), vol.data.maxCoeff(), degenerate, "preprocess_ct");
}

Volume3 gaussian_smooth(const Volume3& vol, double sigma) {
  Volume3 out = vol;
  gaussian_smooth(std::span<float>(out.data.data(), std::size_t(out.data.size())), out.geometry.dims,
                  sigma);
  return out;
}

}  // namespace voxreg
