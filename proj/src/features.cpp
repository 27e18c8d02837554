#include <cmath>

#include "voxreg/error.hpp"
#include "voxreg/features.hpp"

namespace voxreg {

FeatureVolume::FeatureVolume(const GridGeometry& g, int channels, int stride_)
    : geometry(g), stride(stride_), data(Eigen::MatrixXf::Zero(Eigen::Index(g.voxel_count()), channels)) {
  if (channels < 1) throw ConfigError("feature volume needs at least one channel");
  if (stride < 1) throw ConfigError("feature stride must be >= 1");
}

FeatureVolume::FeatureVolume(const GridGeometry& g, int stride_, Eigen::MatrixXf values)
    : geometry(g), stride(stride_), data(std::move(values)) {
  if (stride < 1) throw ConfigError("feature stride must be >= 1");
  if (data.cols() < 1) throw ConfigError("feature volume needs at least one channel");
  if (std::size_t(data.rows()) != g.voxel_count())
    throw ConfigError("feature data length does not match geometry");
  if (!data.allFinite()) throw ConfigError("feature volume contains non-finite values");
}

void check_token_coverage(const Index3& tokens, int stride, const Index3& image) {
  for (int a = 0; a < 3; ++a) {
    const auto t = std::size_t(tokens[std::size_t(a)]);
    const auto n = std::size_t(image[std::size_t(a)]);
    if (t * std::size_t(stride) < n || (t - 1) * std::size_t(stride) >= n)
      throw ConfigError("token grid does not cover the image grid at the recorded stride");
  }
}

FeatureVolume upsample_features(const FeatureVolume& fv, const GridGeometry& image) {
  if (fv.stride == 1 && fv.geometry.dims == image.dims) return FeatureVolume(image, 1, fv.data);
  check_token_coverage(fv.geometry.dims, fv.stride, image.dims);
  const double s = fv.stride;
  FeatureVolume out(image, fv.channels(), 1);
  const double centre = 0.5 * (s - 1.0);
  const auto& d = image.dims;
#pragma omp parallel for
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const auto st = trilinear_stencil(fv.geometry.dims, (i - centre) / s, (j - centre) / s,
                                          (k - centre) / s);
        const Eigen::Index row = Eigen::Index(image.index(i, j, k));
        for (int c = 0; c < fv.channels(); ++c) out.data(row, c) = float(st.sample(fv.data.col(c)));
      }
  return out;
}

FeatureVolume normalize_channels(const FeatureVolume& fv) {
  FeatureVolume out = fv;
  const Eigen::VectorXf norms = out.data.rowwise().norm();
  for (Eigen::Index r = 0; r < out.data.rows(); ++r)
    if (norms[r] > 0.0f) out.data.row(r) /= norms[r];
  return out;
}

}  // namespace voxreg
