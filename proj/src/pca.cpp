#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "voxreg/error.hpp"
#include "voxreg/features.hpp"

namespace voxreg {

void PcaConfig::validate(int channels) const {
  if (components < 1) throw ConfigError("pca.components must be >= 1");
  if (oversampling < 0) throw ConfigError("pca.oversampling must be >= 0");
  if (power_iterations < 0) throw ConfigError("pca.power_iterations must be >= 0");
  if (sample_cap < 1) throw ConfigError("pca.sample_cap must be >= 1");
  if (components + oversampling > channels)
    throw ConfigError("pca.components + pca.oversampling exceeds the channel count");
}

namespace {

Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

}  // namespace

PcaBasis fit_pca(const Eigen::MatrixXd& samples, const PcaConfig& cfg) {
  const int channels = int(samples.cols());
  cfg.validate(channels);
  if (samples.rows() < 2) throw ConfigError("pca needs at least two samples");
  const int width = cfg.components + cfg.oversampling;

  PcaBasis basis;
  basis.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centred = samples.rowwise() - basis.mean.transpose();

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd omega(channels, width);
  for (Eigen::Index j = 0; j < omega.cols(); ++j)
    for (Eigen::Index i = 0; i < omega.rows(); ++i) omega(i, j) = gauss(rng);

  // Range finder with re-orthonormalised power iterations.
  Eigen::MatrixXd q = orthonormal_columns(centred * omega);
  for (int it = 0; it < cfg.power_iterations; ++it) {
    const Eigen::MatrixXd z = orthonormal_columns(centred.transpose() * q);
    q = orthonormal_columns(centred * z);
  }

  const Eigen::MatrixXd small = q.transpose() * centred;  // width x C
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(small, Eigen::ComputeThinV);
  basis.components = svd.matrixV().leftCols(cfg.components);
  basis.singular_values = svd.singularValues().head(cfg.components);

  for (Eigen::Index j = 0; j < basis.components.cols(); ++j) {
    Eigen::Index arg = 0;
    basis.components.col(j).cwiseAbs().maxCoeff(&arg);
    if (basis.components(arg, j) < 0.0) basis.components.col(j) *= -1.0;
  }
  return basis;
}

PcaBasis fit_pca(const FeatureVolume& a, const FeatureVolume& b, const PcaConfig& cfg) {
  if (a.channels() != b.channels()) throw ConfigError("pca inputs differ in channel count");
  cfg.validate(a.channels());
  const std::size_t na = std::size_t(a.data.rows());
  const std::size_t total = na + std::size_t(b.data.rows());

  std::vector<std::size_t> picks(total);
  std::iota(picks.begin(), picks.end(), std::size_t{0});
  if (total > cfg.sample_cap) {
    // Partial Fisher-Yates: the first sample_cap entries become the sample.
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = 0; i < cfg.sample_cap; ++i) {
      const std::size_t j = i + std::size_t(rng() % (total - i));
      std::swap(picks[i], picks[j]);
    }
    picks.resize(cfg.sample_cap);
    std::sort(picks.begin(), picks.end());
  }

  Eigen::MatrixXd samples(Eigen::Index(picks.size()), a.channels());
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const std::size_t p = picks[r];
    if (p < na)
      samples.row(Eigen::Index(r)) = a.data.row(Eigen::Index(p)).cast<double>();
    else
      samples.row(Eigen::Index(r)) = b.data.row(Eigen::Index(p - na)).cast<double>();
  }
  return fit_pca(samples, cfg);
}

FeatureVolume project(const FeatureVolume& fv, const PcaBasis& basis) {
  if (fv.channels() != basis.input_channels())
    throw ConfigError("feature channel count does not match the PCA basis");
  const Eigen::MatrixXf w = basis.components.cast<float>();
  const Eigen::RowVectorXf mu = basis.mean.transpose().cast<float>();
  Eigen::MatrixXf out = (fv.data.rowwise() - mu) * w;
  return FeatureVolume(fv.geometry, fv.stride, std::move(out));
}

Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& projected, const PcaBasis& basis) {
  if (projected.cols() != basis.rank()) throw ConfigError("projection rank does not match the basis");
  return (projected * basis.components.transpose()).rowwise() + basis.mean.transpose();
}

}  // namespace voxreg
