#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance suite. They favour directness over speed.

#include <Eigen/Dense>

#include <voxreg/adam.hpp>
#include <voxreg/convex.hpp>
#include <voxreg/features.hpp>
#include <voxreg/field.hpp>
#include <voxreg/volume.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "support.hpp"

namespace oracle {

using voxreg::Index3;

// --- MIND-SSC ----------------------------------------------------------------

using Offset = std::array<int, 3>;

// Edge-adjacent pairs of the 6-neighbourhood, listed by hand.
inline const std::array<std::pair<Offset, Offset>, 12> kPairs{{
    {{-1, 0, 0}, {0, -1, 0}}, {{-1, 0, 0}, {0, 1, 0}}, {{-1, 0, 0}, {0, 0, -1}}, {{-1, 0, 0}, {0, 0, 1}},
    {{1, 0, 0}, {0, -1, 0}},  {{1, 0, 0}, {0, 1, 0}},  {{1, 0, 0}, {0, 0, -1}},  {{1, 0, 0}, {0, 0, 1}},
    {{0, -1, 0}, {0, 0, -1}}, {{0, -1, 0}, {0, 0, 1}}, {{0, 1, 0}, {0, 0, -1}},  {{0, 1, 0}, {0, 0, 1}},
}};

// Patch distances D(x, c) for the 12 pairs, voxels x channels.
inline Eigen::MatrixXd mind_distances(const voxreg::Volume3& v, const voxreg::MindConfig& cfg) {
  const auto& d = v.geometry.dims;
  auto I = [&](int i, int j, int k) {
    return double(v(std::clamp(i, 0, d[0] - 1), std::clamp(j, 0, d[1] - 1), std::clamp(k, 0, d[2] - 1)));
  };
  const Eigen::Index n = Eigen::Index(v.geometry.voxel_count());
  Eigen::MatrixXd dist(n, 12);
  const int r = cfg.patch_radius, s = cfg.dilation;
  const double box = std::pow(2 * r + 1, 3);
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i)
        for (int c = 0; c < 12; ++c) {
          const auto& [a, b] = kPairs[std::size_t(c)];
          double acc = 0.0;
          for (int oz = -r; oz <= r; ++oz)
            for (int oy = -r; oy <= r; ++oy)
              for (int ox = -r; ox <= r; ++ox) {
                const int pi = std::clamp(i + ox, 0, d[0] - 1);
                const int pj = std::clamp(j + oy, 0, d[1] - 1);
                const int pk = std::clamp(k + oz, 0, d[2] - 1);
                const double diff = I(pi + s * a[0], pj + s * a[1], pk + s * a[2]) -
                                    I(pi + s * b[0], pj + s * b[1], pk + s * b[2]);
                acc += diff * diff;
              }
          dist(Eigen::Index(v.geometry.index(i, j, k)), c) = acc / box;
        }
  return dist;
}

// Direct per-voxel evaluation of the SSC descriptor.
inline Eigen::MatrixXd mind(const voxreg::Volume3& v, const voxreg::MindConfig& cfg) {
  const Eigen::MatrixXd dist = mind_distances(v, cfg);
  const Eigen::Index n = dist.rows();
  Eigen::VectorXd var = dist.rowwise().mean();
  const double mean = var.mean();
  for (Eigen::Index i = 0; i < n; ++i)
    var[i] = std::max(std::clamp(var[i], cfg.lo_factor * mean, cfg.hi_factor * mean),
                      std::numeric_limits<double>::min());
  Eigen::MatrixXd out(n, 12);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 12; ++c) out(i, c) = std::exp(-dist(i, c) / var[i]);
  return out;
}

// --- cost volume -------------------------------------------------------------

// Every candidate cost of one control node, normalised to unit mean.
inline Eigen::VectorXd node_costs(const voxreg::FeatureVolume& f, const voxreg::FeatureVolume& m,
                                  const voxreg::ConvexConfig& cfg, const std::vector<Eigen::Vector3i>& candidates,
                                  int ni, int nj, int nk) {
  const auto& d = f.geometry.dims;
  const int pr = cfg.patch_radius;
  auto clampi = [&](int v, int a) { return std::clamp(v, 0, d[std::size_t(a)] - 1); };
  const int ci = clampi(ni * cfg.grid_stride, 0);
  const int cj = clampi(nj * cfg.grid_stride, 1);
  const int ck = clampi(nk * cfg.grid_stride, 2);
  Eigen::VectorXd out(Eigen::Index(candidates.size()));
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Eigen::Vector3i& t = candidates[c];
    double acc = 0.0;
    int count = 0;
    for (int oz = -pr; oz <= pr; ++oz)
      for (int oy = -pr; oy <= pr; ++oy)
        for (int ox = -pr; ox <= pr; ++ox) {
          const int pi = clampi(ci + ox, 0), pj = clampi(cj + oy, 1), pk = clampi(ck + oz, 2);
          const auto fr = Eigen::Index(f.geometry.index(pi, pj, pk));
          const auto mr =
              Eigen::Index(f.geometry.index(clampi(pi + t.x(), 0), clampi(pj + t.y(), 1), clampi(pk + t.z(), 2)));
          for (int ch = 0; ch < f.channels(); ++ch) {
            const double e = double(f.data(fr, ch)) - double(m.data(mr, ch));
            acc += e * e;
            ++count;
          }
        }
    out[Eigen::Index(c)] = acc / count;
  }
  const double mean = out.mean();
  if (mean > 0.0) out /= mean;
  return out;
}

// K x M matrix of all node costs.
inline Eigen::MatrixXd cost_volume(const voxreg::FeatureVolume& f, const voxreg::FeatureVolume& m,
                                   const voxreg::ConvexConfig& cfg, const std::vector<Eigen::Vector3i>& candidates) {
  const Index3 md = voxreg::control_dims(f.geometry.dims, cfg.grid_stride);
  Eigen::MatrixXd out(Eigen::Index(candidates.size()), md[0] * md[1] * md[2]);
  int node = 0;
  for (int nk = 0; nk < md[2]; ++nk)
    for (int nj = 0; nj < md[1]; ++nj)
      for (int ni = 0; ni < md[0]; ++ni, ++node) out.col(node) = node_costs(f, m, cfg, candidates, ni, nj, nk);
  return out;
}

// Integer translation of every channel: out(x) = f(x + t), edge clamped.
inline voxreg::FeatureVolume shifted(const voxreg::FeatureVolume& f, const Index3& t) {
  voxreg::FeatureVolume out(f.geometry, f.channels());
  for (int c = 0; c < f.channels(); ++c) {
    voxreg::Volume3 v(f.geometry, Eigen::ArrayXf(f.data.col(c).array()));
    out.data.col(c) = testing::shift_volume(v, t).data.matrix();
  }
  return out;
}

// --- PCA -----------------------------------------------------------------------

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

// Samples with a prescribed, well separated spectrum and a non-zero mean.
inline Eigen::MatrixXd spectral_samples(Eigen::Index rows, int channels, unsigned seed) {
  const Eigen::MatrixXd left = gaussian(rows, channels, seed).householderQr().householderQ() *
                               Eigen::MatrixXd::Identity(rows, channels);
  const Eigen::MatrixXd right = gaussian(channels, channels, seed + 1).householderQr().householderQ();
  Eigen::VectorXd sigma(channels);
  for (int i = 0; i < channels; ++i) sigma[i] = 100.0 * std::pow(0.5, i);
  Eigen::MatrixXd x = left * sigma.asDiagonal() * right.transpose();
  x.rowwise() += Eigen::RowVectorXd::LinSpaced(channels, -3.0, 5.0);
  return x;
}

// Top-k right singular vectors of the centred matrix from a full SVD.
inline Eigen::MatrixXd exact_basis(const Eigen::MatrixXd& samples, int k) {
  const Eigen::MatrixXd centred = samples.rowwise() - samples.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  return svd.matrixV().leftCols(k);
}

// Sine of the largest principal angle between two orthonormal bases.
inline double max_principal_angle_sine(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd residual = b - a * (a.transpose() * b);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual);
  return svd.singularValues()[0];
}

// --- refinement loss -------------------------------------------------------------

// Control-grid interpolation, per-channel warp, mean SSD, plus the
// forward-difference penalty on the node grid.
inline voxreg::LossTerms loss(const voxreg::FeatureVolume& f, const voxreg::FeatureVolume& m,
                              const voxreg::ControlParams& u, const voxreg::AdamConfig& cfg) {
  const voxreg::GridGeometry& g = f.geometry;
  const voxreg::DisplacementField ctrl = voxreg::from_params(u, g, cfg.grid_stride);
  const double s = cfg.grid_stride;
  voxreg::LossTerms out;
  const auto& d = g.dims;
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const Eigen::Vector3d disp = voxreg::sample_field(ctrl, Eigen::Vector3d(i / s, j / s, k / s));
        for (int c = 0; c < f.channels(); ++c) {
          const double v = voxreg::sample_plane(m.plane(c), d, i + disp.x(), j + disp.y(), k + disp.z());
          const double r = v - double(f.data(Eigen::Index(g.index(i, j, k)), c));
          out.data += r * r;
        }
      }
  out.data /= double(g.voxel_count()) * f.channels();

  const Index3 md = voxreg::control_dims(d, cfg.grid_stride);
  double reg = 0.0;
  for (int k = 0; k < md[2]; ++k)
    for (int j = 0; j < md[1]; ++j)
      for (int i = 0; i < md[0]; ++i) {
        const auto at = [&](int a, int b, int c) { return u.row(a + md[0] * (b + md[1] * c)); };
        if (i + 1 < md[0]) reg += (at(i + 1, j, k) - at(i, j, k)).squaredNorm();
        if (j + 1 < md[1]) reg += (at(i, j + 1, k) - at(i, j, k)).squaredNorm();
        if (k + 1 < md[2]) reg += (at(i, j, k + 1) - at(i, j, k)).squaredNorm();
      }
  out.reg = cfg.lambda_reg * reg / double(u.rows());
  out.total = out.data + out.reg;
  return out;
}

struct GradientCheck {
  double worst_relative = 0.0;
  int checked = 0;
};

// Central differences of the total loss against the analytic gradient.
// Parameters whose support holds a warped sample within 2h of a trilinear
// cell boundary along the perturbed axis are skipped: the loss has a kink there.
inline GradientCheck check_gradient(const voxreg::FeatureVolume& f, const voxreg::FeatureVolume& m,
                                    const voxreg::ControlParams& u, const voxreg::AdamConfig& cfg, double h) {
  const voxreg::LossGrad lg = voxreg::loss_and_grad(f, m, u, cfg);
  const Index3 md = voxreg::control_dims(f.geometry.dims, cfg.grid_stride);
  const voxreg::DisplacementField ctrl(voxreg::control_geometry(f.geometry, cfg.grid_stride), cfg.grid_stride,
                                       u.cast<float>());
  const auto& d = f.geometry.dims;
  const int g = cfg.grid_stride;
  auto near_boundary = [&](Eigen::Index node, int axis) {
    const int ni = int(node % md[0]), nj = int((node / md[0]) % md[1]), nk = int(node / (md[0] * md[1]));
    for (int k = std::max(0, (nk - 1) * g); k <= std::min(d[2] - 1, (nk + 1) * g); ++k)
      for (int j = std::max(0, (nj - 1) * g); j <= std::min(d[1] - 1, (nj + 1) * g); ++j)
        for (int i = std::max(0, (ni - 1) * g); i <= std::min(d[0] - 1, (ni + 1) * g); ++i) {
          const Eigen::Vector3d disp =
              voxreg::sample_field(ctrl, Eigen::Vector3d(double(i) / g, double(j) / g, double(k) / g));
          const double pos = (axis == 0 ? i : axis == 1 ? j : k) + disp[axis];
          if (std::abs(pos - std::round(pos)) < 2 * h) return true;
        }
    return false;
  };

  GradientCheck out;
  for (Eigen::Index node = 0; node < u.rows(); ++node)
    for (int a = 0; a < 3; ++a) {
      if (near_boundary(node, a)) continue;
      voxreg::ControlParams up = u, dn = u;
      up(node, a) += h;
      dn(node, a) -= h;
      const double fd = (voxreg::loss_and_grad(f, m, up, cfg).loss.total -
                         voxreg::loss_and_grad(f, m, dn, cfg).loss.total) /
                        (2 * h);
      const double rel = std::abs(lg.gradient(node, a) - fd) / std::max(std::abs(fd), 1e-12);
      out.worst_relative = std::max(out.worst_relative, rel);
      ++out.checked;
    }
  return out;
}

// Random 12^3 / 4^3 instance: smooth features and control parameters at a
// shared fractional offset plus small jitter, away from cell boundaries.
struct GradientInstance {
  voxreg::FeatureVolume fixed, moving;
  voxreg::ControlParams params;
  voxreg::AdamConfig cfg;
};

inline GradientInstance gradient_instance(unsigned seed) {
  GradientInstance inst{testing::random_features({12, 12, 12}, 3, 100 + seed, 1.0),
                        testing::random_features({12, 12, 12}, 3, 200 + seed, 1.0), voxreg::ControlParams(64, 3),
                        voxreg::AdamConfig{}};
  inst.cfg.grid_stride = 4;
  inst.cfg.lambda_reg = 0.3;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  std::uniform_int_distribution<int> whole(-2, 2);
  const Eigen::RowVector3d base(0.37, 0.61, 0.23);
  const Eigen::RowVector3d offset(whole(rng), whole(rng), whole(rng));
  for (Eigen::Index r = 0; r < 64; ++r)
    inst.params.row(r) = base + offset + Eigen::RowVector3d(jitter(rng), jitter(rng), jitter(rng));
  return inst;
}

}  // namespace oracle
