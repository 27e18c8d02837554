#include "voxreg/convex.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <vector>

#include "voxreg/error.hpp"

namespace voxreg {

void ConvexConfig::validate() const {
  if (grid_stride < 1) throw ConfigError("convex.grid_stride must be >= 1");
  if (search_radius < 0) throw ConfigError("convex.search_radius must be >= 0");
  if (search_step < 1) throw ConfigError("convex.search_step must be >= 1");
  if (search_radius > 0 && (2 * search_radius) % search_step != 0)
    throw ConfigError("convex.search_step must divide 2 * convex.search_radius");
  if (theta_schedule.empty()) throw ConfigError("convex.theta_schedule must not be empty");
  for (std::size_t t = 0; t < theta_schedule.size(); ++t) {
    if (!(theta_schedule[t] > 0.0)) throw ConfigError("convex.theta_schedule values must be positive");
    if (t > 0 && !(theta_schedule[t] > theta_schedule[t - 1]))
      throw ConfigError("convex.theta_schedule must be strictly increasing");
  }
  if (smooth_radius < 0) throw ConfigError("convex.smooth_radius must be >= 0");
  if (patch_radius < 0) throw ConfigError("convex.patch_radius must be >= 0");
}

std::vector<Eigen::Vector3i> candidate_table(int radius, int step) {
  std::vector<Eigen::Vector3i> table;
  for (int z = -radius; z <= radius; z += step)
    for (int y = -radius; y <= radius; y += step)
      for (int x = -radius; x <= radius; x += step) table.emplace_back(x, y, z);
  return table;
}

CostVolume build_cost_volume(const FeatureVolume& fixed_in, const FeatureVolume& moving_in,
                             const ConvexConfig& cfg) {
  cfg.validate();
  if (fixed_in.geometry.dims != moving_in.geometry.dims)
    throw ConfigError("fixed and moving features differ in geometry");
  if (fixed_in.channels() != moving_in.channels())
    throw ConfigError("fixed and moving features differ in channel count");
  if (fixed_in.stride != 1 || moving_in.stride != 1)
    throw ConfigError("cost volume needs stride-1 features");

  const FeatureVolume fixed = cfg.normalize_features ? normalize_channels(fixed_in) : fixed_in;
  const FeatureVolume moving = cfg.normalize_features ? normalize_channels(moving_in) : moving_in;

  CostVolume cv;
  cv.image_geometry = fixed.geometry;
  cv.grid_stride = cfg.grid_stride;
  cv.control_dims = control_dims(fixed.geometry.dims, cfg.grid_stride);
  cv.candidates = candidate_table(cfg.search_radius, cfg.search_step);

  const auto& d = fixed.geometry.dims;
  const auto& m = cv.control_dims;
  const Eigen::Index nodes = Eigen::Index(m[0]) * m[1] * m[2];
  const int count = cv.candidate_count();
  const int channels = fixed.channels();
  cv.costs.resize(count, nodes);

  // For each node axis position, the clamped voxel indices of its patch.
  const int pr = cfg.patch_radius;
  const int width = 2 * pr + 1;
  std::array<std::vector<int>, 3> taps;
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < m[a]; ++i) {
      const int centre = std::min(i * cfg.grid_stride, d[a] - 1);
      for (int o = -pr; o <= pr; ++o) taps[a].push_back(std::clamp(centre + o, 0, d[a] - 1));
    }

  const float scale = 1.0f / (float(channels) * float(width * width * width));
  constexpr int kBlock = 32;
  Eigen::MatrixXf block(nodes, kBlock);

  for (int c0 = 0; c0 < count; c0 += kBlock) {
    const int bn = std::min(kBlock, count - c0);
#pragma omp parallel
    {
      std::vector<float> row_ssd(static_cast<std::size_t>(d[0]));
      // Patch sums along x at node columns, then along y at node rows.
      std::vector<float> sum_x(std::size_t(m[0]) * std::size_t(d[1]) * std::size_t(d[2]));
      std::vector<float> sum_xy(std::size_t(m[0]) * std::size_t(m[1]) * std::size_t(d[2]));
#pragma omp for schedule(dynamic)
      for (int b = 0; b < bn; ++b) {
        const Eigen::Vector3i& delta = cv.candidates[std::size_t(c0 + b)];
        // Voxels [lo, hi) along x read moving at i + dx without clamping.
        const int lo = std::clamp(-delta.x(), 0, d[0]);
        const int hi = std::clamp(d[0] - delta.x(), lo, d[0]);
        float* out = row_ssd.data();
        for (int k = 0; k < d[2]; ++k) {
          const int mk = std::clamp(k + delta.z(), 0, d[2] - 1);
          for (int j = 0; j < d[1]; ++j) {
            const int mj = std::clamp(j + delta.y(), 0, d[1] - 1);
            const std::size_t row = fixed.geometry.index(0, j, k);
            const std::size_t mrow = fixed.geometry.index(0, mj, mk);
            std::fill(out, out + d[0], 0.0f);
            for (int ch = 0; ch < channels; ++ch) {
              const float* frow = fixed.data.col(ch).data() + row;
              const float* mv = moving.data.col(ch).data() + mrow;
              for (int i = 0; i < lo; ++i) {
                const float e = frow[i] - mv[0];
                out[i] += e * e;
              }
              const float* shifted = mv + delta.x();
              for (int i = lo; i < hi; ++i) {
                const float e = frow[i] - shifted[i];
                out[i] += e * e;
              }
              for (int i = hi; i < d[0]; ++i) {
                const float e = frow[i] - mv[d[0] - 1];
                out[i] += e * e;
              }
            }
            float* sx = sum_x.data() + (std::size_t(k) * std::size_t(d[1]) + std::size_t(j)) * std::size_t(m[0]);
            const int* tx = taps[0].data();
            for (int i = 0; i < m[0]; ++i) {
              float acc = 0.0f;
              for (int o = 0; o < width; ++o) acc += out[*tx++];
              sx[i] = acc;
            }
          }
          const int* ty = taps[1].data();
          for (int j = 0; j < m[1]; ++j) {
            float* dst = sum_xy.data() + (std::size_t(k) * std::size_t(m[1]) + std::size_t(j)) * std::size_t(m[0]);
            std::fill(dst, dst + m[0], 0.0f);
            for (int o = 0; o < width; ++o) {
              const float* src = sum_x.data() + (std::size_t(k) * std::size_t(d[1]) + std::size_t(*ty++)) * std::size_t(m[0]);
              for (int i = 0; i < m[0]; ++i) dst[i] += src[i];
            }
          }
        }
        const std::size_t node_plane = std::size_t(m[0]) * std::size_t(m[1]);
        float* col = block.col(b).data();
        const int* tz = taps[2].data();
        for (int k = 0; k < m[2]; ++k) {
          float* dst = col + std::size_t(k) * node_plane;
          std::fill(dst, dst + node_plane, 0.0f);
          for (int o = 0; o < width; ++o) {
            const float* src = sum_xy.data() + std::size_t(*tz++) * node_plane;
            for (std::size_t r = 0; r < node_plane; ++r) dst[r] += src[r];
          }
          for (std::size_t r = 0; r < node_plane; ++r) dst[r] *= scale;
        }
      }
    }
    cv.costs.middleRows(c0, bn) = block.leftCols(bn).transpose();
  }

  // Unit mean over candidates per node.
  for (Eigen::Index r = 0; r < nodes; ++r) {
    const float mean = cv.costs.col(r).mean();
    if (mean > 0.0f) cv.costs.col(r) /= mean;
  }
  return cv;
}

int select_candidate(const CostVolume& cost, Eigen::Index node, const Eigen::Vector3f& prior, double theta) {
  const auto col = cost.costs.col(node);
  const Eigen::Vector3d p = prior.cast<double>();
  int best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (int c = 0; c < cost.candidate_count(); ++c) {
    double value = col[c];
    if (theta != 0.0) value += theta * (cost.candidates[std::size_t(c)].cast<double>() - p).squaredNorm();
    if (value < best_value) {
      best_value = value;
      best = c;
    }
  }
  return best;
}

DisplacementField coupled_convex(const CostVolume& cost, const ConvexConfig& cfg) {
  cfg.validate();
  const Eigen::Index nodes = cost.node_count();
  VectorPlanes field(nodes, 3);

#pragma omp parallel for
  for (Eigen::Index r = 0; r < nodes; ++r)
    field.row(r) = cost.candidates[std::size_t(select_candidate(cost, r, Eigen::Vector3f::Zero(), 0.0))]
                       .cast<float>()
                       .transpose();

  VectorPlanes selected(nodes, 3);
  for (const double theta : cfg.theta_schedule) {
#pragma omp parallel for
    for (Eigen::Index r = 0; r < nodes; ++r)
      selected.row(r) =
          cost.candidates[std::size_t(select_candidate(cost, r, field.row(r).transpose(), theta))]
              .cast<float>()
              .transpose();
    field = selected;
    for (int c = 0; c < 3; ++c)
      box_mean(std::span<float>(field.col(c).data(), std::size_t(nodes)), cost.control_dims, cfg.smooth_radius);
  }

  const GridGeometry geom(cost.control_dims, cost.image_geometry.spacing * float(cost.grid_stride));
  return DisplacementField(geom, cost.grid_stride, std::move(field));
}

}  // namespace voxreg
