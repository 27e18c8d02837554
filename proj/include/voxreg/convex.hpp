#pragma once

#include <Eigen/Core>

#include <vector>

#include "voxreg/features.hpp"
#include "voxreg/field.hpp"

namespace voxreg {

struct ConvexConfig {
  int grid_stride = 2;
  int search_radius = 8;
  int search_step = 1;
  std::vector<double> theta_schedule{1.0, 3.0, 10.0};
  int smooth_radius = 1;
  // Half-width of the patch the feature SSD is averaged over.
  int patch_radius = 1;
  // L2-normalise feature vectors before matching, which makes SSD an
  // affine function of cosine correlation.
  bool normalize_features = false;

  void validate() const;
  int candidates_per_axis() const { return 2 * search_radius / search_step + 1; }
};

/// Matching costs of every control node against a shared table of integer
/// candidate displacements. `costs` is K x M: column m holds the K costs of
/// control node m, normalised to unit mean over candidates.
struct CostVolume {
  GridGeometry image_geometry;
  Index3 control_dims{};
  int grid_stride = 1;
  std::vector<Eigen::Vector3i> candidates;
  Eigen::MatrixXf costs;

  int candidate_count() const { return int(candidates.size()); }
  Eigen::Index node_count() const { return costs.cols(); }
};

/// Candidate table: z-major, x-fastest over {-R, -R+q, ..., R}^3.
std::vector<Eigen::Vector3i> candidate_table(int radius, int step);

/// Feature SSD (mean over channels and the (2r+1)^3 patch) between fixed
/// at each control node and moving at node + delta, for every candidate.
CostVolume build_cost_volume(const FeatureVolume& fixed, const FeatureVolume& moving,
                             const ConvexConfig& cfg);

/// argmin_k cost(k, node) + theta * |delta_k - prior|^2; ties go to the
/// smallest candidate index.
int select_candidate(const CostVolume& cost, Eigen::Index node, const Eigen::Vector3f& prior,
                     double theta);

/// Coupled convex optimisation: start from the raw per-node argmin, then
/// for each theta alternate coupled selection and box smoothing of the
/// selected field. Returns a control-resolution field.
DisplacementField coupled_convex(const CostVolume& cost, const ConvexConfig& cfg);

}  // namespace voxreg
