#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxreg/adam.hpp"
#include "voxreg/convex.hpp"
#include "voxreg/features.hpp"
#include "voxreg/field.hpp"
#include "voxreg/volume.hpp"

namespace voxreg {

enum class FeatureSource { mind, external };
enum class Preprocessing { mri, ct, none };
enum class StridePolicy { upsample_to_voxel, native };

/// Every tunable of the pipeline. Serialised as `key = value` lines with
/// dotted section names, e.g. `convex.search_radius = 8`.
struct RegistrationConfig {
  FeatureSource feature_source = FeatureSource::mind;
  Preprocessing preprocessing = Preprocessing::none;
  StridePolicy feature_stride_policy = StridePolicy::upsample_to_voxel;
  MindConfig mind;
  bool pca_enable = true;
  PcaConfig pca;
  ConvexConfig convex;
  AdamConfig adam;

  void validate() const;
  /// Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;

  static RegistrationConfig parse(const std::string& text);
  static RegistrationConfig load(const std::string& path);
};

struct StageTimings {
  double preprocess_ms = 0.0;
  double features_ms = 0.0;
  double pca_ms = 0.0;
  double convex_ms = 0.0;
  double adam_ms = 0.0;
  double warp_ms = 0.0;
};

struct RegistrationResult {
  DisplacementField displacement;
  // Output of the coupled convex stage, upsampled to the fixed grid.
  DisplacementField convex_displacement;
  Volume3 warped_moving;
  std::vector<LossTerms> loss_trace;
  StageTimings timings;
  std::string config_echo;
};

using FeaturePair = std::pair<FeatureVolume, FeatureVolume>;

/// Preprocess, extract (or take) features, optionally project onto a joint
/// PCA basis, run the coupled convex stage and then Adam refinement.
/// `external` must be given iff cfg.feature_source is external.
RegistrationResult register_pair(const Volume3& fixed, const Volume3& moving,
                                 const RegistrationConfig& cfg,
                                 const std::optional<FeaturePair>& external = std::nullopt);

/// out(x) = vol(x + u(x)), trilinear and edge-clamped.
Volume3 warp_volume(const Volume3& vol, const DisplacementField& u);

}  // namespace voxreg
