#include "voxreg/pipeline.hpp"

#include <chrono>

#include "voxreg/error.hpp"
#include "voxreg/log.hpp"

namespace voxreg {

Volume3 warp_volume(const Volume3& vol, const DisplacementField& u) {
  if (u.stride != 1 || u.geometry.dims != vol.geometry.dims)
    throw ConfigError("warp_volume needs a full-resolution field on the volume grid");
  Volume3 out(vol.geometry);
  const std::span<const float> src(vol.data.data(), std::size_t(vol.data.size()));
  const auto& d = vol.geometry.dims;
#pragma omp parallel for
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const Eigen::Vector3f v = u.at(i, j, k);
        out(i, j, k) = float(sample_plane(src, d, i + double(v.x()), j + double(v.y()), k + double(v.z())));
      }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

Volume3 preprocess(const Volume3& vol, Preprocessing mode) {
  switch (mode) {
    case Preprocessing::mri: return preprocess_mri(vol);
    case Preprocessing::ct: return preprocess_ct(vol);
    case Preprocessing::none: break;
  }
  return vol;
}

// Field estimated on a token grid (token voxel units) -> image voxel units on
// the image grid, using the same centre anchoring as upsample_features.
DisplacementField token_field_to_image(const DisplacementField& token_field, int stride, const GridGeometry& image) {
  DisplacementField out(image, 1);
  const double s = stride;
  const double centre = 0.5 * (s - 1.0);
  const auto& d = image.dims;
#pragma omp parallel for
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const Eigen::Vector3d v =
            sample_field(token_field, {(i - centre) / s, (j - centre) / s, (k - centre) / s});
        out.set(i, j, k, (s * v).cast<float>());
      }
  return out;
}

}  // namespace

RegistrationResult register_pair(const Volume3& fixed, const Volume3& moving, const RegistrationConfig& cfg,
                                 const std::optional<FeaturePair>& external) {
  cfg.validate();
  if (!(fixed.geometry == moving.geometry))
    throw ConfigError("fixed and moving images must share a grid; resample first");
  const bool use_external = cfg.feature_source == FeatureSource::external;
  if (use_external && !external) throw ConfigError("feature_source = external but no features were supplied");
  if (!use_external && external) log::warn("external features supplied but feature_source = mind; ignoring them");

  RegistrationResult result;
  result.config_echo = cfg.to_text();

  auto t0 = Clock::now();
  const Volume3 fixed_p = preprocess(fixed, cfg.preprocessing);
  const Volume3 moving_p = preprocess(moving, cfg.preprocessing);
  result.timings.preprocess_ms = elapsed_ms(t0);

  t0 = Clock::now();
  FeatureVolume ff, fm;
  int token_stride = 1;
  if (use_external) {
    const auto& [ef, em] = *external;
    if (ef.channels() != em.channels() || ef.stride != em.stride || ef.geometry.dims != em.geometry.dims)
      throw ConfigError("external fixed and moving features disagree in shape or stride");
    if (cfg.feature_stride_policy == StridePolicy::upsample_to_voxel || ef.stride == 1) {
      ff = upsample_features(ef, fixed.geometry);
      fm = upsample_features(em, fixed.geometry);
    } else {
      check_token_coverage(ef.geometry.dims, ef.stride, fixed.geometry.dims);
      token_stride = ef.stride;
      ff = FeatureVolume(ef.geometry, 1, ef.data);
      fm = FeatureVolume(em.geometry, 1, em.data);
    }
  } else {
    ff = mind_ssc(fixed_p, cfg.mind);
    fm = mind_ssc(moving_p, cfg.mind);
  }
  result.timings.features_ms = elapsed_ms(t0);

  t0 = Clock::now();
  if (cfg.pca_enable && ff.channels() > cfg.pca.components) {
    PcaConfig pca = cfg.pca;
    if (pca.components + pca.oversampling > ff.channels()) {
      pca.oversampling = ff.channels() - pca.components;
      log::info("pca oversampling reduced to " + std::to_string(pca.oversampling) + " to fit the channel count");
    }
    const PcaBasis basis = fit_pca(ff, fm, pca);
    ff = project(ff, basis);
    fm = project(fm, basis);
  }
  result.timings.pca_ms = elapsed_ms(t0);

  t0 = Clock::now();
  const CostVolume cost = build_cost_volume(ff, fm, cfg.convex);
  const DisplacementField control = coupled_convex(cost, cfg.convex);
  result.timings.convex_ms = elapsed_ms(t0);

  t0 = Clock::now();
  RefineResult refined = refine(ff, fm, control, cfg.adam);
  result.loss_trace = std::move(refined.trace);
  result.timings.adam_ms = elapsed_ms(t0);

  if (token_stride == 1) {
    result.displacement = std::move(refined.dense);
    result.convex_displacement = upsample_field(control, fixed.geometry);
  } else {
    result.displacement = token_field_to_image(refined.dense, token_stride, fixed.geometry);
    result.convex_displacement =
        token_field_to_image(upsample_field(control, ff.geometry), token_stride, fixed.geometry);
  }

  t0 = Clock::now();
  result.warped_moving = warp_volume(moving, result.displacement);
  result.timings.warp_ms = elapsed_ms(t0);
  return result;
}

}  // namespace voxreg
