#pragma once

#include <cstdint>

#include "voxreg/field.hpp"
#include "voxreg/metrics.hpp"
#include "voxreg/volume.hpp"

namespace voxreg {

enum class Texture { smooth_noise, checker };

struct SynthConfig {
  std::uint64_t seed = 0;
  Index3 coarse_grid{5, 5, 5};
  double smoothing_sigma = 2.0;
  double magnitude_cap = 6.0;
  Texture texture = Texture::smooth_noise;
  // Noise smoothing sigma (smooth_noise) or square period (checker), voxels.
  double texture_scale = 2.0;
  int blob_count = 4;

  void validate() const;
};

/// Smooth random field with max |u|_inf == magnitude_cap, halved (up to 5
/// times) until it has no folding. Throws NumericalError if that fails.
DisplacementField random_smooth_field(const GridGeometry& geom, const SynthConfig& cfg);

Volume3 make_texture(const GridGeometry& geom, const SynthConfig& cfg);
LabelVolume make_blobs(const GridGeometry& geom, const SynthConfig& cfg);

/// Fixed-point inverse: v(y) = -u(y + v(y)).
DisplacementField invert_field(const DisplacementField& u, int iterations = 30);

struct SynthPair {
  Volume3 fixed;
  Volume3 moving;
  DisplacementField truth;
  LabelVolume fixed_seg;
  LabelVolume moving_seg;
};

/// moving is the fixed image deformed so that moving(x + truth(x)) ~ fixed(x);
/// truth is therefore the field registration is expected to return.
SynthPair make_pair(const GridGeometry& geom, const SynthConfig& cfg);

/// Same construction with a caller-supplied truth field.
SynthPair make_pair(const GridGeometry& geom, const SynthConfig& cfg, DisplacementField truth);

}  // namespace voxreg
