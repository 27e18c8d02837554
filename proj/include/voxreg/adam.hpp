#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "voxreg/features.hpp"
#include "voxreg/field.hpp"

namespace voxreg {

struct AdamConfig {
  int iterations = 80;
  double learning_rate = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda_reg = 0.5;
  int grid_stride = 2;

  void validate() const;
};

/// Control-grid parameters, one row per node (x-fastest), columns ux uy uz.
using ControlParams = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct OptimizerState {
  ControlParams first_moment;
  ControlParams second_moment;
  int step = 0;

  explicit OptimizerState(Eigen::Index nodes = 0)
      : first_moment(ControlParams::Zero(nodes, 3)), second_moment(ControlParams::Zero(nodes, 3)) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(OptimizerState& state, ControlParams& params, const ControlParams& grad,
               const AdamConfig& cfg);

struct LossTerms {
  double data = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

struct LossGrad {
  LossTerms loss;
  ControlParams gradient;
};

/// L(u) = mean_{voxels,channels} (F_fix - F_mov(x + U(x)))^2
///        + lambda * mean_{nodes} |forward-difference grad u|_F^2
/// where U is the trilinear upsampling of the control parameters onto the
/// fixed grid. The gradient is exact for the trilinear warp (left-cell
/// sub-gradient at node boundaries, zero along clamped axes).
LossGrad loss_and_grad(const FeatureVolume& fixed, const FeatureVolume& moving,
                       const ControlParams& u, const AdamConfig& cfg);

struct RefineResult {
  DisplacementField dense;
  DisplacementField control;
  // Entry i is the loss at the parameters before update i; the final entry
  // is the loss of the returned field.
  std::vector<LossTerms> trace;
};

/// Adam instance optimisation starting from `init` (any resolution; it is
/// resampled to the control grid of cfg.grid_stride when needed). Throws
/// NumericalError on a non-finite loss.
RefineResult refine(const FeatureVolume& fixed, const FeatureVolume& moving,
                    const DisplacementField& init, const AdamConfig& cfg);

ControlParams to_params(const DisplacementField& control);
DisplacementField from_params(const ControlParams& params, const GridGeometry& image, int stride);

void write_loss_csv(std::span<const LossTerms> trace, std::ostream& out);
void write_loss_csv(std::span<const LossTerms> trace, const std::string& path);
/// Throws FormatError on a wrong header, a malformed row or out-of-order iterations.
std::vector<LossTerms> read_loss_csv(const std::string& path);

}  // namespace voxreg
