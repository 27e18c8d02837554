#include "voxreg/adam.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include "voxreg/error.hpp"
#include "voxreg/log.hpp"

namespace voxreg {

void AdamConfig::validate() const {
  if (iterations < 0) throw ConfigError("adam.iterations must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("adam.learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam.epsilon must be positive");
  if (!(lambda_reg >= 0.0)) throw ConfigError("adam.lambda_reg must be >= 0");
  if (grid_stride < 1) throw ConfigError("adam.grid_stride must be >= 1");
}

void adam_step(OptimizerState& state, ControlParams& params, const ControlParams& grad, const AdamConfig& cfg) {
  if (state.first_moment.rows() != params.rows()) state = OptimizerState(params.rows());
  ++state.step;
  state.first_moment = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * grad;
  state.second_moment = cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double c2 = 1.0 - std::pow(cfg.beta2, state.step);
  params.array() -= cfg.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + cfg.epsilon);
}

namespace {

// Image index -> (lower control node, weight of the upper node).
struct AxisWeight {
  int lo;
  double w1;
};

std::vector<AxisWeight> axis_weights(int n, int nodes, int stride) {
  std::vector<AxisWeight> w(static_cast<std::size_t>(n));
  for (int x = 0; x < n; ++x) {
    const double t = double(x) / stride;
    int lo = std::min(int(std::floor(t)), nodes - 2);
    w[std::size_t(x)] = {lo, t - lo};
  }
  return w;
}

struct ControlMap {
  Index3 nodes{};
  std::array<std::vector<AxisWeight>, 3> axes;

  template <class F>
  void for_each_node(int i, int j, int k, F&& f) const {
    const AxisWeight& ax = axes[0][std::size_t(i)];
    const AxisWeight& ay = axes[1][std::size_t(j)];
    const AxisWeight& az = axes[2][std::size_t(k)];
    for (int c = 0; c < 2; ++c) {
      const double wz = c ? az.w1 : 1.0 - az.w1;
      for (int b = 0; b < 2; ++b) {
        const double wy = b ? ay.w1 : 1.0 - ay.w1;
        for (int a = 0; a < 2; ++a) {
          const double wx = a ? ax.w1 : 1.0 - ax.w1;
          const Eigen::Index node =
              (ax.lo + a) + Eigen::Index(nodes[0]) * ((ay.lo + b) + Eigen::Index(nodes[1]) * (az.lo + c));
          f(node, wx * wy * wz);
        }
      }
    }
  }
};

ControlMap control_map(const Index3& dims, int stride) {
  ControlMap map;
  map.nodes = control_dims(dims, stride);
  for (int a = 0; a < 3; ++a) map.axes[std::size_t(a)] = axis_weights(dims[a], map.nodes[a], stride);
  return map;
}

}  // namespace

LossGrad loss_and_grad(const FeatureVolume& fixed, const FeatureVolume& moving, const ControlParams& u,
                       const AdamConfig& cfg) {
  if (fixed.geometry.dims != moving.geometry.dims)
    throw ConfigError("fixed and moving features differ in geometry");
  if (fixed.channels() != moving.channels())
    throw ConfigError("fixed and moving features differ in channel count");

  const auto& d = fixed.geometry.dims;
  const ControlMap map = control_map(d, cfg.grid_stride);
  const Eigen::Index nodes = Eigen::Index(map.nodes[0]) * map.nodes[1] * map.nodes[2];
  if (u.rows() != nodes) throw ConfigError("parameter count does not match the control grid");

  const int channels = fixed.channels();
  const std::size_t n = fixed.geometry.voxel_count();
  const double norm = 1.0 / (double(n) * channels);

  // Dense residual gradient dL/dU per voxel, then pulled back onto nodes.
  Eigen::Matrix<double, Eigen::Dynamic, 3> dense_grad(Eigen::Index(n), 3);
  std::vector<double> slice_loss(std::size_t(d[2]), 0.0);

#pragma omp parallel for schedule(static)
  for (int k = 0; k < d[2]; ++k) {
    double acc = 0.0;
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        Eigen::Vector3d disp = Eigen::Vector3d::Zero();
        map.for_each_node(i, j, k, [&](Eigen::Index node, double w) { disp += w * u.row(node).transpose(); });
        const auto st = trilinear_stencil(d, i + disp.x(), j + disp.y(), k + disp.z());
        const Eigen::Index row = Eigen::Index(fixed.geometry.index(i, j, k));
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        for (int ch = 0; ch < channels; ++ch) {
          const float* mv = moving.data.col(ch).data();
          double value = 0.0, gx = 0.0, gy = 0.0, gz = 0.0;
          for (int c = 0; c < 8; ++c) {
            const double m = mv[st.offsets[std::size_t(c)]];
            value += st.weights[std::size_t(c)] * m;
            gx += st.dweights[0][std::size_t(c)] * m;
            gy += st.dweights[1][std::size_t(c)] * m;
            gz += st.dweights[2][std::size_t(c)] * m;
          }
          const double r = value - double(fixed.data(row, ch));
          acc += r * r;
          g += r * Eigen::Vector3d(gx, gy, gz);
        }
        dense_grad.row(row) = (2.0 * norm) * g.transpose();
      }
    slice_loss[std::size_t(k)] = acc;
  }

  LossGrad out;
  out.gradient = ControlParams::Zero(nodes, 3);
  double data = 0.0;
  for (double s : slice_loss) data += s;
  out.loss.data = data * norm;

  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const Eigen::Index row = Eigen::Index(fixed.geometry.index(i, j, k));
        map.for_each_node(i, j, k,
                          [&](Eigen::Index node, double w) { out.gradient.row(node) += w * dense_grad.row(row); });
      }

  // Diffusion regulariser: forward differences between neighbouring nodes.
  if (cfg.lambda_reg > 0.0) {
    const double weight = cfg.lambda_reg / double(nodes);
    const auto& m = map.nodes;
    const Eigen::Index step[3] = {1, m[0], Eigen::Index(m[0]) * m[1]};
    double reg = 0.0;
    for (int k = 0; k < m[2]; ++k)
      for (int j = 0; j < m[1]; ++j)
        for (int i = 0; i < m[0]; ++i) {
          const Eigen::Index node = i + Eigen::Index(m[0]) * (j + Eigen::Index(m[1]) * k);
          const int idx[3] = {i, j, k};
          for (int a = 0; a < 3; ++a) {
            if (idx[a] + 1 >= m[a]) continue;
            const Eigen::RowVector3d diff = u.row(node + step[a]) - u.row(node);
            reg += diff.squaredNorm();
            out.gradient.row(node + step[a]) += 2.0 * weight * diff;
            out.gradient.row(node) -= 2.0 * weight * diff;
          }
        }
    out.loss.reg = weight * reg;
  }
  out.loss.total = out.loss.data + out.loss.reg;
  return out;
}

ControlParams to_params(const DisplacementField& control) { return control.vectors.cast<double>(); }

DisplacementField from_params(const ControlParams& params, const GridGeometry& image, int stride) {
  return DisplacementField(control_geometry(image, stride), stride, params.cast<float>());
}

namespace {

DisplacementField initial_control(const DisplacementField& init, const GridGeometry& image, int stride) {
  const Index3 want = control_dims(image.dims, stride);
  if (init.stride == stride && init.geometry.dims == want) return init;
  const DisplacementField full = upsample_field(init, image);
  if (stride == 1) return full;
  return subsample_field(full, stride);
}

void check_finite(const LossTerms& loss, int iteration) {
  if (!std::isfinite(loss.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at iteration " << iteration << " (data " << loss.data << ", reg " << loss.reg << ")";
    throw NumericalError(msg.str(), iteration);
  }
}

}  // namespace

RefineResult refine(const FeatureVolume& fixed, const FeatureVolume& moving, const DisplacementField& init,
                    const AdamConfig& cfg) {
  cfg.validate();
  if (fixed.geometry.dims != moving.geometry.dims)
    throw ConfigError("fixed and moving features differ in geometry");
  const GridGeometry& image = fixed.geometry;
  ControlParams params = to_params(initial_control(init, image, cfg.grid_stride));

  RefineResult result;
  OptimizerState state(params.rows());
  for (int it = 0; it < cfg.iterations; ++it) {
    const LossGrad lg = loss_and_grad(fixed, moving, params, cfg);
    check_finite(lg.loss, it);
    result.trace.push_back(lg.loss);
    adam_step(state, params, lg.gradient, cfg);
  }
  if (!params.allFinite()) throw NumericalError("non-finite parameters after refinement", cfg.iterations);
  const LossGrad final_eval = loss_and_grad(fixed, moving, params, cfg);
  check_finite(final_eval.loss, cfg.iterations);
  result.trace.push_back(final_eval.loss);

  result.control = from_params(params, image, cfg.grid_stride);
  result.dense = upsample_field(result.control, image);
  if (!result.trace.empty())
    log::debug("refine: loss " + std::to_string(result.trace.front().total) + " -> " +
               std::to_string(result.trace.back().total));
  return result;
}

void write_loss_csv(std::span<const LossTerms> trace, std::ostream& out) {
  out << "iteration,data_term,reg_term,total\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << i << ',' << trace[i].data << ',' << trace[i].reg << ',' << trace[i].total << '\n';
}

void write_loss_csv(std::span<const LossTerms> trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_loss_csv(trace, out);
  if (!out) throw IoError("failed writing " + path);
}

std::vector<LossTerms> read_loss_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "iteration,data_term,reg_term,total")
    throw FormatError(FormatErrc::bad_header, "unexpected loss trace header in " + path);
  std::vector<LossTerms> trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t iteration = 0;
    LossTerms t;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> iteration >> c1 >> t.data >> c2 >> t.reg >> c3 >> t.total) || c1 != ',' || c2 != ',' || c3 != ',' ||
        iteration != trace.size())
      throw FormatError(FormatErrc::bad_header, "malformed loss trace row " + std::to_string(trace.size()) + " in " + path);
    trace.push_back(t);
  }
  return trace;
}

}  // namespace voxreg
