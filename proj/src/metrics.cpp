#include "voxreg/metrics.hpp"

#include <Eigen/LU>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "voxreg/error.hpp"

namespace voxreg {

LabelVolume::LabelVolume(const GridGeometry& g, std::int32_t fill) : geometry(g), labels(g.voxel_count(), fill) {
  if (fill < 0) throw ConfigError("labels must be non-negative");
}

LabelVolume::LabelVolume(const GridGeometry& g, std::vector<std::int32_t> values)
    : geometry(g), labels(std::move(values)) {
  if (labels.size() != g.voxel_count()) throw ConfigError("label data length does not match geometry");
  if (std::any_of(labels.begin(), labels.end(), [](std::int32_t v) { return v < 0; }))
    throw ConfigError("labels must be non-negative");
}

std::vector<std::int32_t> LabelVolume::inventory() const {
  std::set<std::int32_t> seen;
  for (auto v : labels)
    if (v != 0) seen.insert(v);
  return {seen.begin(), seen.end()};
}

DiceResult dice(const LabelVolume& a, const LabelVolume& b) {
  if (a.geometry.dims != b.geometry.dims) throw ConfigError("dice needs matching label grids");
  std::map<std::int32_t, std::array<std::size_t, 3>> counts;  // |A|, |B|, |A and B|
  for (std::size_t v = 0; v < a.labels.size(); ++v) {
    const auto la = a.labels[v], lb = b.labels[v];
    if (la != 0) ++counts[la][0];
    if (lb != 0) ++counts[lb][1];
    if (la != 0 && la == lb) ++counts[la][2];
  }
  DiceResult out;
  double sum = 0.0;
  for (const auto& [label, c] : counts) {
    const double score = 2.0 * double(c[2]) / double(c[0] + c[1]);
    out.per_label[label] = score;
    sum += score;
  }
  out.mean = counts.empty() ? 0.0 : sum / double(counts.size());
  return out;
}

LabelVolume warp_labels(const LabelVolume& seg, const DisplacementField& u) {
  if (u.stride != 1 || u.geometry.dims != seg.geometry.dims)
    throw ConfigError("warp_labels needs a full-resolution field on the label grid");
  LabelVolume out(seg.geometry);
  const auto& d = seg.geometry.dims;
#pragma omp parallel for
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const Eigen::Vector3f v = u.at(i, j, k);
        const auto pick = [&](double x, int n) { return int(std::lround(std::clamp(x, 0.0, double(n - 1)))); };
        out(i, j, k) = seg(pick(i + double(v.x()), d[0]), pick(j + double(v.y()), d[1]), pick(k + double(v.z()), d[2]));
      }
  return out;
}

JacobianStats jacobian_stats(const DisplacementField& u) {
  const auto& d = u.geometry.dims;
  if (d[0] < 3 || d[1] < 3 || d[2] < 3) throw ConfigError("jacobian_stats needs at least 3 voxels per axis");
  JacobianStats out;
  out.determinants.resize(std::size_t(d[0] - 2) * (d[1] - 2) * (d[2] - 2));
  const Eigen::Index step[3] = {1, d[0], Eigen::Index(d[0]) * d[1]};

#pragma omp parallel for
  for (int k = 1; k < d[2] - 1; ++k)
    for (int j = 1; j < d[1] - 1; ++j)
      for (int i = 1; i < d[0] - 1; ++i) {
        const Eigen::Index row = Eigen::Index(u.geometry.index(i, j, k));
        Eigen::Matrix3d jac = Eigen::Matrix3d::Identity();
        for (int a = 0; a < 3; ++a)
          jac.col(a) += 0.5 * (u.vectors.row(row + step[a]) - u.vectors.row(row - step[a])).cast<double>().transpose();
        out.determinants[std::size_t(i - 1) + std::size_t(d[0] - 2) * (std::size_t(j - 1) + std::size_t(d[1] - 2) * (k - 1))] =
            jac.determinant();
      }

  std::size_t folded = 0;
  double sum = 0.0, sum_sq = 0.0;
  for (double det : out.determinants) {
    if (det <= 0.0) ++folded;
    const double l = std::log(std::max(det, 1e-6));
    sum += l;
  }
  const double count = double(out.determinants.size());
  const double mean = sum / count;
  for (double det : out.determinants) {
    const double l = std::log(std::max(det, 1e-6)) - mean;
    sum_sq += l * l;
  }
  out.sdlogj = std::sqrt(sum_sq / count);
  out.folding_pct = 100.0 * double(folded) / count;
  return out;
}

MetricsReport evaluate(const LabelVolume& warped_seg, const LabelVolume& fixed_seg, const DisplacementField& u) {
  const DiceResult d = dice(warped_seg, fixed_seg);
  const JacobianStats j = jacobian_stats(u);
  MetricsReport r;
  r.dice_per_label = d.per_label;
  r.dice_mean = d.mean;
  r.sdlogj = j.sdlogj;
  r.folding_pct = j.folding_pct;
  r.evaluated_label_count = int(d.per_label.size());
  return r;
}

std::string to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [label, score] : report.dice_per_label) per[std::to_string(label)] = score;
  j["dice_per_label"] = per;
  j["dice_mean"] = report.dice_mean;
  j["sdlogj"] = report.sdlogj;
  j["folding_pct"] = report.folding_pct;
  j["evaluated_label_count"] = report.evaluated_label_count;
  return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [key, value] : j.at("dice_per_label").items()) r.dice_per_label[std::stoi(key)] = value.get<double>();
    r.dice_mean = j.at("dice_mean").get<double>();
    r.sdlogj = j.at("sdlogj").get<double>();
    r.folding_pct = j.at("folding_pct").get<double>();
    r.evaluated_label_count = j.at("evaluated_label_count").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::bad_header, std::string("metrics report: ") + e.what());
  }
  return r;
}

}  // namespace voxreg
