#include "voxreg/field.hpp"

#include <algorithm>
#include <cmath>

#include "voxreg/error.hpp"

namespace voxreg {

DisplacementField::DisplacementField(const GridGeometry& g, int stride_)
    : geometry(g), stride(stride_), vectors(VectorPlanes::Zero(Eigen::Index(g.voxel_count()), 3)) {
  if (stride < 1) throw ConfigError("field stride must be >= 1");
}

DisplacementField::DisplacementField(const GridGeometry& g, int stride_, VectorPlanes v)
    : geometry(g), stride(stride_), vectors(std::move(v)) {
  if (stride < 1) throw ConfigError("field stride must be >= 1");
  if (std::size_t(vectors.rows()) != g.voxel_count())
    throw ConfigError("field data length does not match geometry");
  if (!vectors.allFinite()) throw ConfigError("field contains non-finite values");
}

int control_extent(int n, int stride) {
  if (stride < 1) throw ConfigError("grid stride must be >= 1");
  return (n - 1 + stride - 1) / stride + 1;
}

Index3 control_dims(const Index3& image_dims, int stride) {
  return {control_extent(image_dims[0], stride), control_extent(image_dims[1], stride),
          control_extent(image_dims[2], stride)};
}

GridGeometry control_geometry(const GridGeometry& image, int stride) {
  return GridGeometry(control_dims(image.dims, stride), image.spacing * float(stride));
}

DisplacementField upsample_field(const DisplacementField& field, const GridGeometry& target) {
  if (field.stride == 1) {
    if (field.geometry.dims != target.dims)
      throw ConfigError("full-resolution field does not match the target grid");
    return DisplacementField(target, 1, field.vectors);
  }
  if (control_dims(target.dims, field.stride) != field.geometry.dims)
    throw ConfigError("control field does not match the target grid at its stride");
  DisplacementField out(target, 1);
  const double inv = 1.0 / field.stride;
  const auto& d = target.dims;
#pragma omp parallel for
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const auto st = trilinear_stencil(field.geometry.dims, i * inv, j * inv, k * inv);
        const Eigen::Index row = Eigen::Index(target.index(i, j, k));
        for (int c = 0; c < 3; ++c) out.vectors(row, c) = float(st.sample(field.vectors.col(c)));
      }
  return out;
}

DisplacementField subsample_field(const DisplacementField& full, int stride) {
  if (full.stride != 1) throw ConfigError("subsample_field expects a full-resolution field");
  const GridGeometry g = control_geometry(full.geometry, stride);
  DisplacementField out(g, stride);
  const auto& fd = full.geometry.dims;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i)
        out.set(i, j, k,
                full.at(std::min(i * stride, fd[0] - 1), std::min(j * stride, fd[1] - 1),
                        std::min(k * stride, fd[2] - 1)));
  return out;
}

Eigen::Vector3d sample_field(const DisplacementField& field, const Eigen::Vector3d& pos) {
  const auto st = trilinear_stencil(field.geometry.dims, pos.x(), pos.y(), pos.z());
  return {st.sample(field.vectors.col(0)), st.sample(field.vectors.col(1)), st.sample(field.vectors.col(2))};
}

namespace {

template <class F>
double interior_mean(const GridGeometry& g, int margin, F&& value) {
  const auto& d = g.dims;
  double sum = 0.0;
  std::size_t count = 0;
  for (int k = margin; k < d[2] - margin; ++k)
    for (int j = margin; j < d[1] - margin; ++j)
      for (int i = margin; i < d[0] - margin; ++i) {
        sum += value(Eigen::Index(g.index(i, j, k)));
        ++count;
      }
  if (count == 0) throw ConfigError("margin leaves no voxels");
  return sum / double(count);
}

}  // namespace

double mean_endpoint_error(const DisplacementField& a, const DisplacementField& b, int margin) {
  if (a.geometry.dims != b.geometry.dims) throw ConfigError("endpoint error needs matching grids");
  return interior_mean(a.geometry, margin, [&](Eigen::Index r) {
    return (a.vectors.row(r) - b.vectors.row(r)).cast<double>().norm();
  });
}

double mean_magnitude(const DisplacementField& u, int margin) {
  return interior_mean(u.geometry, margin,
                       [&](Eigen::Index r) { return u.vectors.row(r).cast<double>().norm(); });
}

}  // namespace voxreg
