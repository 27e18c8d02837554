#pragma once

#include <Eigen/Core>

#include "voxreg/volume.hpp"

namespace voxreg {

using VectorPlanes = Eigen::Matrix<float, Eigen::Dynamic, 3>;

/// Displacement vectors (ux, uy, uz) in voxel units of the image grid,
/// stored as three x-fastest planes. `stride` tags the resolution: 1 is
/// one vector per image voxel, g > 1 is a control grid with a node every
/// g image voxels (node m sits on image voxel m*g).
///
/// Convention: u lives on the fixed grid and points into moving space, so
/// warped(x) = moving(x + u(x)).
struct DisplacementField {
  GridGeometry geometry;
  int stride = 1;
  VectorPlanes vectors;

  DisplacementField() = default;
  explicit DisplacementField(const GridGeometry& g, int stride_ = 1);
  DisplacementField(const GridGeometry& g, int stride_, VectorPlanes v);

  bool is_control() const { return stride > 1; }
  Eigen::Vector3f at(int i, int j, int k) const {
    return vectors.row(Eigen::Index(geometry.index(i, j, k))).transpose();
  }
  void set(int i, int j, int k, const Eigen::Vector3f& v) {
    vectors.row(Eigen::Index(geometry.index(i, j, k))) = v.transpose();
  }
};

/// Number of control nodes along an axis of n voxels so that node
/// (m-1)*g >= n-1 covers the whole grid.
int control_extent(int n, int stride);
Index3 control_dims(const Index3& image_dims, int stride);
GridGeometry control_geometry(const GridGeometry& image, int stride);

/// Per-component trilinear interpolation of a control field onto `target`
/// (image voxel x maps to control coordinate x / stride).
DisplacementField upsample_field(const DisplacementField& field, const GridGeometry& target);

/// Sample a full-resolution field at control nodes m*stride (edge-clamped).
DisplacementField subsample_field(const DisplacementField& full, int stride);

/// Trilinear sample of a field at continuous voxel coordinates.
Eigen::Vector3d sample_field(const DisplacementField& field, const Eigen::Vector3d& pos);

/// Mean Euclidean distance between two fields of the same geometry,
/// optionally ignoring a border of `margin` voxels.
double mean_endpoint_error(const DisplacementField& a, const DisplacementField& b, int margin = 0);

/// Mean vector norm.
double mean_magnitude(const DisplacementField& u, int margin = 0);

}  // namespace voxreg
