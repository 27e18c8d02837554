#include <algorithm>
#include <cmath>
#include <vector>

#include "voxreg/error.hpp"
#include "voxreg/volume.hpp"

namespace voxreg {
namespace {

// Convolve every line along `axis` with a symmetric kernel of half-width
// kernel.size()-1, replicating edge voxels.
template <class T>
void convolve_axis(std::span<T> plane, const Index3& dims, int axis, const std::vector<double>& kernel) {
  const int radius = int(kernel.size()) - 1;
  if (radius == 0 && kernel[0] == 1.0) return;
  const int n = dims[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? std::size_t(dims[0]) : std::size_t(dims[0]) * dims[1];
  const int outer_a = axis == 0 ? 1 : 0;
  const int outer_b = axis == 2 ? 1 : 2;
  const int na = dims[outer_a], nb = dims[outer_b];
  const std::size_t sa = outer_a == 0 ? 1 : std::size_t(dims[0]);
  const std::size_t sb = outer_b == 1 ? std::size_t(dims[0]) : std::size_t(dims[0]) * dims[1];

#pragma omp parallel
  {
    std::vector<double> line(static_cast<std::size_t>(n + 2 * radius));
#pragma omp for
    for (int b = 0; b < nb; ++b)
      for (int a = 0; a < na; ++a) {
        T* p = plane.data() + a * sa + b * sb;
        for (int t = -radius; t < n + radius; ++t)
          line[std::size_t(t + radius)] = double(p[std::size_t(std::clamp(t, 0, n - 1)) * stride]);
        for (int t = 0; t < n; ++t) {
          const double* c = line.data() + t + radius;
          double acc = kernel[0] * c[0];
          for (int r = 1; r <= radius; ++r) acc += kernel[std::size_t(r)] * (c[r] + c[-r]);
          p[std::size_t(t) * stride] = T(acc);
        }
      }
  }
}

template <class T>
void separable(std::span<T> plane, const Index3& dims, const std::vector<double>& kernel) {
  if (plane.size() != std::size_t(dims[0]) * dims[1] * dims[2])
    throw ConfigError("filter plane size does not match dimensions");
  for (int axis = 0; axis < 3; ++axis) convolve_axis(plane, dims, axis, kernel);
}

std::vector<double> box_kernel(int radius) {
  if (radius < 0) throw ConfigError("box radius must be >= 0");
  return std::vector<double>(std::size_t(radius) + 1, 1.0 / (2 * radius + 1));
}

}  // namespace

void box_mean(std::span<float> plane, const Index3& dims, int radius) {
  separable(plane, dims, box_kernel(radius));
}

void box_mean(std::span<double> plane, const Index3& dims, int radius) {
  separable(plane, dims, box_kernel(radius));
}

void gaussian_smooth(std::span<float> plane, const Index3& dims, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> k(std::size_t(radius) + 1);
  double sum = 0.0;
  for (int r = 0; r <= radius; ++r) {
    k[std::size_t(r)] = std::exp(-0.5 * r * r / (sigma * sigma));
    sum += r == 0 ? k[0] : 2.0 * k[std::size_t(r)];
  }
  for (auto& w : k) w /= sum;
  separable(plane, dims, k);
}

}  // namespace voxreg
