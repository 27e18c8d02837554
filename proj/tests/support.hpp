#pragma once

#include <voxreg/features.hpp>
#include <voxreg/field.hpp>
#include <voxreg/volume.hpp>

#include <filesystem>
#include <random>
#include <string>

namespace testing {

inline voxreg::Volume3 random_volume(const voxreg::Index3& dims, unsigned seed, double smooth = 0.0) {
  voxreg::GridGeometry g(dims);
  voxreg::Volume3 v(g);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (Eigen::Index i = 0; i < v.data.size(); ++i) v.data[i] = u(rng);
  if (smooth > 0.0) v = voxreg::gaussian_smooth(v, smooth);
  return v;
}

inline voxreg::FeatureVolume random_features(const voxreg::Index3& dims, int channels, unsigned seed,
                                             double smooth = 0.0) {
  voxreg::GridGeometry g(dims);
  voxreg::FeatureVolume fv(g, channels);
  for (int c = 0; c < channels; ++c) {
    const voxreg::Volume3 v = random_volume(dims, seed * 131u + unsigned(c), smooth);
    fv.data.col(c) = v.data.matrix();
  }
  return fv;
}

// Integer translation with edge clamping: out(x) = in(x + t).
inline voxreg::Volume3 shift_volume(const voxreg::Volume3& in, const voxreg::Index3& t) {
  voxreg::Volume3 out(in.geometry);
  const auto& d = in.geometry.dims;
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i)
        out(i, j, k) = in(std::clamp(i + t[0], 0, d[0] - 1), std::clamp(j + t[1], 0, d[1] - 1),
                          std::clamp(k + t[2], 0, d[2] - 1));
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("voxreg-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
