#include <doctest.h>

#include <voxreg/error.hpp>
#include <voxreg/io.hpp>
#include <voxreg/pipeline.hpp>

#include <cmath>

#include "support.hpp"

using namespace voxreg;

namespace {

RegistrationConfig small_config() {
  RegistrationConfig cfg = RegistrationConfig::load(std::string(VOXREG_SOURCE_DIR) + "/configs/synthetic.cfg");
  cfg.convex.search_radius = 5;
  cfg.adam.iterations = 30;
  return cfg;
}

Eigen::Vector3d interior_mean(const DisplacementField& u, int margin) {
  const auto& d = u.geometry.dims;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  std::size_t n = 0;
  for (int k = margin; k < d[2] - margin; ++k)
    for (int j = margin; j < d[1] - margin; ++j)
      for (int i = margin; i < d[0] - margin; ++i, ++n) sum += u.at(i, j, k).cast<double>();
  return sum / double(n);
}

}  // namespace

TEST_CASE("warp_volume follows the pullback convention") {
  const Volume3 vol = testing::random_volume({9, 8, 7}, 1);
  CHECK((warp_volume(vol, DisplacementField(vol.geometry)).data == vol.data).all());

  Volume3 ramp(GridGeometry({8, 4, 4}));
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 8; ++i) ramp(i, j, k) = float(i);
  DisplacementField back(ramp.geometry);
  back.vectors.rowwise() = Eigen::RowVector3f(-1, 0, 0);
  const Volume3 w = warp_volume(ramp, back);
  for (int i = 1; i < 8; ++i) CHECK(w(i, 2, 1) == float(i - 1));
  CHECK(w(0, 2, 1) == 0.0f);

  Volume3 flat(GridGeometry({6, 6, 6}));
  flat.data.setConstant(2.5f);
  DisplacementField wild(flat.geometry);
  wild.vectors.setRandom();
  wild.vectors *= 7.0f;
  CHECK((warp_volume(flat, wild).data == 2.5f).all());

  CHECK_THROWS_AS(warp_volume(flat, DisplacementField(GridGeometry({6, 6, 5}))), ConfigError);
}

TEST_CASE("identical images register to a near-zero field") {
  const Volume3 f = testing::random_volume({32, 32, 32}, 2, 1.5);
  const RegistrationResult r = register_pair(f, f, small_config());
  CHECK(mean_magnitude(r.displacement) < 0.05);
  CHECK((r.warped_moving.data - f.data).abs().maxCoeff() < 1e-4);
  CHECK(r.loss_trace.size() == 31);
  CHECK(r.displacement.stride == 1);
  CHECK(r.displacement.geometry == f.geometry);
}

TEST_CASE("a global translation is recovered in the interior") {
  const Volume3 f = testing::random_volume({32, 32, 32}, 3, 1.5);
  const Volume3 m = testing::shift_volume(f, {-4, 0, 0});
  const RegistrationResult r = register_pair(f, m, small_config());
  const Eigen::Vector3d mean = interior_mean(r.displacement, 8);
  CHECK(std::abs(mean.x() - 4.0) < 0.5);
  CHECK(std::abs(mean.y()) < 0.5);
  CHECK(std::abs(mean.z()) < 0.5);
  const Eigen::Vector3d coarse = interior_mean(r.convex_displacement, 8);
  CHECK(std::abs(coarse.x() - 4.0) < 0.5);
}

TEST_CASE("zero refinement iterations return the upsampled convex field") {
  const Volume3 f = testing::random_volume({24, 24, 24}, 4, 1.5);
  const Volume3 m = testing::shift_volume(f, {0, 2, -1});
  RegistrationConfig cfg = small_config();
  cfg.adam.iterations = 0;
  const RegistrationResult r = register_pair(f, m, cfg);
  CHECK(r.displacement.vectors == r.convex_displacement.vectors);
  CHECK(r.loss_trace.size() == 1);
}

TEST_CASE("registration is deterministic") {
  const Volume3 f = testing::random_volume({24, 24, 24}, 5, 1.5);
  const Volume3 m = testing::shift_volume(f, {1, -2, 1});
  RegistrationConfig cfg = small_config();
  cfg.adam.iterations = 10;
  const RegistrationResult a = register_pair(f, m, cfg), b = register_pair(f, m, cfg);
  CHECK(a.displacement.vectors == b.displacement.vectors);
  CHECK((a.warped_moving.data == b.warped_moving.data).all());
  CHECK(a.config_echo == b.config_echo);
}

TEST_CASE("external features drive the match") {
  const GridGeometry g({24, 24, 24});
  FeatureVolume ff = testing::random_features(g.dims, 4, 6, 1.5);
  // Unit-variance channels, the contrast a learned descriptor would have.
  for (int c = 0; c < 4; ++c) {
    const Eigen::ArrayXf col = ff.data.col(c).array();
    const float sd = std::sqrt((col - col.mean()).square().mean());
    ff.data.col(c) = ((col - col.mean()) / sd).matrix();
  }
  FeatureVolume fm(g, 4);
  for (int c = 0; c < 4; ++c) {
    Volume3 plane(g);
    plane.data = ff.data.col(c).array();
    fm.data.col(c) = testing::shift_volume(plane, {-3, 0, 0}).data.matrix();
  }
  RegistrationConfig cfg = small_config();
  cfg.feature_source = FeatureSource::external;
  cfg.pca_enable = false;
  const Volume3 img(g);
  const RegistrationResult r = register_pair(img, img, cfg, FeaturePair{ff, fm});
  CHECK(std::abs(interior_mean(r.displacement, 6).x() - 3.0) < 0.5);

  CHECK_THROWS_AS(register_pair(img, img, cfg), ConfigError);
  FeatureVolume wrong = testing::random_features(g.dims, 3, 7);
  CHECK_THROWS_AS(register_pair(img, img, cfg, FeaturePair{ff, wrong}), ConfigError);
}

TEST_CASE("fixed and moving must share a grid") {
  const Volume3 a(GridGeometry({16, 16, 16})), b(GridGeometry({16, 16, 17}));
  CHECK_THROWS_AS(register_pair(a, b, small_config()), ConfigError);
}

TEST_CASE("configuration text round-trips") {
  RegistrationConfig cfg = RegistrationConfig::parse(
      "# comment\n"
      "feature_source = external\n"
      "preprocessing = ct\n"
      "[convex]\n"
      "search_radius = 4   # trailing\n"
      "theta_schedule = 0.5, 2, 8\n"
      "[adam]\n"
      "learning_rate = 0.25\n"
      "[pca]\n"
      "enable = false\n");
  CHECK(cfg.feature_source == FeatureSource::external);
  CHECK(cfg.preprocessing == Preprocessing::ct);
  CHECK(cfg.convex.search_radius == 4);
  CHECK(cfg.convex.theta_schedule == std::vector<double>{0.5, 2.0, 8.0});
  CHECK(cfg.adam.learning_rate == 0.25);
  CHECK_FALSE(cfg.pca_enable);

  const RegistrationConfig back = RegistrationConfig::parse(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.convex.theta_schedule == cfg.convex.theta_schedule);

  cfg.set("adam.lambda_reg", "0.125");
  CHECK(cfg.adam.lambda_reg == 0.125);
  CHECK_THROWS_AS(cfg.set("adam.lambda", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.set("convex.search_radius", "four"), ConfigError);
  CHECK_THROWS_AS(RegistrationConfig::parse("[convex]\nsearch_radius\n"), ConfigError);
  CHECK_THROWS_AS(RegistrationConfig::parse("convex.search_radius = -1\n"), ConfigError);
  CHECK_THROWS_AS(RegistrationConfig::load("/nonexistent/voxreg.cfg"), IoError);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"synthetic.cfg", "abdomenctct.cfg"})
    CHECK_NOTHROW(RegistrationConfig::load(std::string(VOXREG_SOURCE_DIR) + "/configs/" + name));
}
