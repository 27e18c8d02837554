#include <doctest.h>

#include <cli.hpp>
#include <json.hpp>
#include <voxreg/adam.hpp>
#include <voxreg/io.hpp>
#include <voxreg/pipeline.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "support.hpp"

using namespace voxreg;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "voxreg");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string synthetic_cfg() { return std::string(VOXREG_SOURCE_DIR) + "/configs/synthetic.cfg"; }

// Settings that keep 24^3 runs fast.
std::vector<std::string> fast_flags() {
  return {"--config", synthetic_cfg(), "--set", "convex.search_radius=3", "--set", "adam.iterations=10"};
}

void make_synth(const std::string& dir, int seed, bool zero = false) {
  std::vector<std::string> args{"synth", "--out-dir", dir, "--size", "24", "--seed", std::to_string(seed),
                                "--cap", "2"};
  if (zero) args.push_back("--zero");
  const Outcome o = run_cli(args);
  REQUIRE_MESSAGE(o.code == 0, o.err);
}

}  // namespace

TEST_CASE("missing required flag is a usage error") {
  const Outcome o = run_cli({"register", "--fixed", "f.nii", "--out-disp", "u.fvl1"});
  CHECK(o.code == 2);
  CHECK(o.err.rfind("error\tusage\t", 0) == 0);
  CHECK(o.err.find("--moving") != std::string::npos);
  CHECK(std::count(o.err.begin(), o.err.end(), '\n') == 1);
  CHECK(o.out.find("--moving") != std::string::npos);

  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"register", "--fixed", "a", "--moving", "b", "--out-disp", "c", "--set", "adam.nope=1"}).code == 2);
}

TEST_CASE("unreadable inputs exit with the io code") {
  testing::TempDir dir("cli");
  const Outcome o = run_cli({"register", "--fixed", dir.file("none.nii"), "--moving", dir.file("none.nii"),
                             "--out-disp", dir.file("u.fvl1")});
  CHECK(o.code == 3);
  CHECK(o.err.rfind("error\tio\t", 0) == 0);

  write_file(dir.file("junk.fvl1"), "not a feature file");
  const Outcome p = run_cli({"pca", "--fixed-feat", dir.file("junk.fvl1"), "--moving-feat", dir.file("junk.fvl1"),
                             "--out-fixed", dir.file("a"), "--out-moving", dir.file("b"), "--out-basis",
                             dir.file("c")});
  CHECK(p.code == 3);
}

TEST_CASE("numerical divergence exits with code 4") {
  testing::TempDir dir("cli");
  make_synth(dir.file("pair"), 1);
  std::vector<std::string> args{"register", "--fixed", dir.file("pair/fixed.nii"), "--moving",
                                dir.file("pair/moving.nii"), "--out-disp", dir.file("u.fvl1")};
  for (const auto& f : fast_flags()) args.push_back(f);
  args.insert(args.end(), {"--set", "adam.learning_rate=1e200"});
  const Outcome o = run_cli(args);
  CHECK(o.code == 4);
  CHECK(o.err.rfind("error\tnumerical\t", 0) == 0);
}

TEST_CASE("identity registration end to end") {
  testing::TempDir dir("cli");
  make_synth(dir.file("pair"), 3, true);
  std::vector<std::string> args{"register",   "--fixed",     dir.file("pair/fixed.nii"),
                                "--moving",   dir.file("pair/moving.nii"),
                                "--fixed-seg", dir.file("pair/fixed_seg.nii"),
                                "--moving-seg", dir.file("pair/moving_seg.nii"),
                                "--out-disp", dir.file("u.fvl1"),
                                "--out-report", dir.file("report.json")};
  for (const auto& f : fast_flags()) args.push_back(f);
  const Outcome o = run_cli(args);
  REQUIRE_MESSAGE(o.code == 0, o.err);
  const MetricsReport r = read_metrics(dir.file("report.json"));
  CHECK(r.dice_mean == 1.0);
  CHECK(r.folding_pct == 0.0);

  const Outcome m = run_cli({"metrics", "--disp", dir.file("u.fvl1"), "--fixed-seg", dir.file("pair/fixed_seg.nii"),
                             "--moving-seg", dir.file("pair/moving_seg.nii"), "--out-report", dir.file("m.json")});
  REQUIRE(m.code == 0);
  const MetricsReport again = read_metrics(dir.file("m.json"));
  CHECK(again.dice_mean == 1.0);
  CHECK(again.folding_pct == 0.0);
  CHECK(again.sdlogj == r.sdlogj);
}

TEST_CASE("register artifacts are re-readable") {
  testing::TempDir dir("cli");
  make_synth(dir.file("pair"), 4);
  std::vector<std::string> args{"register", "--fixed", dir.file("pair/fixed.nii"), "--moving",
                                dir.file("pair/moving.nii"), "--out-disp", dir.file("u.fvl1"), "--out-warped",
                                dir.file("w.nii.gz"), "--out-loss", dir.file("loss.csv"), "--seed", "17"};
  for (const auto& f : fast_flags()) args.push_back(f);
  const Outcome o = run_cli(args);
  REQUIRE_MESSAGE(o.code == 0, o.err);

  const DisplacementField u = read_displacement(dir.file("u.fvl1"));
  const Volume3 w = read_nifti_volume(dir.file("w.nii.gz"));
  CHECK(u.stride == 1);
  CHECK(u.geometry.dims == w.geometry.dims);
  const std::vector<LossTerms> trace = read_loss_csv(dir.file("loss.csv"));
  CHECK(trace.size() == 11);
  const json meta = json::parse(read_file(dir.file("u.fvl1.meta.json")));
  CHECK(meta["seed"] == 17);
  CHECK(meta["final_loss"].get<double>() == trace.back().total);
  CHECK(RegistrationConfig::parse(meta["config"].get<std::string>()).pca.seed == 17);
}

TEST_CASE("mind, pca and synth artifacts are re-readable") {
  testing::TempDir dir("cli");
  make_synth(dir.file("pair"), 5);
  const Volume3 fixed = read_nifti_volume(dir.file("pair/fixed.nii"));
  CHECK(read_nifti_volume(dir.file("pair/moving.nii")).geometry == fixed.geometry);
  CHECK(read_nifti_labels(dir.file("pair/fixed_seg.nii")).geometry == fixed.geometry);
  CHECK(read_nifti_labels(dir.file("pair/moving_seg.nii")).geometry == fixed.geometry);
  const DisplacementField truth = read_displacement(dir.file("pair/truth.fvl1"));
  const json sj = json::parse(read_file(dir.file("pair/synth.json")));
  CHECK(sj["seed"] == 5);
  CHECK(sj["mean_truth_magnitude"].get<double>() == mean_magnitude(truth));

  for (const char* which : {"fixed", "moving"}) {
    const Outcome o = run_cli({"mind", "--input", dir.file(std::string("pair/") + which + ".nii"), "--out",
                               dir.file(std::string(which) + ".fvl1")});
    REQUIRE_MESSAGE(o.code == 0, o.err);
  }
  const FeatureVolume mf = read_fvl1(dir.file("fixed.fvl1"));
  CHECK(mf.channels() == 12);
  CHECK(mf.geometry == fixed.geometry);

  const Outcome p = run_cli({"pca", "--fixed-feat", dir.file("fixed.fvl1"), "--moving-feat", dir.file("moving.fvl1"),
                             "--out-fixed", dir.file("pf.fvl1"), "--out-moving", dir.file("pm.fvl1"), "--out-basis",
                             dir.file("basis.json"), "--components", "4", "--oversampling", "4"});
  REQUIRE_MESSAGE(p.code == 0, p.err);
  const PcaBasis basis = read_basis(dir.file("basis.json"));
  const FeatureVolume pf = read_fvl1(dir.file("pf.fvl1"));
  CHECK(pf.channels() == 4);
  CHECK(basis.rank() == 4);
  CHECK(project(mf, basis).data.isApprox(pf.data));
  CHECK(read_fvl1(dir.file("pm.fvl1")).channels() == 4);
}

TEST_CASE("eval-pairs summary matches the per-pair reports") {
  testing::TempDir dir("cli");
  std::string manifest = "# fixed\tmoving\tfixed_seg\tmoving_seg\n";
  for (int s = 0; s < 3; ++s) {
    const std::string p = "pair" + std::to_string(s);
    make_synth(dir.file(p), 20 + s);
    manifest += p + "/fixed.nii\t" + p + "/moving.nii\t" + p + "/fixed_seg.nii\t" + p + "/moving_seg.nii\n";
  }
  write_file(dir.file("pairs.tsv"), manifest);
  std::vector<std::string> args{"eval-pairs", "--manifest", dir.file("pairs.tsv"), "--out-report",
                                dir.file("summary.json"), "--out-dir", dir.file("out"), "--jobs", "2"};
  for (const auto& f : fast_flags()) args.push_back(f);
  const Outcome o = run_cli(args);
  REQUIRE_MESSAGE(o.code == 0, o.err);

  const json summary = json::parse(read_file(dir.file("summary.json")));
  REQUIRE(summary["pairs"].size() == 3);
  CHECK(summary["summary"]["count"] == 3);

  std::vector<MetricsReport> reports;
  for (int i = 0; i < 3; ++i) {
    const std::string stem = dir.file("out/pair_" + std::to_string(i));
    reports.push_back(read_metrics(stem + ".metrics.json"));
    CHECK(read_displacement(stem + ".disp.fvl1").stride == 1);
    CHECK(read_loss_csv(stem + ".loss.csv").size() == 11);
    CHECK(metrics_from_json(summary["pairs"][std::size_t(i)]["report"].dump()).dice_mean == reports.back().dice_mean);
  }
  auto check_stat = [&](const char* key, auto field) {
    double mean = 0.0;
    for (const auto& r : reports) mean += field(r);
    mean /= 3.0;
    double var = 0.0;
    for (const auto& r : reports) var += (field(r) - mean) * (field(r) - mean);
    CHECK(summary["summary"][key]["mean"].get<double>() == mean);
    CHECK(summary["summary"][key]["std"].get<double>() == std::sqrt(var / 3.0));
  };
  check_stat("dice_mean", [](const MetricsReport& r) { return r.dice_mean; });
  check_stat("sdlogj", [](const MetricsReport& r) { return r.sdlogj; });
  check_stat("folding_pct", [](const MetricsReport& r) { return r.folding_pct; });

  write_file(dir.file("bad.tsv"), "a\tb\tc\n");
  CHECK(run_cli({"eval-pairs", "--manifest", dir.file("bad.tsv"), "--out-report", dir.file("x.json")}).code == 2);
}
