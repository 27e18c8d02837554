#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "voxreg/error.hpp"
#include "voxreg/io.hpp"
#include "voxreg/log.hpp"
#include "voxreg/metrics.hpp"
#include "voxreg/pipeline.hpp"
#include "voxreg/synth.hpp"

namespace voxreg::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string features;
  std::string preprocess;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
  sub->add_option("--set", o.sets, "override one configuration key (key=value), repeatable");
  sub->add_option("--features", o.features, "feature source")->check(CLI::IsMember({"mind", "external"}));
  sub->add_option("--preprocess", o.preprocess, "intensity preprocessing")->check(CLI::IsMember({"mri", "ct", "none"}));
  o.seed_opt = sub->add_option("--seed", o.seed, "random seed (default 0)");
}

RegistrationConfig build_config(const CommonOptions& o) {
  RegistrationConfig cfg = o.config.empty() ? RegistrationConfig{} : RegistrationConfig::load(o.config);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.features.empty()) cfg.set("feature_source", o.features);
  if (!o.preprocess.empty()) cfg.set("preprocessing", o.preprocess);
  if (o.seed_opt->count() > 0 || o.config.empty()) cfg.pca.seed = o.seed;
  cfg.validate();
  return cfg;
}

std::string with_suffix(const std::string& path, const std::string& suffix) { return path + suffix; }

json timings_json(const StageTimings& t) {
  return {{"preprocess_ms", t.preprocess_ms}, {"features_ms", t.features_ms}, {"pca_ms", t.pca_ms},
          {"convex_ms", t.convex_ms},         {"adam_ms", t.adam_ms},         {"warp_ms", t.warp_ms}};
}

json report_json(const MetricsReport& r) { return json::parse(to_json(r)); }

// --- register --------------------------------------------------------------

struct RegisterOptions {
  std::string fixed, moving, fixed_seg, moving_seg, fixed_feat, moving_feat;
  std::string out_disp, out_warped, out_loss, out_report;
  CommonOptions common;
};

RegistrationResult run_registration(const Volume3& fixed, const Volume3& moving, const RegistrationConfig& cfg,
                                    const std::string& fixed_feat, const std::string& moving_feat) {
  std::optional<FeaturePair> external;
  if (cfg.feature_source == FeatureSource::external) {
    if (fixed_feat.empty() || moving_feat.empty())
      throw ConfigError("--features external requires --fixed-feat and --moving-feat");
    external = FeaturePair{read_fvl1(fixed_feat), read_fvl1(moving_feat)};
  }
  return register_pair(fixed, moving, cfg, external);
}

int cmd_register(const RegisterOptions& o, std::ostream& out) {
  const RegistrationConfig cfg = build_config(o.common);
  if (!o.out_report.empty() && (o.fixed_seg.empty() || o.moving_seg.empty()))
    throw ConfigError("--out-report requires --fixed-seg and --moving-seg");

  const Volume3 fixed = read_nifti_volume(o.fixed);
  const Volume3 moving = read_nifti_volume(o.moving);
  const RegistrationResult res = run_registration(fixed, moving, cfg, o.fixed_feat, o.moving_feat);

  const std::string warped_path = o.out_warped.empty() ? with_suffix(o.out_disp, ".warped.nii") : o.out_warped;
  const std::string loss_path = o.out_loss.empty() ? with_suffix(o.out_disp, ".loss.csv") : o.out_loss;
  write_fvl1(res.displacement, o.out_disp);
  write_nifti(res.warped_moving, warped_path);
  write_loss_csv(res.loss_trace, loss_path);

  json meta;
  meta["seed"] = cfg.pca.seed;
  meta["config"] = res.config_echo;
  meta["timings"] = timings_json(res.timings);
  meta["final_loss"] = res.loss_trace.empty() ? 0.0 : res.loss_trace.back().total;
  if (!o.fixed_seg.empty() && !o.moving_seg.empty()) {
    const LabelVolume fseg = read_nifti_labels(o.fixed_seg);
    const LabelVolume mseg = read_nifti_labels(o.moving_seg);
    const MetricsReport report = evaluate(warp_labels(mseg, res.displacement), fseg, res.displacement);
    write_metrics(report, o.out_report.empty() ? with_suffix(o.out_disp, ".metrics.json") : o.out_report);
    meta["metrics"] = report_json(report);
    out << "dice_mean " << report.dice_mean << " sdlogj " << report.sdlogj << " folding_pct " << report.folding_pct
        << "\n";
  }
  write_file(with_suffix(o.out_disp, ".meta.json"), meta.dump(2) + "\n");
  out << "wrote " << o.out_disp << ", " << warped_path << ", " << loss_path << "\n";
  return kSuccess;
}

// --- metrics ---------------------------------------------------------------

struct MetricsOptions {
  std::string disp, fixed_seg, moving_seg, out_report;
};

int cmd_metrics(const MetricsOptions& o, std::ostream& out) {
  const LabelVolume fseg = read_nifti_labels(o.fixed_seg);
  const LabelVolume mseg = read_nifti_labels(o.moving_seg);
  DisplacementField u = read_displacement(o.disp);
  if (u.is_control()) u = upsample_field(u, fseg.geometry);
  const MetricsReport report = evaluate(warp_labels(mseg, u), fseg, u);
  write_metrics(report, o.out_report);
  out << to_json(report) << "\n";
  return kSuccess;
}

// --- mind ------------------------------------------------------------------

struct MindOptions {
  std::string input, out_path, preprocess = "none";
  MindConfig mind;
};

int cmd_mind(const MindOptions& o, std::ostream& out) {
  Volume3 vol = read_nifti_volume(o.input);
  if (o.preprocess == "mri") vol = preprocess_mri(vol);
  else if (o.preprocess == "ct") vol = preprocess_ct(vol);
  const FeatureVolume fv = mind_ssc(vol, o.mind);
  write_fvl1(fv, o.out_path);
  out << "wrote " << o.out_path << " (" << fv.channels() << " channels)\n";
  return kSuccess;
}

// --- pca -------------------------------------------------------------------

struct PcaOptions {
  std::string fixed_feat, moving_feat, out_fixed, out_moving, out_basis;
  PcaConfig pca;
};

int cmd_pca(const PcaOptions& o, std::ostream& out) {
  const FeatureVolume a = read_fvl1(o.fixed_feat);
  const FeatureVolume b = read_fvl1(o.moving_feat);
  const PcaBasis basis = fit_pca(a, b, o.pca);
  write_fvl1(project(a, basis), o.out_fixed);
  write_fvl1(project(b, basis), o.out_moving);
  write_basis(basis, o.out_basis);
  out << "projected " << a.channels() << " -> " << basis.rank() << " channels\n";
  return kSuccess;
}

// --- synth -----------------------------------------------------------------

struct SynthOptions {
  std::string out_dir, texture = "smooth";
  int size = 64;
  double spacing = 1.0;
  bool zero = false;
  SynthConfig synth;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  SynthConfig cfg = o.synth;
  cfg.texture = o.texture == "checker" ? Texture::checker : Texture::smooth_noise;
  if (o.size < 8) throw ConfigError("--size must be >= 8");
  const GridGeometry geom({o.size, o.size, o.size}, Eigen::Vector3f::Constant(float(o.spacing)));
  const SynthPair p = o.zero ? make_pair(geom, cfg, DisplacementField(geom, 1)) : make_pair(geom, cfg);
  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  write_nifti(p.fixed, (dir / "fixed.nii").string());
  write_nifti(p.moving, (dir / "moving.nii").string());
  write_nifti(p.fixed_seg, (dir / "fixed_seg.nii").string());
  write_nifti(p.moving_seg, (dir / "moving_seg.nii").string());
  write_fvl1(p.truth, (dir / "truth.fvl1").string());
  json meta{{"seed", cfg.seed}, {"size", o.size}, {"magnitude_cap", cfg.magnitude_cap},
            {"mean_truth_magnitude", mean_magnitude(p.truth)}};
  write_file((dir / "synth.json").string(), meta.dump(2) + "\n");
  out << "wrote synthetic pair to " << o.out_dir << "\n";
  return kSuccess;
}

// --- eval-pairs ------------------------------------------------------------

struct EvalOptions {
  std::string manifest, out_report, out_dir;
  int jobs = 1;
  CommonOptions common;
};

struct PairEntry {
  std::string fixed, moving, fixed_seg, moving_seg;
};

std::vector<PairEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  std::vector<PairEntry> pairs;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::stringstream s(line);
    std::string col;
    while (std::getline(s, col, '\t')) cols.push_back(col);
    if (cols.size() != 4)
      throw ConfigError("manifest line " + std::to_string(number) + ": expected 4 tab-separated paths");
    pairs.push_back({resolve(cols[0]), resolve(cols[1]), resolve(cols[2]), resolve(cols[3])});
  }
  if (pairs.empty()) throw ConfigError("manifest lists no pairs");
  return pairs;
}

struct PairOutcome {
  MetricsReport report;
  double dice_initial = 0.0;
  double runtime_ms = 0.0;
  std::string error;
  int code = kSuccess;
};

json mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {{"mean", mean}, {"std", std::sqrt(var / double(v.size()))}};
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  const RegistrationConfig cfg = build_config(o.common);
  if (cfg.feature_source == FeatureSource::external)
    throw ConfigError("eval-pairs supports MIND features only");
  if (o.jobs < 1) throw ConfigError("--jobs must be >= 1");
  const std::vector<PairEntry> pairs = read_manifest(o.manifest);
  if (!o.out_dir.empty()) fs::create_directories(o.out_dir);

  std::vector<PairOutcome> outcomes(pairs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      PairOutcome& r = outcomes[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const Volume3 fixed = read_nifti_volume(pairs[i].fixed);
        const Volume3 moving = read_nifti_volume(pairs[i].moving);
        const LabelVolume fseg = read_nifti_labels(pairs[i].fixed_seg);
        const LabelVolume mseg = read_nifti_labels(pairs[i].moving_seg);
        const RegistrationResult res = register_pair(fixed, moving, cfg);
        r.report = evaluate(warp_labels(mseg, res.displacement), fseg, res.displacement);
        r.dice_initial = dice(mseg, fseg).mean;
        if (!o.out_dir.empty()) {
          const fs::path stem = fs::path(o.out_dir) / ("pair_" + std::to_string(i));
          write_fvl1(res.displacement, stem.string() + ".disp.fvl1");
          write_loss_csv(res.loss_trace, stem.string() + ".loss.csv");
          write_metrics(r.report, stem.string() + ".metrics.json");
        }
      } catch (const NumericalError& e) {
        r.error = e.what();
        r.code = kNumerical;
      } catch (const IoError& e) {
        r.error = e.what();
        r.code = kIo;
      } catch (const std::exception& e) {
        r.error = e.what();
        r.code = kUsage;
      }
      r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  std::vector<std::jthread> threads;
  for (int t = 1; t < std::min<int>(o.jobs, int(pairs.size())); ++t) threads.emplace_back(worker);
  worker();
  threads.clear();

  for (std::size_t i = 0; i < outcomes.size(); ++i)
    if (outcomes[i].code != kSuccess) {
      err << "error\tpair\tpair " << i << ": " << outcomes[i].error << "\n";
      return outcomes[i].code;
    }

  json summary;
  summary["seed"] = cfg.pca.seed;
  summary["config"] = cfg.to_text();
  json entries = json::array();
  std::vector<double> dsc, sdlogj, folding, initial, runtime;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PairOutcome& r = outcomes[i];
    entries.push_back({{"index", i},
                       {"fixed", pairs[i].fixed},
                       {"moving", pairs[i].moving},
                       {"dice_initial", r.dice_initial},
                       {"runtime_ms", r.runtime_ms},
                       {"report", report_json(r.report)}});
    dsc.push_back(r.report.dice_mean);
    sdlogj.push_back(r.report.sdlogj);
    folding.push_back(r.report.folding_pct);
    initial.push_back(r.dice_initial);
    runtime.push_back(r.runtime_ms);
  }
  summary["pairs"] = entries;
  summary["summary"] = {{"count", pairs.size()},
                        {"dice_initial", mean_std(initial)},
                        {"dice_mean", mean_std(dsc)},
                        {"sdlogj", mean_std(sdlogj)},
                        {"folding_pct", mean_std(folding)},
                        {"runtime_ms", mean_std(runtime)}};
  write_file(o.out_report, summary.dump(2) + "\n");
  out << "evaluated " << pairs.size() << " pairs: dice " << summary["summary"]["dice_mean"]["mean"].get<double>()
      << " (initial " << summary["summary"]["dice_initial"]["mean"].get<double>() << ")\n";
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"voxreg: feature-based deformable registration"};
  app.require_subcommand(1);

  RegisterOptions reg;
  auto* reg_cmd = app.add_subcommand("register", "register a moving image onto a fixed image");
  reg_cmd->add_option("--fixed", reg.fixed, "fixed image (NIfTI)")->required();
  reg_cmd->add_option("--moving", reg.moving, "moving image (NIfTI)")->required();
  reg_cmd->add_option("--fixed-seg", reg.fixed_seg, "fixed segmentation (NIfTI)");
  reg_cmd->add_option("--moving-seg", reg.moving_seg, "moving segmentation (NIfTI)");
  reg_cmd->add_option("--fixed-feat", reg.fixed_feat, "fixed features (FVL1)");
  reg_cmd->add_option("--moving-feat", reg.moving_feat, "moving features (FVL1)");
  reg_cmd->add_option("--out-disp", reg.out_disp, "displacement output (FVL1)")->required();
  reg_cmd->add_option("--out-warped", reg.out_warped, "warped moving image (NIfTI)");
  reg_cmd->add_option("--out-loss", reg.out_loss, "loss trace (CSV)");
  reg_cmd->add_option("--out-report", reg.out_report, "metrics report (JSON)");
  add_common(reg_cmd, reg.common);

  MetricsOptions met;
  auto* met_cmd = app.add_subcommand("metrics", "evaluate a displacement field against segmentations");
  met_cmd->add_option("--disp", met.disp, "displacement (FVL1)")->required();
  met_cmd->add_option("--fixed-seg", met.fixed_seg, "fixed segmentation")->required();
  met_cmd->add_option("--moving-seg", met.moving_seg, "moving segmentation")->required();
  met_cmd->add_option("--out-report", met.out_report, "metrics report (JSON)")->required();

  MindOptions mind;
  auto* mind_cmd = app.add_subcommand("mind", "compute MIND-SSC descriptors");
  mind_cmd->add_option("--input", mind.input, "image (NIfTI)")->required();
  mind_cmd->add_option("--out", mind.out_path, "descriptor output (FVL1)")->required();
  mind_cmd->add_option("--dilation", mind.mind.dilation, "neighbourhood distance");
  mind_cmd->add_option("--patch-radius", mind.mind.patch_radius, "box aggregation half-width");
  mind_cmd->add_option("--preprocess", mind.preprocess)->check(CLI::IsMember({"mri", "ct", "none"}));

  PcaOptions pca;
  auto* pca_cmd = app.add_subcommand("pca", "project two feature volumes onto a joint PCA basis");
  pca_cmd->add_option("--fixed-feat", pca.fixed_feat)->required();
  pca_cmd->add_option("--moving-feat", pca.moving_feat)->required();
  pca_cmd->add_option("--out-fixed", pca.out_fixed)->required();
  pca_cmd->add_option("--out-moving", pca.out_moving)->required();
  pca_cmd->add_option("--out-basis", pca.out_basis)->required();
  pca_cmd->add_option("--components", pca.pca.components);
  pca_cmd->add_option("--oversampling", pca.pca.oversampling);
  pca_cmd->add_option("--power-iterations", pca.pca.power_iterations);
  pca_cmd->add_option("--sample-cap", pca.pca.sample_cap);
  pca_cmd->add_option("--seed", pca.pca.seed);

  SynthOptions syn;
  auto* syn_cmd = app.add_subcommand("synth", "write a synthetic pair with ground truth");
  syn_cmd->add_option("--out-dir", syn.out_dir)->required();
  syn_cmd->add_option("--size", syn.size, "cube edge in voxels");
  syn_cmd->add_option("--spacing", syn.spacing, "voxel spacing in mm");
  syn_cmd->add_option("--seed", syn.synth.seed);
  syn_cmd->add_option("--cap", syn.synth.magnitude_cap, "max displacement in voxels");
  syn_cmd->add_option("--sigma", syn.synth.smoothing_sigma, "field smoothing sigma");
  syn_cmd->add_option("--blobs", syn.synth.blob_count, "number of labelled blobs");
  syn_cmd->add_option("--texture", syn.texture)->check(CLI::IsMember({"smooth", "checker"}));
  syn_cmd->add_flag("--zero", syn.zero, "identity truth (moving == fixed)");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval-pairs", "register and evaluate every pair of a manifest");
  ev_cmd->add_option("--manifest", ev.manifest, "tab-separated: fixed, moving, fixed_seg, moving_seg")->required();
  ev_cmd->add_option("--out-report", ev.out_report, "summary JSON")->required();
  ev_cmd->add_option("--out-dir", ev.out_dir, "directory for per-pair outputs");
  ev_cmd->add_option("--jobs", ev.jobs, "pairs processed concurrently");
  add_common(ev_cmd, ev.common);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    err << "error\tusage\t" << msg << "\n";
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    if (*reg_cmd) return cmd_register(reg, out);
    if (*met_cmd) return cmd_metrics(met, out);
    if (*mind_cmd) return cmd_mind(mind, out);
    if (*pca_cmd) return cmd_pca(pca, out);
    if (*syn_cmd) return cmd_synth(syn, out);
    if (*ev_cmd) return cmd_eval(ev, out, err);
  } catch (const ConfigError& e) {
    err << "error\tusage\t" << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "error\tio\t" << e.what() << "\n";
    return kIo;
  } catch (const NumericalError& e) {
    err << "error\tnumerical\t" << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error\tinternal\t" << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace voxreg::cli
