#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "voxreg/error.hpp"
#include "voxreg/io.hpp"
#include "voxreg/pipeline.hpp"

namespace voxreg {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("invalid value '" + value + "' for " + key);
}

long long to_int(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_value(key, value);
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value);
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

using Setter = std::function<void(RegistrationConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const RegistrationConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

template <class T>
Key int_key(T RegistrationConfig::*section, int T::*field) {
  return {[=](RegistrationConfig& c, const std::string& k, const std::string& v) { (c.*section).*field = int(to_int(k, v)); },
          [=](const RegistrationConfig& c) { return std::to_string((c.*section).*field); }};
}

template <class T>
Key double_key(T RegistrationConfig::*section, double T::*field) {
  return {[=](RegistrationConfig& c, const std::string& k, const std::string& v) { (c.*section).*field = to_double(k, v); },
          [=](const RegistrationConfig& c) { return fmt((c.*section).*field); }};
}

const std::map<std::string, Key>& keys() {
  using RC = RegistrationConfig;
  static const std::map<std::string, Key> table = {
      {"feature_source",
       {[](RC& c, const std::string& k, const std::string& v) {
          if (v == "mind") c.feature_source = FeatureSource::mind;
          else if (v == "external") c.feature_source = FeatureSource::external;
          else bad_value(k, v);
        },
        [](const RC& c) { return std::string(c.feature_source == FeatureSource::mind ? "mind" : "external"); }}},
      {"preprocessing",
       {[](RC& c, const std::string& k, const std::string& v) {
          if (v == "mri") c.preprocessing = Preprocessing::mri;
          else if (v == "ct") c.preprocessing = Preprocessing::ct;
          else if (v == "none") c.preprocessing = Preprocessing::none;
          else bad_value(k, v);
        },
        [](const RC& c) {
          return std::string(c.preprocessing == Preprocessing::mri ? "mri" : c.preprocessing == Preprocessing::ct ? "ct" : "none");
        }}},
      {"feature_stride_policy",
       {[](RC& c, const std::string& k, const std::string& v) {
          if (v == "upsample_to_voxel") c.feature_stride_policy = StridePolicy::upsample_to_voxel;
          else if (v == "native") c.feature_stride_policy = StridePolicy::native;
          else bad_value(k, v);
        },
        [](const RC& c) {
          return std::string(c.feature_stride_policy == StridePolicy::native ? "native" : "upsample_to_voxel");
        }}},
      {"mind.dilation", int_key(&RC::mind, &MindConfig::dilation)},
      {"mind.patch_radius", int_key(&RC::mind, &MindConfig::patch_radius)},
      {"mind.lo_factor", double_key(&RC::mind, &MindConfig::lo_factor)},
      {"mind.hi_factor", double_key(&RC::mind, &MindConfig::hi_factor)},
      {"pca.enable",
       {[](RC& c, const std::string& k, const std::string& v) { c.pca_enable = to_bool(k, v); },
        [](const RC& c) { return std::string(c.pca_enable ? "true" : "false"); }}},
      {"pca.components", int_key(&RC::pca, &PcaConfig::components)},
      {"pca.oversampling", int_key(&RC::pca, &PcaConfig::oversampling)},
      {"pca.power_iterations", int_key(&RC::pca, &PcaConfig::power_iterations)},
      {"pca.sample_cap",
       {[](RC& c, const std::string& k, const std::string& v) {
          const auto n = to_int(k, v);
          if (n < 1) bad_value(k, v);
          c.pca.sample_cap = std::size_t(n);
        },
        [](const RC& c) { return std::to_string(c.pca.sample_cap); }}},
      {"pca.seed",
       {[](RC& c, const std::string& k, const std::string& v) {
          const auto n = to_int(k, v);
          if (n < 0) bad_value(k, v);
          c.pca.seed = std::uint64_t(n);
        },
        [](const RC& c) { return std::to_string(c.pca.seed); }}},
      {"convex.grid_stride", int_key(&RC::convex, &ConvexConfig::grid_stride)},
      {"convex.search_radius", int_key(&RC::convex, &ConvexConfig::search_radius)},
      {"convex.search_step", int_key(&RC::convex, &ConvexConfig::search_step)},
      {"convex.smooth_radius", int_key(&RC::convex, &ConvexConfig::smooth_radius)},
      {"convex.patch_radius", int_key(&RC::convex, &ConvexConfig::patch_radius)},
      {"convex.normalize_features",
       {[](RC& c, const std::string& k, const std::string& v) { c.convex.normalize_features = to_bool(k, v); },
        [](const RC& c) { return std::string(c.convex.normalize_features ? "true" : "false"); }}},
      {"convex.theta_schedule",
       {[](RC& c, const std::string& k, const std::string& v) {
          std::vector<double> thetas;
          std::stringstream in(v);
          std::string item;
          while (std::getline(in, item, ',')) thetas.push_back(to_double(k, trim(item)));
          if (thetas.empty()) bad_value(k, v);
          c.convex.theta_schedule = std::move(thetas);
        },
        [](const RC& c) {
          std::string out;
          for (std::size_t i = 0; i < c.convex.theta_schedule.size(); ++i)
            out += (i ? ", " : "") + fmt(c.convex.theta_schedule[i]);
          return out;
        }}},
      {"adam.iterations", int_key(&RC::adam, &AdamConfig::iterations)},
      {"adam.learning_rate", double_key(&RC::adam, &AdamConfig::learning_rate)},
      {"adam.beta1", double_key(&RC::adam, &AdamConfig::beta1)},
      {"adam.beta2", double_key(&RC::adam, &AdamConfig::beta2)},
      {"adam.epsilon", double_key(&RC::adam, &AdamConfig::epsilon)},
      {"adam.lambda_reg", double_key(&RC::adam, &AdamConfig::lambda_reg)},
      {"adam.grid_stride", int_key(&RC::adam, &AdamConfig::grid_stride)},
  };
  return table;
}

}  // namespace

void RegistrationConfig::validate() const {
  mind.validate();
  if (pca.components < 1 || pca.oversampling < 0 || pca.power_iterations < 0 || pca.sample_cap < 1)
    throw ConfigError("invalid pca settings");
  convex.validate();
  adam.validate();
}

void RegistrationConfig::set(const std::string& key, const std::string& value) {
  const auto it = keys().find(key);
  if (it == keys().end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second.set(*this, key, trim(value));
}

std::string RegistrationConfig::to_text() const {
  std::string out;
  for (const auto& [key, k] : keys()) out += key + " = " + k.get(*this) + "\n";
  return out;
}

RegistrationConfig RegistrationConfig::parse(const std::string& text) {
  RegistrationConfig cfg;
  std::stringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    cfg.set(key, line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

RegistrationConfig RegistrationConfig::load(const std::string& path) { return parse(read_file(path)); }

}  // namespace voxreg
