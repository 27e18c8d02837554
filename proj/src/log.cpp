#include "voxreg/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string>

#include "voxreg/error.hpp"

namespace voxreg {

const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::bad_version: return "version mismatch";
    case FormatErrc::bad_header: return "bad header";
    case FormatErrc::truncated: return "truncated payload";
    case FormatErrc::size_mismatch: return "size mismatch";
    case FormatErrc::non_finite: return "non-finite values";
    case FormatErrc::unsupported_datatype: return "unsupported datatype";
    case FormatErrc::unsupported_dims: return "unsupported dimensions";
  }
  return "format error";
}

namespace log {
namespace {

spdlog::level::level_enum parse_level(std::string_view s) {
  if (s == "error") return spdlog::level::err;
  if (s == "info") return spdlog::level::info;
  if (s == "debug") return spdlog::level::debug;
  return spdlog::level::warn;
}

spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("voxreg");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("VOXREG_LOG");
    l->set_level(parse_level(env ? env : "warn"));
    return l;
  }();
  return *instance;
}

}  // namespace

void error(std::string_view msg) { logger().error("{}", msg); }
void warn(std::string_view msg) { logger().warn("{}", msg); }
void info(std::string_view msg) { logger().info("{}", msg); }
void debug(std::string_view msg) { logger().debug("{}", msg); }
void set_level(std::string_view level) { logger().set_level(parse_level(level)); }

}  // namespace log
}  // namespace voxreg
