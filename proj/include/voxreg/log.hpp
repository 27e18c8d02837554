#pragma once

#include <string_view>

namespace voxreg::log {

// Thin wrappers over spdlog. The level is read once from VOXREG_LOG
// (error, warn, info, debug); default is warn.
void error(std::string_view msg);
void warn(std::string_view msg);
void info(std::string_view msg);
void debug(std::string_view msg);

void set_level(std::string_view level);

}  // namespace voxreg::log
