#pragma once

#include "wyf/geometry.hpp"
#include "wyf/smms.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace wyf::cli {

inline constexpr int schema_version = 1;

using Json = nlohmann::json;

// Full config with every default filled in.
Json default_config();
// Merges a user config over the defaults; unknown keys and mistyped values throw ValidationError.
Json resolve_config(const Json& raw);
Json load_config(const std::string& path);

// 64-bit FNV-1a of the compact dump, as 16 hex digits.
std::string config_hash(const Json& resolved);

// Background and parameters described by a resolved config.
struct Setup {
  Background bg;
  Params params;
};
Setup build_setup(const Json& cfg);

// Runs one subcommand; returns the process exit code (0, 2 validation, 3 numerical).
int run(const std::vector<std::string>& args);
int main(int argc, char** argv);

}  // namespace wyf::cli
