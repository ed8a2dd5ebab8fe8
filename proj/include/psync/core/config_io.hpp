#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "psync/core/params.hpp"

namespace psync {

// Flat `key = value` configuration text. Lines starting with '#' and blank
// lines are ignored. Time-valued keys carry their unit in the key suffix
// (_ps, _ns); a value may override it with an explicit ps/ns/us/ms/s suffix.
// Unknown keys, duplicate keys and malformed values raise ValidationError
// naming the line.
SystemConfig parse_config(std::string_view text, const std::string& origin = "<config>");
SystemConfig load_config(const std::filesystem::path& path);

// Applies one `key = value` assignment on top of an existing config.
void apply_setting(SystemConfig& config, std::string_view key, std::string_view value);

// Canonical text form: every key in a fixed order, one per line.
std::string serialize_config(const SystemConfig& config);

// FNV-1a 64 of serialize_config().
std::uint64_t config_hash(const SystemConfig& config);
std::string hex64(std::uint64_t v);

std::vector<std::string> config_keys();

}  // namespace psync
