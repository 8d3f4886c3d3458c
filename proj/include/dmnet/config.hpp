#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "dmnet/train.hpp"

namespace dmnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat UTF-8 "dotted.key = value" lines; '#' starts a comment line.
std::map<std::string, std::string> parse_key_values(std::string_view text);

/// Starts from TrainConfig::defaults(model.mode) and applies every key.
/// Unknown keys and malformed values raise ConfigError naming the key.
TrainConfig config_from_text(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

/// Complete key=value rendering; config_from_text(to_text(c)) reproduces c.
std::string to_text(const TrainConfig& config);

}  // namespace dmnet
