#pragma once

// Flat run configuration with INI sections. Resolution order is defaults,
// then a named preset, then a config file, then individual overrides. Keys
// are `section.name`; unknown keys raise ConfigError.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cta/data.hpp"
#include "cta/model.hpp"
#include "cta/training.hpp"

namespace cta {

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 42;
  ModelConfig model;  // num_items is filled from the data
  TrainConfig train;
  FilterConfig filter;
  SplitRatios split;
  std::size_t warm_start = 5;

  /// Checks everything that does not depend on the data.
  void validate() const;

  std::uint64_t split_seed() const { return derive_seed({seed, 1}); }
  std::uint64_t init_seed() const { return derive_seed({seed, 2}); }
};

using FlatConfig = std::vector<std::pair<std::string, std::string>>;

/// desk | paper | paper-momentum
RunConfig make_preset(const std::string& name);

/// Names of every settable key, in echo order.
std::vector<std::string> config_keys();

void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_key(const RunConfig& cfg, const std::string& key);

void apply_ini_text(RunConfig& cfg, const std::string& text);
void apply_ini_file(RunConfig& cfg, const std::filesystem::path& path);

/// Every resolved key with its value, `run.preset` first.
FlatConfig flatten(const RunConfig& cfg);
RunConfig unflatten(const FlatConfig& flat);

std::string to_ini(const RunConfig& cfg);

}  // namespace cta
