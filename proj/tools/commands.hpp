#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cta/config.hpp"
#include "cta/data.hpp"
#include "cta/tensor.hpp"

namespace cta::cli {

inline constexpr int kArtifactFormatVersion = 1;

/// Where a run's configuration comes from, lowest precedence first.
struct ConfigSources {
  std::string preset = "desk";
  std::optional<std::filesystem::path> file;
  std::vector<std::pair<std::string, std::string>> overrides;  // applied last, in order
};

RunConfig resolve_config(const ConfigSources& src);

/// Parses "key=value"; throws ConfigError otherwise.
std::pair<std::string, std::string> parse_assignment(const std::string& text);

/// Everything derived from the event log under a resolved config.
struct PreparedData {
  Dataset dataset;
  Split split;
  std::vector<WindowSample> train_windows;
  std::vector<WindowSample> valid_windows;
  std::vector<WindowSample> test_windows;
};

PreparedData prepare_data(const std::filesystem::path& data, const RunConfig& cfg,
                          std::ostream& log);

struct StatsOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  bool apply_filters = false;
  ConfigSources config;
};
void run_stats(const StatsOptions& opt, std::ostream& log);

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  ConfigSources config;
};
void run_train(const TrainOptions& opt, std::ostream& log);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::vector<std::string> baselines;
  std::vector<std::size_t> cutoffs = {1, 5, 10, 20};
  std::optional<std::filesystem::path> out;
};
void run_eval(const EvalOptions& opt, std::ostream& log);

struct VisualizeOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string user;
  std::filesystem::path out;
};
void run_visualize(const VisualizeOptions& opt, std::ostream& log);

struct GradcheckOptions {
  std::uint64_t seed = 42;
  std::string size = "desk";  // desk | toy
  double tolerance = 1e-4;
  double step = 1e-3;
  double absolute_floor = 1e-6;
  DiffMethod method = DiffMethod::ridders;
  std::string flip_grad;  // test fixture: negate this parameter's gradient
};
struct GradcheckOutcome {
  GradCheckResult result;
  bool passed = false;
  double seconds = 0.0;
};
GradcheckOutcome gradcheck(const GradcheckOptions& opt);
/// Prints the outcome; throws NumericError when the tolerance is breached.
void run_gradcheck(const GradcheckOptions& opt, std::ostream& log);

struct SynthOptions {
  std::filesystem::path out;
  std::size_t users = 200;
  std::size_t events = 60;
  std::size_t items = 50;
  std::uint64_t seed = 7;
};
void run_synth(const SynthOptions& opt, std::ostream& log);

/// Comma-separated list of positive integers.
std::vector<std::size_t> parse_cutoffs(const std::string& text);

}  // namespace cta::cli
