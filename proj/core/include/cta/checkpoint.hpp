#pragma once

// Versioned JSON checkpoints: resolved run config, item vocabulary with its
// hash, and every named parameter tensor. Doubles are written in shortest
// round-trip form, so save -> load -> save reproduces the same bytes.

#include <filesystem>
#include <string>
#include <vector>

#include "cta/config.hpp"
#include "cta/data.hpp"
#include "cta/model.hpp"

namespace cta {

inline constexpr int kCheckpointFormatVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  RunConfig config;
  std::size_t num_items = 0;
  std::vector<std::string> item_ids;  // index 1..N, padding excluded
  std::string vocab_hash;
  std::vector<StoredTensor> tensors;

  ModelConfig model_config() const;
  Vocabulary vocabulary() const;
};

Checkpoint make_checkpoint(const CtaModel& model, const RunConfig& cfg, const Vocabulary& vocab);

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);  // throws FormatError

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model and copies every stored tensor into it. Missing,
/// extra, or mis-shaped tensors raise CompatibilityError.
CtaModel build_model(const Checkpoint& ckpt);

/// Throws CompatibilityError unless `vocab` matches the checkpoint.
void check_vocabulary(const Checkpoint& ckpt, const Vocabulary& vocab);

}  // namespace cta
