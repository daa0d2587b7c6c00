#include "cta/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cta/error.hpp"

namespace cta {

using json = nlohmann::ordered_json;

ModelConfig Checkpoint::model_config() const {
  ModelConfig m = config.model;
  m.num_items = num_items;
  return m;
}

Vocabulary Checkpoint::vocabulary() const { return Vocabulary(item_ids); }

Checkpoint make_checkpoint(const CtaModel& model, const RunConfig& cfg, const Vocabulary& vocab) {
  if (vocab.num_items() != model.config().num_items) {
    throw CompatibilityError(fmt::format("vocabulary of {} items for a model of {}",
                                         vocab.num_items(), model.config().num_items));
  }
  Checkpoint c;
  c.config = cfg;
  c.config.model = model.config();
  c.num_items = model.config().num_items;
  c.item_ids.assign(vocab.ids().begin() + 1, vocab.ids().end());
  c.vocab_hash = vocab.hash();
  for (const auto& p : model.parameters()) {
    const auto v = p.tensor.values();
    for (double x : v) {
      if (!std::isfinite(x)) throw NumericError("non-finite value in parameter " + p.name);
    }
    c.tensors.push_back({p.name, p.tensor.shape(), {v.begin(), v.end()}});
  }
  return c;
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["format_version"] = ckpt.format_version;
  json cfg = json::object();
  for (const auto& [k, v] : flatten(ckpt.config)) cfg[k] = v;
  j["config"] = cfg;
  j["time_unit"] = to_string(ckpt.config.model.time_unit);
  j["kernels"] = ckpt.config.model.kernels;
  j["num_items"] = ckpt.num_items;
  j["vocabulary"] = {{"hash", ckpt.vocab_hash}, {"ids", ckpt.item_ids}};
  json tensors = json::array();
  for (const auto& t : ckpt.tensors) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"values", t.values}});
  }
  j["tensors"] = tensors;
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    Checkpoint c;
    if (!j.contains("format_version")) throw FormatError("checkpoint lacks format_version");
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kCheckpointFormatVersion) {
      throw CompatibilityError(fmt::format("checkpoint format {} is not supported (expected {})",
                                           c.format_version, kCheckpointFormatVersion));
    }
    FlatConfig flat;
    for (const auto& [k, v] : j.at("config").items()) flat.emplace_back(k, v.get<std::string>());
    c.config = unflatten(flat);
    c.num_items = j.at("num_items").get<std::size_t>();
    c.config.model.num_items = c.num_items;
    c.vocab_hash = j.at("vocabulary").at("hash").get<std::string>();
    c.item_ids = j.at("vocabulary").at("ids").get<std::vector<std::string>>();
    if (c.item_ids.size() != c.num_items) {
      throw FormatError(fmt::format("checkpoint lists {} item ids for {} items", c.item_ids.size(),
                                    c.num_items));
    }
    for (const auto& t : j.at("tensors")) {
      StoredTensor s;
      s.name = t.at("name").get<std::string>();
      s.shape = t.at("shape").get<Shape>();
      s.values = t.at("values").get<std::vector<double>>();
      if (shape_size(s.shape) != s.values.size()) {
        throw FormatError(fmt::format("tensor {} has {} values for shape {}", s.name,
                                      s.values.size(), shape_string(s.shape)));
      }
      c.tensors.push_back(std::move(s));
    }
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

CtaModel build_model(const Checkpoint& ckpt) {
  CtaModel model(ckpt.model_config(), ckpt.config.init_seed());
  const auto& params = model.parameters();
  if (params.size() != ckpt.tensors.size()) {
    throw CompatibilityError(fmt::format("checkpoint holds {} tensors, model expects {}",
                                         ckpt.tensors.size(), params.size()));
  }
  for (const auto& stored : ckpt.tensors) {
    Tensor t = model.parameter(stored.name);
    if (t.shape() != stored.shape) {
      throw CompatibilityError(fmt::format("tensor {} has shape {}, model expects {}", stored.name,
                                           shape_string(stored.shape), shape_string(t.shape())));
    }
    std::copy(stored.values.begin(), stored.values.end(), t.mutable_values().begin());
  }
  return model;
}

void check_vocabulary(const Checkpoint& ckpt, const Vocabulary& vocab) {
  if (vocab.hash() != ckpt.vocab_hash) {
    throw CompatibilityError(fmt::format("vocabulary hash {} does not match checkpoint {}",
                                         vocab.hash(), ckpt.vocab_hash));
  }
}

}  // namespace cta
