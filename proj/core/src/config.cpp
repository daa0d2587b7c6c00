#include "cta/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

namespace {

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'", key, v));
  }
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, v));
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, v));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define CTA_COUNT(KEY, MEMBER)                                                  \
  Field{KEY, [](const RunConfig& c) { return fmt::format("{}", c.MEMBER); },    \
        [](RunConfig& c, const std::string& v) { c.MEMBER = parse_count(KEY, v); }}
#define CTA_REAL(KEY, MEMBER)                                                   \
  Field{KEY, [](const RunConfig& c) { return fmt::format("{}", c.MEMBER); },    \
        [](RunConfig& c, const std::string& v) { c.MEMBER = parse_real(KEY, v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"run.seed", [](const RunConfig& c) { return fmt::format("{}", c.seed); },
            [](RunConfig& c, const std::string& v) { c.seed = parse_count("run.seed", v); }},

      CTA_COUNT("model.d_in", model.d_in),
      CTA_COUNT("model.d_a", model.d_a),
      CTA_COUNT("model.heads", model.heads),
      CTA_COUNT("model.blocks", model.blocks),
      CTA_COUNT("model.d_r", model.d_r),
      CTA_COUNT("model.d_out", model.d_out),
      CTA_COUNT("model.window", model.window),
      Field{"model.kernels", [](const RunConfig& c) { return c.model.kernels; },
            [](RunConfig& c, const std::string& v) {
              c.model.kernels = kernel_spec_string(parse_kernel_spec(v));
            }},
      Field{"model.share_embeddings",
            [](const RunConfig& c) { return std::string(c.model.share_embeddings ? "true" : "false"); },
            [](RunConfig& c, const std::string& v) {
              c.model.share_embeddings = parse_bool("model.share_embeddings", v);
            }},
      Field{"model.alpha", [](const RunConfig& c) { return to_string(c.model.alpha); },
            [](RunConfig& c, const std::string& v) { c.model.alpha = parse_alpha_mode(v); }},
      Field{"model.context", [](const RunConfig& c) { return to_string(c.model.context); },
            [](RunConfig& c, const std::string& v) { c.model.context = parse_context_mode(v); }},
      Field{"model.interval_transform",
            [](const RunConfig& c) { return to_string(c.model.interval_transform); },
            [](RunConfig& c, const std::string& v) {
              c.model.interval_transform = parse_interval_transform(v);
            }},
      Field{"model.time_unit", [](const RunConfig& c) { return to_string(c.model.time_unit); },
            [](RunConfig& c, const std::string& v) { c.model.time_unit = parse_time_unit(v); }},
      CTA_REAL("model.dropout", model.dropout),

      Field{"train.loss", [](const RunConfig& c) { return to_string(c.train.loss); },
            [](RunConfig& c, const std::string& v) { c.train.loss = parse_loss_kind(v); }},
      CTA_REAL("train.learning_rate", train.learning_rate),
      CTA_COUNT("train.batch_size", train.batch_size),
      CTA_COUNT("train.negatives", train.negatives),
      CTA_COUNT("train.warmup_epochs", train.warmup_epochs),
      CTA_COUNT("train.patience", train.patience),
      CTA_COUNT("train.max_epochs", train.max_epochs),
      CTA_REAL("train.beta1", train.beta1),
      CTA_REAL("train.beta2", train.beta2),
      CTA_REAL("train.epsilon", train.epsilon),
      CTA_COUNT("train.validation_k", train.validation_k),

      CTA_COUNT("data.min_item_actions", filter.min_item_actions),
      CTA_COUNT("data.min_user_actions", filter.min_user_actions),
      CTA_COUNT("data.max_user_actions", filter.max_user_actions),
      Field{"data.min_dwell_seconds",
            [](const RunConfig& c) { return fmt::format("{}", c.filter.min_dwell_seconds); },
            [](RunConfig& c, const std::string& v) {
              c.filter.min_dwell_seconds = parse_int("data.min_dwell_seconds", v);
            }},
      Field{"data.time_range",
            [](const RunConfig& c) {
              return c.filter.time_range
                         ? fmt::format("{},{}", c.filter.time_range->first, c.filter.time_range->second)
                         : std::string();
            },
            [](RunConfig& c, const std::string& v) {
              if (v.empty()) {
                c.filter.time_range.reset();
                return;
              }
              const auto parts = split_list(v);
              if (parts.size() != 2) throw ConfigError("data.time_range: expected 'start,end'");
              c.filter.time_range = std::make_pair(parse_int("data.time_range", parts[0]),
                                                   parse_int("data.time_range", parts[1]));
            }},
      Field{"data.drop_types", [](const RunConfig& c) { return join_list(c.filter.drop_types); },
            [](RunConfig& c, const std::string& v) { c.filter.drop_types = split_list(v); }},
      CTA_COUNT("data.warm_start", warm_start),
      CTA_REAL("data.valid_ratio", split.valid),
      CTA_REAL("data.test_ratio", split.test),
  };
  return table;
}

#undef CTA_COUNT
#undef CTA_REAL

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  ModelConfig m = model;
  if (m.num_items == 0) m.num_items = 1;
  m.validate();
  TrainConfig t = train;
  t.validate(t.negatives + 1);
  filter.validate();
  if (!(split.valid >= 0.0 && split.test >= 0.0 && split.valid + split.test < 1.0)) {
    throw ConfigError(fmt::format("split ratios valid={} test={} leave no training users",
                                  split.valid, split.test));
  }
  if (warm_start == 0) throw ConfigError("data.warm_start must be at least 1");
}

RunConfig make_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") return c;
  if (name == "paper" || name == "paper-momentum") {
    c.model.d_in = 500;
    c.model.d_a = 500;
    c.model.d_out = 500;
    c.model.blocks = 2;
    c.model.heads = 2;
    c.model.d_r = 20;
    c.model.window = 8;
    c.train.learning_rate = 1e-3;
    if (name == "paper-momentum") c.train.beta1 = 0.1;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (desk|paper|paper-momentum)");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "run.preset") {
    if (value != cfg.preset) {
      throw ConfigError(fmt::format("run.preset '{}' conflicts with selected preset '{}'", value,
                                    cfg.preset));
    }
    return;
  }
  field(key).set(cfg, value);
}

std::string get_key(const RunConfig& cfg, const std::string& key) {
  if (key == "run.preset") return cfg.preset;
  return field(key).get(cfg);
}

void apply_ini_text(RunConfig& cfg, const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  for (const auto& [section, node] : tree) {
    if (node.empty()) {
      throw ConfigError(fmt::format("config key '{}' must sit inside a [section]", section));
    }
    for (const auto& [name, leaf] : node) {
      set_key(cfg, section + "." + name, leaf.get_value<std::string>());
    }
  }
}

void apply_ini_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_ini_text(cfg, ss.str());
}

FlatConfig flatten(const RunConfig& cfg) {
  FlatConfig out{{"run.preset", cfg.preset}};
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

RunConfig unflatten(const FlatConfig& flat) {
  std::string preset = "desk";
  for (const auto& [k, v] : flat) {
    if (k == "run.preset") preset = v;
  }
  RunConfig cfg = make_preset(preset);
  for (const auto& [k, v] : flat) set_key(cfg, k, v);
  return cfg;
}

std::string to_ini(const RunConfig& cfg) {
  std::string out;
  std::string current;
  for (const auto& [key, value] : flatten(cfg)) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", section);
      current = section;
    }
    out += fmt::format("{} = {}\n", key.substr(dot + 1), value);
  }
  return out;
}

}  // namespace cta
