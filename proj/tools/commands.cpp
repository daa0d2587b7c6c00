#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "cta/checkpoint.hpp"
#include "cta/error.hpp"
#include "cta/eval.hpp"
#include "cta/losses.hpp"
#include "cta/model.hpp"
#include "cta/synthetic.hpp"
#include "cta/training.hpp"

namespace cta::cli {

using json = nlohmann::ordered_json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create directory {}: {}", dir.string(), ec.message()));
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : flatten(cfg)) j[k] = v;
  return j;
}

// Comment header shared by every CSV artifact.
std::string csv_preamble(const RunConfig& cfg) {
  std::string out = fmt::format("# format_version = {}\n", kArtifactFormatVersion);
  for (const auto& [k, v] : flatten(cfg)) out += fmt::format("# config {} = {}\n", k, v);
  return out;
}

std::string number(double v) { return fmt::format("{}", v); }

}  // namespace

std::pair<std::string, std::string> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("expected key=value, got '" + text + "'");
  }
  auto trim = [](std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
  };
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

RunConfig resolve_config(const ConfigSources& src) {
  RunConfig cfg = make_preset(src.preset);
  if (src.file) apply_ini_file(cfg, *src.file);
  for (const auto& [k, v] : src.overrides) set_key(cfg, k, v);
  cfg.validate();
  return cfg;
}

std::vector<std::size_t> parse_cutoffs(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      k = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("cutoff list must hold positive integers, got '" + text + "'");
    }
    out.push_back(k);
  }
  if (out.empty()) throw ConfigError("empty cutoff list");
  return out;
}

PreparedData prepare_data(const std::filesystem::path& data, const RunConfig& cfg,
                          std::ostream& log) {
  IngestResult ingested = ingest(data);
  for (const auto& w : ingested.warnings) fmt::print(log, "warning: {}\n", w);
  if (ingested.malformed > 0) {
    fmt::print(log, "skipped {} malformed rows of {}\n", ingested.malformed, ingested.rows);
  }
  PreparedData p;
  p.dataset = preprocess(ingested.events, cfg.filter);
  const SplitRatios ratios{1.0 - cfg.split.valid - cfg.split.test, cfg.split.valid, cfg.split.test};
  p.split = split_by_user(p.dataset.sequences, ratios, cfg.split_seed());
  p.dataset.vocab.set_frequency_from(p.split.train);
  const auto unit = cfg.model.time_unit;
  p.train_windows = make_windows(p.split.train, cfg.model.window, cfg.warm_start, unit);
  p.valid_windows = make_windows(p.split.valid, cfg.model.window, cfg.warm_start, unit);
  p.test_windows = make_windows(p.split.test, cfg.model.window, cfg.warm_start, unit);
  fmt::print(log, "{} users, {} items; windows train={} valid={} test={}\n",
             p.dataset.sequences.size(), p.dataset.vocab.num_items(), p.train_windows.size(),
             p.valid_windows.size(), p.test_windows.size());
  return p;
}

// ---- stats ----------------------------------------------------------------

void run_stats(const StatsOptions& opt, std::ostream& log) {
  RunConfig cfg = resolve_config(opt.config);
  FilterConfig filter = cfg.filter;
  if (!opt.apply_filters) {
    filter = FilterConfig{};
    filter.min_item_actions = 1;
    filter.min_user_actions = 1;
    filter.max_user_actions = std::numeric_limits<std::size_t>::max();
    filter.min_dwell_seconds = 0;
  }
  const IngestResult ingested = ingest(opt.data);
  for (const auto& w : ingested.warnings) fmt::print(log, "warning: {}\n", w);

  IntervalStats stats;
  if (!ingested.events.empty()) {
    const Dataset ds = preprocess(ingested.events, filter);
    stats = interval_stats(ds.sequences);
  }
  ensure_dir(opt.out);

  json summary;
  summary["format_version"] = kArtifactFormatVersion;
  summary["config"] = config_json(cfg);
  summary["filters_applied"] = opt.apply_filters;
  summary["rows"] = ingested.rows;
  summary["malformed_rows"] = ingested.malformed;
  summary["users"] = stats.users;
  summary["items"] = stats.items;
  summary["actions"] = stats.actions;
  summary["actions_per_user_mean"] = stats.actions_per_user_mean;
  summary["actions_per_user_std"] = stats.actions_per_user_std;
  summary["actions_per_item_mean"] = stats.actions_per_item_mean;
  summary["actions_per_item_std"] = stats.actions_per_item_std;
  summary["time_span_seconds"] = stats.time_span_seconds;
  summary["interval_count"] = stats.gap_count;
  open_out(opt.out / "summary.json") << summary.dump(2) << "\n";

  auto hist = open_out(opt.out / "interval_histogram.csv");
  hist << csv_preamble(cfg) << "low_seconds,high_seconds,count\n";
  for (const auto& b : stats.histogram) {
    hist << number(b.low) << ',' << number(b.high) << ',' << b.count << '\n';
  }
  fmt::print(log, "users={} items={} actions={} intervals={}\n", stats.users, stats.items,
             stats.actions, stats.gap_count);
}

// ---- train ----------------------------------------------------------------

void run_train(const TrainOptions& opt, std::ostream& log) {
  RunConfig cfg = resolve_config(opt.config);
  PreparedData data = prepare_data(opt.data, cfg, log);
  cfg.model.num_items = data.dataset.vocab.num_items();
  cfg.train.seed = cfg.seed;
  cfg.model.validate();
  cfg.train.validate(cfg.model.num_items);
  ensure_dir(opt.out);

  CtaModel model(cfg.model, cfg.init_seed());
  fmt::print(log, "model: {} parameters in {} tensors\n", model.parameter_count(),
             model.parameters().size());

  auto history = open_out(opt.out / "history.csv");
  history << csv_preamble(cfg) << "epoch,learning_rate,train_loss,valid_recall,improved\n";
  const auto result = train(model, data.train_windows, data.valid_windows,
                            data.dataset.vocab.frequency(), cfg.train, [&](const EpochRecord& r) {
    history << r.epoch << ',' << number(r.learning_rate) << ',' << number(r.train_loss) << ','
            << number(r.valid_recall) << ',' << (r.improved ? 1 : 0) << '\n';
    history.flush();
    fmt::print(log, "epoch {:>3}  lr {:.2e}  loss {:.6f}  valid Recall@{} {:.4f}{}\n", r.epoch,
               r.learning_rate, r.train_loss, cfg.train.validation_k, r.valid_recall,
               r.improved ? "  *" : "");
  });
  save_checkpoint(opt.out / "checkpoint.json", make_checkpoint(model, cfg, data.dataset.vocab));
  open_out(opt.out / "config.ini") << fmt::format("; format_version = {}\n", kArtifactFormatVersion)
                                   << to_ini(cfg);
  fmt::print(log, "best epoch {} (valid Recall@{} {:.4f}){}; wrote {}\n", result.best_epoch,
             cfg.train.validation_k, result.best_valid_recall,
             result.stopped_early ? ", stopped early" : "", opt.out.string());
}

// ---- eval -----------------------------------------------------------------

void run_eval(const EvalOptions& opt, std::ostream& log) {
  for (const auto& b : opt.baselines) {
    if (b != "pop" && b != "spop" && b != "markov") {
      throw ConfigError("unknown baseline '" + b + "' (pop|spop|markov)");
    }
  }
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
  const PreparedData data = prepare_data(opt.data, ckpt.config, log);
  check_vocabulary(ckpt, data.dataset.vocab);
  const CtaModel model = build_model(ckpt);
  const std::size_t n = data.dataset.vocab.num_items();

  std::vector<EvalReport> reports;
  reports.push_back(evaluate(ModelScorer(model), data.test_windows, opt.cutoffs));
  for (const auto& b : opt.baselines) {
    if (b == "pop") {
      reports.push_back(evaluate(PopScorer(data.split.train, n), data.test_windows, opt.cutoffs));
    } else if (b == "spop") {
      reports.push_back(evaluate(SPopScorer(data.split.train, n, data.split.test),
                                 data.test_windows, opt.cutoffs));
    } else {
      reports.push_back(evaluate(MarkovScorer(data.split.train, n), data.test_windows, opt.cutoffs));
    }
  }
  log << format_table(reports);

  if (opt.out) {
    json j;
    j["format_version"] = kArtifactFormatVersion;
    j["config"] = config_json(ckpt.config);
    j["vocabulary_hash"] = ckpt.vocab_hash;
    json rows = json::array();
    for (const auto& r : reports) {
      json recall = json::object(), mrr = json::object();
      for (std::size_t i = 0; i < r.cutoffs.size(); ++i) {
        recall[std::to_string(r.cutoffs[i])] = r.recall[i];
        mrr[std::to_string(r.cutoffs[i])] = r.mrr[i];
      }
      rows.push_back({{"model", r.model}, {"samples", r.samples}, {"recall", recall}, {"mrr", mrr}});
    }
    j["reports"] = rows;
    open_out(*opt.out) << j.dump(2) << "\n";
  }
}

// ---- visualize ------------------------------------------------------------

namespace {

std::vector<double> zscores(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  std::vector<double> z(x.size(), 0.0);
  if (sd > 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean) / sd;
  }
  return z;
}

}  // namespace

void run_visualize(const VisualizeOptions& opt, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
  const PreparedData data = prepare_data(opt.data, ckpt.config, log);
  check_vocabulary(ckpt, data.dataset.vocab);
  const CtaModel model = build_model(ckpt);

  const auto& ids = data.dataset.user_ids;
  const auto it = std::find(ids.begin(), ids.end(), opt.user);
  if (it == ids.end()) throw LookupError("unknown user '" + opt.user + "'");
  const auto user_index = static_cast<std::size_t>(it - ids.begin());
  const UserSequence* seq = nullptr;
  for (const auto& s : data.split.test) {
    if (s.user_index == user_index) seq = &s;
  }
  if (!seq) throw LookupError("user '" + opt.user + "' is not in the test split");

  const auto windows = make_windows(*seq, ckpt.config.model.window, ckpt.config.warm_start,
                                    ckpt.config.model.time_unit);
  ensure_dir(opt.out);
  const auto& vocab = data.dataset.vocab;
  NoGradGuard no_grad;
  for (const auto& w : windows) {
    const ForwardTrace t = model.forward(w, ForwardContext{});
    std::vector<std::size_t> pos;
    std::vector<double> alpha, beta_c, gamma;
    for (std::size_t i = w.first_real(); i < w.length(); ++i) {
      pos.push_back(i);
      alpha.push_back(t.alpha.at(i, 0));
      beta_c.push_back(t.beta_c.at(i, 0));
      gamma.push_back(t.gamma.at(i, 0));
    }
    const auto az = zscores(alpha), bz = zscores(beta_c), gz = zscores(gamma);
    auto out = open_out(opt.out / fmt::format("window_{:04}.csv", w.position));
    out << csv_preamble(ckpt.config)
        << fmt::format("# user = {}\n# target_position = {}\n# target_item = {}\n", opt.user,
                       w.position, vocab.id_of(w.target_item))
        << "position,interval,item_id,alpha,beta_c,gamma,alpha_z,beta_c_z,gamma_z\n";
    for (std::size_t r = 0; r < pos.size(); ++r) {
      const std::size_t i = pos[r];
      out << i << ',' << number(w.intervals[i]) << ',' << vocab.id_of(w.item_indices[i]) << ','
          << number(alpha[r]) << ',' << number(beta_c[r]) << ',' << number(gamma[r]) << ','
          << number(az[r]) << ',' << number(bz[r]) << ',' << number(gz[r]) << '\n';
    }
  }
  fmt::print(log, "wrote {} window files to {}\n", windows.size(), opt.out.string());
}

// ---- gradcheck ------------------------------------------------------------

namespace {

WindowSample random_window(std::size_t window, std::size_t items, std::size_t pads, Rng& rng) {
  WindowSample w;
  w.item_indices.assign(window, 0);
  w.intervals.assign(window, 0.0);
  w.pad_mask.assign(window, false);
  double t = 0.05 + 0.5 * uniform01(rng);
  for (std::size_t i = window; i-- > 0;) {
    if (i < pads) {
      w.pad_mask[i] = true;
      continue;
    }
    w.item_indices[i] = 1 + uniform_index(rng, items);
    w.intervals[i] = t;
    t += 0.1 + 2.0 * uniform01(rng);
  }
  w.target_item = 1 + uniform_index(rng, items);
  return w;
}

}  // namespace

GradcheckOutcome gradcheck(const GradcheckOptions& opt) {
  ModelConfig m;
  std::size_t negatives = 10;
  if (opt.size == "desk") {
    m.num_items = 30;
    m.d_in = m.d_a = m.d_out = 16;
    m.heads = 2;
    m.blocks = 2;
    m.d_r = 8;
    m.window = 8;
    m.kernels = "exp2,log1,lin1";
  } else if (opt.size == "toy") {
    m.num_items = 12;
    m.d_in = m.d_a = m.d_out = 8;
    m.heads = 2;
    m.blocks = 1;
    m.d_r = 4;
    m.window = 4;
    m.kernels = "exp1,lin1";
    negatives = 5;
  } else {
    throw ConfigError("unknown gradcheck size '" + opt.size + "' (desk|toy)");
  }
  const auto start = std::chrono::steady_clock::now();
  CtaModel model(m, opt.seed);
  Rng rng(derive_seed({opt.seed, 0x6772616455ULL}));
  const std::vector<WindowSample> samples = {random_window(m.window, m.num_items, 0, rng),
                                             random_window(m.window, m.num_items, 3, rng)};
  std::vector<std::vector<std::size_t>> candidates;
  for (const auto& s : samples) {
    std::vector<std::size_t> c{s.target_item};
    for (std::size_t j = 0; c.size() < negatives + 1; ++j) {
      const std::size_t v = 1 + (s.target_item + j) % m.num_items;
      if (v != s.target_item) c.push_back(v);
    }
    candidates.push_back(std::move(c));
  }
  auto objective = [&]() {
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const ForwardTrace t = model.forward(samples[i], ForwardContext{});
      const Tensor scores = model.candidate_scores(t, candidates[i]);
      for (auto kind : {LossKind::nll, LossKind::bpr, LossKind::top1}) {
        total = add(total, reshape(ranking_loss(kind, scores), {1}));
      }
    }
    return total;
  };

  GradCheckOptions gopt;
  gopt.step = opt.step;
  gopt.method = opt.method;
  gopt.absolute_floor = opt.absolute_floor;
  if (!opt.flip_grad.empty()) {
    model.parameter(opt.flip_grad);  // unknown names fail before any work
    gopt.after_backward = [&](std::vector<NamedTensor>& params) {
      for (auto& p : params) {
        if (p.name != opt.flip_grad) continue;
        for (double& g : p.tensor.mutable_grad()) g = -g;
      }
    };
  }
  GradcheckOutcome out;
  out.result = grad_check(objective, model.parameters(), gopt);
  out.passed = out.result.max_error < opt.tolerance;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

void run_gradcheck(const GradcheckOptions& opt, std::ostream& log) {
  const GradcheckOutcome o = gradcheck(opt);
  const auto& r = o.result;
  fmt::print(log, "checked {} coordinates in {:.1f} s\n", r.coordinates, o.seconds);
  fmt::print(log, "max error {:.3e} at {}[{}] (analytic {:.9e}, numeric {:.9e})\n", r.max_error,
             r.worst_parameter, r.worst_index, r.worst_analytic, r.worst_numeric);
  if (!o.passed) {
    throw NumericError(fmt::format("gradient check failed: {} error {:.3e} exceeds {:.1e}",
                                   r.worst_parameter, r.max_error, opt.tolerance));
  }
  fmt::print(log, "PASS (tolerance {:.1e})\n", opt.tolerance);
}

// ---- synth ----------------------------------------------------------------

void run_synth(const SynthOptions& opt, std::ostream& log) {
  RepetitionCorpus c;
  c.users = opt.users;
  c.events_per_user = opt.events;
  c.items = opt.items;
  c.seed = opt.seed;
  const auto events = make_repetition_corpus(c);
  auto out = open_out(opt.out);
  out << "# user\titem\ttimestamp\ttype\n";
  for (const auto& e : events) {
    out << e.user_id << '\t' << e.item_id << '\t' << e.timestamp << '\t' << e.interaction_type
        << '\n';
  }
  fmt::print(log, "wrote {} events for {} users to {}\n", events.size(), opt.users,
             opt.out.string());
}

}  // namespace cta::cli
