#include "cta/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

namespace {

constexpr double kMaxMalformedFraction = 0.10;
constexpr std::size_t kReportedMalformedLines = 10;

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || v < 0) return std::nullopt;
  return v;
}

IngestResult ingest_stream(std::istream& in) {
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    ++result.rows;
    const auto fields = split_tabs(line);
    std::optional<std::int64_t> ts;
    const bool shape_ok = (fields.size() == 3 || fields.size() == 4) &&
                          !fields[0].empty() && !fields[1].empty();
    if (shape_ok) ts = parse_timestamp(fields[2]);
    if (!ts) {
      ++result.malformed;
      if (result.malformed_lines.size() < kReportedMalformedLines) {
        result.malformed_lines.push_back(line_no);
      }
      continue;
    }
    Event e;
    e.user_id = std::string(fields[0]);
    e.item_id = std::string(fields[1]);
    e.timestamp = *ts;
    if (fields.size() == 4) e.interaction_type = std::string(fields[3]);
    result.events.push_back(std::move(e));
  }
  if (result.rows == 0) {
    result.warnings.push_back("event log contains no data rows");
    return result;
  }
  if (result.malformed > 0) {
    std::string lines;
    for (auto n : result.malformed_lines) lines += (lines.empty() ? "" : ", ") + std::to_string(n);
    const double fraction =
        static_cast<double>(result.malformed) / static_cast<double>(result.rows);
    if (fraction > kMaxMalformedFraction) {
      throw FormatError(fmt::format("{} of {} rows malformed ({:.1f}%), e.g. lines {}",
                                    result.malformed, result.rows, 100.0 * fraction, lines));
    }
    result.warnings.push_back(
        fmt::format("skipped {} malformed rows (lines {})", result.malformed, lines));
  }
  return result;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

IngestResult ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read event log " + path.string());
  return ingest_stream(in);
}

IngestResult ingest_text(const std::string& text) {
  std::istringstream in(text);
  return ingest_stream(in);
}

void FilterConfig::validate() const {
  if (min_user_actions > max_user_actions) {
    throw ConfigError(fmt::format("min_user_actions ({}) exceeds max_user_actions ({})",
                                  min_user_actions, max_user_actions));
  }
  if (time_range && time_range->first > time_range->second) {
    throw ConfigError("time range start is after its end");
  }
}

// ---- Vocabulary -----------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> sorted_ids) {
  ids_.reserve(sorted_ids.size() + 1);
  ids_.push_back("");
  for (auto& id : sorted_ids) ids_.push_back(std::move(id));
  frequency_.assign(ids_.size(), 0.0);
}

std::optional<std::size_t> Vocabulary::find(const std::string& id) const {
  const auto it = std::lower_bound(ids_.begin() + 1, ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

std::size_t Vocabulary::index_of(const std::string& id) const {
  if (auto idx = find(id)) return *idx;
  throw LookupError("unknown item '" + id + "'");
}

void Vocabulary::set_frequency_from(const std::vector<UserSequence>& train) {
  frequency_.assign(ids_.size(), 0.0);
  for (const auto& seq : train) {
    for (auto item : seq.items) frequency_.at(item) += 1.0;
  }
}

std::string Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 1; i < ids_.size(); ++i) {
    for (unsigned char c : ids_[i]) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

// ---- preprocess -----------------------------------------------------------

Dataset preprocess(const std::vector<Event>& events, const FilterConfig& cfg) {
  cfg.validate();
  if (events.empty()) throw EmptyDatasetError("no events to preprocess");

  std::vector<std::size_t> kept;
  kept.reserve(events.size());
  const std::unordered_set<std::string> dropped_types(cfg.drop_types.begin(),
                                                      cfg.drop_types.end());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (dropped_types.contains(e.interaction_type)) continue;
    if (cfg.time_range &&
        (e.timestamp < cfg.time_range->first || e.timestamp > cfg.time_range->second)) {
      continue;
    }
    kept.push_back(i);
  }

  // Repeats of the same (user, item, type) closer than the dwell threshold to
  // the previous such interaction are dropped.
  if (cfg.min_dwell_seconds > 0 && !kept.empty()) {
    std::vector<std::size_t> order = kept;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const Event& x = events[a];
      const Event& y = events[b];
      return std::tie(x.user_id, x.item_id, x.interaction_type, x.timestamp) <
             std::tie(y.user_id, y.item_id, y.interaction_type, y.timestamp);
    });
    std::vector<bool> drop(events.size(), false);
    for (std::size_t k = 1; k < order.size(); ++k) {
      const Event& prev = events[order[k - 1]];
      const Event& cur = events[order[k]];
      const bool same_key = prev.user_id == cur.user_id && prev.item_id == cur.item_id &&
                            prev.interaction_type == cur.interaction_type;
      if (same_key && cur.timestamp - prev.timestamp < cfg.min_dwell_seconds) {
        drop[order[k]] = true;
      }
    }
    std::erase_if(kept, [&](std::size_t i) { return drop[i]; });
  }

  bool changed = true;
  while (changed && !kept.empty()) {
    changed = false;
    std::unordered_map<std::string_view, std::size_t> item_count;
    for (auto i : kept) ++item_count[events[i].item_id];
    const auto before_items = kept.size();
    std::erase_if(kept, [&](std::size_t i) {
      return item_count[events[i].item_id] < cfg.min_item_actions;
    });
    changed = changed || kept.size() != before_items;

    std::unordered_map<std::string_view, std::size_t> user_count;
    for (auto i : kept) ++user_count[events[i].user_id];
    const auto before_users = kept.size();
    std::erase_if(kept, [&](std::size_t i) {
      const auto c = user_count[events[i].user_id];
      return c < cfg.min_user_actions || c > cfg.max_user_actions;
    });
    changed = changed || kept.size() != before_users;
  }
  if (kept.empty()) throw EmptyDatasetError("all events were removed by the filters");

  std::vector<std::string> user_ids, item_ids;
  for (auto i : kept) {
    user_ids.push_back(events[i].user_id);
    item_ids.push_back(events[i].item_id);
  }
  for (auto* ids : {&user_ids, &item_ids}) {
    std::sort(ids->begin(), ids->end());
    ids->erase(std::unique(ids->begin(), ids->end()), ids->end());
  }

  Dataset data;
  data.vocab = Vocabulary(item_ids);
  data.user_ids = user_ids;
  data.sequences.resize(user_ids.size());
  std::unordered_map<std::string_view, std::size_t> user_index;
  for (std::size_t u = 0; u < user_ids.size(); ++u) {
    user_index[data.user_ids[u]] = u;
    data.sequences[u].user_index = u;
  }

  // Kept indices are in file order, so a stable sort keeps ties in file order.
  std::vector<std::vector<std::size_t>> per_user(user_ids.size());
  for (auto i : kept) per_user[user_index[events[i].user_id]].push_back(i);
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    auto& idx = per_user[u];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return events[a].timestamp < events[b].timestamp;
    });
    auto& seq = data.sequences[u];
    for (auto i : idx) {
      seq.items.push_back(data.vocab.index_of(events[i].item_id));
      seq.times.push_back(events[i].timestamp);
      seq.types.push_back(events[i].interaction_type);
    }
  }
  return data;
}

std::vector<Event> to_events(const Dataset& data) {
  std::vector<Event> out;
  for (const auto& seq : data.sequences) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out.push_back({data.user_ids.at(seq.user_index), data.vocab.id_of(seq.items[i]),
                     seq.times[i], i < seq.types.size() ? seq.types[i] : std::string()});
    }
  }
  return out;
}

// ---- split ----------------------------------------------------------------

Split split_by_user(const std::vector<UserSequence>& sequences, SplitRatios ratios,
                    std::uint64_t seed) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("split ratios {}/{}/{} must be nonnegative and sum to 1",
                                  ratios.train, ratios.valid, ratios.test));
  }
  const std::size_t n = sequences.size();
  if (n < 3) throw SplitError(fmt::format("need at least 3 users to split, have {}", n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed({seed, 0x5e11}));
  shuffle(order.begin(), order.end(), rng);

  const auto n_valid = static_cast<std::size_t>(std::llround(ratios.valid * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n)));
  if (n_valid + n_test > n) throw SplitError("split ratios leave no room for training users");

  Split split;
  auto take = [&](std::size_t begin, std::size_t end, std::vector<UserSequence>& dst) {
    std::vector<std::size_t> chosen(order.begin() + begin, order.begin() + end);
    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen) dst.push_back(sequences[i]);
  };
  take(0, n_valid, split.valid);
  take(n_valid, n_valid + n_test, split.test);
  take(n_valid + n_test, n, split.train);
  return split;
}

// ---- windows --------------------------------------------------------------

TimeUnit parse_time_unit(const std::string& s) {
  if (s == "seconds") return TimeUnit::seconds;
  if (s == "minutes") return TimeUnit::minutes;
  if (s == "hours") return TimeUnit::hours;
  if (s == "days") return TimeUnit::days;
  throw ConfigError("unknown time unit '" + s + "' (seconds|minutes|hours|days)");
}

std::string to_string(TimeUnit unit) {
  switch (unit) {
    case TimeUnit::seconds: return "seconds";
    case TimeUnit::minutes: return "minutes";
    case TimeUnit::hours: return "hours";
    case TimeUnit::days: return "days";
  }
  return "hours";
}

double seconds_per(TimeUnit unit) {
  switch (unit) {
    case TimeUnit::seconds: return 1.0;
    case TimeUnit::minutes: return 60.0;
    case TimeUnit::hours: return 3600.0;
    case TimeUnit::days: return 86400.0;
  }
  return 3600.0;
}

std::size_t WindowSample::real_count() const {
  return static_cast<std::size_t>(std::count(pad_mask.begin(), pad_mask.end(), false));
}

std::vector<WindowSample> make_windows(const UserSequence& seq, std::size_t window,
                                       std::size_t warm_start_min, TimeUnit unit) {
  if (window == 0) throw ConfigError("window length must be at least 1");
  std::vector<WindowSample> out;
  const double per = seconds_per(unit);
  for (std::size_t p = std::max<std::size_t>(warm_start_min, 1); p < seq.size(); ++p) {
    WindowSample s;
    s.item_indices.assign(window, Vocabulary::kPadIndex);
    s.intervals.assign(window, 0.0);
    s.pad_mask.assign(window, true);
    s.target_item = seq.items[p];
    s.prediction_time = seq.times[p];
    s.user_index = seq.user_index;
    s.position = p;
    const std::size_t real = std::min(window, p);
    for (std::size_t k = 0; k < real; ++k) {
      const std::size_t src = p - real + k;
      const std::size_t dst = window - real + k;
      s.item_indices[dst] = seq.items[src];
      s.intervals[dst] = static_cast<double>(seq.times[p] - seq.times[src]) / per;
      s.pad_mask[dst] = false;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<WindowSample> make_windows(const std::vector<UserSequence>& sequences,
                                       std::size_t window, std::size_t warm_start_min,
                                       TimeUnit unit) {
  std::vector<WindowSample> out;
  for (const auto& seq : sequences) {
    auto w = make_windows(seq, window, warm_start_min, unit);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

// ---- negative sampling ----------------------------------------------------

NegativeSampler::NegativeSampler(std::vector<double> frequency)
    : frequency_(std::move(frequency)) {
  if (frequency_.size() < 2) throw SamplingError("negative sampler needs at least one item");
  frequency_[Vocabulary::kPadIndex] = 0.0;
  cumulative_.resize(frequency_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < frequency_.size(); ++i) {
    if (frequency_[i] < 0.0 || !std::isfinite(frequency_[i])) {
      throw SamplingError(fmt::format("invalid frequency {} for item {}", frequency_[i], i));
    }
    if (frequency_[i] > 0.0) ++positive_items_;
    total += frequency_[i];
    cumulative_[i] = total;
  }
}

std::vector<std::size_t> NegativeSampler::sample(std::size_t target, std::size_t n,
                                                 Rng& rng) const {
  const std::size_t items = num_items();
  if (n >= items) {
    throw SamplingError(fmt::format("cannot draw {} negatives from {} items", n, items));
  }
  const bool target_positive = target < frequency_.size() && frequency_[target] > 0.0;
  const std::size_t usable = positive_items_ - (target_positive ? 1 : 0);
  // Rejection against the popularity CDF is successive sampling without
  // replacement; it is only efficient while n is small next to the support.
  if (usable >= 2 * n) {
    std::vector<std::size_t> out;
    out.reserve(n);
    std::unordered_set<std::size_t> seen;
    const double total = cumulative_.back();
    const std::size_t max_draws = 64 * n + 64;
    for (std::size_t draws = 0; out.size() < n && draws < max_draws; ++draws) {
      const double u = uniform01(rng) * total;
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      if (it == cumulative_.end()) continue;
      const auto v = static_cast<std::size_t>(it - cumulative_.begin());
      if (v == target || frequency_[v] <= 0.0 || !seen.insert(v).second) continue;
      out.push_back(v);
    }
    if (out.size() == n) return out;
  }
  return sample_by_keys(target, n, rng);
}

// Efraimidis-Spirakis keys log(u)/w; items with zero popularity fill any
// remaining slots uniformly.
std::vector<std::size_t> NegativeSampler::sample_by_keys(std::size_t target, std::size_t n,
                                                         Rng& rng) const {
  struct Keyed {
    int tier;
    double key;
    std::size_t item;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(frequency_.size());
  for (std::size_t v = 1; v < frequency_.size(); ++v) {
    if (v == target) continue;
    const double u = uniform_open01(rng);
    if (frequency_[v] > 0.0) {
      keyed.push_back({1, std::log(u) / frequency_[v], v});
    } else {
      keyed.push_back({0, u, v});
    }
  }
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(n), keyed.end(),
                    [](const Keyed& a, const Keyed& b) {
                      if (a.tier != b.tier) return a.tier > b.tier;
                      if (a.key != b.key) return a.key > b.key;
                      return a.item < b.item;
                    });
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(keyed[i].item);
  return out;
}

std::vector<std::size_t> sample_negatives(const Vocabulary& vocab, std::size_t target,
                                          std::size_t n, std::uint64_t seed) {
  NegativeSampler sampler(vocab.frequency());
  Rng rng(seed);
  return sampler.sample(target, n, rng);
}

// ---- statistics -----------------------------------------------------------

std::vector<std::int64_t> successive_gaps(const UserSequence& seq) {
  std::vector<std::int64_t> gaps;
  for (std::size_t i = 1; i < seq.times.size(); ++i) gaps.push_back(seq.times[i] - seq.times[i - 1]);
  return gaps;
}

IntervalStats interval_stats(const std::vector<UserSequence>& sequences) {
  IntervalStats stats;
  std::map<std::size_t, std::size_t> per_item;
  std::vector<double> per_user;
  std::int64_t t_min = std::numeric_limits<std::int64_t>::max();
  std::int64_t t_max = std::numeric_limits<std::int64_t>::min();
  // Bucket 0 is [0, 1) seconds; bucket k > 0 is [10^(k-1), 10^k).
  std::vector<std::size_t> buckets;
  for (const auto& seq : sequences) {
    if (seq.size() == 0) continue;
    ++stats.users;
    stats.actions += seq.size();
    per_user.push_back(static_cast<double>(seq.size()));
    for (auto item : seq.items) ++per_item[item];
    for (auto t : seq.times) {
      t_min = std::min(t_min, t);
      t_max = std::max(t_max, t);
    }
    for (auto gap : successive_gaps(seq)) {
      std::size_t b = 0;
      for (std::int64_t edge = 1; gap >= edge && edge <= std::numeric_limits<std::int64_t>::max() / 10; edge *= 10) ++b;
      if (buckets.size() <= b) buckets.resize(b + 1, 0);
      ++buckets[b];
      ++stats.gap_count;
    }
  }
  stats.items = per_item.size();
  std::vector<double> item_counts;
  for (const auto& [item, count] : per_item) item_counts.push_back(static_cast<double>(count));
  stats.actions_per_user_mean = mean_of(per_user);
  stats.actions_per_user_std = std_of(per_user, stats.actions_per_user_mean);
  stats.actions_per_item_mean = mean_of(item_counts);
  stats.actions_per_item_std = std_of(item_counts, stats.actions_per_item_mean);
  stats.time_span_seconds = stats.users ? t_max - t_min : 0;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    const double low = b == 0 ? 0.0 : std::pow(10.0, static_cast<double>(b - 1));
    const double high = std::pow(10.0, static_cast<double>(b));
    stats.histogram.push_back({low, high, buckets[b]});
  }
  return stats;
}

}  // namespace cta
