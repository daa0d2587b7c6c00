#include "cta/synthetic.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

std::vector<Event> make_repetition_corpus(const RepetitionCorpus& cfg) {
  if (cfg.items < cfg.initial_distinct || cfg.initial_distinct == 0 || cfg.lookback == 0) {
    throw ConfigError("repetition corpus needs items >= initial_distinct >= 1 and lookback >= 1");
  }
  if (cfg.min_gap_seconds <= 0 || cfg.max_gap_seconds < cfg.min_gap_seconds) {
    throw ConfigError("repetition corpus gaps must satisfy 0 < min <= max");
  }
  std::vector<Event> events;
  events.reserve(cfg.users * cfg.events_per_user);
  const std::int64_t t0 = 1'500'000'000;
  for (std::size_t u = 0; u < cfg.users; ++u) {
    Rng rng(derive_seed({cfg.seed, u}));
    std::vector<std::size_t> seq;
    std::vector<std::size_t> pool(cfg.items);
    for (std::size_t i = 0; i < cfg.items; ++i) pool[i] = i;
    shuffle(pool.begin(), pool.end(), rng);
    seq.assign(pool.begin(), pool.begin() + std::min(cfg.initial_distinct, cfg.events_per_user));
    while (seq.size() < cfg.events_per_user) {
      if (uniform01(rng) < cfg.repeat_probability) {
        const std::size_t span = std::min(cfg.lookback, seq.size());
        seq.push_back(seq[seq.size() - 1 - uniform_index(rng, span)]);
      } else {
        seq.push_back(uniform_index(rng, cfg.items));
      }
    }
    std::int64_t t = t0 + static_cast<std::int64_t>(uniform_index(rng, 86'400));
    const auto gap_range = static_cast<std::uint64_t>(cfg.max_gap_seconds - cfg.min_gap_seconds + 1);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i > 0) t += cfg.min_gap_seconds + static_cast<std::int64_t>(uniform_index(rng, gap_range));
      events.push_back({fmt::format("u{:04}", u + 1), fmt::format("i{:04}", seq[i] + 1), t, "view"});
    }
  }
  return events;
}

std::vector<WindowSample> make_recency_windows(const RecencyCorpus& cfg) {
  if (cfg.items < cfg.window || cfg.window == 0) {
    throw ConfigError("recency windows need at least `window` distinct items");
  }
  std::vector<WindowSample> out;
  out.reserve(cfg.samples);
  std::vector<std::size_t> pool(cfg.items);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    Rng rng(derive_seed({cfg.seed, s}));
    for (std::size_t i = 0; i < cfg.items; ++i) pool[i] = i + 1;
    shuffle(pool.begin(), pool.end(), rng);
    WindowSample w;
    w.item_indices.assign(pool.begin(), pool.begin() + cfg.window);
    w.pad_mask.assign(cfg.window, false);
    w.intervals.assign(cfg.window, 0.0);
    double t = cfg.max_step * uniform01(rng) * 0.1;
    for (std::size_t i = cfg.window; i-- > 0;) {
      w.intervals[i] = t;
      t += cfg.max_step * (0.1 + 0.9 * uniform01(rng));
    }
    w.target_item = w.item_indices.back();
    w.user_index = s;
    w.position = cfg.window;
    w.prediction_time = 0;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace cta
