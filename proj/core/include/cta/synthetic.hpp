#pragma once

// Planted-pattern corpora for behavioral checks.

#include <cstdint>
#include <vector>

#include "cta/data.hpp"

namespace cta {

/// Users whose next item usually repeats one of their recent items.
struct RepetitionCorpus {
  std::size_t users = 200;
  std::size_t events_per_user = 60;
  std::size_t items = 50;
  double repeat_probability = 0.9;
  std::size_t lookback = 8;
  std::size_t initial_distinct = 3;  // distinct uniform items opening each sequence
  std::int64_t min_gap_seconds = 60;
  std::int64_t max_gap_seconds = 6 * 3600;
  std::uint64_t seed = 7;
};

/// Ids are zero-padded ("u0001", "i0001") so sorted order is numeric order.
std::vector<Event> make_repetition_corpus(const RepetitionCorpus& cfg);

/// Windows of distinct items whose target is always the most recent one.
struct RecencyCorpus {
  std::size_t samples = 400;
  std::size_t items = 50;
  std::size_t window = 8;
  double max_step = 3.0;  // interval growth per older position, in time units
  std::uint64_t seed = 11;
};

std::vector<WindowSample> make_recency_windows(const RecencyCorpus& cfg);

}  // namespace cta
