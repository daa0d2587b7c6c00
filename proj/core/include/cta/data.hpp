#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cta/rng.hpp"

namespace cta {

struct Event {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;  // seconds since epoch
  std::string interaction_type;
};

struct IngestResult {
  std::vector<Event> events;
  std::size_t rows = 0;  // data rows seen, excluding blank and comment lines
  std::size_t malformed = 0;
  std::vector<std::size_t> malformed_lines;  // first few, 1-based
  std::vector<std::string> warnings;
};

/// Reads a tab-separated event log: `user  item  timestamp  [type]`. Lines
/// starting with '#' and blank lines are skipped. Malformed rows are counted
/// and dropped; more than 10% malformed raises FormatError.
IngestResult ingest(const std::filesystem::path& path);
IngestResult ingest_text(const std::string& text);

struct FilterConfig {
  std::size_t min_item_actions = 50;
  std::size_t min_user_actions = 10;
  std::size_t max_user_actions = 1000;
  std::int64_t min_dwell_seconds = 10;
  std::optional<std::pair<std::int64_t, std::int64_t>> time_range;
  std::vector<std::string> drop_types;

  void validate() const;
};

/// Chronological actions of one user. `types` parallels `items`.
struct UserSequence {
  std::size_t user_index = 0;
  std::vector<std::size_t> items;
  std::vector<std::int64_t> times;
  std::vector<std::string> types;

  std::size_t size() const { return items.size(); }
};

/// Item ids mapped to 1..N; index 0 is the padding item.
class Vocabulary {
 public:
  static constexpr std::size_t kPadIndex = 0;

  Vocabulary() : ids_{""} {}
  explicit Vocabulary(std::vector<std::string> sorted_ids);

  std::size_t num_items() const { return ids_.size() - 1; }
  std::size_t index_of(const std::string& id) const;  // throws LookupError
  std::optional<std::size_t> find(const std::string& id) const;
  const std::string& id_of(std::size_t index) const { return ids_.at(index); }
  const std::vector<std::string>& ids() const { return ids_; }

  /// Training-split occurrence counts, indexed by item (size N + 1).
  const std::vector<double>& frequency() const { return frequency_; }
  void set_frequency_from(const std::vector<UserSequence>& train);

  /// Stable digest of the id list; checkpoints store it to detect mismatched
  /// data.
  std::string hash() const;

 private:
  std::vector<std::string> ids_;
  std::vector<double> frequency_;
};

struct Dataset {
  std::vector<UserSequence> sequences;
  std::vector<std::string> user_ids;  // by user_index
  Vocabulary vocab;
};

/// Applies, in order: type drop, time-range clip, short-dwell duplicate
/// suppression, and item/user count filters iterated to a fixpoint. Users and
/// items get dense indices in sorted id order.
Dataset preprocess(const std::vector<Event>& events, const FilterConfig& cfg);

/// Flattens a dataset back to events (inverse of preprocess on retained data).
std::vector<Event> to_events(const Dataset& data);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct Split {
  std::vector<UserSequence> train;
  std::vector<UserSequence> valid;
  std::vector<UserSequence> test;
};

Split split_by_user(const std::vector<UserSequence>& sequences, SplitRatios ratios,
                    std::uint64_t seed);

enum class TimeUnit { seconds, minutes, hours, days };

TimeUnit parse_time_unit(const std::string& s);
std::string to_string(TimeUnit unit);
double seconds_per(TimeUnit unit);

struct WindowSample {
  std::vector<std::size_t> item_indices;  // length L, left-padded with 0
  std::vector<double> intervals;          // length L, 0 at pads
  std::vector<bool> pad_mask;             // true at padded positions
  std::size_t target_item = 0;
  std::int64_t prediction_time = 0;
  std::size_t user_index = 0;
  std::size_t position = 0;  // index of the target within its sequence

  std::size_t length() const { return item_indices.size(); }
  std::size_t real_count() const;
  std::size_t first_real() const { return length() - real_count(); }
};

/// One sample per target position p >= warm_start_min, holding the last
/// min(L, p) events before p.
std::vector<WindowSample> make_windows(const UserSequence& seq, std::size_t window,
                                       std::size_t warm_start_min = 5,
                                       TimeUnit unit = TimeUnit::hours);

std::vector<WindowSample> make_windows(const std::vector<UserSequence>& sequences,
                                       std::size_t window, std::size_t warm_start_min = 5,
                                       TimeUnit unit = TimeUnit::hours);

/// Draws distinct negatives with probability proportional to training
/// popularity, never returning the target or the padding item.
class NegativeSampler {
 public:
  explicit NegativeSampler(std::vector<double> frequency);

  std::size_t num_items() const { return frequency_.size() - 1; }
  std::vector<std::size_t> sample(std::size_t target, std::size_t n, Rng& rng) const;

 private:
  std::vector<std::size_t> sample_by_keys(std::size_t target, std::size_t n, Rng& rng) const;

  std::vector<double> frequency_;
  std::vector<double> cumulative_;
  std::size_t positive_items_ = 0;
};

std::vector<std::size_t> sample_negatives(const Vocabulary& vocab, std::size_t target,
                                          std::size_t n, std::uint64_t seed);

struct HistogramBucket {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

struct IntervalStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t actions = 0;
  double actions_per_user_mean = 0.0;
  double actions_per_user_std = 0.0;
  double actions_per_item_mean = 0.0;
  double actions_per_item_std = 0.0;
  std::int64_t time_span_seconds = 0;
  std::size_t gap_count = 0;
  std::vector<HistogramBucket> histogram;  // gaps in seconds, decade buckets
};

std::vector<std::int64_t> successive_gaps(const UserSequence& seq);

IntervalStats interval_stats(const std::vector<UserSequence>& sequences);

}  // namespace cta
