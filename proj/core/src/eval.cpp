#include "cta/eval.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

std::size_t rank_of(std::span<const double> scores, std::size_t target) {
  if (target == 0 || target >= scores.size()) {
    throw EvaluationError(fmt::format("target index {} outside 1..{}", target,
                                      scores.empty() ? 0 : scores.size() - 1));
  }
  const double t = scores[target];
  if (std::isnan(t)) throw EvaluationError("target score is NaN");
  std::size_t rank = 1;
  for (std::size_t v = 1; v < scores.size(); ++v) {
    if (scores[v] > t || (v < target && scores[v] == t)) ++rank;
  }
  return rank;
}

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw EvaluationError("recall over zero ranks");
  if (k == 0) throw EvaluationError("cutoff K must be at least 1");
  std::size_t hits = 0;
  for (auto r : ranks) hits += r <= k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double mrr_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw EvaluationError("MRR over zero ranks");
  if (k == 0) throw EvaluationError("cutoff K must be at least 1");
  double total = 0.0;
  for (auto r : ranks) total += r <= k ? 1.0 / static_cast<double>(r) : 0.0;
  return total / static_cast<double>(ranks.size());
}

// ---- baselines ------------------------------------------------------------

namespace {

std::vector<double> popularity(const std::vector<UserSequence>& train, std::size_t num_items) {
  std::vector<double> counts(num_items + 1, 0.0);
  for (const auto& s : train) {
    for (auto item : s.items) {
      if (item == 0 || item > num_items) {
        throw DimensionError(fmt::format("item index {} outside 1..{}", item, num_items));
      }
      counts[item] += 1.0;
    }
  }
  return counts;
}

}  // namespace

PopScorer::PopScorer(const std::vector<UserSequence>& train, std::size_t num_items)
    : counts_(popularity(train, num_items)) {}

std::vector<double> PopScorer::scores(const WindowSample&) const { return counts_; }

SPopScorer::SPopScorer(const std::vector<UserSequence>& train, std::size_t num_items,
                       const std::vector<UserSequence>& sequences)
    : pop_(popularity(train, num_items)) {
  const double max_pop = *std::max_element(pop_.begin(), pop_.end());
  pop_scale_ = 1.0 / (max_pop + 1.0);
  for (const auto& s : sequences) {
    if (s.user_index >= by_user_.size()) by_user_.resize(s.user_index + 1, nullptr);
    by_user_[s.user_index] = &s;
  }
}

std::vector<double> SPopScorer::scores(const WindowSample& sample) const {
  if (sample.user_index >= by_user_.size() || by_user_[sample.user_index] == nullptr) {
    throw LookupError(fmt::format("no sequence for user index {}", sample.user_index));
  }
  const UserSequence& seq = *by_user_[sample.user_index];
  if (sample.position > seq.size()) {
    throw LookupError(fmt::format("position {} beyond sequence of {}", sample.position, seq.size()));
  }
  std::vector<double> out(pop_.size());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = pop_[v] * pop_scale_;
  for (std::size_t i = 0; i < sample.position; ++i) {
    const auto item = seq.items[i];
    if (item < out.size()) out[item] += 1.0;
  }
  return out;
}

MarkovScorer::MarkovScorer(const std::vector<UserSequence>& train, std::size_t num_items)
    : n_(num_items), pop_(popularity(train, num_items)), next_(num_items + 1) {
  std::vector<std::vector<double>> counts(num_items + 1);
  for (const auto& s : train) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      auto& row = counts[s.items[i - 1]];
      if (row.empty()) row.assign(num_items + 1, 0.0);
      row[s.items[i]] += 1.0;
    }
  }
  for (std::size_t u = 0; u <= num_items; ++u) {
    if (counts[u].empty()) continue;
    double total = 0.0;
    for (double c : counts[u]) total += c;
    for (std::size_t v = 1; v <= num_items; ++v) {
      if (counts[u][v] > 0.0) next_[u].emplace_back(v, counts[u][v] / total);
    }
  }
}

std::vector<double> MarkovScorer::scores(const WindowSample& sample) const {
  if (sample.item_indices.empty()) throw InputError("empty window");
  const std::size_t last = sample.item_indices.back();
  if (last >= next_.size() || next_[last].empty()) return pop_;
  std::vector<double> out(n_ + 1, 0.0);
  for (const auto& [v, p] : next_[last]) out[v] = p;
  return out;
}

// ---- reports --------------------------------------------------------------

double EvalReport::recall_at(std::size_t k) const {
  for (std::size_t i = 0; i < cutoffs.size(); ++i)
    if (cutoffs[i] == k) return recall[i];
  throw LookupError(fmt::format("report has no cutoff {}", k));
}

double EvalReport::mrr_at(std::size_t k) const {
  for (std::size_t i = 0; i < cutoffs.size(); ++i)
    if (cutoffs[i] == k) return mrr[i];
  throw LookupError(fmt::format("report has no cutoff {}", k));
}

std::vector<std::size_t> rank_all(const Scorer& scorer, const std::vector<WindowSample>& windows) {
  std::vector<std::size_t> ranks;
  ranks.reserve(windows.size());
  for (const auto& w : windows) {
    const auto s = scorer.scores(w);
    ranks.push_back(rank_of(s, w.target_item));
  }
  return ranks;
}

EvalReport report_from_ranks(const std::string& model, std::span<const std::size_t> ranks,
                             const std::vector<std::size_t>& cutoffs) {
  EvalReport r;
  r.model = model;
  r.samples = ranks.size();
  r.cutoffs = cutoffs;
  for (auto k : cutoffs) {
    r.recall.push_back(recall_at_k(ranks, k));
    r.mrr.push_back(mrr_at_k(ranks, k));
  }
  return r;
}

EvalReport evaluate(const Scorer& scorer, const std::vector<WindowSample>& windows,
                    const std::vector<std::size_t>& cutoffs) {
  if (windows.empty()) throw EvaluationError("no evaluation windows");
  const auto ranks = rank_all(scorer, windows);
  return report_from_ranks(scorer.name(), ranks, cutoffs);
}

std::string format_table(const std::vector<EvalReport>& reports) {
  if (reports.empty()) return "";
  const auto& cutoffs = reports.front().cutoffs;
  std::size_t width = 10;
  for (const auto& r : reports) width = std::max(width, r.model.size() + 2);
  std::string out = fmt::format("{:<12}", "metric");
  for (const auto& r : reports) out += fmt::format("{:>{}}", r.model, width);
  out += '\n';
  auto line = [&](const std::string& label, auto get) {
    out += fmt::format("{:<12}", label);
    for (const auto& r : reports) out += fmt::format("{:>{}.4f}", get(r), width);
    out += '\n';
  };
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    line(fmt::format("Recall@{}", cutoffs[i]), [&](const EvalReport& r) { return r.recall[i]; });
  }
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    line(fmt::format("MRR@{}", cutoffs[i]), [&](const EvalReport& r) { return r.mrr[i]; });
  }
  out += fmt::format("{:<12}", "samples");
  for (const auto& r : reports) out += fmt::format("{:>{}}", r.samples, width);
  out += '\n';
  return out;
}

}  // namespace cta
