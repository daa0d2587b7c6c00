#pragma once

// Full-corpus ranking metrics and the heuristic baselines.
//
// A target's rank is 1 + (items scoring strictly higher) + (items scoring
// equally with a smaller index). The padding index 0 never competes.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cta/data.hpp"
#include "cta/model.hpp"

namespace cta {

std::size_t rank_of(std::span<const double> scores, std::size_t target);

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k);
double mrr_at_k(std::span<const std::size_t> ranks, std::size_t k);

/// Scores every index 0..N for one window. Index 0 is ignored.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> scores(const WindowSample& sample) const = 0;
};

/// Training-set popularity.
class PopScorer : public Scorer {
 public:
  PopScorer(const std::vector<UserSequence>& train, std::size_t num_items);
  std::string name() const override { return "Pop"; }
  std::vector<double> scores(const WindowSample& sample) const override;
  const std::vector<double>& counts() const { return counts_; }

 private:
  std::vector<double> counts_;
};

/// Count in the user's observed prefix, with global popularity as a
/// fractional tie-break. `sequences` are the full evaluation sequences the
/// windows were cut from; they are referenced, not copied, and must outlive
/// the scorer.
class SPopScorer : public Scorer {
 public:
  SPopScorer(const std::vector<UserSequence>& train, std::size_t num_items,
             const std::vector<UserSequence>& sequences);
  std::string name() const override { return "S-Pop"; }
  std::vector<double> scores(const WindowSample& sample) const override;

 private:
  std::vector<double> pop_;
  double pop_scale_ = 1.0;
  std::vector<const UserSequence*> by_user_;
};

/// First-order transition ratios count(u -> v) / count(u -> *); an unseen
/// last item falls back to Pop.
class MarkovScorer : public Scorer {
 public:
  MarkovScorer(const std::vector<UserSequence>& train, std::size_t num_items);
  std::string name() const override { return "Markov"; }
  std::vector<double> scores(const WindowSample& sample) const override;

 private:
  std::size_t n_;
  std::vector<double> pop_;
  std::vector<std::vector<std::pair<std::size_t, double>>> next_;  // by last item
};

class ModelScorer : public Scorer {
 public:
  explicit ModelScorer(const CtaModel& model, std::string name = "CTA")
      : model_(model), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::vector<double> scores(const WindowSample& sample) const override {
    return model_.score_all(sample);
  }

 private:
  const CtaModel& model_;
  std::string name_;
};

inline const std::vector<std::size_t> kDefaultCutoffs = {1, 5, 10, 20};

struct EvalReport {
  std::string model;
  std::size_t samples = 0;
  std::vector<std::size_t> cutoffs;
  std::vector<double> recall;  // parallel to cutoffs
  std::vector<double> mrr;

  double recall_at(std::size_t k) const;
  double mrr_at(std::size_t k) const;
};

std::vector<std::size_t> rank_all(const Scorer& scorer, const std::vector<WindowSample>& windows);

EvalReport evaluate(const Scorer& scorer, const std::vector<WindowSample>& windows,
                    const std::vector<std::size_t>& cutoffs = kDefaultCutoffs);

EvalReport report_from_ranks(const std::string& model, std::span<const std::size_t> ranks,
                             const std::vector<std::size_t>& cutoffs = kDefaultCutoffs);

/// Rows are metrics, columns are methods.
std::string format_table(const std::vector<EvalReport>& reports);

}  // namespace cta
