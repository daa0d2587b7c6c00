#include "cta/training.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cta/error.hpp"
#include "cta/eval.hpp"

namespace cta {

namespace {

constexpr std::uint64_t kShuffleTag = 0x5348554646ULL;

}  // namespace

void TrainConfig::validate(std::size_t num_items) const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError(fmt::format("learning rate {} must be positive", learning_rate));
  }
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (negatives == 0) throw ConfigError("at least one negative sample is required");
  if (negatives >= num_items) {
    throw ConfigError(fmt::format("{} negatives need more than {} items", negatives, num_items));
  }
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError(fmt::format("moment decays ({}, {}) must lie in [0, 1)", beta1, beta2));
  }
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (validation_k == 0) throw ConfigError("validation cutoff must be at least 1");
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.warmup_epochs) return cfg.learning_rate;
  const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs);
  return cfg.learning_rate * (0.1 + 0.9 * frac);
}

Adam::Adam(std::vector<NamedTensor> params, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    auto w = p.mutable_values();
    auto g = p.mutable_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + epsilon_);
    }
    p.zero_grad();
  }
}

Tensor sample_loss(const CtaModel& model, const WindowSample& sample,
                   const NegativeSampler& sampler, const TrainConfig& cfg, Rng& rng,
                   bool training) {
  std::vector<std::size_t> items{sample.target_item};
  const auto negs = sampler.sample(sample.target_item, cfg.negatives, rng);
  items.insert(items.end(), negs.begin(), negs.end());
  ForwardContext ctx{training, model.config().dropout, &rng};
  const ForwardTrace trace = model.forward(sample, ctx);
  return ranking_loss(cfg.loss, model.candidate_scores(trace, items));
}

double accumulate_batch(const CtaModel& model, std::span<const WindowSample> batch,
                        const NegativeSampler& sampler, const TrainConfig& cfg,
                        std::size_t epoch) {
  if (batch.empty()) throw EmptyDatasetError("empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& s : batch) {
    Rng rng(derive_seed({cfg.seed, s.user_index, s.position, epoch}));
    const Tensor loss = sample_loss(model, s, sampler, cfg, rng);
    total += loss.item();
    backward(scale(loss, weight));
  }
  return total * weight;
}

TrainResult train(CtaModel& model, const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& valid_windows,
                  const std::vector<double>& frequency, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate(model.config().num_items);
  if (train_windows.empty()) throw EmptyDatasetError("no training windows");
  if (valid_windows.empty()) throw EmptyDatasetError("no validation windows");
  if (frequency.size() != model.config().num_items + 1) {
    throw DimensionError(fmt::format("frequency table has {} entries for {} items",
                                     frequency.size(), model.config().num_items));
  }
  const NegativeSampler sampler(frequency);
  Adam adam(model.parameters(), cfg.beta1, cfg.beta2, cfg.epsilon);
  model.zero_grad();

  TrainResult result;
  auto best = model.snapshot();
  double best_recall = -1.0;
  std::size_t stale = 0;
  std::vector<std::size_t> order(train_windows.size());

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed({cfg.seed, kShuffleTag, epoch}));
    shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<WindowSample> batch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_windows[order[i]]);
      const double loss = accumulate_batch(model, batch, sampler, cfg, epoch);
      if (!std::isfinite(loss)) {
        throw NumericError(fmt::format("non-finite loss {} at epoch {}, batch {}", loss, epoch,
                                       batches));
      }
      adam.step(lr);
      loss_sum += loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    const auto ranks = rank_all(ModelScorer(model), valid_windows);
    rec.valid_recall = recall_at_k(ranks, cfg.validation_k);
    rec.improved = rec.valid_recall > best_recall;
    if (rec.improved) {
      best_recall = rec.valid_recall;
      best = model.snapshot();
      result.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stale >= cfg.patience && cfg.patience > 0) {
      result.stopped_early = true;
      break;
    }
  }
  model.restore(best);
  result.best_valid_recall = best_recall;
  return result;
}

}  // namespace cta
