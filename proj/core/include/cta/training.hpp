#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cta/data.hpp"
#include "cta/losses.hpp"
#include "cta/model.hpp"

namespace cta {

struct TrainConfig {
  LossKind loss = LossKind::top1;
  double learning_rate = 1e-3;
  std::size_t batch_size = 100;
  std::size_t negatives = 100;
  std::size_t warmup_epochs = 3;
  std::size_t patience = 3;
  std::size_t max_epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t validation_k = 5;
  std::uint64_t seed = 42;

  /// `num_items` is N, excluding padding. Throws ConfigError.
  void validate(std::size_t num_items) const;
};

/// Linear warmup from lr/10 over `warmup_epochs`, then constant.
double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);

/// Adaptive-moment optimizer over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, double beta1, double beta2, double epsilon);

  /// Applies one update from the accumulated gradients, then clears them.
  void step(double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
};

/// Builds the batch loss for one window: the target's score against sampled
/// negatives. The random stream drives both negatives and dropout.
Tensor sample_loss(const CtaModel& model, const WindowSample& sample,
                   const NegativeSampler& sampler, const TrainConfig& cfg, Rng& rng,
                   bool training = true);

/// Forward and backward over a batch; gradients of the mean loss accumulate
/// into the parameters. Returns the mean loss.
double accumulate_batch(const CtaModel& model, std::span<const WindowSample> batch,
                        const NegativeSampler& sampler, const TrainConfig& cfg,
                        std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double valid_recall = 0.0;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_recall = 0.0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains with per-epoch validation Recall@K and early stopping; the model is
/// left holding the best-validation parameters. A non-finite batch loss
/// throws NumericError naming epoch, batch, and loss.
TrainResult train(CtaModel& model, const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& valid_windows,
                  const std::vector<double>& frequency, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace cta
