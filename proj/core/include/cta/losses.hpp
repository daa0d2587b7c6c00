#pragma once

// Sampled ranking losses over one target score and its negatives. Each takes
// `target` with a single value and `negatives` of shape [n], n >= 1.

#include <string>

#include "cta/tensor.hpp"

namespace cta {

enum class LossKind { nll, bpr, top1 };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& s);

/// -log(e^t / (e^t + sum_j e^{r_j})). The target is part of the denominator.
Tensor loss_nll(const Tensor& target, const Tensor& negatives);

/// -mean_j log sigmoid(t - r_j).
Tensor loss_bpr(const Tensor& target, const Tensor& negatives);

/// mean_j [sigmoid(r_j - t) + sigmoid(r_j^2)].
Tensor loss_top1(const Tensor& target, const Tensor& negatives);

Tensor ranking_loss(LossKind kind, const Tensor& target, const Tensor& negatives);

/// Convenience: scores[0] is the target, the rest are negatives.
Tensor ranking_loss(LossKind kind, const Tensor& scores);

}  // namespace cta
