#include "cta/losses.hpp"

#include <vector>

#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

namespace {

void check(const Tensor& target, const Tensor& negatives) {
  if (target.size() != 1) {
    throw DimensionError("loss target must hold one score, got " + shape_string(target.shape()));
  }
  if (negatives.rank() != 1 || negatives.size() == 0) {
    throw DimensionError("loss negatives must be a nonempty [n], got " +
                         shape_string(negatives.shape()));
  }
}

// t repeated to the length of the negatives, keeping the gradient path.
Tensor broadcast_target(const Tensor& target, std::size_t n) {
  return reshape(tile_rows(reshape(target, {1, 1}), n), {n});
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::nll: return "nll";
    case LossKind::bpr: return "bpr";
    case LossKind::top1: return "top1";
  }
  return "top1";
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "nll") return LossKind::nll;
  if (s == "bpr") return LossKind::bpr;
  if (s == "top1") return LossKind::top1;
  throw ConfigError("unknown loss '" + s + "' (nll|bpr|top1)");
}

Tensor loss_nll(const Tensor& target, const Tensor& negatives) {
  check(target, negatives);
  const Tensor t = reshape(target, {1});
  return sub(logsumexp_all(concat({t, negatives}, 0)), reshape(t, {1}));
}

Tensor loss_bpr(const Tensor& target, const Tensor& negatives) {
  check(target, negatives);
  const Tensor diff = sub(broadcast_target(target, negatives.size()), negatives);
  return neg(mean_all(log_sigmoid(diff)));
}

Tensor loss_top1(const Tensor& target, const Tensor& negatives) {
  check(target, negatives);
  const Tensor diff = sub(negatives, broadcast_target(target, negatives.size()));
  return mean_all(add(sigmoid(diff), sigmoid(square(negatives))));
}

Tensor ranking_loss(LossKind kind, const Tensor& target, const Tensor& negatives) {
  switch (kind) {
    case LossKind::nll: return loss_nll(target, negatives);
    case LossKind::bpr: return loss_bpr(target, negatives);
    case LossKind::top1: return loss_top1(target, negatives);
  }
  return loss_top1(target, negatives);
}

Tensor ranking_loss(LossKind kind, const Tensor& scores) {
  if (scores.rank() != 1 || scores.size() < 2) {
    throw DimensionError("ranking_loss expects [1 + n] scores, got " + shape_string(scores.shape()));
  }
  const std::size_t n = scores.size() - 1;
  const Tensor as_rows = reshape(scores, {n + 1, 1});
  const Tensor target = reshape(slice_rows(as_rows, 0, 1), {1});
  const Tensor negatives = reshape(slice_rows(as_rows, 1, n), {n});
  return ranking_loss(kind, target, negatives);
}

}  // namespace cta
