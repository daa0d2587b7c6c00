#pragma once

// Temporal kernels: each maps the interval column T to one column of
// temporal importance scores.
//
//   exponential  a * exp(-T) + b
//   logarithmic  -a * log(1 + T) + b
//   linear       -a * T + b
//   constant     1
//
// Bank specs are written as comma-separated kind/count pairs, e.g.
// "exp5,lin5"; kinds are exp, log, lin and const.

#include <string>
#include <vector>

#include "cta/layers.hpp"
#include "cta/tensor.hpp"

namespace cta {

enum class KernelKind { exponential, logarithmic, linear, constant };

std::string to_string(KernelKind kind);

struct KernelSpec {
  KernelKind kind = KernelKind::exponential;
  Tensor a;  // undefined for constant kernels
  Tensor b;

  bool learnable() const { return kind != KernelKind::constant; }
};

/// Parses "exp5,lin5" into the kind sequence. Throws ConfigError on unknown
/// kinds, zero counts, or malformed text.
std::vector<KernelKind> parse_kernel_spec(const std::string& spec);

/// Canonical spec string for a kind sequence ("exp2,lin1,exp1" stays split).
std::string kernel_spec_string(const std::vector<KernelKind>& kinds);

class KernelBank {
 public:
  KernelBank(const std::vector<KernelKind>& kinds, const Initializer& init,
             const std::string& prefix = "kernel");

  std::size_t size() const { return kernels_.size(); }
  const std::vector<KernelSpec>& kernels() const { return kernels_; }
  std::vector<KernelSpec>& kernels() { return kernels_; }
  std::vector<KernelKind> kinds() const;

  /// T[L x 1] (nonnegative) -> beta[L x K]. Throws InputError on a negative
  /// interval.
  Tensor evaluate(const Tensor& intervals) const;

  /// Learnable tensors only; constant kernels contribute none.
  std::vector<NamedTensor> parameters() const;
  void collect(std::vector<NamedTensor>& out) const;

 private:
  std::string prefix_;
  std::vector<KernelSpec> kernels_;
};

/// Bank from a spec string with a, b ~ uniform[0, 1].
KernelBank default_bank(const std::string& spec, const Initializer& init);

}  // namespace cta
