#include "cta/kernels.hpp"

#include <cctype>
#include <charconv>

#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

const char* short_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::exponential: return "exp";
    case KernelKind::logarithmic: return "log";
    case KernelKind::linear: return "lin";
    case KernelKind::constant: return "const";
  }
  return "?";
}

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::exponential: return "exponential";
    case KernelKind::logarithmic: return "logarithmic";
    case KernelKind::linear: return "linear";
    case KernelKind::constant: return "constant";
  }
  return "unknown";
}

std::vector<KernelKind> parse_kernel_spec(const std::string& spec) {
  std::vector<KernelKind> kinds;
  std::string_view rest(spec);
  if (trim(rest).empty()) throw ConfigError("empty kernel spec");
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view term = trim(rest.substr(0, comma));
    std::size_t split = 0;
    while (split < term.size() && std::isalpha(static_cast<unsigned char>(term[split]))) ++split;
    const std::string_view name = term.substr(0, split);
    const std::string_view digits = term.substr(split);
    KernelKind kind;
    if (name == "exp") kind = KernelKind::exponential;
    else if (name == "log") kind = KernelKind::logarithmic;
    else if (name == "lin") kind = KernelKind::linear;
    else if (name == "const") kind = KernelKind::constant;
    else throw ConfigError(fmt::format("unknown kernel kind '{}' in '{}'", name, spec));
    std::size_t count = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), count);
    if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size()) {
      throw ConfigError(fmt::format("kernel term '{}' needs a count, e.g. exp5", term));
    }
    if (count == 0) throw ConfigError(fmt::format("kernel term '{}' has zero count", term));
    kinds.insert(kinds.end(), count, kind);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return kinds;
}

std::string kernel_spec_string(const std::vector<KernelKind>& kinds) {
  std::string out;
  for (std::size_t i = 0; i < kinds.size();) {
    std::size_t j = i;
    while (j < kinds.size() && kinds[j] == kinds[i]) ++j;
    if (!out.empty()) out += ',';
    out += fmt::format("{}{}", short_name(kinds[i]), j - i);
    i = j;
  }
  return out;
}

KernelBank::KernelBank(const std::vector<KernelKind>& kinds, const Initializer& init,
                       const std::string& prefix)
    : prefix_(prefix) {
  if (kinds.empty()) throw ConfigError("kernel bank needs at least one kernel");
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    KernelSpec spec;
    spec.kind = kinds[k];
    if (spec.learnable()) {
      spec.a = init.uniform(fmt::format("{}.{}.a", prefix_, k), {1}, 0.0, 1.0);
      spec.b = init.uniform(fmt::format("{}.{}.b", prefix_, k), {1}, 0.0, 1.0);
    }
    kernels_.push_back(std::move(spec));
  }
}

std::vector<KernelKind> KernelBank::kinds() const {
  std::vector<KernelKind> out;
  for (const auto& k : kernels_) out.push_back(k.kind);
  return out;
}

Tensor KernelBank::evaluate(const Tensor& intervals) const {
  const bool column = intervals.rank() == 2 && intervals.cols() == 1;
  if (!column) {
    throw DimensionError("kernel bank expects intervals [L x 1], got " +
                         shape_string(intervals.shape()));
  }
  for (double t : intervals.values()) {
    if (!(t >= 0.0)) throw InputError(fmt::format("negative or invalid interval {}", t));
  }
  const std::size_t l = intervals.rows();
  std::vector<Tensor> columns;
  columns.reserve(kernels_.size());
  for (const auto& k : kernels_) {
    switch (k.kind) {
      case KernelKind::exponential:
        columns.push_back(add_scalar(mul_scalar(exp(neg(intervals)), k.a), k.b));
        break;
      case KernelKind::logarithmic:
        columns.push_back(add_scalar(mul_scalar(neg(log1p(intervals)), k.a), k.b));
        break;
      case KernelKind::linear:
        columns.push_back(add_scalar(mul_scalar(neg(intervals), k.a), k.b));
        break;
      case KernelKind::constant:
        columns.push_back(Tensor::full({l, 1}, 1.0));
        break;
    }
  }
  return columns.size() == 1 ? columns[0] : concat(columns, 1);
}

std::vector<NamedTensor> KernelBank::parameters() const {
  std::vector<NamedTensor> out;
  collect(out);
  return out;
}

void KernelBank::collect(std::vector<NamedTensor>& out) const {
  for (std::size_t k = 0; k < kernels_.size(); ++k) {
    if (!kernels_[k].learnable()) continue;
    out.push_back({fmt::format("{}.{}.a", prefix_, k), kernels_[k].a});
    out.push_back({fmt::format("{}.{}.b", prefix_, k), kernels_[k].b});
  }
}

KernelBank default_bank(const std::string& spec, const Initializer& init) {
  return KernelBank(parse_kernel_spec(spec), init);
}

}  // namespace cta
