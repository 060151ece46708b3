#include "lmf/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lmf/error.hpp"

namespace lmf {

namespace {

// Below this many samples the OpenMP fork/join costs more than it saves.
constexpr std::size_t kParallelMinSamples = 256;

void check_logits(std::span<const double> logits) {
  if (logits.size() < 2) {
    fail(ErrorKind::InvalidInput, "logit vector needs at least 2 classes");
  }
  for (double z : logits) {
    if (!std::isfinite(z)) fail(ErrorKind::InvalidInput, "non-finite logit");
  }
}

void check_label(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    fail(ErrorKind::Index, "label " + std::to_string(label) +
                               " out of range for " +
                               std::to_string(logits.size()) + " classes");
  }
}

void check_gamma(const LossSpec& spec) {
  if (!(spec.gamma >= 0.0) || !std::isfinite(spec.gamma)) {
    fail(ErrorKind::InvalidSpec, "gamma must be finite and >= 0");
  }
  if (!(spec.prob_clamp_eps > 0.0 && spec.prob_clamp_eps <= 1e-6)) {
    fail(ErrorKind::InvalidSpec, "prob_clamp_eps must lie in (0, 1e-6]");
  }
}

void check_ldam(std::span<const double> logits, const MarginVector& margins,
                const LossSpec& spec) {
  if (margins.margins.size() != logits.size()) {
    fail(ErrorKind::Shape, "margin vector has " +
                               std::to_string(margins.margins.size()) +
                               " entries, logits have " +
                               std::to_string(logits.size()));
  }
  if (!(spec.scale_s > 0.0) || !std::isfinite(spec.scale_s)) {
    fail(ErrorKind::InvalidSpec, "scale_s must be finite and > 0");
  }
}

void check_weights(const LossSpec& spec) {
  if (!(spec.alpha >= 0.0) || !(spec.beta >= 0.0) ||
      !std::isfinite(spec.alpha) || !std::isfinite(spec.beta)) {
    fail(ErrorKind::InvalidSpec, "alpha and beta must be finite and >= 0");
  }
  if (spec.alpha + spec.beta <= 0.0) {
    fail(ErrorKind::InvalidSpec, "alpha + beta must be > 0");
  }
}

// -log softmax(z)[label] = (m - z_y) + log1p(sum over j != argmax of
// e^(z_j - m)). The log1p form keeps full relative precision when the loss
// is close to zero.
double nll(std::span<const double> z, int label) {
  const auto top = static_cast<std::size_t>(
      std::max_element(z.begin(), z.end()) - z.begin());
  const double m = z[top];
  double rest = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != top) rest += std::exp(z[j] - m);
  }
  return (m - z[label]) + std::log1p(rest);
}

// -log softmax(z)[label] and its gradient, without validation.
LossValueAndGrad softmax_nll(std::span<const double> z, int label) {
  LossValueAndGrad out;
  out.grad = softmax(z);
  out.value = nll(z, label);
  // p_y - 1 as minus the other classes' mass, exact when p_y is near 1.
  double others = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (static_cast<int>(j) != label) others += out.grad[j];
  }
  out.grad[label] = -others;
  return out;
}

LossValueAndGrad focal_unchecked(std::span<const double> z, int label,
                                 const LossSpec& spec) {
  const double gamma = spec.gamma;
  const double log_p = -nll(z, label);
  const double p = std::exp(log_p);

  LossValueAndGrad out;
  if (p < spec.prob_clamp_eps) {
    // Clamp is active: the loss is constant in the logits.
    const double eps = spec.prob_clamp_eps;
    out.value = -std::pow(1.0 - eps, gamma) * std::log(eps);
    out.grad.assign(z.size(), 0.0);
    return out;
  }

  // q = 1 - p_t, accurate also for p_t close to 1.
  const double q = -std::expm1(log_p);
  const double q_pow = std::pow(q, gamma);
  out.value = -q_pow * log_p;

  // d FL / d z_k = A * (delta_yk - p_k) with
  // A = gamma * q^(gamma-1) * p * log p - q^gamma.
  double focus_term = 0.0;
  if (gamma > 0.0) {
    const double log_p_over_q = q > 0.0 ? log_p / q : -1.0;
    focus_term = gamma * q_pow * p * log_p_over_q;
  }
  const double a = focus_term - q_pow;

  out.grad = softmax(z);
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (static_cast<int>(k) == label) {
      out.grad[k] = a * q;
    } else {
      out.grad[k] = -a * out.grad[k];
    }
  }
  return out;
}

LossValueAndGrad ldam_unchecked(std::span<const double> z, int label,
                                const MarginVector& margins,
                                const LossSpec& spec) {
  const double s = spec.scale_s;
  std::vector<double> shifted(z.begin(), z.end());
  shifted[label] -= margins.margins[label];
  for (double& v : shifted) v *= s;
  LossValueAndGrad out = softmax_nll(shifted, label);
  for (double& g : out.grad) g *= s;
  return out;
}

LossValueAndGrad lmf_unchecked(std::span<const double> z, int label,
                               const MarginVector& margins,
                               const LossSpec& spec) {
  LossValueAndGrad out;
  out.grad.assign(z.size(), 0.0);
  // A zero-weighted component is skipped, so LMF(1,0) and LMF(0,1) reduce to
  // their single components exactly.
  if (spec.alpha != 0.0) {
    const auto ldam = ldam_unchecked(z, label, margins, spec);
    out.value += spec.alpha * ldam.value;
    for (std::size_t k = 0; k < z.size(); ++k) {
      out.grad[k] += spec.alpha * ldam.grad[k];
    }
  }
  if (spec.beta != 0.0) {
    const auto focal = focal_unchecked(z, label, spec);
    out.value += spec.beta * focal.value;
    for (std::size_t k = 0; k < z.size(); ++k) {
      out.grad[k] += spec.beta * focal.grad[k];
    }
  }
  return out;
}

LossValueAndGrad dispatch_unchecked(std::span<const double> z, int label,
                                    const MarginVector& margins,
                                    const LossSpec& spec) {
  switch (spec.kind) {
    case LossKind::CrossEntropy: return softmax_nll(z, label);
    case LossKind::Focal: return focal_unchecked(z, label, spec);
    case LossKind::LDAM: return ldam_unchecked(z, label, margins, spec);
    case LossKind::LMF: return lmf_unchecked(z, label, margins, spec);
  }
  return {};
}

void check_for_kind(std::span<const double> z, const MarginVector& margins,
                    const LossSpec& spec) {
  switch (spec.kind) {
    case LossKind::CrossEntropy: break;
    case LossKind::Focal: check_gamma(spec); break;
    case LossKind::LDAM: check_ldam(z, margins, spec); break;
    case LossKind::LMF:
      check_weights(spec);
      check_gamma(spec);
      check_ldam(z, margins, spec);
      break;
  }
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::CrossEntropy: return "ce";
    case LossKind::Focal: return "focal";
    case LossKind::LDAM: return "ldam";
    case LossKind::LMF: return "lmf";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "ce" || name == "cross_entropy" || name == "crossentropy" ||
      name == "cross-entropy") {
    return LossKind::CrossEntropy;
  }
  if (name == "focal") return LossKind::Focal;
  if (name == "ldam") return LossKind::LDAM;
  if (name == "lmf") return LossKind::LMF;
  fail(ErrorKind::InvalidSpec, "unknown loss '" + std::string(name) + "'");
}

std::string_view to_string(Reduction r) {
  return r == Reduction::Mean ? "mean" : "sum";
}

Reduction parse_reduction(std::string_view name) {
  if (name == "mean") return Reduction::Mean;
  if (name == "sum") return Reduction::Sum;
  fail(ErrorKind::InvalidSpec, "unknown reduction '" + std::string(name) + "'");
}

long long ClassDistribution::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0LL);
}

void validate(const LossSpec& spec) {
  check_gamma(spec);
  if (!(spec.margin_c > 0.0) || !std::isfinite(spec.margin_c)) {
    fail(ErrorKind::InvalidSpec, "margin C must be finite and > 0");
  }
  if (spec.max_margin && !(*spec.max_margin > 0.0)) {
    fail(ErrorKind::InvalidSpec, "max_margin must be > 0");
  }
  if (!(spec.scale_s > 0.0) || !std::isfinite(spec.scale_s)) {
    fail(ErrorKind::InvalidSpec, "scale_s must be finite and > 0");
  }
  if (!(spec.alpha >= 0.0) || !(spec.beta >= 0.0)) {
    fail(ErrorKind::InvalidSpec, "alpha and beta must be >= 0");
  }
  if (spec.kind == LossKind::LMF) check_weights(spec);
}

double log_sum_exp(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  return m + std::log(sum);
}

std::vector<double> softmax(std::span<const double> logits) {
  check_logits(logits);
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

LossValueAndGrad cross_entropy(std::span<const double> logits, int label) {
  check_logits(logits);
  check_label(logits, label);
  return softmax_nll(logits, label);
}

LossValueAndGrad focal_loss(std::span<const double> logits, int label,
                            const LossSpec& spec) {
  check_logits(logits);
  check_label(logits, label);
  check_gamma(spec);
  return focal_unchecked(logits, label, spec);
}

LossValueAndGrad ldam_loss(std::span<const double> logits, int label,
                           const MarginVector& margins, const LossSpec& spec) {
  check_logits(logits);
  check_label(logits, label);
  check_ldam(logits, margins, spec);
  return ldam_unchecked(logits, label, margins, spec);
}

LossValueAndGrad lmf_loss(std::span<const double> logits, int label,
                          const MarginVector& margins, const LossSpec& spec) {
  check_logits(logits);
  check_label(logits, label);
  check_weights(spec);
  check_gamma(spec);
  check_ldam(logits, margins, spec);
  return lmf_unchecked(logits, label, margins, spec);
}

LossValueAndGrad evaluate_loss(std::span<const double> logits, int label,
                               const MarginVector& margins,
                               const LossSpec& spec) {
  check_logits(logits);
  check_label(logits, label);
  check_for_kind(logits, margins, spec);
  return dispatch_unchecked(logits, label, margins, spec);
}

MarginVector compute_margins(const ClassDistribution& dist, double C) {
  if (!(C > 0.0) || !std::isfinite(C)) {
    fail(ErrorKind::InvalidSpec, "margin constant C must be finite and > 0");
  }
  if (dist.counts.empty()) {
    fail(ErrorKind::InvalidInput, "class distribution is empty");
  }
  MarginVector out;
  out.margins.reserve(dist.counts.size());
  for (std::size_t j = 0; j < dist.counts.size(); ++j) {
    const long long n = dist.counts[j];
    if (n < 1) {
      fail(ErrorKind::InvalidInput, "class " + std::to_string(j) + " has " +
                                        std::to_string(n) +
                                        " samples; margins need >= 1");
    }
    out.margins.push_back(C / std::sqrt(std::sqrt(static_cast<double>(n))));
  }
  return out;
}

MarginVector normalize_margins(const MarginVector& margins, double max_margin) {
  if (!(max_margin > 0.0) || !std::isfinite(max_margin)) {
    fail(ErrorKind::InvalidSpec, "max_margin must be finite and > 0");
  }
  double largest = 0.0;
  for (double m : margins.margins) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
      fail(ErrorKind::InvalidInput, "margins must be finite and >= 0");
    }
    largest = std::max(largest, m);
  }
  if (largest <= 0.0) {
    fail(ErrorKind::InvalidInput, "cannot normalize all-zero margins");
  }
  MarginVector out = margins;
  const double factor = max_margin / largest;
  for (double& m : out.margins) m *= factor;
  return out;
}

MarginVector margins_for(const ClassDistribution& train_counts,
                         const LossSpec& spec) {
  MarginVector m = compute_margins(train_counts, spec.margin_c);
  if (spec.max_margin) m = normalize_margins(m, *spec.max_margin);
  return m;
}

BatchLoss batch_loss(std::span<const double> logits, std::size_t num_classes,
                     std::span<const int> labels, const MarginVector& margins,
                     const LossSpec& spec, Execution exec) {
  if (num_classes == 0 || logits.size() != labels.size() * num_classes) {
    fail(ErrorKind::Shape, "batch has " + std::to_string(labels.size()) +
                               " labels but " + std::to_string(logits.size()) +
                               " logits");
  }
  if (labels.empty()) fail(ErrorKind::InvalidInput, "empty batch");

  const std::size_t n = labels.size();
  // Validate serially: nothing may throw inside the parallel region.
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.subspan(i * num_classes, num_classes);
    check_logits(row);
    check_label(row, labels[i]);
  }
  check_for_kind(logits.subspan(0, num_classes), margins, spec);

  BatchLoss out;
  out.per_sample.resize(n);
  const auto body = [&](std::size_t i) {
    out.per_sample[i] = dispatch_unchecked(
        logits.subspan(i * num_classes, num_classes), labels[i], margins, spec);
  };

  if (exec == Execution::Serial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
  } else {
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) if (n >= kParallelMinSamples)
    for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
  }

  // Fixed-order reduction keeps both paths bit-identical.
  double total = 0.0;
  for (const auto& s : out.per_sample) total += s.value;
  out.value = spec.reduction == Reduction::Mean ? total / static_cast<double>(n)
                                                : total;
  return out;
}

BatchLoss batch_loss(const std::vector<std::vector<double>>& logits,
                     std::span<const int> labels, const MarginVector& margins,
                     const LossSpec& spec, Execution exec) {
  if (logits.size() != labels.size()) {
    fail(ErrorKind::Shape, "batch has " + std::to_string(labels.size()) +
                               " labels but " + std::to_string(logits.size()) +
                               " logit vectors");
  }
  if (logits.empty()) fail(ErrorKind::InvalidInput, "empty batch");
  const std::size_t k = logits.front().size();
  std::vector<double> flat;
  flat.reserve(k * logits.size());
  for (const auto& row : logits) {
    if (row.size() != k) fail(ErrorKind::Shape, "ragged logit batch");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return batch_loss(flat, k, labels, margins, spec, exec);
}

}  // namespace lmf
