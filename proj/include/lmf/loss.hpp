#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmf/execution.hpp"

namespace lmf {

enum class LossKind { CrossEntropy, Focal, LDAM, LMF };
enum class Reduction { Mean, Sum };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);
std::string_view to_string(Reduction r);
Reduction parse_reduction(std::string_view name);

struct ClassDistribution {
  std::vector<long long> counts;

  std::size_t num_classes() const { return counts.size(); }
  long long total() const;
};

struct MarginVector {
  std::vector<double> margins;
};

struct LossSpec {
  LossKind kind = LossKind::CrossEntropy;
  double gamma = 1.5;
  double margin_c = 1.0;
  std::optional<double> max_margin = 0.5;
  double scale_s = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double prob_clamp_eps = 1e-12;
  Reduction reduction = Reduction::Mean;
};

// Throws InvalidSpec when a hyperparameter is out of its domain.
void validate(const LossSpec& spec);

struct LossValueAndGrad {
  double value = 0.0;
  std::vector<double> grad;  // d loss / d logits
};

std::vector<double> softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> logits);

LossValueAndGrad cross_entropy(std::span<const double> logits, int label);
LossValueAndGrad focal_loss(std::span<const double> logits, int label,
                            const LossSpec& spec);
LossValueAndGrad ldam_loss(std::span<const double> logits, int label,
                           const MarginVector& margins, const LossSpec& spec);
LossValueAndGrad lmf_loss(std::span<const double> logits, int label,
                          const MarginVector& margins, const LossSpec& spec);

// Dispatches on spec.kind. Margins are ignored by CrossEntropy and Focal.
LossValueAndGrad evaluate_loss(std::span<const double> logits, int label,
                               const MarginVector& margins,
                               const LossSpec& spec);

/// Delta_j = C / n_j^(1/4).
MarginVector compute_margins(const ClassDistribution& dist, double C);

/// Rescales so the largest margin equals max_margin.
MarginVector normalize_margins(const MarginVector& margins, double max_margin);

/// Margins as used by training: compute_margins, followed by
/// normalize_margins when spec.max_margin is set.
MarginVector margins_for(const ClassDistribution& train_counts,
                         const LossSpec& spec);

struct BatchLoss {
  std::vector<LossValueAndGrad> per_sample;
  double value = 0.0;  // reduced per spec.reduction
};

// logits is row-major, one row of num_classes entries per sample.
BatchLoss batch_loss(std::span<const double> logits, std::size_t num_classes,
                     std::span<const int> labels, const MarginVector& margins,
                     const LossSpec& spec,
                     Execution exec = Execution::Parallel);

// Convenience overload for a sequence of separate logit vectors.
BatchLoss batch_loss(const std::vector<std::vector<double>>& logits,
                     std::span<const int> labels, const MarginVector& margins,
                     const LossSpec& spec,
                     Execution exec = Execution::Parallel);

}  // namespace lmf
