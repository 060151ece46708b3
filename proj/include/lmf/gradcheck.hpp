#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lmf/loss.hpp"

namespace lmf {

// max_k |a_k - b_k| / max(|a|_inf, |b|_inf, 1e-12): error measured against
// the scale of the gradient, so near-zero components do not dominate.
double relative_error(std::span<const double> analytic,
                      std::span<const double> numeric);

std::vector<double> central_difference(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double step = 1e-5);

struct GradCheckCase {
  std::vector<double> logits;
  int label = 0;
  std::vector<double> margins;
  double rel_error = 0.0;
};

struct GradCheckSummary {
  std::size_t trials = 0;
  double max_rel_error = 0.0;
  GradCheckCase worst;
};

// Random logits (N(0, 2^2)), labels and, for margin losses, margins from
// random class counts in [1, 5000] normalized per spec. Deterministic per
// seed.
GradCheckSummary check_loss_gradients(const LossSpec& spec,
                                      std::size_t num_classes,
                                      std::size_t trials, std::uint64_t seed,
                                      double step = 1e-5);

}  // namespace lmf
