#include "lmf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lmf/error.hpp"

namespace lmf {

double relative_error(std::span<const double> analytic,
                      std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    fail(ErrorKind::Shape, "gradient length mismatch");
  }
  double diff = 0.0;
  double scale = 1e-12;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

std::vector<double> central_difference(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double step) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

GradCheckSummary check_loss_gradients(const LossSpec& spec,
                                      std::size_t num_classes,
                                      std::size_t trials, std::uint64_t seed,
                                      double step) {
  if (trials < 1) fail(ErrorKind::InvalidSpec, "trials must be >= 1");
  if (num_classes < 2) fail(ErrorKind::InvalidSpec, "need at least 2 classes");
  validate(spec);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> logit_dist(0.0, 2.0);
  std::uniform_int_distribution<int> label_dist(0, static_cast<int>(num_classes) - 1);
  std::uniform_int_distribution<long long> count_dist(1, 5000);

  GradCheckSummary summary;
  summary.trials = trials;
  summary.max_rel_error = -1.0;
  for (std::size_t t = 0; t < trials; ++t) {
    GradCheckCase c;
    c.logits.resize(num_classes);
    for (double& z : c.logits) z = logit_dist(rng);
    c.label = label_dist(rng);
    ClassDistribution counts;
    for (std::size_t j = 0; j < num_classes; ++j) counts.counts.push_back(count_dist(rng));
    const MarginVector margins = margins_for(counts, spec);
    c.margins = margins.margins;

    const auto analytic = evaluate_loss(c.logits, c.label, margins, spec);
    const auto numeric = central_difference(
        [&](std::span<const double> z) {
          return evaluate_loss(z, c.label, margins, spec).value;
        },
        c.logits, step);
    c.rel_error = relative_error(analytic.grad, numeric);
    if (c.rel_error > summary.max_rel_error) {
      summary.max_rel_error = c.rel_error;
      summary.worst = c;
    }
  }
  return summary;
}

}  // namespace lmf
