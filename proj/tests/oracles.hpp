#pragma once

// Test-only reference computations, deliberately written without touching
// the library code paths they are used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

// Central differences of a scalar function of a vector.
inline std::vector<double> fd_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Error relative to the larger of the two gradients' infinity norms.
inline double scaled_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::fabs(a[i] - b[i]));
    scale = std::max(scale, std::max(std::fabs(a[i]), std::fabs(b[i])));
  }
  return diff / scale;
}

// Textbook formulas, fine for moderate logits.
inline double naive_softmax_prob(const std::vector<double>& z, int y) {
  double den = 0.0;
  for (double v : z) den += std::exp(v);
  return std::exp(z[y]) / den;
}

inline double naive_ce(const std::vector<double>& z, int y) {
  return -std::log(naive_softmax_prob(z, y));
}

inline double naive_focal(const std::vector<double>& z, int y, double gamma) {
  const double p = naive_softmax_prob(z, y);
  return -std::pow(1.0 - p, gamma) * std::log(p);
}

inline double naive_ldam(const std::vector<double>& z, int y,
                         const std::vector<double>& margins, double s) {
  const double u = std::exp(s * (z[y] - margins[y]));
  double rest = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (static_cast<int>(j) != y) rest += std::exp(s * z[j]);
  }
  return -std::log(u / (u + rest));
}

struct ClassCounts {
  long long tp = 0, fp = 0, fn = 0, support = 0;
};

// Per-class TP/FP/FN straight from the label pairs.
inline std::vector<ClassCounts> count_outcomes(const std::vector<int>& truth,
                                               const std::vector<int>& pred,
                                               int k) {
  std::vector<ClassCounts> c(k);
  for (int cls = 0; cls < k; ++cls) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == cls, p = pred[i] == cls;
      if (t) ++c[cls].support;
      if (t && p) ++c[cls].tp;
      if (!t && p) ++c[cls].fp;
      if (t && !p) ++c[cls].fn;
    }
  }
  return c;
}

struct BruteMetrics {
  double accuracy = 0, macro_p = 0, macro_r = 0, macro_f1 = 0;
  std::vector<double> p, r, f1;
};

inline BruteMetrics brute_metrics(const std::vector<int>& truth,
                                  const std::vector<int>& pred, int k) {
  BruteMetrics m;
  const auto c = count_outcomes(truth, pred, k);
  long long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  for (int cls = 0; cls < k; ++cls) {
    const double p = c[cls].tp + c[cls].fp == 0
                         ? 0.0
                         : double(c[cls].tp) / double(c[cls].tp + c[cls].fp);
    const double r = c[cls].tp + c[cls].fn == 0
                         ? 0.0
                         : double(c[cls].tp) / double(c[cls].tp + c[cls].fn);
    // F1 from counts: 2TP / (2TP + FP + FN).
    const long long den = 2 * c[cls].tp + c[cls].fp + c[cls].fn;
    const double f1 = den == 0 ? 0.0 : 2.0 * double(c[cls].tp) / double(den);
    m.p.push_back(p);
    m.r.push_back(r);
    m.f1.push_back(f1);
    m.macro_p += p / k;
    m.macro_r += r / k;
    m.macro_f1 += f1 / k;
  }
  return m;
}

// Largest-remainder apportionment in exact integer arithmetic for ratios
// given in whole percent; ties go to the earlier partition.
inline std::array<long long, 3> apportion_percent(long long n,
                                                  std::array<long long, 3> pct) {
  std::array<long long, 3> out{}, rem{};
  long long used = 0;
  for (int i = 0; i < 3; ++i) {
    out[i] = n * pct[i] / 100;
    rem[i] = n * pct[i] % 100;
    used += out[i];
  }
  for (long long left = n - used; left > 0; --left) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best]) best = i;
    }
    ++out[best];
    rem[best] = -1;
  }
  return out;
}

}  // namespace oracle
