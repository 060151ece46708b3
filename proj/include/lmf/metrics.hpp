#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace lmf {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return k_; }
  long long at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * k_ + pred];
  }
  void add(std::size_t truth, std::size_t pred, long long n = 1) {
    counts_[truth * k_ + pred] += n;
  }
  long long total() const;
  long long row_sum(std::size_t truth) const;
  long long col_sum(std::size_t pred) const;
  long long trace() const;

 private:
  std::size_t k_;
  std::vector<long long> counts_;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred,
                          std::size_t num_classes);

struct ClassReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassReport> classes;
};

// Zero-division rule: any 0/0 precision, recall or f1 is 0, and such classes
// still count toward the unweighted macro means.
MetricsReport report(const ConfusionMatrix& cm);

nlohmann::ordered_json to_json_value(const MetricsReport& r);

// JSON text with fields accuracy, macro_precision, macro_recall, macro_f1,
// classes[] (values as fractions in [0,1]).
std::string to_json(const MetricsReport& r, int indent = 2);

// One markdown row in percent, two decimals: | name | Acc | P | R | F1 |
std::string markdown_row(const std::string& name, const MetricsReport& r);
std::string markdown_header();

}  // namespace lmf
