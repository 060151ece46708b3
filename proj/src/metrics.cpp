#include "lmf/metrics.hpp"

#include <cstdio>

#include "lmf/error.hpp"

namespace lmf {

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (long long c : counts_) t += c;
  return t;
}

long long ConfusionMatrix::row_sum(std::size_t truth) const {
  long long s = 0;
  for (std::size_t p = 0; p < k_; ++p) s += at(truth, p);
  return s;
}

long long ConfusionMatrix::col_sum(std::size_t pred) const {
  long long s = 0;
  for (std::size_t t = 0; t < k_; ++t) s += at(t, pred);
  return s;
}

long long ConfusionMatrix::trace() const {
  long long s = 0;
  for (std::size_t j = 0; j < k_; ++j) s += at(j, j);
  return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred,
                          std::size_t num_classes) {
  if (truth.size() != pred.size()) {
    fail(ErrorKind::InvalidInput, "truth has " + std::to_string(truth.size()) +
                                      " labels, predictions " +
                                      std::to_string(pred.size()));
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes) {
      fail(ErrorKind::InvalidInput, "label out of range at position " +
                                        std::to_string(i));
    }
    cm.add(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

MetricsReport report(const ConfusionMatrix& cm) {
  const long long total = cm.total();
  if (total < 1) fail(ErrorKind::InvalidInput, "confusion matrix is empty");
  const std::size_t k = cm.num_classes();

  auto ratio = [](long long num, long long den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };

  MetricsReport r;
  r.classes.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto& c = r.classes[j];
    const long long tp = cm.at(j, j);
    c.support = cm.row_sum(j);
    c.precision = ratio(tp, cm.col_sum(j));
    c.recall = ratio(tp, c.support);
    const double denom = c.precision + c.recall;
    c.f1 = denom > 0.0 ? 2.0 * c.precision * c.recall / denom : 0.0;
    r.macro_precision += c.precision;
    r.macro_recall += c.recall;
    r.macro_f1 += c.f1;
  }
  const double kd = static_cast<double>(k);
  r.macro_precision /= kd;
  r.macro_recall /= kd;
  r.macro_f1 /= kd;
  r.accuracy = ratio(cm.trace(), total);
  return r;
}

nlohmann::ordered_json to_json_value(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["zero_division"] = 0;
  auto classes = nlohmann::ordered_json::array();
  for (const auto& c : r.classes) {
    nlohmann::ordered_json cj;
    cj["precision"] = c.precision;
    cj["recall"] = c.recall;
    cj["f1"] = c.f1;
    cj["support"] = c.support;
    classes.push_back(std::move(cj));
  }
  j["classes"] = std::move(classes);
  return j;
}

std::string to_json(const MetricsReport& r, int indent) {
  return to_json_value(r).dump(indent);
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string markdown_header() {
  return "| Loss | Accuracy | Macro Precision | Macro Recall | Macro F1 |\n"
         "|---|---|---|---|---|\n";
}

std::string markdown_row(const std::string& name, const MetricsReport& r) {
  return "| " + name + " | " + percent(r.accuracy) + " | " +
         percent(r.macro_precision) + " | " + percent(r.macro_recall) + " | " +
         percent(r.macro_f1) + " |\n";
}

}  // namespace lmf
