#include "lmf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lmf/error.hpp"

namespace lmf {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "data",          "csv",          "profile",        "classes",
      "max_count",     "rho",          "feature_dim",    "class_separation",
      "noise_scale",   "data_seed",    "train_ratio",    "val_ratio",
      "test_ratio",    "arch",         "hidden_dim",     "epochs",
      "batch_size",    "learning_rate", "momentum",      "shuffle",
      "losses",        "seeds",        "gamma",          "margin_c",
      "max_margin",    "scale_s",      "alpha",          "beta",
      "prob_clamp_eps", "reduction",   "out",            "save_models",
      "track_validation"};
  return keys;
}

DataKind parse_data_kind(const std::string& s) {
  if (s == "synthetic") return DataKind::Synthetic;
  if (s == "profile") return DataKind::Profile;
  if (s == "csv") return DataKind::Csv;
  fail(ErrorKind::InvalidSpec, "unknown data source '" + s + "'");
}

std::string_view to_string(DataKind k) {
  switch (k) {
    case DataKind::Synthetic: return "synthetic";
    case DataKind::Profile: return "profile";
    case DataKind::Csv: return "csv";
  }
  return "?";
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

MetricsReport reduce_reports(const std::vector<const MetricsReport*>& rows,
                             bool use_median) {
  auto pick = [&](auto&& field) {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto* r : rows) v.push_back(field(*r));
    if (use_median) return median(std::move(v));
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  MetricsReport out;
  out.accuracy = pick([](const MetricsReport& r) { return r.accuracy; });
  out.macro_precision = pick([](const MetricsReport& r) { return r.macro_precision; });
  out.macro_recall = pick([](const MetricsReport& r) { return r.macro_recall; });
  out.macro_f1 = pick([](const MetricsReport& r) { return r.macro_f1; });
  const std::size_t k = rows.front()->classes.size();
  out.classes.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    out.classes[j].precision = pick([j](const MetricsReport& r) { return r.classes[j].precision; });
    out.classes[j].recall = pick([j](const MetricsReport& r) { return r.classes[j].recall; });
    out.classes[j].f1 = pick([j](const MetricsReport& r) { return r.classes[j].f1; });
    out.classes[j].support = rows.front()->classes[j].support;
  }
  return out;
}

CellResult run_cell(const ExperimentConfig& cfg, const Dataset& data,
                    LossKind loss, std::uint64_t seed) {
  CellResult cell;
  cell.loss = loss;
  cell.seed = seed;

  const Split split = stratified_split(data, cfg.ratios, derive_seed(seed, 0));
  if (split.train.empty()) fail(ErrorKind::InvalidInput, "training split is empty");
  const Dataset& eval_set = split.test.empty() ? split.val : split.test;
  if (eval_set.empty()) fail(ErrorKind::InvalidInput, "no evaluation split");
  cell.train_counts = class_counts(split.train).counts;

  TrainConfig tc = cfg.train;
  tc.loss.kind = loss;
  tc.seed = derive_seed(seed, 2);

  // Margins always come from the training split only.
  MarginVector margins;
  if (loss == LossKind::LDAM || loss == LossKind::LMF) {
    margins = margins_for(ClassDistribution{cell.train_counts}, tc.loss);
    const double raw_largest =
        tc.loss.margin_c /
        std::sqrt(std::sqrt(static_cast<double>(
            *std::min_element(cell.train_counts.begin(), cell.train_counts.end()))));
    cell.margin_c = tc.loss.max_margin
                        ? tc.loss.margin_c * (*tc.loss.max_margin / raw_largest)
                        : tc.loss.margin_c;
    cell.margins = margins;
  }

  ModelParams init = init_params(cfg.arch, data.feature_dim(), cfg.hidden_dim,
                                 data.num_classes(), derive_seed(seed, 1));
  init.class_names = data.class_names();
  const Dataset* val = cfg.track_validation && !split.val.empty() ? &split.val : nullptr;
  FitResult fr = fit(std::move(init), split.train, val, tc, margins);

  const auto pred = predict(fr.params, eval_set);
  cell.metrics = report(confusion(eval_set.labels(), pred, data.num_classes()));
  cell.epochs = fr.history.epochs.size();
  cell.first_train_loss = fr.history.epochs.front().train_loss;
  cell.final_train_loss = fr.history.epochs.back().train_loss;
  cell.final_train_accuracy = fr.history.epochs.back().train_accuracy;
  cell.final_val_macro_f1 = fr.history.epochs.back().val_macro_f1;
  cell.model = std::move(fr.params);
  cell.ok = true;
  return cell;
}

nlohmann::ordered_json vec_json(const std::vector<double>& v) {
  auto a = nlohmann::ordered_json::array();
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream).
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string_view display_name(LossKind kind) {
  switch (kind) {
    case LossKind::CrossEntropy: return "Cross-entropy";
    case LossKind::Focal: return "Focal Loss";
    case LossKind::LDAM: return "LDAM Loss";
    case LossKind::LMF: return "LMF Loss";
  }
  return "?";
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::InvalidSpec, "config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known_keys().contains(key)) {
      fail(ErrorKind::InvalidSpec, "unknown config key '" + key + "'");
    }
  }
  ExperimentConfig cfg;
  try {
    auto& s = cfg.data.synth;
    if (j.contains("data")) cfg.data.kind = parse_data_kind(j["data"].get<std::string>());
    if (j.contains("csv")) {
      cfg.data.csv = j["csv"].get<std::string>();
      if (!j.contains("data")) cfg.data.kind = DataKind::Csv;
    }
    if (j.contains("profile")) {
      cfg.data.profile = parse_profile(j["profile"].get<std::string>());
      if (!j.contains("data")) cfg.data.kind = DataKind::Profile;
    }
    s.num_classes = j.value("classes", s.num_classes);
    s.max_count = j.value("max_count", s.max_count);
    s.imbalance_ratio = j.value("rho", s.imbalance_ratio);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.class_separation = j.value("class_separation", s.class_separation);
    s.noise_scale = j.value("noise_scale", s.noise_scale);
    s.seed = j.value("data_seed", s.seed);

    cfg.ratios.train = j.value("train_ratio", cfg.ratios.train);
    cfg.ratios.val = j.value("val_ratio", cfg.ratios.val);
    cfg.ratios.test = j.value("test_ratio", cfg.ratios.test);

    if (j.contains("arch")) cfg.arch = parse_arch(j["arch"].get<std::string>());
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    auto& t = cfg.train;
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.momentum = j.value("momentum", t.momentum);
    t.shuffle_each_epoch = j.value("shuffle", t.shuffle_each_epoch);

    auto& l = t.loss;
    l.gamma = j.value("gamma", l.gamma);
    l.margin_c = j.value("margin_c", l.margin_c);
    if (j.contains("max_margin")) {
      if (j["max_margin"].is_null()) {
        l.max_margin.reset();
      } else {
        l.max_margin = j["max_margin"].get<double>();
      }
    }
    l.scale_s = j.value("scale_s", l.scale_s);
    l.alpha = j.value("alpha", l.alpha);
    l.beta = j.value("beta", l.beta);
    l.prob_clamp_eps = j.value("prob_clamp_eps", l.prob_clamp_eps);
    if (j.contains("reduction")) l.reduction = parse_reduction(j["reduction"].get<std::string>());

    if (j.contains("losses")) {
      cfg.losses.clear();
      for (const auto& name : j["losses"]) {
        cfg.losses.push_back(parse_loss_kind(name.get<std::string>()));
      }
    }
    if (j.contains("seeds")) {
      cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    }
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
    cfg.save_models = j.value("save_models", cfg.save_models);
    cfg.track_validation = j.value("track_validation", cfg.track_validation);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidSpec, std::string("config: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::InvalidSpec, std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::InvalidSpec, "cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidSpec, std::string("config JSON: ") + e.what());
  }
  return config_from_json(j);
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  const auto& s = cfg.data.synth;
  j["data"] = std::string(to_string(cfg.data.kind));
  if (cfg.data.kind == DataKind::Csv) j["csv"] = cfg.data.csv.generic_string();
  if (cfg.data.kind == DataKind::Profile) j["profile"] = std::string(to_string(cfg.data.profile));
  if (cfg.data.kind == DataKind::Synthetic) {
    j["classes"] = s.num_classes;
    j["max_count"] = s.max_count;
    j["rho"] = s.imbalance_ratio;
  }
  if (cfg.data.kind != DataKind::Csv) {
    j["feature_dim"] = s.feature_dim;
    j["class_separation"] = s.class_separation;
    j["noise_scale"] = s.noise_scale;
    j["data_seed"] = s.seed;
  }
  j["train_ratio"] = cfg.ratios.train;
  j["val_ratio"] = cfg.ratios.val;
  j["test_ratio"] = cfg.ratios.test;
  j["arch"] = std::string(to_string(cfg.arch));
  if (cfg.arch == Arch::MLP1) j["hidden_dim"] = cfg.hidden_dim;
  const auto& t = cfg.train;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.learning_rate;
  j["momentum"] = t.momentum;
  j["shuffle"] = t.shuffle_each_epoch;
  const auto& l = t.loss;
  j["gamma"] = l.gamma;
  j["margin_c"] = l.margin_c;
  j["max_margin"] = l.max_margin ? nlohmann::ordered_json(*l.max_margin) : nullptr;
  j["scale_s"] = l.scale_s;
  j["alpha"] = l.alpha;
  j["beta"] = l.beta;
  j["prob_clamp_eps"] = l.prob_clamp_eps;
  j["reduction"] = std::string(to_string(l.reduction));
  auto losses = nlohmann::ordered_json::array();
  for (auto k : cfg.losses) losses.push_back(std::string(to_string(k)));
  j["losses"] = losses;
  j["seeds"] = cfg.seeds;
  j["track_validation"] = cfg.track_validation;
  return j;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.losses.empty()) fail(ErrorKind::InvalidSpec, "need at least one loss");
  if (cfg.seeds.empty()) fail(ErrorKind::InvalidSpec, "need at least one seed");
  validate(cfg.ratios);
  TrainConfig t = cfg.train;
  for (auto k : cfg.losses) {
    t.loss.kind = k;
    validate(t);
  }
  if (cfg.arch == Arch::MLP1 && cfg.hidden_dim < 1) {
    fail(ErrorKind::InvalidSpec, "hidden_dim must be >= 1");
  }
}

Dataset build_dataset(const DataSource& src) {
  switch (src.kind) {
    case DataKind::Synthetic: return synth_longtail(src.synth);
    case DataKind::Profile:
      return synth_from_counts(paper_profile(src.profile), src.synth,
                               paper_profile_class_names(src.profile));
    case DataKind::Csv: return load_csv(src.csv);
  }
  fail(ErrorKind::InvalidSpec, "unknown data source");
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::InvalidInput, "median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<LossAggregate> aggregate(const std::vector<CellResult>& cells,
                                     const std::vector<LossKind>& losses) {
  std::vector<LossAggregate> out;
  for (auto kind : losses) {
    LossAggregate agg;
    agg.loss = kind;
    std::vector<const MetricsReport*> rows;
    for (const auto& c : cells) {
      if (c.ok && c.loss == kind) rows.push_back(&c.metrics);
    }
    agg.n_ok = rows.size();
    if (!rows.empty()) {
      agg.median = reduce_reports(rows, true);
      agg.mean = reduce_reports(rows, false);
    }
    out.push_back(std::move(agg));
  }
  return out;
}

ComparisonReport run_compare(const ExperimentConfig& cfg) {
  validate(cfg);
  return run_compare(cfg, build_dataset(cfg.data));
}

ComparisonReport run_compare(const ExperimentConfig& cfg, const Dataset& data) {
  validate(cfg);
  ComparisonReport rep;
  rep.class_names = data.class_names();
  const std::size_t n_seeds = cfg.seeds.size();
  const std::size_t n_cells = cfg.losses.size() * n_seeds;
  rep.cells.resize(n_cells);

  const auto count = static_cast<long long>(n_cells);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long c = 0; c < count; ++c) {
    const LossKind loss = cfg.losses[static_cast<std::size_t>(c) / n_seeds];
    const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(c) % n_seeds];
    CellResult& slot = rep.cells[static_cast<std::size_t>(c)];
    try {
      slot = run_cell(cfg, data, loss, seed);
    } catch (const std::exception& e) {
      slot = CellResult{};
      slot.loss = loss;
      slot.seed = seed;
      slot.ok = false;
      slot.error = e.what();
    }
  }
  rep.aggregates = aggregate(rep.cells, cfg.losses);
  return rep;
}

std::string model_file_name(const CellResult& cell) {
  return "models/" + std::string(to_string(cell.loss)) + "_seed" +
         std::to_string(cell.seed) + ".json";
}

nlohmann::ordered_json report_to_json(const ComparisonReport& report,
                                      const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["config"] = config_to_json(cfg);
  j["class_names"] = report.class_names;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& c : report.cells) {
    nlohmann::ordered_json r;
    r["loss"] = std::string(to_string(c.loss));
    r["seed"] = c.seed;
    r["status"] = c.ok ? "ok" : "error";
    if (!c.ok) {
      r["error"] = c.error;
      rows.push_back(std::move(r));
      continue;
    }
    r["metrics"] = to_json_value(c.metrics);
    r["train_counts"] = c.train_counts;
    r["margins"] = c.margins ? vec_json(c.margins->margins) : nlohmann::ordered_json(nullptr);
    r["margin_c"] = c.margin_c ? nlohmann::ordered_json(*c.margin_c) : nlohmann::ordered_json(nullptr);
    nlohmann::ordered_json h;
    h["epochs"] = c.epochs;
    h["first_train_loss"] = c.first_train_loss;
    h["final_train_loss"] = c.final_train_loss;
    h["final_train_accuracy"] = c.final_train_accuracy;
    h["final_val_macro_f1"] = c.final_val_macro_f1
                                  ? nlohmann::ordered_json(*c.final_val_macro_f1)
                                  : nlohmann::ordered_json(nullptr);
    r["history"] = std::move(h);
    if (cfg.save_models) r["model_file"] = model_file_name(c);
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  auto aggs = nlohmann::ordered_json::object();
  for (const auto& a : report.aggregates) {
    nlohmann::ordered_json aj;
    aj["n_ok"] = a.n_ok;
    if (a.n_ok > 0) {
      aj["median"] = to_json_value(a.median);
      aj["mean"] = to_json_value(a.mean);
    }
    aggs[std::string(to_string(a.loss))] = std::move(aj);
  }
  j["aggregates"] = std::move(aggs);
  return j;
}

std::string table1_markdown(const ComparisonReport& report) {
  std::string out =
      "Median over seeds of test-set metrics (percent; precision, recall and "
      "F1 are macro averages; 0/0 counts as 0).\n\n";
  out += markdown_header();
  for (const auto& a : report.aggregates) {
    if (a.n_ok == 0) {
      out += "| " + std::string(display_name(a.loss)) + " | - | - | - | - |\n";
      continue;
    }
    out += markdown_row(std::string(display_name(a.loss)), a.median);
  }
  return out;
}

std::string table2_markdown(const ComparisonReport& report) {
  std::vector<long long> train_counts;
  for (const auto& c : report.cells) {
    if (c.ok) {
      train_counts = c.train_counts;
      break;
    }
  }
  std::string out = "Median over seeds of per-class test F1 (percent).\n\n| Class | Train Samples |";
  std::string rule = "|---|---|";
  for (const auto& a : report.aggregates) {
    out += " " + std::string(display_name(a.loss)) + " |";
    rule += "---|";
  }
  out += "\n" + rule + "\n";
  for (std::size_t j = 0; j < report.class_names.size(); ++j) {
    out += "| " + report.class_names[j] + " | " +
           (j < train_counts.size() ? std::to_string(train_counts[j]) : "-") + " |";
    for (const auto& a : report.aggregates) {
      out += " " + (a.n_ok > 0 ? percent(a.median.classes[j].f1) : std::string("-")) + " |";
    }
    out += "\n";
  }
  return out;
}

void write_outputs(const ComparisonReport& report, const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create '" + cfg.out_dir.string() + "'");
  auto write = [&](const fs::path& name, const std::string& text) {
    std::ofstream out(cfg.out_dir / name, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write '" + (cfg.out_dir / name).string() + "'");
    out << text;
  };
  write("report.json", report_to_json(report, cfg).dump(2) + "\n");
  write("table1.md", table1_markdown(report));
  write("table2.md", table2_markdown(report));
  if (cfg.save_models) {
    fs::create_directories(cfg.out_dir / "models", ec);
    for (const auto& c : report.cells) {
      if (c.ok) save_model(c.model, cfg.out_dir / model_file_name(c));
    }
  }
}

}  // namespace lmf
