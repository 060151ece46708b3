#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lmf/data.hpp"
#include "lmf/loss.hpp"
#include "lmf/metrics.hpp"
#include "lmf/model.hpp"

namespace lmf {

enum class DataKind { Synthetic, Profile, Csv };

struct DataSource {
  DataKind kind = DataKind::Synthetic;
  LongTailSpec synth;  // geometry and seed also apply to Profile
  PaperProfile profile = PaperProfile::ODIR;
  std::filesystem::path csv;
};

struct ExperimentConfig {
  DataSource data;
  SplitRatios ratios;
  Arch arch = Arch::Linear;
  std::size_t hidden_dim = 16;
  TrainConfig train;  // train.seed and train.loss.kind are set per cell
  std::vector<LossKind> losses{LossKind::CrossEntropy, LossKind::Focal,
                               LossKind::LDAM, LossKind::LMF};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  bool track_validation = false;
  bool save_models = true;
  std::filesystem::path out_dir = "lmf_out";
};

// Flat key-value JSON; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

Dataset build_dataset(const DataSource& src);

// Display name used in rendered tables.
std::string_view display_name(LossKind kind);

struct CellResult {
  LossKind loss = LossKind::CrossEntropy;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
  std::vector<long long> train_counts;
  std::optional<MarginVector> margins;
  std::optional<double> margin_c;  // C with margins * n^(1/4) == C
  std::size_t epochs = 0;
  double first_train_loss = 0.0;
  double final_train_loss = 0.0;
  double final_train_accuracy = 0.0;
  std::optional<double> final_val_macro_f1;
  ModelParams model;
};

struct LossAggregate {
  LossKind loss = LossKind::CrossEntropy;
  std::size_t n_ok = 0;
  MetricsReport median;  // element-wise medians across ok seeds
  MetricsReport mean;
};

struct ComparisonReport {
  std::vector<std::string> class_names;
  std::vector<CellResult> cells;  // loss-list order, then seed-list order
  std::vector<LossAggregate> aggregates;
};

// Per-seed streams derived from one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

double median(std::vector<double> values);
std::vector<LossAggregate> aggregate(const std::vector<CellResult>& cells,
                                     const std::vector<LossKind>& losses);

// Runs every (loss, seed) cell; cells run concurrently under OpenMP and are
// stored in deterministic order. A failing cell is recorded, not thrown.
ComparisonReport run_compare(const ExperimentConfig& cfg);
ComparisonReport run_compare(const ExperimentConfig& cfg, const Dataset& data);

std::string model_file_name(const CellResult& cell);
nlohmann::ordered_json report_to_json(const ComparisonReport& report,
                                      const ExperimentConfig& cfg);
std::string table1_markdown(const ComparisonReport& report);
std::string table2_markdown(const ComparisonReport& report);

// Writes report.json, table1.md, table2.md and (optionally) models/*.json.
void write_outputs(const ComparisonReport& report, const ExperimentConfig& cfg);

}  // namespace lmf
