#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lmf/error.hpp"
#include "lmf/experiment.hpp"

using namespace lmf;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.data.synth.num_classes = 4;
  cfg.data.synth.max_count = 200;
  cfg.data.synth.imbalance_ratio = 10.0;
  cfg.data.synth.feature_dim = 3;
  cfg.data.synth.class_separation = 2.5;
  cfg.data.synth.seed = 4;
  cfg.train.epochs = 5;
  cfg.train.batch_size = 32;
  cfg.train.learning_rate = 0.05;
  cfg.seeds = {1, 2, 3};
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_metrics(const MetricsReport& a, const MetricsReport& b) {
  if (a.accuracy != b.accuracy || a.macro_f1 != b.macro_f1 ||
      a.macro_precision != b.macro_precision || a.macro_recall != b.macro_recall) {
    return false;
  }
  for (std::size_t j = 0; j < a.classes.size(); ++j) {
    if (a.classes[j].f1 != b.classes[j].f1) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto j = nlohmann::json::parse(R"({
    "profile": "ham", "feature_dim": 4, "epochs": 12, "losses": ["ce", "lmf"],
    "seeds": [5, 6], "alpha": 2.0, "max_margin": null, "arch": "mlp1",
    "hidden_dim": 8, "reduction": "sum"
  })");
  const auto cfg = config_from_json(j);
  CHECK(cfg.data.kind == DataKind::Profile);
  CHECK(cfg.data.profile == PaperProfile::HAM);
  CHECK(cfg.data.synth.feature_dim == 4);
  CHECK(cfg.train.epochs == 12);
  CHECK(cfg.losses == std::vector<LossKind>{LossKind::CrossEntropy, LossKind::LMF});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{5, 6});
  CHECK(cfg.train.loss.alpha == 2.0);
  CHECK(!cfg.train.loss.max_margin.has_value());
  CHECK(cfg.arch == Arch::MLP1);
  CHECK(cfg.train.loss.reduction == Reduction::Sum);

  // Defaults follow the documented choices.
  const auto d = config_from_json(nlohmann::json::object());
  CHECK(d.train.loss.gamma == 1.5);
  CHECK(d.train.loss.alpha == 1.0);
  CHECK(d.train.loss.beta == 1.0);
  CHECK(*d.train.loss.max_margin == 0.5);
  CHECK(d.ratios.train == 0.70);
  CHECK(d.losses.size() == 4);

  ErrorKind kind{};
  try {
    config_from_json(nlohmann::json::parse(R"({"epoch": 3})"));
  } catch (const Error& e) {
    kind = e.kind();
  }
  CHECK(kind == ErrorKind::InvalidSpec);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"losses": ["hinge"]})")), Error);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"epochs": "many"})")), Error);

  auto bad = small_config();
  bad.seeds.clear();
  CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), Error);
}

TEST_CASE("compare: one row per cell, ordered, consistent aggregates") {
  const auto cfg = small_config();
  const auto rep = run_compare(cfg);
  REQUIRE(rep.cells.size() == 12);
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    CHECK(rep.cells[i].ok);
    CHECK(rep.cells[i].loss == cfg.losses[i / 3]);
    CHECK(rep.cells[i].seed == cfg.seeds[i % 3]);
  }

  const auto json = report_to_json(rep, cfg);
  CHECK(json["rows"].size() == 12);
  for (const auto& [name, agg] : json["aggregates"].items()) {
    std::vector<double> f1, acc;
    for (const auto& row : json["rows"]) {
      if (row["loss"] == name) {
        f1.push_back(row["metrics"]["macro_f1"].get<double>());
        acc.push_back(row["metrics"]["accuracy"].get<double>());
      }
    }
    double mean = 0.0;
    for (double v : f1) mean += v / f1.size();
    CHECK(std::abs(agg["median"]["macro_f1"].get<double>() - median(f1)) < 1e-12);
    CHECK(std::abs(agg["mean"]["macro_f1"].get<double>() - mean) < 1e-12);
    CHECK(std::abs(agg["median"]["accuracy"].get<double>() - median(acc)) < 1e-12);
  }

  // Margins come from the training split and obey the margin law.
  for (const auto& row : json["rows"]) {
    const std::string loss = row["loss"];
    if (loss != "ldam" && loss != "lmf") {
      CHECK(row["margins"].is_null());
      continue;
    }
    const auto counts = row["train_counts"].get<std::vector<long long>>();
    CHECK(counts == std::vector<long long>{140, 65, 30, 14});
    const double C = row["margin_c"].get<double>();
    const auto m = row["margins"].get<std::vector<double>>();
    for (std::size_t j = 0; j < m.size(); ++j) {
      CHECK(std::abs(m[j] * std::pow(static_cast<double>(counts[j]), 0.25) - C) < 1e-12);
    }
    CHECK(*std::max_element(m.begin(), m.end()) == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("compare: LMF(1,0) reproduces LDAM and LMF(0,1) reproduces Focal") {
  auto cfg = small_config();
  cfg.losses = {LossKind::LDAM, LossKind::LMF};
  cfg.train.loss.alpha = 1.0;
  cfg.train.loss.beta = 0.0;
  auto rep = run_compare(cfg);
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
    CHECK(same_metrics(rep.cells[s].metrics, rep.cells[3 + s].metrics));
    CHECK(rep.cells[s].model == rep.cells[3 + s].model);
  }

  cfg.losses = {LossKind::Focal, LossKind::LMF};
  cfg.train.loss.alpha = 0.0;
  cfg.train.loss.beta = 1.0;
  rep = run_compare(cfg);
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
    CHECK(same_metrics(rep.cells[s].metrics, rep.cells[3 + s].metrics));
  }
}

TEST_CASE("compare: failing cells are recorded and the run continues") {
  auto cfg = small_config();
  cfg.losses = {LossKind::CrossEntropy, LossKind::LDAM};
  cfg.seeds = {1};
  // A declared class with no samples: CE trains, LDAM cannot form margins.
  const auto base = synth_longtail(cfg.data.synth);
  const auto data = base.remap_to({"0", "1", "2", "3", "ghost"});
  const auto rep = run_compare(cfg, data);
  REQUIRE(rep.cells.size() == 2);
  CHECK(rep.cells[0].ok);
  CHECK(!rep.cells[1].ok);
  CHECK(rep.cells[1].error.find("0 samples") != std::string::npos);
  const auto json = report_to_json(rep, cfg);
  CHECK(json["rows"][1]["status"] == "error");
  CHECK(json["aggregates"]["ldam"]["n_ok"] == 0);
  CHECK(table1_markdown(rep).find("| LDAM Loss | - |") != std::string::npos);
}

TEST_CASE("compare: outputs are byte-identical across runs") {
  auto cfg = small_config();
  cfg.out_dir = fs::path(LMF_TEST_TMP) / "a";
  write_outputs(run_compare(cfg), cfg);
  const auto first = slurp(cfg.out_dir / "report.json");
  cfg.out_dir = fs::path(LMF_TEST_TMP) / "b";
  write_outputs(run_compare(cfg), cfg);
  CHECK(first == slurp(cfg.out_dir / "report.json"));
  CHECK(slurp(fs::path(LMF_TEST_TMP) / "a" / "table2.md") ==
        slurp(cfg.out_dir / "table2.md"));
  CHECK(fs::exists(cfg.out_dir / "models" / "lmf_seed2.json"));

  const auto t1 = slurp(cfg.out_dir / "table1.md");
  CHECK(t1.find("| Cross-entropy |") != std::string::npos);
  CHECK(t1.find("| LMF Loss |") != std::string::npos);
  const auto t2 = slurp(cfg.out_dir / "table2.md");
  CHECK(t2.find("| Class | Train Samples | Cross-entropy | Focal Loss | LDAM Loss | LMF Loss |") !=
        std::string::npos);
  CHECK(t2.find("| 3 | 14 |") != std::string::npos);

  // Persisted model reproduces the in-memory evaluation.
  const auto model = load_model(cfg.out_dir / "models" / "lmf_seed2.json");
  const auto rep = run_compare(cfg);
  CHECK(model == rep.cells[3 * 3 + 1].model);
}

TEST_CASE("profile data source keeps the built-in class counts") {
  ExperimentConfig cfg;
  cfg.data.kind = DataKind::Profile;
  cfg.data.profile = PaperProfile::ODIR;
  cfg.data.synth.feature_dim = 4;
  const auto ds = build_dataset(cfg.data);
  CHECK(class_counts(ds).counts == paper_profile(PaperProfile::ODIR).counts);
  CHECK(ds.class_names()[4] == "H");
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}
