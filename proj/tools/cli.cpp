#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "lmf/data.hpp"
#include "lmf/error.hpp"
#include "lmf/experiment.hpp"
#include "lmf/gradcheck.hpp"
#include "lmf/loss.hpp"
#include "lmf/metrics.hpp"
#include "lmf/model.hpp"

namespace lmf::cli {

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

// Loss hyperparameter flags shared by train, compare and grad-check.
struct LossFlags {
  std::optional<double> gamma, margin_c, max_margin, alpha, beta, scale_s;
  bool no_max_margin = false;

  void attach(CLI::App* app) {
    app->add_option("--gamma", gamma, "focal focusing parameter (default 1.5)");
    app->add_option("--margin-c", margin_c, "margin constant C");
    app->add_option("--max-margin", max_margin, "rescale margins so the largest equals this");
    app->add_flag("--no-max-margin", no_max_margin, "use C / n^(1/4) without rescaling");
    app->add_option("--alpha", alpha, "LMF weight of the LDAM term");
    app->add_option("--beta", beta, "LMF weight of the focal term");
    app->add_option("--scale-s", scale_s, "LDAM logit scale s");
  }

  void apply(LossSpec& spec) const {
    if (gamma) spec.gamma = *gamma;
    if (margin_c) spec.margin_c = *margin_c;
    if (max_margin) spec.max_margin = *max_margin;
    if (no_max_margin) spec.max_margin.reset();
    if (alpha) spec.alpha = *alpha;
    if (beta) spec.beta = *beta;
    if (scale_s) spec.scale_s = *scale_s;
  }
};

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::InvalidSpec ? kUsage : kFailure;
}

void print_counts(std::ostream& out, const Dataset& ds) {
  const auto counts = class_counts(ds).counts;
  out << "classes: " << ds.num_classes() << ", samples: " << ds.size() << "\n";
  for (std::size_t j = 0; j < counts.size(); ++j) {
    out << "  " << ds.class_names()[j] << ": " << counts[j] << "\n";
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Imbalanced-classification losses (CE, Focal, LDAM, LMF) and experiment harness"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic long-tail dataset as CSV");
  LongTailSpec synth;
  std::string gen_out, gen_profile;
  gen->add_option("--classes", synth.num_classes, "number of classes K");
  gen->add_option("--max", synth.max_count, "largest class count");
  gen->add_option("--rho", synth.imbalance_ratio, "imbalance ratio n_max / n_min");
  gen->add_option("--dim", synth.feature_dim, "feature dimension");
  gen->add_option("--separation", synth.class_separation, "distance between class means");
  gen->add_option("--noise", synth.noise_scale, "Gaussian noise scale");
  gen->add_option("--seed", synth.seed, "random seed");
  gen->add_option("--profile", gen_profile, "class counts from a benchmark: odir, ham, isic");
  gen->add_option("--out", gen_out, "output CSV path")->required();

  // split
  auto* split_cmd = app.add_subcommand("split", "stratified train/val/test split of a CSV");
  std::string split_data, split_out = ".";
  std::uint64_t split_seed = 0;
  SplitRatios ratios;
  split_cmd->add_option("--data", split_data, "input CSV")->required();
  split_cmd->add_option("--out", split_out, "output directory");
  split_cmd->add_option("--seed", split_seed, "shuffle seed");
  split_cmd->add_option("--train-ratio", ratios.train);
  split_cmd->add_option("--val-ratio", ratios.val);
  split_cmd->add_option("--test-ratio", ratios.test);

  // train
  auto* train_cmd = app.add_subcommand("train", "train one model on a CSV");
  std::string train_data, train_val, train_out, train_loss = "lmf", train_arch = "linear";
  std::size_t train_hidden = 16;
  TrainConfig tc;
  LossFlags train_flags;
  train_cmd->add_option("--data", train_data, "training CSV")->required();
  train_cmd->add_option("--val", train_val, "validation CSV (reports macro-F1 per epoch)");
  train_cmd->add_option("--out", train_out, "model JSON output")->required();
  train_cmd->add_option("--loss", train_loss, "ce, focal, ldam or lmf");
  train_cmd->add_option("--arch", train_arch, "linear or mlp1");
  train_cmd->add_option("--hidden", train_hidden, "hidden width for mlp1");
  train_cmd->add_option("--epochs", tc.epochs);
  train_cmd->add_option("--batch-size", tc.batch_size);
  train_cmd->add_option("--lr", tc.learning_rate);
  train_cmd->add_option("--momentum", tc.momentum);
  train_cmd->add_option("--seed", tc.seed);
  train_flags.attach(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a CSV; JSON to stdout");
  std::string eval_model, eval_data;
  eval_cmd->add_option("--model", eval_model, "model JSON")->required();
  eval_cmd->add_option("--data", eval_data, "dataset CSV")->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "train one model per (loss, seed) and report");
  std::string cmp_config, cmp_out, cmp_profile;
  std::vector<std::uint64_t> cmp_seeds;
  std::vector<std::string> cmp_losses;
  LossFlags cmp_flags;
  cmp->add_option("--config", cmp_config, "flat JSON experiment config");
  cmp->add_option("--out", cmp_out, "output directory");
  cmp->add_option("--seed", cmp_seeds, "seed (repeatable)");
  cmp->add_option("--loss", cmp_losses, "loss (repeatable)");
  cmp->add_option("--profile", cmp_profile, "use benchmark class counts: odir, ham, isic");
  cmp_flags.attach(cmp);

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of loss gradients");
  std::string gc_loss = "lmf";
  std::size_t gc_classes = 5;
  std::size_t gc_trials = 100;
  double gc_tol = 1e-5;
  double gc_step = 1e-5;
  std::uint64_t gc_seed = 0;
  LossFlags gc_flags;
  gc->add_option("--loss", gc_loss, "ce, focal, ldam or lmf");
  gc->add_option("-K,--classes", gc_classes, "number of classes");
  gc->add_option("--trials", gc_trials, "random draws");
  gc->add_option("--tol", gc_tol, "max relative error");
  gc->add_option("--step", gc_step, "central-difference step");
  gc->add_option("--seed", gc_seed, "random seed");
  gc_flags.attach(gc);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) {
      Dataset ds;
      try {
        if (!gen_profile.empty()) {
          const auto p = parse_profile(gen_profile);
          ds = synth_from_counts(paper_profile(p), synth, paper_profile_class_names(p));
        } else {
          ds = synth_longtail(synth);
        }
      } catch (const Error& e) {
        err << "gen-data: " << e.what() << "\n";
        return kUsage;
      }
      save_csv(ds, gen_out);
      print_counts(out, ds);
      out << "wrote " << gen_out << "\n";
      return kOk;
    }

    if (split_cmd->parsed()) {
      const Dataset ds = load_csv(split_data);
      const Split s = stratified_split(ds, ratios, split_seed);
      for (int j : s.empty_classes) {
        err << "warning: class '" << ds.class_names()[j] << "' has no samples\n";
      }
      std::filesystem::create_directories(split_out);
      const std::filesystem::path dir(split_out);
      save_csv(s.train, dir / "train.csv");
      save_csv(s.val, dir / "val.csv");
      save_csv(s.test, dir / "test.csv");
      const auto tr = class_counts(s.train).counts;
      const auto va = class_counts(s.val).counts;
      const auto te = class_counts(s.test).counts;
      out << "class,train,val,test\n";
      for (std::size_t j = 0; j < ds.num_classes(); ++j) {
        out << ds.class_names()[j] << "," << tr[j] << "," << va[j] << "," << te[j] << "\n";
      }
      return kOk;
    }

    if (train_cmd->parsed()) {
      tc.loss.kind = parse_loss_kind(train_loss);
      train_flags.apply(tc.loss);
      validate(tc);
      const Dataset train = load_csv(train_data);
      std::optional<Dataset> val;
      if (!train_val.empty()) val = load_csv(train_val).remap_to(train.class_names());
      MarginVector margins;
      if (tc.loss.kind == LossKind::LDAM || tc.loss.kind == LossKind::LMF) {
        margins = margins_for(class_counts(train), tc.loss);
      }
      ModelParams init = init_params(parse_arch(train_arch), train.feature_dim(),
                                     train_hidden, train.num_classes(), tc.seed);
      init.class_names = train.class_names();
      const FitResult fr = fit(std::move(init), train, val ? &*val : nullptr, tc, margins);
      save_model(fr.params, train_out);
      const auto& last = fr.history.epochs.back();
      out << "epochs " << fr.history.epochs.size() << ", final train loss "
          << last.train_loss << ", train accuracy " << last.train_accuracy;
      if (last.val_macro_f1) out << ", val macro-F1 " << *last.val_macro_f1;
      out << "\nwrote " << train_out << "\n";
      return kOk;
    }

    if (eval_cmd->parsed()) {
      const ModelParams model = load_model(eval_model);
      Dataset ds = load_csv(eval_data);
      if (ds.feature_dim() != model.input_dim) {
        err << "eval: dataset has " << ds.feature_dim() << " features, model expects "
            << model.input_dim << "\n";
        return kFailure;
      }
      if (!model.class_names.empty()) ds = ds.remap_to(model.class_names);
      if (ds.num_classes() != model.num_classes) {
        err << "eval: dataset has " << ds.num_classes() << " classes, model has "
            << model.num_classes << "\n";
        return kFailure;
      }
      const auto pred = predict(model, ds);
      out << to_json(report(confusion(ds.labels(), pred, model.num_classes))) << "\n";
      return kOk;
    }

    if (cmp->parsed()) {
      ExperimentConfig cfg;
      try {
        if (!cmp_config.empty()) cfg = load_config(cmp_config);
        if (!cmp_out.empty()) cfg.out_dir = cmp_out;
        if (!cmp_seeds.empty()) cfg.seeds = cmp_seeds;
        if (!cmp_losses.empty()) {
          cfg.losses.clear();
          for (const auto& l : cmp_losses) cfg.losses.push_back(parse_loss_kind(l));
        }
        if (!cmp_profile.empty()) {
          cfg.data.kind = DataKind::Profile;
          cfg.data.profile = parse_profile(cmp_profile);
        }
        cmp_flags.apply(cfg.train.loss);
        validate(cfg);
      } catch (const Error& e) {
        err << "compare: " << e.what() << "\n";
        return kUsage;
      }
      const ComparisonReport rep = run_compare(cfg);
      write_outputs(rep, cfg);
      std::size_t ok = 0;
      for (const auto& c : rep.cells) {
        if (c.ok) {
          ++ok;
        } else {
          err << "cell " << to_string(c.loss) << "/seed " << c.seed << " failed: "
              << c.error << "\n";
        }
      }
      out << table1_markdown(rep);
      out << ok << "/" << rep.cells.size() << " cells ok; wrote "
          << (cfg.out_dir / "report.json").string() << "\n";
      return ok == 0 ? kFailure : kOk;
    }

    if (gc->parsed()) {
      if (gc_trials < 1) {
        err << "grad-check: --trials must be >= 1\n";
        return kUsage;
      }
      LossSpec spec;
      spec.kind = parse_loss_kind(gc_loss);
      gc_flags.apply(spec);
      const auto s = check_loss_gradients(spec, gc_classes, gc_trials, gc_seed, gc_step);
      out << "loss " << to_string(spec.kind) << ", K=" << gc_classes << ", trials "
          << s.trials << ", max relative error " << s.max_rel_error << "\n";
      if (s.max_rel_error < gc_tol) {
        out << "PASS (tol " << gc_tol << ")\n";
        return kOk;
      }
      out << "FAIL (tol " << gc_tol << ")\nworst case: label " << s.worst.label
          << "\n  logits:";
      char buf[32];
      for (double z : s.worst.logits) {
        std::snprintf(buf, sizeof(buf), " %.17g", z);
        out << buf;
      }
      out << "\n  margins:";
      for (double m : s.worst.margins) {
        std::snprintf(buf, sizeof(buf), " %.17g", m);
        out << buf;
      }
      out << "\n";
      return kFailure;
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace lmf::cli
