#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmf/data.hpp"
#include "lmf/execution.hpp"
#include "lmf/loss.hpp"

namespace lmf {

enum class Arch { Linear, MLP1 };

std::string_view to_string(Arch a);
Arch parse_arch(std::string_view name);

// Weights are row-major: w1 is input_dim x hidden_dim, w_out is
// (input_dim or hidden_dim) x num_classes. The same layout doubles as the
// gradient container.
struct ModelParams {
  Arch arch = Arch::Linear;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w_out;
  std::vector<double> b_out;
  std::vector<std::string> class_names;

  std::size_t out_in_dim() const {
    return arch == Arch::Linear ? input_dim : hidden_dim;
  }
  std::size_t parameter_count() const {
    return w1.size() + b1.size() + w_out.size() + b_out.size();
  }
  // Flat views over all parameters, in order w1, b1, w_out, b_out.
  double& param(std::size_t i);
  double param(std::size_t i) const;

  bool operator==(const ModelParams&) const = default;
};

ModelParams zeros_like(const ModelParams& p);

// Glorot-uniform weights, zero biases.
ModelParams init_params(Arch arch, std::size_t input_dim, std::size_t hidden_dim,
                        std::size_t num_classes, std::uint64_t seed);

std::vector<double> forward_logits(const ModelParams& params,
                                   std::span<const double> features);

struct ForwardCache {
  std::size_t batch = 0;
  std::vector<double> hidden_pre;  // batch x hidden_dim (MLP1 only)
  std::vector<double> hidden;      // relu(hidden_pre)
  std::vector<double> logits;      // batch x num_classes
};

// features: row-major, batch x input_dim.
ForwardCache forward_batch(const ModelParams& params,
                           std::span<const double> features,
                           Execution exec = Execution::Parallel);

// Sum over the batch of d(loss_b)/d(params), given d(loss_b)/d(logits_b).
ModelParams backward_batch(const ModelParams& params,
                           std::span<const double> features,
                           const ForwardCache& cache,
                           std::span<const double> logit_grads,
                           Execution exec = Execution::Parallel);

struct LossAndGradient {
  double value = 0.0;
  ModelParams grad;
  std::vector<double> logits;
};

// Batch loss reduced per spec.reduction and its gradient w.r.t. parameters.
LossAndGradient loss_and_gradient(const ModelParams& params,
                                  std::span<const double> features,
                                  std::span<const int> labels,
                                  const MarginVector& margins,
                                  const LossSpec& spec,
                                  Execution exec = Execution::Parallel);

// Lowest index wins ties.
int argmax(std::span<const double> values);

std::vector<int> predict(const ModelParams& params, const Dataset& ds,
                         Execution exec = Execution::Parallel);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  LossSpec loss;
  bool shuffle_each_epoch = true;
};

void validate(const TrainConfig& cfg);

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_macro_f1;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

struct FitResult {
  ModelParams params;
  TrainHistory history;
};

// Mini-batch SGD with momentum: v = mu*v + g, theta -= lr*v.
FitResult fit(ModelParams params, const Dataset& train,
              const Dataset* val, const TrainConfig& cfg,
              const MarginVector& margins,
              Execution exec = Execution::Parallel);

std::string model_to_json(const ModelParams& params);
ModelParams model_from_json(std::string_view text);
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace lmf
