#include "lmf/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "lmf/error.hpp"
#include "lmf/metrics.hpp"

namespace lmf {

namespace {

// Minimum multiply-adds per kernel call before OpenMP is engaged.
constexpr std::size_t kParallelMinWork = 1 << 15;

bool go_parallel(Execution exec, std::size_t work) {
  return exec == Execution::Parallel && work >= kParallelMinWork;
}

void check_shapes(const ModelParams& p) {
  const std::size_t in = p.out_in_dim();
  const bool ok = p.num_classes >= 1 && p.input_dim >= 1 &&
                  p.w_out.size() == in * p.num_classes &&
                  p.b_out.size() == p.num_classes &&
                  (p.arch == Arch::Linear
                       ? p.w1.empty() && p.b1.empty()
                       : p.hidden_dim >= 1 &&
                             p.w1.size() == p.input_dim * p.hidden_dim &&
                             p.b1.size() == p.hidden_dim);
  if (!ok) fail(ErrorKind::Shape, "model parameter shapes are inconsistent");
}

void check_features(const ModelParams& p, std::size_t dim) {
  if (dim != p.input_dim) {
    fail(ErrorKind::Shape, "feature dimension " + std::to_string(dim) +
                               " does not match model input dimension " +
                               std::to_string(p.input_dim));
  }
}

// out[b][j] = bias[j] + sum_i in[b][i] * w[i][j]; rows of `out` are
// independent, so either path yields identical bits.
void affine(std::span<const double> in, std::size_t batch, std::size_t in_dim,
            std::span<const double> w, std::span<const double> bias,
            std::size_t out_dim, std::vector<double>& out, Execution exec) {
  out.assign(batch * out_dim, 0.0);
  const auto rows = static_cast<long long>(batch);
  [[maybe_unused]] const bool par = go_parallel(exec, batch * in_dim * out_dim);
#pragma omp parallel for schedule(static) if (par)
  for (long long b = 0; b < rows; ++b) {
    double* o = out.data() + b * out_dim;
    const double* x = in.data() + b * in_dim;
    for (std::size_t j = 0; j < out_dim; ++j) o[j] = bias[j];
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double xi = x[i];
      const double* wi = w.data() + i * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) o[j] += xi * wi[j];
    }
  }
}

// grad_w[i][j] += sum_b in[b][i] * g[b][j], summed in batch order.
// Parallel over i: each thread owns whole rows of grad_w.
void accumulate_outer(std::span<const double> in, std::size_t batch,
                      std::size_t in_dim, std::span<const double> g,
                      std::size_t out_dim, std::vector<double>& grad_w,
                      std::vector<double>& grad_b, Execution exec) {
  const auto rows = static_cast<long long>(in_dim);
  [[maybe_unused]] const bool par = go_parallel(exec, batch * in_dim * out_dim);
#pragma omp parallel for schedule(static) if (par)
  for (long long i = 0; i < rows; ++i) {
    double* gw = grad_w.data() + i * out_dim;
    for (std::size_t b = 0; b < batch; ++b) {
      const double xi = in[b * in_dim + i];
      const double* gb = g.data() + b * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) gw[j] += xi * gb[j];
    }
  }
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < out_dim; ++j) grad_b[j] += g[b * out_dim + j];
  }
}

void sgd_step(std::vector<double>& theta, std::vector<double>& velocity,
              const std::vector<double>& grad, const TrainConfig& cfg) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grad[i];
    theta[i] -= cfg.learning_rate * velocity[i];
  }
}

}  // namespace

std::string_view to_string(Arch a) { return a == Arch::Linear ? "linear" : "mlp1"; }

Arch parse_arch(std::string_view name) {
  if (name == "linear") return Arch::Linear;
  if (name == "mlp1" || name == "mlp") return Arch::MLP1;
  fail(ErrorKind::InvalidSpec, "unknown architecture '" + std::string(name) + "'");
}

double& ModelParams::param(std::size_t i) {
  for (auto* v : {&w1, &b1, &w_out, &b_out}) {
    if (i < v->size()) return (*v)[i];
    i -= v->size();
  }
  fail(ErrorKind::Index, "parameter index out of range");
}

double ModelParams::param(std::size_t i) const {
  return const_cast<ModelParams&>(*this).param(i);
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto* v : {&z.w1, &z.b1, &z.w_out, &z.b_out}) {
    std::fill(v->begin(), v->end(), 0.0);
  }
  return z;
}

ModelParams init_params(Arch arch, std::size_t input_dim, std::size_t hidden_dim,
                        std::size_t num_classes, std::uint64_t seed) {
  if (input_dim < 1 || num_classes < 1) {
    fail(ErrorKind::InvalidSpec, "input dim and class count must be >= 1");
  }
  if (arch == Arch::MLP1 && hidden_dim < 1) {
    fail(ErrorKind::InvalidSpec, "MLP1 needs hidden width >= 1");
  }
  ModelParams p;
  p.arch = arch;
  p.input_dim = input_dim;
  p.hidden_dim = arch == Arch::MLP1 ? hidden_dim : 0;
  p.num_classes = num_classes;

  std::mt19937_64 rng(seed);
  auto glorot = [&](std::vector<double>& w, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    w.resize(fan_in * fan_out);
    for (double& v : w) v = dist(rng);
  };
  if (arch == Arch::MLP1) {
    glorot(p.w1, input_dim, p.hidden_dim);
    p.b1.assign(p.hidden_dim, 0.0);
  }
  glorot(p.w_out, p.out_in_dim(), num_classes);
  p.b_out.assign(num_classes, 0.0);
  return p;
}

ForwardCache forward_batch(const ModelParams& params,
                           std::span<const double> features, Execution exec) {
  check_shapes(params);
  if (features.size() % params.input_dim != 0) {
    fail(ErrorKind::Shape, "feature buffer is not a whole number of rows");
  }
  ForwardCache cache;
  cache.batch = features.size() / params.input_dim;
  std::span<const double> head_in = features;
  if (params.arch == Arch::MLP1) {
    affine(features, cache.batch, params.input_dim, params.w1, params.b1,
           params.hidden_dim, cache.hidden_pre, exec);
    cache.hidden = cache.hidden_pre;
    for (double& h : cache.hidden) h = std::max(h, 0.0);
    head_in = cache.hidden;
  }
  affine(head_in, cache.batch, params.out_in_dim(), params.w_out, params.b_out,
         params.num_classes, cache.logits, exec);
  return cache;
}

std::vector<double> forward_logits(const ModelParams& params,
                                   std::span<const double> features) {
  check_shapes(params);
  check_features(params, features.size());
  return forward_batch(params, features, Execution::Serial).logits;
}

ModelParams backward_batch(const ModelParams& params,
                           std::span<const double> features,
                           const ForwardCache& cache,
                           std::span<const double> logit_grads, Execution exec) {
  const std::size_t batch = cache.batch;
  const std::size_t k = params.num_classes;
  if (logit_grads.size() != batch * k || features.size() != batch * params.input_dim) {
    fail(ErrorKind::Shape, "backward buffers do not match the forward batch");
  }
  ModelParams grad = zeros_like(params);
  if (params.arch == Arch::Linear) {
    accumulate_outer(features, batch, params.input_dim, logit_grads, k,
                     grad.w_out, grad.b_out, exec);
    return grad;
  }

  const std::size_t h = params.hidden_dim;
  accumulate_outer(cache.hidden, batch, h, logit_grads, k, grad.w_out,
                   grad.b_out, exec);

  // d loss / d hidden_pre = (W_out g) masked by relu'.
  std::vector<double> dpre(batch * h, 0.0);
  const auto rows = static_cast<long long>(batch);
  [[maybe_unused]] const bool par = go_parallel(exec, batch * h * k);
#pragma omp parallel for schedule(static) if (par)
  for (long long b = 0; b < rows; ++b) {
    const double* g = logit_grads.data() + b * k;
    for (std::size_t i = 0; i < h; ++i) {
      if (cache.hidden_pre[b * h + i] <= 0.0) continue;
      const double* wi = params.w_out.data() + i * k;
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += wi[j] * g[j];
      dpre[b * h + i] = s;
    }
  }
  accumulate_outer(features, batch, params.input_dim, dpre, h, grad.w1, grad.b1,
                   exec);
  return grad;
}

LossAndGradient loss_and_gradient(const ModelParams& params,
                                  std::span<const double> features,
                                  std::span<const int> labels,
                                  const MarginVector& margins,
                                  const LossSpec& spec, Execution exec) {
  check_shapes(params);
  if (features.size() != labels.size() * params.input_dim) {
    fail(ErrorKind::Shape, "features do not match label count");
  }
  const ForwardCache cache = forward_batch(params, features, exec);
  const BatchLoss bl =
      batch_loss(cache.logits, params.num_classes, labels, margins, spec, exec);

  const std::size_t k = params.num_classes;
  const double scale = spec.reduction == Reduction::Mean
                           ? 1.0 / static_cast<double>(labels.size())
                           : 1.0;
  std::vector<double> dlogits(labels.size() * k);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    for (std::size_t j = 0; j < k; ++j) {
      dlogits[b * k + j] = scale * bl.per_sample[b].grad[j];
    }
  }
  LossAndGradient out;
  out.value = bl.value;
  out.grad = backward_batch(params, features, cache, dlogits, exec);
  out.logits = cache.logits;
  return out;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] > values[best]) best = static_cast<int>(j);
  }
  return best;
}

std::vector<int> predict(const ModelParams& params, const Dataset& ds,
                         Execution exec) {
  check_shapes(params);
  if (ds.empty()) return {};
  check_features(params, ds.feature_dim());
  const ForwardCache cache = forward_batch(params, ds.feature_matrix(), exec);
  const std::size_t k = params.num_classes;
  std::vector<int> out(ds.size());
  const auto n = static_cast<long long>(ds.size());
  [[maybe_unused]] const bool par = go_parallel(exec, ds.size() * k * 64);
#pragma omp parallel for schedule(static) if (par)
  for (long long i = 0; i < n; ++i) {
    out[i] = argmax(std::span<const double>(cache.logits).subspan(i * k, k));
  }
  return out;
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) fail(ErrorKind::InvalidSpec, "epochs must be >= 1");
  if (cfg.batch_size < 1) fail(ErrorKind::InvalidSpec, "batch size must be >= 1");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    fail(ErrorKind::InvalidSpec, "learning rate must be finite and >= 0");
  }
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    fail(ErrorKind::InvalidSpec, "momentum must lie in [0, 1)");
  }
  validate(cfg.loss);
}

FitResult fit(ModelParams params, const Dataset& train, const Dataset* val,
              const TrainConfig& cfg, const MarginVector& margins,
              Execution exec) {
  validate(cfg);
  check_shapes(params);
  if (train.empty()) fail(ErrorKind::InvalidInput, "training set is empty");
  check_features(params, train.feature_dim());
  if (train.num_classes() != params.num_classes) {
    fail(ErrorKind::Shape, "training set has " + std::to_string(train.num_classes()) +
                               " classes, model " +
                               std::to_string(params.num_classes));
  }
  if (cfg.loss.kind == LossKind::LDAM || cfg.loss.kind == LossKind::LMF) {
    if (margins.margins.size() != params.num_classes) {
      fail(ErrorKind::Shape, "margin vector does not match class count");
    }
  }
  if (val != nullptr && !val->empty()) check_features(params, val->feature_dim());

  const std::size_t n = train.size();
  const std::size_t k = params.num_classes;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);

  ModelParams velocity = zeros_like(params);
  std::vector<double> batch_x;
  std::vector<int> batch_y;

  FitResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle_each_epoch) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = start; i < stop; ++i) {
        const auto row = train.features(order[i]);
        batch_x.insert(batch_x.end(), row.begin(), row.end());
        batch_y.push_back(train.label(order[i]));
      }
      const auto lg =
          loss_and_gradient(params, batch_x, batch_y, margins, cfg.loss, exec);
      const std::size_t bsz = stop - start;
      loss_sum += cfg.loss.reduction == Reduction::Mean
                      ? lg.value * static_cast<double>(bsz)
                      : lg.value;
      for (std::size_t b = 0; b < bsz; ++b) {
        const auto row = std::span<const double>(lg.logits).subspan(b * k, k);
        if (argmax(row) == batch_y[b]) ++correct;
      }
      sgd_step(params.w1, velocity.w1, lg.grad.w1, cfg);
      sgd_step(params.b1, velocity.b1, lg.grad.b1, cfg);
      sgd_step(params.w_out, velocity.w_out, lg.grad.w_out, cfg);
      sgd_step(params.b_out, velocity.b_out, lg.grad.b_out, cfg);
    }
    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (val != nullptr && !val->empty()) {
      const auto pred = predict(params, *val, exec);
      stats.val_macro_f1 =
          report(confusion(val->labels(), pred, params.num_classes)).macro_f1;
    }
    result.history.epochs.push_back(stats);
  }
  result.params = std::move(params);
  return result;
}

std::string model_to_json(const ModelParams& p) {
  check_shapes(p);
  nlohmann::ordered_json j;
  j["arch"] = std::string(to_string(p.arch));
  j["input_dim"] = p.input_dim;
  j["hidden_dim"] = p.hidden_dim;
  j["num_classes"] = p.num_classes;
  j["class_names"] = p.class_names;
  j["w1"] = p.w1;
  j["b1"] = p.b1;
  j["w_out"] = p.w_out;
  j["b_out"] = p.b_out;
  return j.dump(2);
}

ModelParams model_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("model JSON: ") + e.what());
  }
  ModelParams p;
  try {
    p.arch = parse_arch(j.at("arch").get<std::string>());
    p.input_dim = j.at("input_dim").get<std::size_t>();
    p.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    p.num_classes = j.at("num_classes").get<std::size_t>();
    p.class_names = j.value("class_names", std::vector<std::string>{});
    p.w1 = j.at("w1").get<std::vector<double>>();
    p.b1 = j.at("b1").get<std::vector<double>>();
    p.w_out = j.at("w_out").get<std::vector<double>>();
    p.b_out = j.at("b_out").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("model JSON: ") + e.what());
  }
  check_shapes(p);
  if (!p.class_names.empty() && p.class_names.size() != p.num_classes) {
    fail(ErrorKind::Shape, "model class_names length does not match num_classes");
  }
  return p;
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << model_to_json(params) << '\n';
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace lmf
