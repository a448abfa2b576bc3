/*
 * Copyright 2026 The GAMMLI Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GAMMLI_SUBNET_HPP_
#define GAMMLI_SUBNET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gammli/data.hpp"
#include "gammli/error.hpp"
#include "gammli/random.hpp"

namespace gammli {

// ---------------------------------------------------------------------------
// Losses on the link scale.
//
// Classification uses the half-log-odds score F: P(y = 1) = 1 / (1 + e^{-2F})
// and loss log(1 + e^{-2 y' F}) with y' = 2y - 1. Its negative derivative is
// the gradient-boosting pseudo-residual 2y' / (1 + e^{2 y' F}).

enum class Loss { kSquared, kLogistic };

inline Loss loss_for(Task task) { return task == Task::kRegression ? Loss::kSquared : Loss::kLogistic; }

inline double loss_value(Loss loss, double score, double y) {
  if (loss == Loss::kSquared) {
    const double d = score - y;
    return d * d;
  }
  const double z = -2.0 * (2.0 * y - 1.0) * score;
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// d loss / d score.
inline double loss_derivative(Loss loss, double score, double y) {
  if (loss == Loss::kSquared) return 2.0 * (score - y);
  const double s = 2.0 * y - 1.0;
  return -2.0 * s / (1.0 + std::exp(2.0 * s * score));
}

// ---------------------------------------------------------------------------

// Feed-forward approximator with 1 or 2 inputs, tanh hidden layers [20, 10]
// and a linear scalar output. Parameters live in one flat vector:
//   W1 (20 x arity, column-major) | b1 (20) | W2 (10 x 20) | b2 (10) | w3 (10) | b3
// output_offset is added after the output unit; centering writes to it.
class Subnet {
 public:
  static constexpr int kHidden1 = 20;
  static constexpr int kHidden2 = 10;

  // Scratch activations for batched evaluation.
  struct Workspace {
    Eigen::MatrixXd a1;
    Eigen::MatrixXd a2;
    Eigen::MatrixXd d1;
    Eigen::MatrixXd d2;
  };

  Subnet() : Subnet(1) {}

  explicit Subnet(int arity) : arity_(arity) {
    if (arity != 1 && arity != 2) throw ValidationError("subnet arity must be 1 or 2");
    params_ = Eigen::VectorXd::Zero(param_count(arity));
  }

  // Glorot-uniform weights, zero biases.
  static Subnet glorot(int arity, Rng& rng) {
    Subnet net(arity);
    auto fill = [&rng](double* p, int count, int fan_in, int fan_out) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (int k = 0; k < count; ++k) p[k] = dist(rng);
    };
    double* p = net.params_.data();
    fill(p + net.w1_offset(), kHidden1 * arity, arity, kHidden1);
    fill(p + net.w2_offset(), kHidden2 * kHidden1, kHidden1, kHidden2);
    fill(p + net.w3_offset(), kHidden2, kHidden2, 1);
    return net;
  }

  static int param_count(int arity) {
    return kHidden1 * arity + kHidden1 + kHidden2 * kHidden1 + kHidden2 + kHidden2 + 1;
  }

  int arity() const { return arity_; }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  double output_offset() const { return output_offset_; }
  void set_output_offset(double v) { output_offset_ = v; }

  bool finite() const { return params_.allFinite() && std::isfinite(output_offset_); }

  double forward(std::span<const double> input) const {
    if (static_cast<int>(input.size()) != arity_) {
      throw ValidationError("subnet expects " + std::to_string(arity_) + " inputs, got " +
                            std::to_string(input.size()));
    }
    Eigen::MatrixXd x(arity_, 1);
    for (int c = 0; c < arity_; ++c) x(c, 0) = input[static_cast<std::size_t>(c)];
    Workspace ws;
    Eigen::RowVectorXd out(1);
    forward_batch(x, ws, out);
    return out(0);
  }

  double operator()(double x) const { return forward(std::span<const double>(&x, 1)); }
  double operator()(double x, double z) const {
    const double in[2] = {x, z};
    return forward(std::span<const double>(in, 2));
  }

  // x: arity x B. Writes B outputs (offset included) and keeps activations in ws.
  void forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& x, Workspace& ws,
                     Eigen::Ref<Eigen::RowVectorXd> out) const {
    const Eigen::Index batch = x.cols();
    ws.a1.noalias() = w1() * x;
    ws.a1.colwise() += b1();
    tanh_inplace(ws.a1);
    ws.a2.noalias() = w2() * ws.a1;
    ws.a2.colwise() += b2();
    tanh_inplace(ws.a2);
    out.noalias() = w3().transpose() * ws.a2;
    out.array() += b3() + output_offset_;
    (void)batch;
  }

  // Adds d(sum_b dout_b * out_b)/d params into grad (same layout as params()).
  // Requires ws from the matching forward_batch call.
  void accumulate_gradient(const Eigen::Ref<const Eigen::MatrixXd>& x, Workspace& ws,
                           const Eigen::Ref<const Eigen::RowVectorXd>& dout, std::span<double> grad) const {
    double* g = grad.data();
    Eigen::Map<Eigen::MatrixXd> gw1(g + w1_offset(), kHidden1, arity_);
    Eigen::Map<Eigen::VectorXd> gb1(g + b1_offset(), kHidden1);
    Eigen::Map<Eigen::MatrixXd> gw2(g + w2_offset(), kHidden2, kHidden1);
    Eigen::Map<Eigen::VectorXd> gb2(g + b2_offset(), kHidden2);
    Eigen::Map<Eigen::VectorXd> gw3(g + w3_offset(), kHidden2);

    gw3.noalias() += ws.a2 * dout.transpose();
    g[b3_offset()] += dout.sum();
    ws.d2 = (w3() * dout).array() * (1.0 - ws.a2.array().square());
    gw2.noalias() += ws.d2 * ws.a1.transpose();
    gb2 += ws.d2.rowwise().sum();
    ws.d1.noalias() = w2().transpose() * ws.d2;
    ws.d1.array() *= 1.0 - ws.a1.array().square();
    gw1.noalias() += ws.d1 * x.transpose();
    gb1 += ws.d1.rowwise().sum();
  }

 private:
  static void tanh_inplace(Eigen::MatrixXd& m) {
    // tanh(z) = 1 - 2 / (e^{2z} + 1); vectorizes through Eigen's exp.
    m.array() = 1.0 - 2.0 / ((2.0 * m.array()).exp() + 1.0);
  }

  int w1_offset() const { return 0; }
  int b1_offset() const { return kHidden1 * arity_; }
  int w2_offset() const { return b1_offset() + kHidden1; }
  int b2_offset() const { return w2_offset() + kHidden2 * kHidden1; }
  int w3_offset() const { return b2_offset() + kHidden2; }
  int b3_offset() const { return w3_offset() + kHidden2; }

  Eigen::Map<const Eigen::MatrixXd> w1() const { return {params_.data() + w1_offset(), kHidden1, arity_}; }
  Eigen::Map<const Eigen::VectorXd> b1() const { return {params_.data() + b1_offset(), kHidden1}; }
  Eigen::Map<const Eigen::MatrixXd> w2() const { return {params_.data() + w2_offset(), kHidden2, kHidden1}; }
  Eigen::Map<const Eigen::VectorXd> b2() const { return {params_.data() + b2_offset(), kHidden2}; }
  Eigen::Map<const Eigen::VectorXd> w3() const { return {params_.data() + w3_offset(), kHidden2}; }
  double b3() const { return params_(b3_offset()); }

  int arity_ = 1;
  Eigen::VectorXd params_;
  double output_offset_ = 0.0;
};

// Per-level offsets for a one-hot categorical feature (bias nodes).
struct CategoricalEffect {
  Eigen::VectorXd offsets;

  explicit CategoricalEffect(int levels = 0) : offsets(Eigen::VectorXd::Zero(levels)) {}

  int levels() const { return static_cast<int>(offsets.size()); }
  double operator()(int level) const { return level < 0 ? 0.0 : offsets(level); }
};

using EffectFunction = std::variant<Subnet, CategoricalEffect>;

// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.001;
  int max_epochs = 1000;
  int fine_tune_epochs = 200;
  int batch_size = 256;
  int patience_epochs = 100;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (max_epochs < 0 || fine_tune_epochs < 0) throw ValidationError("epoch budgets must be non-negative");
    if (batch_size <= 0) throw ValidationError("batch_size must be positive");
    if (patience_epochs <= 0) throw ValidationError("patience_epochs must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw ValidationError("validation_fraction must lie in (0, 1)");
    }
  }
};

struct TrainTrace {
  std::vector<double> train_loss;       // per epoch, mean over mini-batches
  std::vector<double> validation_loss;  // per epoch, holdout loss after the epoch
  double initial_validation_loss = 0.0;
  int best_epoch = 0;                   // 0 = the initial parameters were kept
  int epochs_run = 0;
  bool stopped_early = false;
};

// Inputs of one additive term over a sample set: an arity x N matrix for a
// subnet or N level indices for a categorical effect.
struct TermInputs {
  Eigen::MatrixXd values;
  std::vector<int> levels;
};

namespace detail {

// Evaluates a term for the listed samples.
inline void eval_term(const EffectFunction& fn, const TermInputs& in, std::span<const std::size_t> idx,
                      Eigen::MatrixXd& xbuf, Subnet::Workspace& ws, Eigen::RowVectorXd& out) {
  const auto batch = static_cast<Eigen::Index>(idx.size());
  out.resize(batch);
  if (const auto* net = std::get_if<Subnet>(&fn)) {
    xbuf.resize(net->arity(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) xbuf.col(b) = in.values.col(static_cast<Eigen::Index>(idx[b]));
    net->forward_batch(xbuf, ws, out);
  } else {
    const auto& cat = std::get<CategoricalEffect>(fn);
    for (Eigen::Index b = 0; b < batch; ++b) out(b) = cat(in.levels[idx[b]]);
  }
}

class Adam {
 public:
  explicit Adam(std::size_t size, double lr) : m_(size, 0.0), v_(size, 0.0), lr_(lr) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * grad[k];
      v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * grad[k] * grad[k];
      params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<double> m_;
  std::vector<double> v_;
  double lr_;
  int t_ = 0;
};

// Flat view over the trainable parameters of several terms plus an optional
// intercept. Parameters are copied in and out around each optimizer step.
class ParamPack {
 public:
  ParamPack(std::span<EffectFunction*> terms, double* intercept) : terms_(terms.begin(), terms.end()), intercept_(intercept) {
    std::size_t off = intercept_ ? 1 : 0;
    for (auto* t : terms_) {
      offsets_.push_back(off);
      off += static_cast<std::size_t>(std::visit([](const auto& f) { return size_of(f); }, *t));
    }
    size_ = off;
  }

  std::size_t size() const { return size_; }
  std::size_t offset(std::size_t term) const { return offsets_[term]; }

  void read(std::vector<double>& flat) const {
    flat.resize(size_);
    if (intercept_) flat[0] = *intercept_;
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      const Eigen::VectorXd& p = params_of(*terms_[t]);
      std::copy(p.data(), p.data() + p.size(), flat.begin() + static_cast<std::ptrdiff_t>(offsets_[t]));
    }
  }

  void write(const std::vector<double>& flat) const {
    if (intercept_) *intercept_ = flat[0];
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      Eigen::VectorXd& p = params_of(*terms_[t]);
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offsets_[t]),
                flat.begin() + static_cast<std::ptrdiff_t>(offsets_[t]) + p.size(), p.data());
    }
  }

 private:
  static Eigen::Index size_of(const Subnet& s) { return s.params().size(); }
  static Eigen::Index size_of(const CategoricalEffect& c) { return c.offsets.size(); }
  static Eigen::VectorXd& params_of(EffectFunction& f) {
    if (auto* s = std::get_if<Subnet>(&f)) return s->params();
    return std::get<CategoricalEffect>(f).offsets;
  }

  std::vector<EffectFunction*> terms_;
  double* intercept_;
  std::vector<std::size_t> offsets_;
  std::size_t size_ = 0;
};

// Link-scale scores offset + intercept + sum of terms over the listed samples.
inline Eigen::VectorXd additive_scores(std::span<EffectFunction* const> terms, double intercept,
                                       const std::vector<TermInputs>& design, const Eigen::VectorXd& offsets,
                                       std::span<const std::size_t> idx) {
  Eigen::VectorXd score(static_cast<Eigen::Index>(idx.size()));
  constexpr std::size_t kChunk = 4096;
  Eigen::MatrixXd xbuf;
  Subnet::Workspace ws;
  Eigen::RowVectorXd out;
  for (std::size_t start = 0; start < idx.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, idx.size() - start);
    const auto chunk = idx.subspan(start, len);
    for (std::size_t b = 0; b < len; ++b) score(static_cast<Eigen::Index>(start + b)) = offsets(static_cast<Eigen::Index>(chunk[b])) + intercept;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      eval_term(*terms[t], design[t], chunk, xbuf, ws, out);
      score.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) += out.transpose();
    }
  }
  return score;
}

inline double mean_loss(Loss loss, const Eigen::VectorXd& score, const Eigen::VectorXd& targets,
                        std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < idx.size(); ++b) {
    total += loss_value(loss, score(static_cast<Eigen::Index>(b)), targets(static_cast<Eigen::Index>(idx[b])));
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace detail

// Jointly trains additive terms (and optionally a shared intercept) against
// `targets` with per-sample fixed `offsets`, by mini-batch Adam on the mean
// loss. A validation_fraction holdout of the samples drives early stopping;
// the parameters of the best holdout epoch (the initial parameters count as
// epoch 0) are restored on return.
inline TrainTrace train_additive(std::span<EffectFunction*> terms, double* intercept,
                                 const std::vector<TermInputs>& design, const Eigen::VectorXd& offsets,
                                 const Eigen::VectorXd& targets, const TrainConfig& config, Loss loss,
                                 int max_epochs) {
  config.validate();
  if (design.size() != terms.size()) throw ValidationError("one input block is required per term");
  const auto total = static_cast<std::size_t>(targets.size());
  if (total == 0) throw ValidationError("cannot train on an empty sample set");
  if (static_cast<std::size_t>(offsets.size()) != total) throw ValidationError("offsets/targets size mismatch");

  TrainTrace trace;
  detail::ParamPack pack(terms, intercept);
  if (pack.size() == 0 || max_epochs == 0) return trace;

  auto [fit, hold] = holdout_indices(total, config.validation_fraction, derive_seed(config.seed, "holdout"));
  const bool has_holdout = !hold.empty();
  auto monitor = [&]() {
    const auto& idx = has_holdout ? hold : fit;
    const Eigen::VectorXd s = detail::additive_scores(terms, intercept ? *intercept : 0.0, design, offsets, idx);
    return detail::mean_loss(loss, s, targets, idx);
  };

  std::vector<double> flat;
  // Eigen storage keeps the gradient buffer's alignment fixed, so vectorized
  // kernels accumulate in the same order on every run.
  Eigen::VectorXd grad(static_cast<Eigen::Index>(pack.size()));
  pack.read(flat);
  std::vector<double> best = flat;
  double best_loss = monitor();
  trace.initial_validation_loss = best_loss;
  if (!std::isfinite(best_loss)) throw TrainingError("non-finite loss before training");

  detail::Adam adam(pack.size(), config.learning_rate);
  Rng rng = make_rng(config.seed, "epochs");
  const std::size_t batch_size = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), fit.size());

  std::vector<Eigen::RowVectorXd> outs(terms.size());
  std::vector<Subnet::Workspace> spaces(terms.size());
  std::vector<Eigen::MatrixXd> xbufs(terms.size());
  Eigen::RowVectorXd dscore;

  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    std::shuffle(fit.begin(), fit.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < fit.size(); start += batch_size) {
      const std::size_t len = std::min(batch_size, fit.size() - start);
      const std::span<const std::size_t> idx(fit.data() + start, len);
      const auto b_len = static_cast<Eigen::Index>(len);

      Eigen::RowVectorXd score(b_len);
      const double mu = intercept ? *intercept : 0.0;
      for (Eigen::Index b = 0; b < b_len; ++b) score(b) = offsets(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)])) + mu;
      for (std::size_t t = 0; t < terms.size(); ++t) {
        detail::eval_term(*terms[t], design[t], idx, xbufs[t], spaces[t], outs[t]);
        score += outs[t];
      }
      dscore.resize(b_len);
      double batch_loss = 0.0;
      for (Eigen::Index b = 0; b < b_len; ++b) {
        const double y = targets(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)]));
        batch_loss += loss_value(loss, score(b), y);
        dscore(b) = loss_derivative(loss, score(b), y) / static_cast<double>(len);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += batch_loss;

      grad.setZero();
      if (intercept) grad(0) = dscore.sum();
      for (std::size_t t = 0; t < terms.size(); ++t) {
        const std::span<double> g(grad.data() + pack.offset(t), pack.size() - pack.offset(t));
        if (const auto* net = std::get_if<Subnet>(terms[t])) {
          net->accumulate_gradient(xbufs[t], spaces[t], dscore, g);
        } else {
          for (Eigen::Index b = 0; b < b_len; ++b) {
            const int level = design[t].levels[idx[static_cast<std::size_t>(b)]];
            if (level >= 0) g[static_cast<std::size_t>(level)] += dscore(b);
          }
        }
      }
      pack.read(flat);
      adam.step(flat, std::span<const double>(grad.data(), pack.size()));
      pack.write(flat);
    }
    trace.train_loss.push_back(epoch_loss / static_cast<double>(fit.size()));
    const double val = monitor();
    if (!std::isfinite(val)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    trace.validation_loss.push_back(val);
    trace.epochs_run = epoch;
    if (val < best_loss) {
      best_loss = val;
      trace.best_epoch = epoch;
      pack.read(best);
    } else if (epoch - trace.best_epoch >= config.patience_epochs) {
      trace.stopped_early = epoch < max_epochs;
      break;
    }
  }
  pack.write(best);
  return trace;
}

// ---------------------------------------------------------------------------
// Single-network operations.

// Analytic gradient of the mean loss of `net` over a batch (inputs: arity x B).
inline Eigen::VectorXd gradient(const Subnet& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                Loss loss) {
  if (inputs.cols() == 0) throw ValidationError("gradient needs a non-empty batch");
  if (inputs.rows() != net.arity()) throw ValidationError("batch input dimension does not match subnet arity");
  if (inputs.cols() != targets.size()) throw ValidationError("inputs/targets size mismatch");
  Subnet::Workspace ws;
  Eigen::RowVectorXd out(inputs.cols());
  net.forward_batch(inputs, ws, out);
  Eigen::RowVectorXd dout(inputs.cols());
  for (Eigen::Index b = 0; b < inputs.cols(); ++b) {
    dout(b) = loss_derivative(loss, out(b), targets(b)) / static_cast<double>(inputs.cols());
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.params().size());
  net.accumulate_gradient(inputs, ws, dout, std::span<double>(grad.data(), static_cast<std::size_t>(grad.size())));
  return grad;
}

struct TrainedSubnet {
  Subnet net;
  TrainTrace trace;
};

// Fits one subnet to (inputs, targets) on its own.
inline TrainedSubnet train(Subnet net, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                           const TrainConfig& config, Loss loss = Loss::kSquared) {
  if (inputs.rows() != net.arity()) throw ValidationError("input dimension does not match subnet arity");
  std::vector<TermInputs> design{{inputs, {}}};
  EffectFunction fn = std::move(net);
  EffectFunction* terms[] = {&fn};
  const Eigen::VectorXd offsets = Eigen::VectorXd::Zero(targets.size());
  TrainTrace trace = train_additive(terms, nullptr, design, offsets, targets, config, loss, config.max_epochs);
  return {std::get<Subnet>(std::move(fn)), std::move(trace)};
}

}  // namespace gammli

#endif  // GAMMLI_SUBNET_HPP_
