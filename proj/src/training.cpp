// Copyright 2026 The simulmt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "simulmt/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "simulmt/autodiff.hpp"
#include "simulmt/transformer.hpp"
#include "simulmt/vocabulary.hpp"

namespace simulmt {

int wait_k_z(WaitK k, int t, int src_len) {
  if (t < 1 || src_len < 1) throw ValidationError("wait_k_z needs t >= 1 and src_len >= 1");
  if (k.is_infinite()) return src_len;
  // k + t - 1 can overflow for huge k; compare before adding.
  if (k.value() >= src_len) return src_len;
  return std::min(k.value() + t - 1, src_len);
}

std::vector<int> wait_k_path(WaitK k, int src_len, int tgt_len) {
  std::vector<int> path(static_cast<std::size_t>(tgt_len));
  for (int t = 1; t <= tgt_len; ++t) path[static_cast<std::size_t>(t - 1)] = wait_k_z(k, t, src_len);
  return path;
}

double label_smoothed_nll(std::span<const double> log_probs, TokenId gold, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ValidationError("smoothing must be in [0, 1)");
  const auto v = static_cast<std::ptrdiff_t>(log_probs.size());
  if (gold < 0 || gold >= v) throw ValidationError("gold token outside the distribution");
  const double gold_lp = log_probs[static_cast<std::size_t>(gold)];
  if (eps == 0.0 || v < 2) return -gold_lp;
  double others = 0.0;
  for (std::ptrdiff_t i = 0; i < v; ++i) {
    if (i != gold) others += log_probs[static_cast<std::size_t>(i)];
  }
  return -((1.0 - eps) * gold_lp + eps / static_cast<double>(v - 1) * others);
}

namespace {

std::vector<TokenId> shifted_input(std::span<const TokenId> y) {
  std::vector<TokenId> y_in;
  y_in.reserve(y.size());
  y_in.push_back(Vocabulary::kBos);
  y_in.insert(y_in.end(), y.begin(), y.end() - 1);
  return y_in;
}

// Mean smoothed NLL of the decoder output for `path`, back-propagated into
// `grads` when requested. `memory` must already be on the tape.
double decode_path_loss(const Transformer& model, Tape& tape, Tape::Var memory,
                        std::span<const TokenId> y, const std::vector<int>& path, double eps,
                        Gradients* grads) {
  const auto lp_var = model.build_decoder(tape, memory, shifted_input(y), path);
  const Matrix& lp = tape.value(lp_var);
  const auto n = static_cast<double>(y.size());
  const auto vocab = lp.cols();
  double total = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const auto row = lp.row(static_cast<Eigen::Index>(t));
    total += label_smoothed_nll(std::span<const double>(row.data(), static_cast<std::size_t>(vocab)),
                                y[t], eps);
  }
  if (grads) {
    const double off = vocab > 1 ? eps / static_cast<double>(vocab - 1) : 0.0;
    const double on = vocab > 1 ? 1.0 - eps : 1.0;
    Matrix seed = Matrix::Constant(lp.rows(), vocab, -off / n);
    for (std::size_t t = 0; t < y.size(); ++t) seed(static_cast<Eigen::Index>(t), y[t]) = -on / n;
    tape.backward(lp_var, seed);
    tape.accumulate_param_grads(*grads);
  }
  return total / n;
}

void check_pair(std::span<const TokenId> x, std::span<const TokenId> y) {
  if (x.empty() || y.empty()) throw ValidationError("loss needs non-empty source and target");
}

}  // namespace

double path_loss(const Parameters& params, std::span<const TokenId> x, std::span<const TokenId> y,
                 WaitK k, double eps, Gradients* grads) {
  check_pair(x, y);
  const Transformer model(params);
  Tape tape(params, grads != nullptr);
  const auto memory = model.build_encoder(tape, x);
  const auto path = wait_k_path(k, static_cast<int>(x.size()), static_cast<int>(y.size()));
  return decode_path_loss(model, tape, memory, y, path, eps, grads);
}

MultiPathSample multi_path_loss(const Parameters& params, std::span<const TokenId> x,
                                std::span<const TokenId> y, std::mt19937_64& rng, double eps,
                                Gradients* grads) {
  check_pair(x, y);
  const Transformer model(params);
  Tape tape(params, grads != nullptr);
  const auto memory = model.build_encoder(tape, x);
  const int src_len = static_cast<int>(x.size());
  const int k = std::uniform_int_distribution<int>(1, src_len)(rng);
  const auto path = wait_k_path(WaitK(k), src_len, static_cast<int>(y.size()));
  return {decode_path_loss(model, tape, memory, y, path, eps, grads), k};
}

double lr_at(long step, double base_lr, long warmup) {
  if (step < 1) throw ValidationError("lr_at: step must be >= 1");
  if (warmup < 1) throw ValidationError("lr_at: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return base_lr * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

OptimizerState make_optimizer_state(const Parameters& params, const AdamConfig& config) {
  OptimizerState state;
  state.config = config;
  state.first_moment = params.zeros_like();
  state.second_moment = params.zeros_like();
  return state;
}

void adam_update(Parameters& params, const Gradients& grads, OptimizerState& state) {
  if (static_cast<int>(grads.size()) != params.num_slots() ||
      static_cast<int>(state.first_moment.size()) != params.num_slots()) {
    throw ValidationError("adam_update: gradient/state shapes do not match parameters");
  }
  for (int s = 0; s < params.num_slots(); ++s) {
    const auto& g = grads[static_cast<std::size_t>(s)];
    const auto& p = params.slot_tensor(s);
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw ValidationError("adam_update: gradient shape mismatch for '" + params.slot_name(s) + "'");
    }
    if (!g.allFinite()) {
      throw RuntimeFailure("non-finite gradient for parameter '" + params.slot_name(s) + "'");
    }
  }
  const auto& cfg = state.config;
  state.step += 1;
  const double lr = lr_at(state.step, cfg.base_lr, cfg.warmup_steps);
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (int s = 0; s < params.num_slots(); ++s) {
    const auto i = static_cast<std::size_t>(s);
    const auto& g = grads[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    params.slot_tensor(s).array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  }
}

GradCheckReport grad_check(Parameters& params, const LossFn& loss_fn, int n_probes, double tol,
                           std::uint64_t seed) {
  constexpr double h = 1e-5;
  GradCheckReport report;
  auto grads = params.zeros_like();
  loss_fn(params, &grads);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_slot(0, params.num_slots() - 1);
  for (int i = 0; i < n_probes; ++i) {
    const int s = pick_slot(rng);
    auto& tensor = params.slot_tensor(s);
    const auto idx = std::uniform_int_distribution<Eigen::Index>(0, tensor.size() - 1)(rng);
    const double saved = tensor.data()[idx];
    tensor.data()[idx] = saved + h;
    const double up = loss_fn(params, nullptr);
    tensor.data()[idx] = saved - h;
    const double down = loss_fn(params, nullptr);
    tensor.data()[idx] = saved;

    GradProbe probe;
    probe.name = params.slot_name(s);
    probe.index = idx;
    probe.analytic = grads[static_cast<std::size_t>(s)].data()[idx];
    probe.numeric = (up - down) / (2.0 * h);
    const double scale =
        std::max({std::abs(probe.analytic), std::abs(probe.numeric), kGradCheckFloor});
    probe.rel_error = std::abs(probe.analytic - probe.numeric) / scale;
    report.max_rel_error = std::max(report.max_rel_error, probe.rel_error);
    report.probes.push_back(std::move(probe));
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

void LossConfig::validate() const {
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ValidationError("smoothing must be in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json loss_json = {
      {"smoothing", loss.smoothing},
      {"mode", loss.mode == LossConfig::Mode::kMultiPath ? "multi_path" : "single_k"},
      {"k", loss.k.to_string()}};
  return {{"model", model.to_json()},
          {"loss", loss_json},
          {"optimizer",
           {{"beta1", adam.beta1},
            {"beta2", adam.beta2},
            {"epsilon", adam.epsilon},
            {"base_lr", adam.base_lr},
            {"warmup_steps", adam.warmup_steps}}},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      c.model = ModelConfig::from_json(value);
    } else if (key == "loss") {
      for (const auto& [lk, lv] : value.items()) {
        if (lk == "smoothing") c.loss.smoothing = lv.get<double>();
        else if (lk == "mode") {
          const auto mode = lv.get<std::string>();
          if (mode == "multi_path") c.loss.mode = LossConfig::Mode::kMultiPath;
          else if (mode == "single_k") c.loss.mode = LossConfig::Mode::kSingleK;
          else throw ValidationError("unknown loss mode '" + mode + "'");
        } else if (lk == "k") {
          c.loss.k = lv.is_number_integer() ? WaitK(lv.get<int>()) : WaitK::parse(lv.get<std::string>());
        } else {
          throw ValidationError("unknown loss config key '" + lk + "'");
        }
      }
    } else if (key == "optimizer") {
      for (const auto& [ok, ov] : value.items()) {
        if (ok == "beta1") c.adam.beta1 = ov.get<double>();
        else if (ok == "beta2") c.adam.beta2 = ov.get<double>();
        else if (ok == "epsilon") c.adam.epsilon = ov.get<double>();
        else if (ok == "base_lr") c.adam.base_lr = ov.get<double>();
        else if (ok == "warmup_steps") c.adam.warmup_steps = ov.get<long>();
        else throw ValidationError("unknown optimizer config key '" + ok + "'");
      }
    } else if (key == "epochs") {
      c.epochs = value.get<int>();
    } else if (key == "batch_size") {
      c.batch_size = value.get<int>();
    } else if (key == "seed") {
      c.seed = value.get<std::uint64_t>();
    } else {
      throw ValidationError("unknown training config key '" + key + "'");
    }
  }
  return c;
}

std::size_t select_best_epoch(std::span<const double> dev_losses) {
  if (dev_losses.empty()) throw ValidationError("select_best_epoch: no epochs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dev_losses.size(); ++i) {
    if (dev_losses[i] < dev_losses[best]) best = i;
  }
  return best;
}

double dev_loss(const Parameters& params, const std::vector<SentencePair>& pairs,
                const LossConfig& loss) {
  if (pairs.empty()) return 0.0;
  std::mt19937_64 rng(0x5eed);
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : pairs) {
    double mean = 0.0;
    if (loss.mode == LossConfig::Mode::kMultiPath) {
      mean = multi_path_loss(params, p.source, p.target, rng, 0.0).loss;
    } else {
      mean = path_loss(params, p.source, p.target, loss.k, 0.0);
    }
    total += mean * static_cast<double>(p.target.size());
    tokens += p.target.size();
  }
  return total / static_cast<double>(tokens);
}

TrainResult train(Parameters init, const std::vector<SentencePair>& train_set,
                  const std::vector<SentencePair>& dev_set, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.loss.validate();
  if (config.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (config.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  for (const auto& p : train_set) validate_pair(p);
  for (const auto& p : dev_set) validate_pair(p);

  TrainResult result;
  result.best = init;
  if (config.epochs == 0) return result;
  if (train_set.empty()) throw ValidationError("empty training set");

  Parameters params = std::move(init);
  auto opt = make_optimizer_state(params, config.adam);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dev_losses;
  long batch_index = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      auto grads = params.zeros_like();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& pair = train_set[order[i]];
        if (config.loss.mode == LossConfig::Mode::kMultiPath) {
          batch_loss += multi_path_loss(params, pair.source, pair.target, rng,
                                        config.loss.smoothing, &grads).loss;
        } else {
          batch_loss += path_loss(params, pair.source, pair.target, config.loss.k,
                                  config.loss.smoothing, &grads);
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw RuntimeFailure("training diverged: non-finite loss at batch " +
                             std::to_string(batch_index));
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) g *= inv;
      adam_update(params, grads, opt);
      epoch_loss += batch_loss;
      ++batch_index;
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(train_set.size());
    entry.dev_loss = dev_set.empty() ? entry.train_loss : dev_loss(params, dev_set, config.loss);
    entry.lr = lr_at(std::max(1L, opt.step), config.adam.base_lr, config.adam.warmup_steps);
    result.log.push_back(entry);
    dev_losses.push_back(entry.dev_loss);
    if (select_best_epoch(dev_losses) == dev_losses.size() - 1) {
      result.best = params;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  out << "epoch,train_loss,dev_loss,lr\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.8g\n", e.epoch, e.train_loss, e.dev_loss, e.lr);
    out << buf;
  }
}

}  // namespace simulmt
