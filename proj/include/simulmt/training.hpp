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

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "simulmt/common.hpp"
#include "simulmt/corpus.hpp"
#include "simulmt/parameters.hpp"

namespace simulmt {

/// Source tokens read before writing target token t (1-based):
/// min(k + t - 1, src_len); src_len for k = infinity.
int wait_k_z(WaitK k, int t, int src_len);
/// z_1..z_{tgt_len} for one wait-k path.
std::vector<int> wait_k_path(WaitK k, int src_len, int tgt_len);

/// -[(1 - eps) log p(gold) + eps / (V - 1) * sum_{v != gold} log p(v)]
double label_smoothed_nll(std::span<const double> log_probs, TokenId gold, double eps);

using Gradients = std::vector<Matrix>;  // one tensor per parameter storage slot

/// Mean label-smoothed NLL over target steps of the wait-k path `k`.
/// Adds d loss / d params into `grads` when non-null.
double path_loss(const Parameters& params, std::span<const TokenId> x, std::span<const TokenId> y,
                 WaitK k, double eps = 0.1, Gradients* grads = nullptr);

struct MultiPathSample {
  double loss = 0.0;
  int k = 1;
};

/// Encodes the source once, draws k uniformly from {1..|x|}, and returns
/// the path loss of that k.
MultiPathSample multi_path_loss(const Parameters& params, std::span<const TokenId> x,
                                std::span<const TokenId> y, std::mt19937_64& rng,
                                double eps = 0.1, Gradients* grads = nullptr);

/// base_lr * min(step^-1/2, step * warmup^-3/2)
double lr_at(long step, double base_lr, long warmup);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double base_lr = 0.04;
  long warmup_steps = 400;
};

struct OptimizerState {
  long step = 0;
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

OptimizerState make_optimizer_state(const Parameters& params, const AdamConfig& config);

/// One bias-corrected Adam step at learning rate lr_at(step + 1).
/// Throws RuntimeFailure naming the tensor if a gradient is not finite.
void adam_update(Parameters& params, const Gradients& grads, OptimizerState& state);

/// Loss with optional analytic gradient accumulation.
using LossFn = std::function<double(const Parameters&, Gradients*)>;

struct GradProbe {
  std::string name;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradProbe> probes;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Relative error floor: |a - n| / max(|a|, |n|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-5;

/// Compares analytic gradients against central differences (h = 1e-5) on
/// `n_probes` random scalars (tensor chosen uniformly, then an element).
/// Passes iff the max relative error is below `tol`.
GradCheckReport grad_check(Parameters& params, const LossFn& loss_fn, int n_probes, double tol,
                           std::uint64_t seed = 0);

struct LossConfig {
  enum class Mode { kSingleK, kMultiPath };
  double smoothing = 0.1;
  Mode mode = Mode::kMultiPath;
  WaitK k = WaitK::infinite();  // used in kSingleK mode

  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  AdamConfig adam;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;  // unsmoothed NLL per target token
  double lr = 0.0;
};

struct TrainResult {
  Parameters best;
  int best_epoch = 0;  // 0 when no epoch ran
  std::vector<EpochLog> log;
};

/// Index (0-based) of the lowest value; the earliest wins ties.
std::size_t select_best_epoch(std::span<const double> dev_losses);

/// Unsmoothed per-token NLL over `pairs`. In multi-path mode each sentence
/// is scored on a k drawn from a fixed-seed generator, so successive
/// evaluations are comparable.
double dev_loss(const Parameters& params, const std::vector<SentencePair>& pairs,
                const LossConfig& loss);

/// Mini-batch training; returns the parameters of the epoch with the lowest
/// dev loss. Aborts with RuntimeFailure on a non-finite batch loss.
TrainResult train(Parameters init, const std::vector<SentencePair>& train_set,
                  const std::vector<SentencePair>& dev_set, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = nullptr);

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace simulmt
