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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "alg1_oracle.hpp"
#include "bleu_oracle.hpp"
#include "simulmt/bpe.hpp"
#include "simulmt/cascade.hpp"
#include "simulmt/corpus.hpp"
#include "simulmt/metrics.hpp"
#include "simulmt/normalize.hpp"
#include "simulmt/online.hpp"
#include "simulmt/service.hpp"
#include "simulmt/training.hpp"
#include "simulmt/transformer.hpp"

using namespace simulmt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ModelConfig random_config(std::mt19937& rng) {
  ModelConfig c;
  const int heads[] = {1, 2, 4};
  c.n_heads = heads[rng() % 3];
  c.d_model = c.n_heads * (2 + static_cast<int>(rng() % 4)) * 2;
  c.n_enc_layers = 1 + static_cast<int>(rng() % 2);
  c.n_dec_layers = 1 + static_cast<int>(rng() % 2);
  c.d_ffn = 8 + static_cast<int>(rng() % 24);
  c.joint_vocabulary = rng() % 2;
  c.tie_decoder_embeddings = rng() % 2;
  c.src_vocab_size = 12 + static_cast<int>(rng() % 30);
  c.tgt_vocab_size = c.joint_vocabulary ? c.src_vocab_size : 12 + static_cast<int>(rng() % 30);
  return c;
}

TokenSeq random_tokens(std::mt19937& rng, int n, int vocab, bool eos_last) {
  std::uniform_int_distribution<int> u(4, vocab - 1);
  TokenSeq out(n);
  for (auto& t : out) t = u(rng);
  if (eos_last) out.back() = Vocabulary::kEos;
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome wait_k_law() {
  const auto t0 = std::chrono::steady_clock::now();
  long long checked = 0, wrong = 0;
  for (int k = 1; k <= 64; ++k)
    for (int t = 1; t <= 128; ++t)
      for (int n = 1; n <= 64; ++n) {
        ++checked;
        if (wait_k_z(WaitK(k), t, n) != std::min(k + t - 1, n)) ++wrong;
      }
  const double secs = seconds_since(t0);
  return {wrong == 0 && secs < 1.0,
          std::to_string(checked) + " triples, " + std::to_string(wrong) + " mismatches, " +
              fmt("%.3f s", secs)};
}

// Decoder outputs for steps 1..steps along `path`, encoder over all of x.
std::vector<RowVector> decode_along(const Parameters& p, const TokenSeq& x, const TokenSeq& y_in,
                                    const std::vector<int>& path) {
  const auto enc = encode_prefix(p, x);
  DecoderState dec;
  std::vector<RowVector> out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    auto [lp, next] = decode_step(p, enc, std::move(dec), y_in[i], path[i]);
    dec = std::move(next);
    out.push_back(std::move(lp));
  }
  return out;
}

Outcome causality() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(2024);
  int cases = 0, broken = 0;
  for (int c = 0; c < 50; ++c) {
    const auto cfg = random_config(rng);
    const auto params = init_parameters(cfg, 100 + c);
    const int n = 4 + static_cast<int>(rng() % 10);
    const auto x = random_tokens(rng, n, cfg.src_vocab_size, true);
    const int k = 1 + static_cast<int>(rng() % (n - 2));
    const int steps = 1 + static_cast<int>(rng() % std::max(1, n - k - 1));
    std::vector<int> path;
    for (int t = 1; t <= steps; ++t) path.push_back(wait_k_z(WaitK(k), t, n));
    const int zt = path.back();
    if (zt >= n) continue;
    TokenSeq y_in{Vocabulary::kBos};
    const auto y = random_tokens(rng, steps, cfg.tgt_vocab_size, false);
    y_in.insert(y_in.end(), y.begin(), y.end());

    auto permuted = x;
    std::shuffle(permuted.begin() + zt, permuted.end(), rng);
    if (permuted == x) std::reverse(permuted.begin() + zt, permuted.end());
    auto replaced = x;
    for (int i = zt; i < n; ++i) replaced[i] = 4 + static_cast<TokenId>((x[i] - 4 + 1 + rng() % 5) % (cfg.src_vocab_size - 4));
    const auto base = decode_along(params, x, y_in, path);
    const auto a = decode_along(params, permuted, y_in, path);
    const auto b = decode_along(params, replaced, y_in, path);
    ++cases;
    if (a != base || b != base) ++broken;
  }
  const double secs = seconds_since(t0);
  return {cases >= 40 && broken == 0 && secs < 30.0,
          std::to_string(cases) + " models, " + std::to_string(broken) + " not bit-identical, " +
              fmt("%.2f s", secs)};
}

Outcome incremental_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(77);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const auto cfg = random_config(rng);
    const auto params = init_parameters(cfg, 500 + c);
    const int n = 2 + static_cast<int>(rng() % 12);
    const int m = 1 + static_cast<int>(rng() % 12);
    const auto x = random_tokens(rng, n, cfg.src_vocab_size, true);
    const auto y = random_tokens(rng, m, cfg.tgt_vocab_size, true);
    const WaitK k = rng() % 4 == 0 ? WaitK::infinite() : WaitK(1 + static_cast<int>(rng() % n));
    const auto path = wait_k_path(k, n, m);

    // Grow the source one token at a time, exactly when the schedule needs it.
    const Transformer model(params);
    EncoderState enc;
    DecoderState dec;
    Matrix incremental(m, cfg.tgt_vocab_size);
    TokenId prev = Vocabulary::kBos;
    for (int t = 0; t < m; ++t) {
      while (enc.length() < path[t]) {
        const auto next = static_cast<std::size_t>(enc.length());
        enc = model.encode_prefix(std::span<const TokenId>(&x[next], 1), std::move(enc));
      }
      incremental.row(t) = model.decode_step(enc, dec, prev, path[t]);
      prev = y[t];
    }
    const Matrix scratch = model.teacher_forced_log_probs(x, y, path);
    worst = std::max(worst, (incremental - scratch).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 60.0,
          "50 cases, max |diff| " + fmt("%.2e", worst) + ", " + fmt("%.2f s", secs)};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig cfg;  // desk configuration
  cfg.src_vocab_size = cfg.tgt_vocab_size = 24;
  auto params = init_parameters(cfg, 9);
  std::mt19937 rng(10);
  const auto x = random_tokens(rng, 7, 24, true);
  const auto y = random_tokens(rng, 6, 24, true);
  const LossFn single = [&](const Parameters& p, Gradients* g) {
    return path_loss(p, x, y, WaitK(3), 0.1, g);
  };
  int fixed_k = 0;
  const LossFn multi = [&](const Parameters& p, Gradients* g) {
    std::mt19937_64 gen(5);
    const auto s = multi_path_loss(p, x, y, gen, 0.1, g);
    fixed_k = s.k;
    return s.loss;
  };
  const auto a = grad_check(params, single, 100, 1e-4, 1);
  const auto b = grad_check(params, multi, 100, 1e-4, 2);
  const double secs = seconds_since(t0);
  return {a.passed && b.passed && a.probes.size() >= 100 && b.probes.size() >= 100 && secs < 300,
          "path_loss max rel " + fmt("%.2e", a.max_rel_error) + ", multi_path_loss (k=" +
              std::to_string(fixed_k) + ") max rel " + fmt("%.2e", b.max_rel_error) + ", " +
              std::to_string(a.probes.size() + b.probes.size()) + " probes, " + fmt("%.1f s", secs)};
}

// Path loss recomputed with incremental decode steps and explicit smoothing.
double step_loop_loss(const Parameters& p, const TokenSeq& x, const TokenSeq& y, int k, double eps) {
  const int n = static_cast<int>(x.size());
  const auto enc = encode_prefix(p, x);
  DecoderState dec;
  TokenId prev = Vocabulary::kBos;
  double total = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const int z = std::min(k + static_cast<int>(t), n);
    auto [lp, next] = decode_step(p, enc, std::move(dec), prev, z);
    dec = std::move(next);
    double rest = 0.0;
    for (Eigen::Index v = 0; v < lp.size(); ++v)
      if (v != y[t]) rest += lp(v);
    total += -((1 - eps) * lp(y[t]) + eps / static_cast<double>(lp.size() - 1) * rest);
    prev = y[t];
  }
  return total / static_cast<double>(y.size());
}

Outcome multipath_consistency() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(31);
  double worst = 0.0;
  bool covered = true;
  for (int n = 1; n <= 8; ++n) {
    auto cfg = random_config(rng);
    const auto params = init_parameters(cfg, 40 + n);
    const auto x = random_tokens(rng, n, cfg.src_vocab_size, true);
    const auto y = random_tokens(rng, 1 + static_cast<int>(rng() % 8), cfg.tgt_vocab_size, true);
    double enumerated = 0.0;
    std::vector<double> oracle(n + 1);
    for (int k = 1; k <= n; ++k) {
      oracle[k] = step_loop_loss(params, x, y, k, 0.1);
      enumerated += oracle[k] / n;
    }
    std::map<int, double> realized;
    for (std::uint64_t seed = 0; seed < 5000 && static_cast<int>(realized.size()) < n; ++seed) {
      std::mt19937_64 gen(seed);
      const auto s = multi_path_loss(params, x, y, gen);
      realized[s.k] = s.loss;
      worst = std::max(worst, std::abs(s.loss - oracle[s.k]));
    }
    covered = covered && static_cast<int>(realized.size()) == n;
    double mean = 0.0;
    for (const auto& [k, v] : realized) mean += v / n;
    worst = std::max(worst, std::abs(mean - enumerated));
  }
  const double secs = seconds_since(t0);
  return {covered && worst < 1e-9 && secs < 10.0,
          "|x| = 1..8, max |diff| " + fmt("%.2e", worst) + ", " + fmt("%.2f s", secs)};
}

// ---------------------------------------------------------------------------
// Toy task model shared by the learning, service and ensemble checks.

struct ToyModel {
  BpeModel bpe;
  Parameters params;
  std::vector<TextPair> test;
  int best_epoch = 0;
  double best_dev = 0.0;
  double train_seconds = 0.0;
};

constexpr int kToyEpochs = 8;

const ToyModel& toy_model() {
  static std::unique_ptr<ToyModel> model;
  if (model) return *model;
  model = std::make_unique<ToyModel>();
  const auto t0 = std::chrono::steady_clock::now();
  const auto text = gen_toy_corpus(1, 10700, ToyTask::kDigitToWord);
  const std::vector<TextPair> train_text(text.begin(), text.begin() + 10000);
  const std::vector<TextPair> dev_text(text.begin() + 10000, text.begin() + 10200);
  model->test.assign(text.begin() + 10200, text.end());
  std::vector<std::string> lines;
  for (const auto& p : train_text) {
    lines.push_back(p.source);
    lines.push_back(p.target);
  }
  model->bpe = BpeModel::train(lines, 96);
  TrainConfig tc;
  tc.model.src_vocab_size = tc.model.tgt_vocab_size = model->bpe.vocab().size();
  tc.epochs = kToyEpochs;
  tc.seed = 1;
  auto result = train(init_parameters(tc.model, 1), encode_corpus(model->bpe, model->bpe, train_text),
                      encode_corpus(model->bpe, model->bpe, dev_text), tc,
                      [](const EpochLog& e) {
                        std::cerr << "  toy epoch " << e.epoch << " train " << e.train_loss
                                  << " dev " << e.dev_loss << '\n';
                      });
  model->params = std::move(result.best);
  model->best_epoch = result.best_epoch;
  model->best_dev = result.log[result.best_epoch - 1].dev_loss;
  model->train_seconds = seconds_since(t0);
  return *model;
}

SweepTestset toy_testset(const ToyModel& m) {
  SweepTestset ts;
  for (const auto& p : m.test) {
    ts.t2t.push_back({encode_pair(m.bpe, m.bpe, p).source, p.target});
  }
  ts.detokenize = [&m](std::span<const TokenId> ids) { return m.bpe.decode(ids); };
  ts.tokenize = [&m](std::string_view text) { return m.bpe.encode(text); };
  return ts;
}

Outcome toy_learning() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& m = toy_model();
  const auto ts = toy_testset(m);
  const SweepSystem sys{"toy", {&m.params}};
  const std::vector<WaitK> ks{WaitK(1), WaitK(9), WaitK::infinite()};
  const auto recs = sweep(std::span<const SweepSystem>(&sys, 1), ks, ts, SweepMode::kT2t);
  double b1 = 0, b9 = 0, binf = 0;
  for (const auto& r : recs) {
    if (r.k_eval == WaitK(1)) b1 = r.bleu;
    if (r.k_eval == WaitK(9)) b9 = r.bleu;
    if (r.k_eval.is_infinite()) binf = r.bleu;
  }
  const double secs = seconds_since(t0);
  return {binf >= 0.90 && b9 >= b1 && secs < 900,
          "BLEU k=inf " + fmt("%.4f", binf) + ", k=9 " + fmt("%.4f", b9) + ", k=1 " +
              fmt("%.4f", b1) + " on " + std::to_string(ts.t2t.size()) + " held-out pairs; best epoch " +
              std::to_string(m.best_epoch) + "/" + std::to_string(kToyEpochs) + ", " +
              fmt("%.0f s", secs)};
}

// ---------------------------------------------------------------------------

class CountingScorer final : public StepScorer {
 public:
  explicit CountingScorer(int body) : body_(body) {}
  int vocab_size() const override { return 8; }
  void reset() override { step_ = 0; }
  void extend_source(std::span<const TokenId> t) override { src_ += static_cast<int>(t.size()); }
  int source_length() const override { return src_; }
  RowVector next_log_probs(TokenId, int) override {
    RowVector lp = RowVector::Constant(8, std::log(0.01));
    lp(step_++ < body_ ? 5 : Vocabulary::kEos) = std::log(0.93);
    return lp;
  }

 private:
  int body_;
  int step_ = 0;
  int src_ = 0;
};

Outcome al_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  int checked = 0, wrong = 0;
  for (int n = 1; n <= 32; ++n) {
    const TokenSeq x = [&] {
      TokenSeq s(n, 5);
      s.back() = Vocabulary::kEos;
      return s;
    }();
    for (int k = 0; k <= n; ++k) {
      const WaitK wk = k == 0 ? WaitK::infinite() : WaitK(k);
      CountingScorer scorer(n);
      StepScorer* models[] = {&scorer};
      const auto r = online_greedy_decode(models, x, {wk, 1.0, n + 5});
      const int tgt = lagging_target_length(r.trace);
      const double al = average_lagging_words(r.trace, n, tgt);
      const double want = k == 0 ? n : k;
      ++checked;
      if (tgt != n || al != want) ++wrong;
    }
  }
  const double secs = seconds_since(t0);
  return {wrong == 0 && secs < 1.0, std::to_string(checked) + " traces (n <= 32, all k and offline), " +
                                        std::to_string(wrong) + " inexact, " + fmt("%.3f s", secs)};
}

// ---------------------------------------------------------------------------

Outcome endpoint_table() {
  const double inf = kInfinity;
  struct Snap {
    double silence;
    bool decoded;
    double cost;
    double utterance;
  };
  const std::vector<Snap> snaps{
      {0.0, false, inf, 0.0},  {0.7, false, inf, 0.7},  {0.6, false, inf, 0.6},
      {0.65, false, inf, 0.65}, {0.55, true, 1.0, 3.0},  {0.55, true, 2.0, 3.0},
      {0.55, true, inf, 3.0},  {1.0, true, inf, 4.0},   {0.4, true, 0.2, 4.0},
      {0.35, true, 0.4, 21.0}, {2.5, true, 5.0, 6.0},   {0.0, true, 0.0, 20.0},
      {3.0, false, inf, 3.0},  {0.6, true, 0.1, 1.0},   {5.0, true, 0.1, 30.0},
      {0.8, true, 0.0, 5.0},   {0.5, true, 1.999, 2.0}, {0.5, true, 0.99, 2.0},
      {0.49, true, 0.0, 2.0},  {0.3, true, 0.49, 6.0},  {0.29, true, 0.1, 6.0},
      {2.0, false, inf, 2.0},  {2.0, true, inf, 10.0},  {1.99, true, inf, 4.0},
      {0.0, false, inf, 25.0}, {0.64, true, 3.0, 19.99}, {0.64, true, 1.5, 19.99},
      {3.0, true, 0.2, 50.0},  {2.99, true, 0.2, 50.0}, {0.79, true, 0.0, 4.99},
      {0.8, false, inf, 4.0},  {0.8, false, 0.3, 4.0},  {0.45, false, 0.1, 1.0},
      {0.6, true, 2.0, 21.0},  {1.0, true, 1.0, 3.0},   {0.1, true, 0.0, 0.5},
      {10.0, true, 1e9, 10.0}, {0.65, true, 0.4, 20.0}, {0.5, false, inf, 5.0},
      {0.35, true, 0.5, 1.0}};
  const std::vector<std::vector<EndpointRule>> configs{
      {EndpointRule::a(0.65)},
      {EndpointRule::a(0.65), EndpointRule::b(0.5, 2.0), EndpointRule::c(1.0), EndpointRule::d(20)},
      {EndpointRule::b(0.5, 1.0), EndpointRule::b(0.3, 0.5), EndpointRule::c(2.0)},
      {EndpointRule::d(5), EndpointRule::c(0.8), EndpointRule::a(3.0)}};
  // Expected reporting rule index per snapshot (rows) and configuration
  // (columns); -1 means no endpoint.
  const int golden[40][4] = {
      {-1, -1, -1, -1}, {0, 0, -1, -1}, {-1, -1, -1, -1}, {0, 0, -1, -1},
      {-1, 1, -1, -1},  {-1, -1, -1, -1}, {-1, -1, -1, -1}, {0, 0, -1, 1},
      {-1, -1, 1, -1},  {-1, 3, 1, 0},  {0, 0, 2, 1},    {-1, 3, -1, 0},
      {0, 0, -1, 2},    {-1, 1, 0, -1}, {0, 0, 0, 2},    {0, 0, 0, 1},
      {-1, 1, -1, -1},  {-1, 1, 0, -1}, {-1, -1, 1, -1}, {-1, -1, 1, 0},
      {-1, -1, -1, 0},  {0, 0, -1, -1}, {0, 0, 2, 1},    {0, 0, -1, 1},
      {-1, 3, -1, 0},   {-1, -1, -1, 0}, {-1, 1, -1, 0},  {0, 0, 0, 2},
      {0, 0, 0, 1},     {0, 0, 0, -1},  {0, 0, -1, -1},  {0, 0, -1, -1},
      {-1, -1, -1, -1}, {-1, 3, -1, 0}, {0, 0, -1, 1},   {-1, -1, -1, -1},
      {0, 0, 2, 2},     {0, 0, 0, 0},   {-1, -1, -1, 0}, {-1, -1, -1, -1}};
  int rows = 0, wrong = 0;
  for (std::size_t s = 0; s < snaps.size(); ++s) {
    AsrSnapshot snap;
    snap.silence_s = snaps[s].silence;
    snap.decoded_anything = snaps[s].decoded;
    snap.final_state_reached = std::isfinite(snaps[s].cost);
    snap.cost_relative = snaps[s].cost;
    snap.utterance_s = snaps[s].utterance;
    for (std::size_t c = 0; c < configs.size(); ++c) {
      const auto d = detect_endpoint(snap, configs[c]);
      const int got = d.fired ? static_cast<int>(*d.rule_index) : -1;
      ++rows;
      if (got != golden[s][c] || d.fired != d.rule_index.has_value()) {
        ++wrong;
        std::cerr << "  endpoint mismatch: snapshot " << s << " config " << c << " got " << got
                  << " want " << golden[s][c] << '\n';
      }
    }
  }
  return {wrong == 0, std::to_string(rows) + " snapshot x rule-set rows, " + std::to_string(wrong) +
                          " mismatches"};
}

// ---------------------------------------------------------------------------

struct RandomCascade {
  std::vector<TimedWord> stream;
  double total_ms = 0.0;
  CascadeConfig cfg;
  testing::MockMt mt;
};

RandomCascade random_cascade(std::mt19937& rng) {
  RandomCascade rc;
  double t = std::uniform_real_distribution<double>(0, 800)(rng);
  const int n = static_cast<int>(rng() % 25);
  for (int i = 0; i < n; ++i) {
    std::string w(1 + rng() % 4, 'a');
    for (auto& ch : w) ch = static_cast<char>('a' + rng() % 26);
    const double dur = std::uniform_real_distribution<double>(40, 700)(rng);
    rc.stream.push_back({w, t, dur});
    t += dur + (rng() % 4 == 0 ? std::uniform_real_distribution<double>(500, 3000)(rng)
                               : std::uniform_real_distribution<double>(0, 400)(rng));
  }
  rc.total_ms = stream_duration_ms(rc.stream) + static_cast<double>(rng() % 4) * 137.0;
  auto& cfg = rc.cfg;
  cfg.sz = 1 + static_cast<int>(rng() % 4);
  cfg.alpha = std::uniform_real_distribution<double>(0, 2)(rng);
  cfg.beta = 1 + std::uniform_real_distribution<double>(0, 4)(rng);
  const double blocks[] = {40, 100, 160, 250};
  cfg.block_ms = blocks[rng() % 4];
  cfg.reset_per_endpoint = rng() % 3 == 0;
  cfg.endpoint_rules.clear();
  const int n_rules = 1 + static_cast<int>(rng() % 4);
  for (int r = 0; r < n_rules; ++r) {
    const double secs = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    switch (rng() % 4) {
      case 0: cfg.endpoint_rules.push_back(EndpointRule::a(secs)); break;
      case 1: cfg.endpoint_rules.push_back(EndpointRule::b(secs, std::uniform_real_distribution<double>(0.5, 3)(rng))); break;
      case 2: cfg.endpoint_rules.push_back(EndpointRule::c(secs)); break;
      default: cfg.endpoint_rules.push_back(EndpointRule::d(1 + 5 * secs)); break;
    }
  }
  if (rng() % 2) {
    for (std::size_t i = 0; i < rc.stream.size(); ++i) {
      cfg.asr.cost_script.push_back(rng() % 5 == 0 ? kInfinity
                                                   : std::uniform_real_distribution<double>(0, 4)(rng));
    }
  }
  const unsigned salt = static_cast<unsigned>(rng());
  const int eos_rate = 3 + static_cast<int>(rng() % 20);
  rc.mt = [salt, eos_rate](const TokenSeq& src, const TokenSeq& prefix) {
    std::size_t h = salt;
    for (auto s : src) h = h * 1000003u + static_cast<std::size_t>(s);
    for (auto s : prefix) h = h * 10007u + static_cast<std::size_t>(s);
    h ^= h >> 13;
    if (!src.empty() && src.back() == Vocabulary::kEos && prefix.size() >= src.size()) {
      return static_cast<TokenId>(Vocabulary::kEos);
    }
    return static_cast<TokenId>(h % eos_rate == 0 ? Vocabulary::kEos : 4 + h % 12);
  };
  return rc;
}

Outcome algorithm_trace() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(4242);
  int scripted = 0, trace_mismatch = 0, budget_violations = 0, runs = 0, writes = 0;
  for (int i = 0; i < 1000; ++i) {
    auto rc = random_cascade(rng);
    testing::MockScorer scorer(rc.mt, 16);
    const CascadeMt mt{{&scorer}, testing::tokenize_words, nullptr};
    const auto got = cascade_decode(rc.stream, mt, rc.cfg, rc.total_ms);
    ++runs;
    for (const auto& q : scorer.queries) {
      ++writes;
      if (!(static_cast<double>(q.produced) < rc.cfg.alpha * q.z + rc.cfg.beta)) ++budget_violations;
    }
    if (i < 60) {
      ++scripted;
      const auto want = testing::oracle_cascade(rc.stream, rc.total_ms, rc.cfg, rc.mt);
      if (got.trace.events != want.events || got.tokens != want.tokens ||
          got.truncated != want.truncated || got.x_asr != want.x_asr) {
        ++trace_mismatch;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {trace_mismatch == 0 && budget_violations == 0 && scripted >= 20 && runs >= 1000,
          std::to_string(scripted) + " scripted traces, " + std::to_string(trace_mismatch) +
              " differ from the reference loop; " + std::to_string(runs) + " randomized runs, " +
              std::to_string(writes) + " MT steps, " + std::to_string(budget_violations) +
              " budget violations, " + fmt("%.2f s", secs)};
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> reference_split_sizes(const std::vector<TimedWord>& words) {
  std::vector<std::size_t> sizes;
  std::size_t open = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (open > 0) {
      const double pause_s = (words[i].start_ms - (words[i - 1].start_ms + words[i - 1].duration_ms)) / 1000.0;
      const double limit = open > 40 ? 0.15 : 0.65;
      if (pause_s * 1000.0 > limit * 1000.0) {
        sizes.push_back(open);
        open = 0;
      }
    }
    ++open;
  }
  if (open > 0) sizes.push_back(open);
  return sizes;
}

Outcome segmentation() {
  const auto t0 = std::chrono::steady_clock::now();
  const SegmentOptions defaults;
  const bool expected_defaults =
      defaults.theta_long_s == 0.65 && defaults.theta_short_s == 0.15 && defaults.max_words == 40;
  std::mt19937 rng(99);
  const double gaps[] = {0, 50, 100, 149, 150, 151, 300, 500, 649, 650, 651, 900, 2000};
  int mismatches = 0, invariant_failures = 0;
  for (int s = 0; s < 1000; ++s) {
    std::vector<TimedWord> words;
    const int n = static_cast<int>(rng() % 130);
    double t = 0;
    for (int i = 0; i < n; ++i) {
      const double dur = 50 + static_cast<double>(rng() % 400);
      words.push_back({"w" + std::to_string(i), t, dur});
      t += dur + (rng() % 3 == 0 ? gaps[rng() % 13] : std::uniform_real_distribution<double>(0, 700)(rng));
    }
    const auto segs = segment_stream(words);
    std::vector<std::size_t> sizes;
    std::vector<TimedWord> flat;
    for (const auto& seg : segs) {
      sizes.push_back(seg.size());
      if (seg.empty()) ++invariant_failures;
      flat.insert(flat.end(), seg.begin(), seg.end());
    }
    if (sizes != reference_split_sizes(words)) ++mismatches;
    if (flat != words) ++invariant_failures;
    std::size_t pos = 0;
    for (std::size_t g = 0; g + 1 < segs.size(); ++g) {
      pos += segs[g].size();
      if (words[pos].start_ms - words[pos - 1].end_ms() < 150.0) ++invariant_failures;
    }
  }
  const double secs = seconds_since(t0);
  return {expected_defaults && mismatches == 0 && invariant_failures == 0,
          "1000 streams, " + std::to_string(mismatches) + " differ from the reference scan, " +
              std::to_string(invariant_failures) + " partition violations, defaults 0.65/0.15/40, " +
              fmt("%.2f s", secs)};
}

// ---------------------------------------------------------------------------

Outcome bleu_oracle() {
  std::mt19937 rng(5150);
  const std::vector<std::string> vocab{"the", "a", "cat", "dog", "sat", "on", "mat"};
  int mismatches = 0;
  double worst = 0.0;
  for (int c = 0; c < 500; ++c) {
    const int n = 1 + static_cast<int>(rng() % 10);
    std::vector<Words> hyps, refs;
    for (int s = 0; s < n; ++s) {
      Words h, r;
      const int rl = 1 + static_cast<int>(rng() % 12);
      for (int i = 0; i < rl; ++i) r.push_back(vocab[rng() % vocab.size()]);
      if (rng() % 3 == 0) {
        h = r;
        if (!h.empty() && rng() % 2) h.pop_back();
      } else {
        const int hl = static_cast<int>(rng() % 12);
        for (int i = 0; i < hl; ++i) h.push_back(vocab[rng() % vocab.size()]);
      }
      hyps.push_back(h);
      refs.push_back(r);
    }
    const double got = corpus_bleu(hyps, refs).score;
    const double want = testing::brute_force_bleu(hyps, refs);
    worst = std::max(worst, std::abs(got - want));
    if (std::abs(got - want) > 1e-12) ++mismatches;
  }
  const std::vector<Words> h{{"a", "b", "c", "d"}}, r{{"a", "b", "c", "d", "e"}};
  const double hand = corpus_bleu(h, r).score;
  const bool hand_ok = std::round(hand * 1e4) / 1e4 == 0.7788;
  return {mismatches == 0 && hand_ok,
          "500 corpora, max |diff| " + fmt("%.1e", worst) + "; hand example " + fmt("%.4f", hand)};
}

// ---------------------------------------------------------------------------

Outcome service_equality() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& m = toy_model();
  auto ts = toy_testset(m);
  ts.t2t.resize(150);
  const SweepSystem sys{"toy", {&m.params}};
  const std::vector<WaitK> ks{WaitK(1), WaitK(3), WaitK(7), WaitK::infinite()};
  const auto offline = sweep(std::span<const SweepSystem>(&sys, 1), ks, ts, SweepMode::kT2t);

  EvalTestset et;
  et.mode = SweepMode::kT2t;
  et.t2t = ts.t2t;
  et.source_vocab = &m.bpe.vocab();
  et.target_vocab = &m.bpe.vocab();
  et.detokenize = ts.detokenize;
  EvalService service(et);
  TcpServer server(service, "127.0.0.1", 0);
  server.start();
  TransformerScorer scorer(m.params);
  std::vector<StepScorer*> models{&scorer};
  double worst = 0.0;
  bool complete = true;
  for (const auto& k : ks) {
    OnlinePolicy pol = ts.policy;
    pol.k_eval = k;
    const std::string run = "k" + k.to_string();
    for (std::size_t i = 0; i < et.t2t.size(); ++i) {
      if (k.is_infinite()) {
        TcpClient client("127.0.0.1", server.port());
        drive_waitk_session([&](const nlohmann::json& r) { return client.request(r); }, i, run,
                            models, m.bpe.vocab(), m.bpe.vocab(), pol);
      } else {
        auto conn = service.connect();
        drive_waitk_session(connection_channel(*conn), i, run, models, m.bpe.vocab(),
                            m.bpe.vocab(), pol);
      }
    }
    const auto online = service.score(run);
    const auto ref = std::find_if(offline.begin(), offline.end(),
                                  [&](const TradeoffRecord& r) { return r.k_eval == k; });
    if (!online || ref == offline.end()) {
      complete = false;
      continue;
    }
    worst = std::max({worst, std::abs(online->bleu - ref->bleu), std::abs(online->al_words - ref->al_words)});
  }
  server.stop();

  // Speech mode: cascade client against the offline speech sweep.
  SweepTestset st = ts;
  et.mode = SweepMode::kS2t;
  std::mt19937 rng(8);
  for (std::size_t i = 0; i < 30; ++i) {
    std::vector<TimedWord> stream;
    std::istringstream words(m.test[i].source);
    std::string w;
    double t = 100;
    while (words >> w) {
      stream.push_back({w, t, 250});
      t += 250 + (rng() % 4 == 0 ? 900 : 120);
    }
    st.s2t.push_back({stream, t, m.test[i].target});
  }
  st.cascade.endpoint_rules = default_endpoint_rules();
  et.s2t = st.s2t;
  et.block_ms = st.cascade.block_ms;
  const std::vector<WaitK> betas{WaitK(1), WaitK(4)};
  const auto offline_s2t = sweep(std::span<const SweepSystem>(&sys, 1), betas, st, SweepMode::kS2t);
  EvalService speech(et);
  for (const auto& b : betas) {
    CascadeConfig cfg = st.cascade;
    cfg.beta = b.value();
    const std::string run = "beta" + b.to_string();
    for (std::size_t i = 0; i < et.s2t.size(); ++i) {
      TransformerScorer sc(m.params);
      const CascadeMt mt{{&sc}, st.tokenize, nullptr};
      auto conn = speech.connect();
      drive_cascade_session(connection_channel(*conn), i, run, b.to_string(), mt, cfg, m.bpe.vocab());
    }
    const auto online = speech.score(run);
    const auto ref = std::find_if(offline_s2t.begin(), offline_s2t.end(),
                                  [&](const TradeoffRecord& r) { return r.k_eval == b; });
    if (!online || ref == offline_s2t.end() || !online->al_ms || !ref->al_ms) {
      complete = false;
      continue;
    }
    worst = std::max({worst, std::abs(online->bleu - ref->bleu),
                      std::abs(online->al_words - ref->al_words), std::abs(*online->al_ms - *ref->al_ms)});
  }
  const double secs = seconds_since(t0);
  return {complete && worst <= 1e-12,
          "t2t k in {1,3,7,inf} x 150 items (inf over TCP), s2t beta in {1,4} x 30 streams; max |diff| " +
              fmt("%.1e", worst) + ", " + fmt("%.1f s", secs)};
}

Outcome ensemble_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& m = toy_model();
  const auto ts = toy_testset(m);
  std::vector<Parameters> copies(5, m.params);
  int decodes = 0, differ = 0;
  for (const WaitK k : {WaitK(1), WaitK(3), WaitK::infinite()}) {
    const OnlinePolicy pol{k, 1.0, 50};
    for (std::size_t i = 0; i < 60; ++i) {
      const Parameters* one[] = {&m.params};
      const auto base = online_greedy_decode(one, ts.t2t[i].source, pol).tokens;
      for (int n : {2, 3, 5}) {
        std::vector<const Parameters*> many;
        for (int j = 0; j < n; ++j) many.push_back(&copies[j]);
        ++decodes;
        if (online_greedy_decode(many, ts.t2t[i].source, pol).tokens != base) ++differ;
      }
    }
  }
  return {differ == 0, std::to_string(decodes) + " ensemble decodes (N = 2, 3, 5), " +
                           std::to_string(differ) + " differ from the single model, " +
                           fmt("%.1f s", seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("acceptance checks");
  std::vector<int> only;
  app.add_option("--only", only, "criterion numbers to run");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"wait-k path law", wait_k_law},
      {"causal masking", causality},
      {"incremental equivalence", incremental_equivalence},
      {"gradient check", gradient_check},
      {"multi-path consistency", multipath_consistency},
      {"toy-task learning", toy_learning},
      {"average lagging exactness", al_exactness},
      {"endpoint rule table", endpoint_table},
      {"cascade trace oracle", algorithm_trace},
      {"segmentation oracle", segmentation},
      {"BLEU oracle", bleu_oracle},
      {"service/offline score equality", service_equality},
      {"ensemble sanity", ensemble_sanity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "CRITERION " << id << ' ' << (o.pass ? "PASS" : "FAIL") << " - "
              << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
