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

#include "simulmt/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <thread>

#include "simulmt/vocabulary.hpp"
#include "text_util.hpp"

namespace simulmt {

BleuSmoothing parse_bleu_smoothing(const std::string& name) {
  if (name == "none") return BleuSmoothing::kNone;
  if (name == "add-one" || name == "add1") return BleuSmoothing::kAddOne;
  throw ValidationError("unknown BLEU smoothing '" + name + "' (expected none or add-one)");
}

namespace {

using NgramCounts = std::map<std::vector<std::string_view>, long long>;

NgramCounts count_ngrams(const Words& words, int n) {
  NgramCounts counts;
  if (static_cast<int>(words.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::vector<std::string_view> key(words.begin() + i, words.begin() + i + n);
    ++counts[key];
  }
  return counts;
}

}  // namespace

BleuBreakdown corpus_bleu(std::span<const Words> hyps, std::span<const Words> refs, int max_n,
                          BleuSmoothing smoothing) {
  if (hyps.size() != refs.size()) throw ValidationError("BLEU: hypothesis/reference count mismatch");
  if (hyps.empty()) throw ValidationError("BLEU: empty corpus");
  if (max_n < 1) throw ValidationError("BLEU: max_n must be at least 1");
  BleuBreakdown b;
  b.matches.assign(max_n, 0);
  b.totals.assign(max_n, 0);
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    b.hyp_len += static_cast<long long>(hyps[s].size());
    b.ref_len += static_cast<long long>(refs[s].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto h = count_ngrams(hyps[s], n);
      const auto r = count_ngrams(refs[s], n);
      for (const auto& [gram, c] : h) {
        b.totals[n - 1] += c;
        auto it = r.find(gram);
        if (it != r.end()) b.matches[n - 1] += std::min(c, it->second);
      }
    }
  }
  if (b.ref_len == 0) throw ValidationError("BLEU: references are empty");
  b.precisions.assign(max_n, 0.0);
  bool any_zero = false;
  double log_sum = 0.0;
  for (int n = 0; n < max_n; ++n) {
    double m = static_cast<double>(b.matches[n]);
    double t = static_cast<double>(b.totals[n]);
    if (smoothing == BleuSmoothing::kAddOne && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    b.precisions[n] = t > 0.0 ? m / t : 0.0;
    if (b.precisions[n] <= 0.0) {
      any_zero = true;
    } else {
      log_sum += std::log(b.precisions[n]);
    }
  }
  if (b.hyp_len == 0) {
    b.brevity_penalty = 0.0;
  } else if (b.hyp_len < b.ref_len) {
    b.brevity_penalty =
        std::exp(1.0 - static_cast<double>(b.ref_len) / static_cast<double>(b.hyp_len));
  } else {
    b.brevity_penalty = 1.0;
  }
  b.score = any_zero ? 0.0 : b.brevity_penalty * std::exp(log_sum / max_n);
  return b;
}

BleuBreakdown corpus_bleu_text(std::span<const std::string> hyps,
                               std::span<const std::string> refs, int max_n,
                               BleuSmoothing smoothing) {
  auto split_all = [](std::span<const std::string> lines) {
    std::vector<Words> out;
    out.reserve(lines.size());
    for (const auto& l : lines) {
      Words w;
      for (auto piece : detail::split_ws(l)) w.emplace_back(piece);
      out.push_back(std::move(w));
    }
    return out;
  };
  const auto h = split_all(hyps);
  const auto r = split_all(refs);
  return corpus_bleu(h, r, max_n, smoothing);
}

double average_lagging(std::span<const double> g, double src_len, int tgt_len, double ideal_step) {
  if (g.empty()) throw ValidationError("AL: no writes");
  if (!(src_len > 0.0)) throw ValidationError("AL: source length must be positive");
  if (tgt_len < 1) throw ValidationError("AL: target length must be at least 1");
  std::size_t tau = std::min<std::size_t>(static_cast<std::size_t>(tgt_len), g.size());
  for (std::size_t t = 0; t < g.size(); ++t) {
    if (g[t] > src_len) throw ValidationError("AL: delay exceeds source length");
  }
  for (std::size_t t = 0; t < g.size(); ++t) {
    if (g[t] >= src_len) {
      tau = t + 1;
      break;
    }
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < tau; ++t) sum += g[t] - static_cast<double>(t) * ideal_step;
  return sum / static_cast<double>(tau);
}

namespace {

// Write events that count for lagging: all non-EOS writes, or the lone EOS.
std::vector<const ActionEvent*> lagging_writes(const ActionTrace& trace) {
  std::vector<const ActionEvent*> all;
  std::vector<const ActionEvent*> content;
  for (const auto& e : trace.events) {
    if (e.kind != ActionEvent::Kind::kWrite) continue;
    all.push_back(&e);
    if (e.token != Vocabulary::kEos) content.push_back(&e);
  }
  if (all.empty()) throw ValidationError("AL: trace has no WRITE");
  return content.empty() ? std::vector<const ActionEvent*>{all.front()} : content;
}

}  // namespace

int lagging_target_length(const ActionTrace& trace) {
  return static_cast<int>(lagging_writes(trace).size());
}

double average_lagging_words(const ActionTrace& trace, int src_len, int tgt_len) {
  if (src_len < 1) throw ValidationError("AL: source length must be at least 1");
  std::vector<double> g;
  for (const auto* e : lagging_writes(trace)) g.push_back(static_cast<double>(e->g_tokens));
  const double step = static_cast<double>(src_len) / static_cast<double>(tgt_len);
  return average_lagging(g, static_cast<double>(src_len), tgt_len, step);
}

double average_lagging_ms(const ActionTrace& trace, double total_src_ms, int tgt_len) {
  if (!(total_src_ms > 0.0)) throw ValidationError("AL: audio duration must be positive");
  std::vector<double> g;
  for (const auto* e : lagging_writes(trace)) {
    if (!e->g_ms) throw ValidationError("AL: WRITE without g_ms");
    g.push_back(*e->g_ms);
  }
  return average_lagging(g, total_src_ms, tgt_len, total_src_ms / static_cast<double>(tgt_len));
}

SweepMode parse_sweep_mode(const std::string& name) {
  if (name == "t2t") return SweepMode::kT2t;
  if (name == "s2t") return SweepMode::kS2t;
  throw ValidationError("unknown mode '" + name + "' (expected t2t or s2t)");
}

TradeoffRecord score_point(const std::string& system_id, WaitK k_eval,
                           std::span<const ScoredItem> items, BleuSmoothing smoothing) {
  if (items.empty()) throw ValidationError("cannot score an empty test set");
  std::vector<std::string> hyps;
  std::vector<std::string> refs;
  double al_words = 0.0;
  double al_ms = 0.0;
  bool have_ms = true;
  for (const auto& it : items) {
    hyps.push_back(it.hypothesis);
    refs.push_back(it.reference);
    const int tgt = lagging_target_length(it.trace);
    al_words += average_lagging_words(it.trace, it.src_tokens, tgt);
    if (it.src_ms && *it.src_ms > 0.0) {
      al_ms += average_lagging_ms(it.trace, *it.src_ms, tgt);
    } else {
      have_ms = false;
    }
  }
  TradeoffRecord rec;
  rec.system_id = system_id;
  rec.k_eval = k_eval;
  rec.bleu = corpus_bleu_text(hyps, refs, 4, smoothing).score;
  const auto n = static_cast<double>(items.size());
  rec.al_words = al_words / n;
  if (have_ms) rec.al_ms = al_ms / n;
  return rec;
}

namespace {

TokenSeq strip_eos(const TokenSeq& tokens) {
  TokenSeq out = tokens;
  if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
  return out;
}

}  // namespace

std::vector<ScoredItem> decode_point(const SweepSystem& system, WaitK k_eval,
                                     const SweepTestset& testset, SweepMode mode) {
  if (system.models.empty()) throw ValidationError("system '" + system.id + "' has no models");
  if (!testset.detokenize) throw ValidationError("test set has no detokenizer");
  std::vector<std::unique_ptr<TransformerScorer>> owned;
  std::vector<StepScorer*> scorers;
  for (const auto* p : system.models) {
    owned.push_back(std::make_unique<TransformerScorer>(*p));
    scorers.push_back(owned.back().get());
  }
  std::vector<ScoredItem> out;
  if (mode == SweepMode::kT2t) {
    if (testset.t2t.empty()) throw ValidationError("empty text test set");
    OnlinePolicy policy = testset.policy;
    policy.k_eval = k_eval;
    for (const auto& item : testset.t2t) {
      auto r = online_greedy_decode(scorers, item.source, policy);
      ScoredItem s;
      s.hypothesis = testset.detokenize(strip_eos(r.tokens));
      s.reference = item.reference;
      s.trace = std::move(r.trace);
      s.src_tokens = static_cast<int>(item.source.size());
      out.push_back(std::move(s));
    }
    return out;
  }
  if (testset.s2t.empty()) throw ValidationError("empty speech test set");
  if (k_eval.is_infinite()) throw ValidationError("speech sweeps need a finite budget offset");
  CascadeConfig cfg = testset.cascade;
  cfg.beta = static_cast<double>(k_eval.value());
  CascadeMt mt{scorers, testset.tokenize, nullptr};
  for (const auto& item : testset.s2t) {
    auto r = cascade_decode(item.stream, mt, cfg, item.total_ms);
    ScoredItem s;
    s.hypothesis = testset.detokenize(strip_eos(r.tokens));
    s.reference = item.reference;
    s.src_tokens = std::max(1, r.trace.num_reads());
    s.src_ms = item.total_ms;
    s.trace = std::move(r.trace);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TradeoffRecord> sweep(std::span<const SweepSystem> systems,
                                  std::span<const WaitK> k_values, const SweepTestset& testset,
                                  SweepMode mode, int threads) {
  if (systems.empty()) throw ValidationError("sweep needs at least one system");
  if (k_values.empty()) throw ValidationError("sweep needs at least one k value");
  std::vector<std::pair<std::size_t, std::size_t>> points;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    for (std::size_t k = 0; k < k_values.size(); ++k) points.emplace_back(s, k);
  }
  std::vector<std::optional<TradeoffRecord>> records(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        const auto& sys = systems[points[i].first];
        const WaitK k = k_values[points[i].second];
        const auto items = decode_point(sys, k, testset, mode);
        auto rec = score_point(sys.id, k, items, testset.smoothing);
        if (mode == SweepMode::kT2t) rec.al_ms.reset();
        records[i] = std::move(rec);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(points.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<TradeoffRecord> out;
  for (auto& r : records) out.push_back(std::move(*r));
  auto k_rank = [](const WaitK& k) { return k.is_infinite() ? INT64_MAX : k.value(); };
  std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    if (a.system_id != b.system_id) return a.system_id < b.system_id;
    return k_rank(a.k_eval) < k_rank(b.k_eval);
  });
  return out;
}

}  // namespace simulmt
