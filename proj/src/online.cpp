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

#include "simulmt/online.hpp"

#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "simulmt/vocabulary.hpp"

namespace simulmt {

void ActionTrace::read(int source_index, std::optional<double> timestamp_ms) {
  ActionEvent e;
  e.kind = ActionEvent::Kind::kRead;
  e.source_index = source_index;
  e.timestamp_ms = timestamp_ms;
  events.push_back(e);
}

void ActionTrace::write(TokenId token, int g_tokens, std::optional<double> g_ms) {
  ActionEvent e;
  e.kind = ActionEvent::Kind::kWrite;
  e.token = token;
  e.g_tokens = g_tokens;
  e.g_ms = g_ms;
  events.push_back(e);
}

int ActionTrace::num_reads() const {
  int n = 0;
  for (const auto& e : events) n += e.kind == ActionEvent::Kind::kRead;
  return n;
}

std::vector<TokenId> ActionTrace::written() const {
  std::vector<TokenId> out;
  for (const auto& e : events) {
    if (e.kind == ActionEvent::Kind::kWrite) out.push_back(e.token);
  }
  return out;
}

std::vector<int> ActionTrace::write_g() const {
  std::vector<int> out;
  for (const auto& e : events) {
    if (e.kind == ActionEvent::Kind::kWrite) out.push_back(e.g_tokens);
  }
  return out;
}

std::vector<double> ActionTrace::write_g_ms() const {
  std::vector<double> out;
  for (const auto& e : events) {
    if (e.kind != ActionEvent::Kind::kWrite) continue;
    if (!e.g_ms) throw ValidationError("trace WRITE without g_ms");
    out.push_back(*e.g_ms);
  }
  return out;
}

nlohmann::json ActionTrace::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  int reads = 0;
  for (const auto& e : events) {
    if (e.kind == ActionEvent::Kind::kRead) {
      ++reads;
      nlohmann::json r = {{"a", "R"}, {"g", reads}};
      if (e.timestamp_ms) r["g_ms"] = *e.timestamp_ms;
      out.push_back(r);
    } else {
      nlohmann::json w = {{"a", "W"}, {"g", e.g_tokens}};
      if (e.g_ms) w["g_ms"] = *e.g_ms;
      out.push_back(w);
    }
  }
  return out;
}

void validate_trace(const ActionTrace& trace, bool truncated) {
  int reads = 0;
  int last_g = 0;
  std::optional<TokenId> last_token;
  for (const auto& e : trace.events) {
    if (e.kind == ActionEvent::Kind::kRead) {
      ++reads;
      continue;
    }
    if (e.g_tokens != reads) throw ValidationError("trace: g_tokens differs from READ count");
    if (e.g_tokens < last_g) throw ValidationError("trace: g_tokens decreased");
    last_g = e.g_tokens;
    last_token = e.token;
  }
  if (!last_token) throw ValidationError("trace without any WRITE");
  if (!truncated && *last_token != Vocabulary::kEos) {
    throw ValidationError("trace: final WRITE is not EOS");
  }
}

void TransformerScorer::reset() {
  enc_ = EncoderState{};
  dec_ = DecoderState{};
}

void TransformerScorer::extend_source(std::span<const TokenId> tokens) {
  if (tokens.empty()) return;
  enc_ = model_.encode_prefix(tokens, std::move(enc_));
}

RowVector TransformerScorer::next_log_probs(TokenId prev, int z) {
  return model_.decode_step(enc_, dec_, prev, z);
}

RowVector ensemble_logprobs(std::span<const RowVector> per_model) {
  if (per_model.empty()) throw ValidationError("ensemble of zero models");
  if (per_model.size() == 1) return per_model.front();
  const auto v = per_model.front().size();
  RowVector mean = RowVector::Zero(v);
  for (const auto& lp : per_model) {
    if (lp.size() != v) throw ValidationError("ensemble members disagree on vocabulary size");
    mean += lp;
  }
  mean /= static_cast<double>(per_model.size());
  return kernels::log_softmax(mean).row(0);
}

TokenId argmax_token(const RowVector& log_probs) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < log_probs.size(); ++i) {
    if (log_probs(i) > log_probs(best)) best = i;
  }
  return static_cast<TokenId>(best);
}

WaitKSession::WaitKSession(std::vector<StepScorer*> models, OnlinePolicy policy)
    : models_(std::move(models)), policy_(policy) {
  if (models_.empty()) throw ValidationError("online decoding needs at least one model");
  for (auto* m : models_) {
    if (m->vocab_size() != models_.front()->vocab_size()) {
      throw ValidationError("ensemble members disagree on vocabulary size");
    }
    m->reset();
  }
}

int WaitKSession::required_source() const {
  if (policy_.k_eval.is_infinite()) return std::numeric_limits<int>::max();
  const long need = static_cast<long>(policy_.k_eval.value()) + static_cast<long>(output_.size());
  return need > std::numeric_limits<int>::max() ? std::numeric_limits<int>::max()
                                                : static_cast<int>(need);
}

bool WaitKSession::wants_read() const {
  return !done_ && !source_finished_ && static_cast<int>(source_.size()) < required_source();
}

void WaitKSession::read(TokenId token, std::optional<double> timestamp_ms) {
  if (source_finished_) throw ValidationError("read after the source ended");
  trace_.read(static_cast<int>(source_.size()), timestamp_ms);
  source_.push_back(token);
}

void WaitKSession::finish_source() {
  source_finished_ = true;
  check_cap();
}

void WaitKSession::check_cap() {
  if (done_ || !source_finished_) return;
  const double cap = policy_.alpha_len * static_cast<double>(source_.size()) + policy_.beta_len;
  if (static_cast<double>(output_.size()) >= cap) {
    done_ = true;
    truncated_ = true;
  }
}

TokenId WaitKSession::write(std::optional<double> g_ms) {
  if (done_) throw ValidationError("write after decoding finished");
  if (wants_read()) throw ValidationError("write before enough source was read");
  if (source_.empty()) throw ValidationError("write with an empty source");
  const int z = std::min(required_source(), static_cast<int>(source_.size()));
  if (fed_ < source_.size()) {
    const std::span<const TokenId> fresh(source_.data() + fed_, source_.size() - fed_);
    for (auto* m : models_) m->extend_source(fresh);
    fed_ = source_.size();
  }
  const TokenId prev = output_.empty() ? Vocabulary::kBos : output_.back();
  std::vector<RowVector> per_model;
  per_model.reserve(models_.size());
  for (auto* m : models_) per_model.push_back(m->next_log_probs(prev, z));
  const TokenId token = argmax_token(ensemble_logprobs(per_model));
  output_.push_back(token);
  trace_.write(token, trace_.num_reads(), g_ms);
  if (token == Vocabulary::kEos) {
    done_ = true;
  } else {
    check_cap();
  }
  return token;
}

DecodeResult online_greedy_decode(std::span<StepScorer* const> models, std::span<const TokenId> x,
                                  const OnlinePolicy& policy) {
  if (x.empty()) throw ValidationError("online decoding needs a non-empty source");
  WaitKSession session(std::vector<StepScorer*>(models.begin(), models.end()), policy);
  std::size_t next = 0;
  while (!session.done()) {
    if (session.wants_read()) {
      if (next < x.size()) {
        session.read(x[next++]);
      } else {
        session.finish_source();
      }
      continue;
    }
    session.write();
  }
  return session.result();
}

DecodeResult online_greedy_decode(std::span<const Parameters* const> models,
                                  std::span<const TokenId> x, const OnlinePolicy& policy) {
  std::vector<std::unique_ptr<TransformerScorer>> owned;
  std::vector<StepScorer*> raw;
  for (const auto* p : models) {
    owned.push_back(std::make_unique<TransformerScorer>(*p));
    raw.push_back(owned.back().get());
  }
  return online_greedy_decode(std::span<StepScorer* const>(raw), x, policy);
}

TokenSeq offline_greedy_decode(const Parameters& params, std::span<const TokenId> x,
                               double alpha_len, int beta_len) {
  const Transformer model(params);
  const auto enc = model.encode_prefix(x);
  DecoderState dec;
  TokenSeq out;
  const double cap = alpha_len * static_cast<double>(x.size()) + beta_len;
  TokenId prev = Vocabulary::kBos;
  while (static_cast<double>(out.size()) < cap) {
    prev = argmax_token(model.decode_step(enc, dec, prev, enc.length()));
    out.push_back(prev);
    if (prev == Vocabulary::kEos) break;
  }
  return out;
}

}  // namespace simulmt
