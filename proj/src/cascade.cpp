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

#include "simulmt/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "simulmt/vocabulary.hpp"
#include "text_util.hpp"

namespace simulmt {

void validate_stream(std::span<const TimedWord> words) {
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (!std::isfinite(w.start_ms) || !std::isfinite(w.duration_ms) || w.start_ms < 0.0) {
      throw ValidationError("timed word " + std::to_string(i) + ": bad timing");
    }
    if (w.duration_ms <= 0.0) {
      throw ValidationError("timed word " + std::to_string(i) + ": duration must be positive");
    }
    if (i > 0) {
      if (w.start_ms < words[i - 1].start_ms) {
        throw ValidationError("timed stream not sorted at word " + std::to_string(i));
      }
      if (w.start_ms < words[i - 1].end_ms()) {
        throw ValidationError("timed words overlap at word " + std::to_string(i));
      }
    }
  }
}

namespace {

double parse_real(std::string_view text, const std::string& what, std::size_t line) {
  const std::string s(text);
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  }
}

std::string format_ms(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::vector<std::vector<TimedWord>> read_timed_streams(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<std::vector<TimedWord>> streams(1);
  std::string line;
  std::size_t lineno = 0;
  bool saw_content = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::rstrip_cr(std::move(line));
    if (line.empty()) continue;
    if (line == "##") {
      if (saw_content) streams.emplace_back();
      saw_content = true;
      continue;
    }
    saw_content = true;
    auto fields = detail::split_exact(line, '\t');
    if (fields.size() < 3) {
      throw ValidationError("line " + std::to_string(lineno) + ": expected word, start_ms, duration_ms");
    }
    TimedWord w{std::string(fields[0]), parse_real(fields[1], "start_ms", lineno),
                parse_real(fields[2], "duration_ms", lineno)};
    streams.back().push_back(std::move(w));
  }
  for (const auto& s : streams) validate_stream(s);
  return streams;
}

void write_timed_streams(const std::string& path,
                         const std::vector<std::vector<TimedWord>>& streams) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  for (std::size_t d = 0; d < streams.size(); ++d) {
    if (d > 0) out << "##\n";
    for (const auto& w : streams[d]) {
      out << w.word << '\t' << format_ms(w.start_ms) << '\t' << format_ms(w.duration_ms) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------

void EndpointRule::validate() const {
  if (!(t_seconds > 0.0) || !std::isfinite(t_seconds)) {
    throw ValidationError("endpoint rule " + name() + ": t must be positive");
  }
  if (kind == Kind::kB && !(cost_threshold > 0.0)) {
    throw ValidationError("endpoint rule " + name() + ": cost threshold must be positive");
  }
}

std::string EndpointRule::name() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::kA: os << "a"; break;
    case Kind::kB: os << "b"; break;
    case Kind::kC: os << "c"; break;
    case Kind::kD: os << "d"; break;
  }
  os << ':' << t_seconds;
  if (kind == Kind::kB) os << ':' << cost_threshold;
  return os.str();
}

EndpointRule EndpointRule::parse(const std::string& text) {
  auto parts = detail::split_exact(text, ':');
  auto num = [&](std::string_view piece) {
    const std::string s(piece);
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ValidationError("bad endpoint rule '" + text + "'");
    }
  };
  EndpointRule r;
  if (parts.size() == 3 && parts[0] == "b") {
    r = b(num(parts[1]), num(parts[2]));
  } else if (parts.size() == 2 && parts[0] == "a") {
    r = a(num(parts[1]));
  } else if (parts.size() == 2 && parts[0] == "c") {
    r = c(num(parts[1]));
  } else if (parts.size() == 2 && parts[0] == "d") {
    r = d(num(parts[1]));
  } else {
    throw ValidationError("bad endpoint rule '" + text + "' (expected a:T, b:T:C, c:T or d:T)");
  }
  r.validate();
  return r;
}

void AsrSnapshot::validate() const {
  if (!(silence_s >= 0.0) || !(utterance_s >= 0.0)) {
    throw ValidationError("snapshot durations must be non-negative");
  }
  if (std::isinf(cost_relative) != !final_state_reached) {
    throw ValidationError("cost_relative must be infinite exactly when no final state is active");
  }
  if (std::isnan(cost_relative)) throw ValidationError("cost_relative is NaN");
}

namespace {

bool rule_fires(const EndpointRule& r, const AsrSnapshot& s) {
  switch (r.kind) {
    case EndpointRule::Kind::kA:
      return s.silence_s >= r.t_seconds;
    case EndpointRule::Kind::kB:
      return s.decoded_anything && s.silence_s >= r.t_seconds && s.final_state_reached &&
             s.cost_relative < r.cost_threshold;
    case EndpointRule::Kind::kC:
      return s.decoded_anything && s.silence_s >= r.t_seconds;
    case EndpointRule::Kind::kD:
      return s.utterance_s >= r.t_seconds;
  }
  return false;
}

}  // namespace

EndpointDecision detect_endpoint(const AsrSnapshot& snap, std::span<const EndpointRule> rules) {
  snap.validate();
  for (auto kind : {EndpointRule::Kind::kA, EndpointRule::Kind::kB, EndpointRule::Kind::kC,
                    EndpointRule::Kind::kD}) {
    for (std::size_t i = 0; i < rules.size(); ++i) {
      if (rules[i].kind == kind && rule_fires(rules[i], snap)) return {true, i};
    }
  }
  return {};
}

std::vector<EndpointRule> default_endpoint_rules() {
  return {EndpointRule::a(0.65), EndpointRule::b(0.5, 2.0), EndpointRule::c(1.0),
          EndpointRule::d(20.0)};
}

// ---------------------------------------------------------------------------

AsrSimulator::AsrSimulator(std::vector<EndpointRule> rules, AsrSimOptions options)
    : rules_(std::move(rules)), options_(std::move(options)) {
  for (const auto& r : rules_) r.validate();
  if (!(options_.substitution_rate >= 0.0 && options_.substitution_rate <= 1.0)) {
    throw ValidationError("substitution rate must lie in [0, 1]");
  }
}

void AsrSimulator::push_words(std::span<const TimedWord> words) {
  std::vector<TimedWord> joined;
  if (!words_.empty()) joined.push_back(words_.back());
  joined.insert(joined.end(), words.begin(), words.end());
  validate_stream(joined);
  words_.insert(words_.end(), words.begin(), words.end());
  if (!options_.cost_script.empty() && options_.cost_script.size() < words_.size()) {
    throw ValidationError("cost script does not cover every word");
  }
}

std::size_t AsrSimulator::decoded_end() const {
  std::size_t i = next_emit_;
  while (i < words_.size() && words_[i].end_ms() <= now_ms_) ++i;
  return i;
}

TimedWord AsrSimulator::recognized(std::size_t index) const {
  TimedWord w = words_[index];
  if (options_.substitution_rate > 0.0 && words_.size() > 1) {
    std::mt19937_64 rng(options_.seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < options_.substitution_rate) {
      std::uniform_int_distribution<std::size_t> pick(0, words_.size() - 1);
      w.word = words_[pick(rng)].word;
    }
  }
  return w;
}

AsrSnapshot AsrSimulator::snapshot() const {
  AsrSnapshot s;
  const std::size_t end = decoded_end();
  double last = utterance_start_ms_;
  if (end > next_emit_) last = std::max(last, words_[end - 1].end_ms());
  const bool speaking = end < words_.size() && words_[end].start_ms < now_ms_;
  s.silence_s = speaking ? 0.0 : std::max(0.0, now_ms_ - last) / 1000.0;
  s.decoded_anything = end > next_emit_;
  if (s.decoded_anything) {
    s.cost_relative = options_.cost_script.empty() ? 0.0 : options_.cost_script[end - 1];
    s.final_state_reached = std::isfinite(s.cost_relative);
    if (!s.final_state_reached) s.cost_relative = kInfinity;
  }
  s.utterance_s = std::max(0.0, now_ms_ - utterance_start_ms_) / 1000.0;
  return s;
}

AsrSimulator::Step AsrSimulator::advance_to(double t_ms) {
  if (!(t_ms >= now_ms_)) throw ValidationError("ASR time cannot move backwards");
  now_ms_ = t_ms;
  Step step;
  step.snapshot = snapshot();
  step.endpoint = detect_endpoint(step.snapshot, rules_);
  if (step.endpoint.fired) step.chunk = flush();
  return step;
}

std::vector<TimedWord> AsrSimulator::flush() {
  const std::size_t end = decoded_end();
  std::vector<TimedWord> chunk;
  for (std::size_t i = next_emit_; i < end; ++i) chunk.push_back(recognized(i));
  next_emit_ = end;
  utterance_start_ms_ = now_ms_;
  return chunk;
}

// ---------------------------------------------------------------------------

void CascadeConfig::validate() const {
  if (sz < 1) throw ValidationError("sz must be at least 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be >= 0");
  if (!(beta >= 1.0) || !std::isfinite(beta)) throw ValidationError("beta must be >= 1");
  if (!(block_ms > 0.0) || !std::isfinite(block_ms)) throw ValidationError("block_ms must be > 0");
  for (const auto& r : endpoint_rules) r.validate();
}

CascadeSession::CascadeSession(CascadeMt mt, CascadeConfig config)
    : mt_(std::move(mt)), config_(std::move(config)), asr_(config_.endpoint_rules, config_.asr) {
  config_.validate();
  if (mt_.models.empty()) throw ValidationError("cascade needs at least one MT model");
  if (!mt_.tokenize) throw ValidationError("cascade needs a tokenizer");
  for (auto* m : mt_.models) m->reset();
}

double CascadeSession::budget() const {
  const auto src = static_cast<double>(result_.x_asr.size() - seg_src_start_);
  return config_.alpha * src + config_.beta;
}

void CascadeSession::append_transcript(const std::vector<TimedWord>& chunk) {
  std::string text;
  for (const auto& w : chunk) {
    if (!text.empty()) text += ' ';
    text += w.word;
  }
  const auto& lex = mt_.lexicon ? *mt_.lexicon : default_number_lexicon();
  const std::string norm = asr_normalize(text, lex);
  TokenSeq ids = norm.empty() ? TokenSeq{} : mt_.tokenize(norm);
  if (depleted_) ids.push_back(Vocabulary::kEos);
  if (ids.empty()) return;
  result_.transcripts.push_back(norm);
  if (config_.reset_per_endpoint) {
    seg_src_start_ = result_.x_asr.size();
    seg_output_.clear();
    for (auto* m : mt_.models) m->reset();
  }
  result_.x_asr.insert(result_.x_asr.end(), ids.begin(), ids.end());
  for (auto* m : mt_.models) m->extend_source(ids);
}

void CascadeSession::read(std::span<const TimedWord> words, double audio_end_ms, bool last) {
  if (!wants_read()) throw ValidationError("cascade: READ while not reading");
  if (audio_end_ms < consumed_ms_) throw ValidationError("cascade: audio position moved backwards");
  consumed_ms_ = audio_end_ms;
  fed_ += words.size();
  result_.trace.read(result_.trace.num_reads(), consumed_ms_);
  asr_.push_words(words);
  auto step = asr_.advance_to(consumed_ms_);
  if (last) {
    depleted_ = true;
    auto rest = asr_.flush();
    step.chunk.insert(step.chunk.end(), rest.begin(), rest.end());
    append_transcript(step.chunk);
    reading_ = false;
  } else if (step.endpoint.fired) {
    append_transcript(step.chunk);
    reading_ = false;
  }
}

void CascadeSession::step() {
  if (done_ || reading_) throw ValidationError("cascade: WRITE step while reading");
  const std::size_t seg_src = result_.x_asr.size() - seg_src_start_;
  const bool closed = !seg_output_.empty() && seg_output_.back() == Vocabulary::kEos;
  if (closed) {
    reading_ = true;
    return;
  }
  if (seg_src == 0 || !(static_cast<double>(seg_output_.size()) < budget())) {
    if (depleted_) {
      done_ = true;
      result_.truncated = true;
    } else {
      reading_ = true;
    }
    return;
  }
  const TokenId prev = seg_output_.empty() ? Vocabulary::kBos : seg_output_.back();
  std::vector<RowVector> lps;
  lps.reserve(mt_.models.size());
  for (auto* m : mt_.models) lps.push_back(m->next_log_probs(prev, static_cast<int>(seg_src)));
  const TokenId tok = argmax_token(ensemble_logprobs(lps));
  if (tok == Vocabulary::kEos && config_.reset_per_endpoint && !depleted_) {
    reading_ = true;
    seg_output_.push_back(tok);
    return;
  }
  result_.trace.write(tok, result_.trace.num_reads(), consumed_ms_);
  result_.tokens.push_back(tok);
  seg_output_.push_back(tok);
  if (tok == Vocabulary::kEos) done_ = true;
}

double stream_duration_ms(std::span<const TimedWord> stream) {
  return stream.empty() ? 0.0 : stream.back().end_ms();
}

CascadeResult cascade_decode(std::span<const TimedWord> stream, const CascadeMt& mt,
                             const CascadeConfig& config, std::optional<double> total_ms) {
  validate_stream(stream);
  config.validate();
  const double total = total_ms.value_or(stream_duration_ms(stream));
  if (!(total >= stream_duration_ms(stream))) {
    throw ValidationError("audio duration shorter than the timed stream");
  }
  const auto n_blocks = static_cast<long long>(std::ceil(total / config.block_ms));
  CascadeSession session(mt, config);
  long long z = 0;
  std::size_t fed = 0;
  while (!session.done()) {
    if (session.wants_read()) {
      z = std::min<long long>(n_blocks, z + config.sz);
      const double end = std::min(static_cast<double>(z) * config.block_ms, total);
      std::size_t upto = fed;
      while (upto < stream.size() && stream[upto].start_ms < end) ++upto;
      session.read(stream.subspan(fed, upto - fed), end, z == n_blocks);
      fed = upto;
    } else {
      session.step();
    }
  }
  return session.result();
}

// ---------------------------------------------------------------------------

std::vector<std::vector<TimedWord>> segment_stream(std::span<const TimedWord> words,
                                                   const SegmentOptions& options) {
  validate_stream(words);
  if (!(options.theta_short_s >= 0.0) || !(options.theta_long_s >= 0.0)) {
    throw ValidationError("segmentation thresholds must be non-negative");
  }
  if (options.max_words < 1) throw ValidationError("max_words must be at least 1");
  std::vector<std::vector<TimedWord>> segments;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (!segments.empty()) {
      const auto& open = segments.back();
      const double theta = static_cast<int>(open.size()) > options.max_words
                               ? options.theta_short_s
                               : options.theta_long_s;
      const double gap_ms = words[i].start_ms - words[i - 1].end_ms();
      if (gap_ms > theta * 1000.0) segments.emplace_back();
    } else {
      segments.emplace_back();
    }
    segments.back().push_back(words[i]);
  }
  return segments;
}

void write_segments_tsv(const std::string& path, const std::vector<SegmentedStream>& documents) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  write_segments_tsv(out, documents);
}

void write_segments_tsv(std::ostream& out, const std::vector<SegmentedStream>& documents) {
  for (std::size_t d = 0; d < documents.size(); ++d) {
    if (d > 0) out << "##\n";
    const auto& segments = documents[d];
    for (std::size_t s = 0; s < segments.size(); ++s) {
      for (const auto& w : segments[s]) {
        out << w.word << '\t' << format_ms(w.start_ms) << '\t' << format_ms(w.duration_ms)
            << '\t' << s << '\n';
      }
    }
  }
}

}  // namespace simulmt
