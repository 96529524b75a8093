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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simulmt/common.hpp"
#include "simulmt/normalize.hpp"
#include "simulmt/online.hpp"

namespace simulmt {

struct TimedWord {
  std::string word;
  double start_ms = 0.0;
  double duration_ms = 0.0;

  double end_ms() const { return start_ms + duration_ms; }
  friend bool operator==(const TimedWord&, const TimedWord&) = default;
};

/// Positive durations, sorted by start, no overlaps.
void validate_stream(std::span<const TimedWord> words);

/// Streams separated by `##` lines; each line `word<TAB>start_ms<TAB>duration_ms`.
std::vector<std::vector<TimedWord>> read_timed_streams(const std::string& path);
void write_timed_streams(const std::string& path,
                         const std::vector<std::vector<TimedWord>>& streams);

// ---------------------------------------------------------------------------
// Endpointing

struct EndpointRule {
  enum class Kind { kA, kB, kC, kD };

  Kind kind = Kind::kA;
  double t_seconds = 0.0;
  double cost_threshold = kInfinity;  // rule (b) only

  /// (a) t seconds of silence, even if nothing was decoded.
  static EndpointRule a(double t) { return {Kind::kA, t, kInfinity}; }
  /// (b) t seconds of silence after decoding something, final state reached
  /// with cost_relative < c.
  static EndpointRule b(double t, double c) { return {Kind::kB, t, c}; }
  /// (c) t seconds of silence after decoding something.
  static EndpointRule c(double t) { return {Kind::kC, t, kInfinity}; }
  /// (d) utterance length reached t seconds.
  static EndpointRule d(double t) { return {Kind::kD, t, kInfinity}; }

  void validate() const;
  std::string name() const;
  /// "a:0.65", "b:1.0:2.5", "c:2", "d:20".
  static EndpointRule parse(const std::string& text);
  friend bool operator==(const EndpointRule&, const EndpointRule&) = default;
};

/// State of the decoder at the current frame.
struct AsrSnapshot {
  double silence_s = 0.0;
  bool decoded_anything = false;
  bool final_state_reached = false;
  double cost_relative = kInfinity;  // infinite iff no final state is active
  double utterance_s = 0.0;

  void validate() const;
};

struct EndpointDecision {
  bool fired = false;
  std::optional<std::size_t> rule_index;  // index into the rule list
};

/// Fires when any rule holds. The reported rule is the first firing one in
/// kind order a, b (declaration order), c, d.
EndpointDecision detect_endpoint(const AsrSnapshot& snap, std::span<const EndpointRule> rules);

/// Default rule set: (a) 0.65 s, (b) 0.5 s with cost < 2, (c) 1.0 s, (d) 20 s.
std::vector<EndpointRule> default_endpoint_rules();

// ---------------------------------------------------------------------------
// Simulated streaming recognizer

struct AsrSimOptions {
  // Per-word cost_relative; empty means every decoded word ends in the best
  // final state (cost 0). Must cover every word when given.
  std::vector<double> cost_script;
  // Probability of replacing a recognized word by another word of the stream.
  double substitution_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Replays a timed transcript as a streaming recognizer. A word is decoded
/// once the consumed audio covers its end; silence is measured from the end
/// of the last decoded word or the utterance start, whichever is later, and
/// is zero while a word is being spoken. On an endpoint every decoded but
/// unemitted word is emitted and a new utterance starts.
class AsrSimulator {
 public:
  explicit AsrSimulator(std::vector<EndpointRule> rules, AsrSimOptions options = {});

  /// Appends newly available words (sorted, after the existing ones).
  void push_words(std::span<const TimedWord> words);

  struct Step {
    AsrSnapshot snapshot;
    EndpointDecision endpoint;
    std::vector<TimedWord> chunk;  // emitted words when the endpoint fired
  };

  /// Moves the audio cursor to `t_ms` (never backwards) and checks the
  /// endpoint rules there.
  Step advance_to(double t_ms);
  AsrSnapshot snapshot() const;
  /// Emits every decoded, unemitted word and starts a new utterance.
  std::vector<TimedWord> flush();

  double now_ms() const { return now_ms_; }
  std::size_t num_emitted() const { return next_emit_; }

 private:
  std::size_t decoded_end() const;
  TimedWord recognized(std::size_t index) const;

  std::vector<EndpointRule> rules_;
  AsrSimOptions options_;
  std::vector<TimedWord> words_;
  std::size_t next_emit_ = 0;
  double utterance_start_ms_ = 0.0;
  double now_ms_ = 0.0;
};

// ---------------------------------------------------------------------------
// ASR + MT cascade

struct CascadeConfig {
  int sz = 1;            // audio blocks per READ
  double alpha = 1.0;    // write budget slope
  double beta = 2.0;     // write budget offset
  double block_ms = 100.0;
  std::vector<EndpointRule> endpoint_rules = default_endpoint_rules();
  // Restart the MT context at every endpoint instead of continuing the
  // target prefix.
  bool reset_per_endpoint = false;
  AsrSimOptions asr;

  void validate() const;
};

/// MT side of the cascade: scorers over a source vocabulary, plus the
/// tokenizer that turns normalized transcript text into source ids.
struct CascadeMt {
  std::vector<StepScorer*> models;
  std::function<TokenSeq(std::string_view)> tokenize;
  const NumberLexicon* lexicon = nullptr;  // default_number_lexicon() when null
};

struct CascadeResult {
  TokenSeq tokens;
  ActionTrace trace;  // READ per sz-block group; WRITE g_ms = audio consumed
  bool truncated = false;
  TokenSeq x_asr;
  std::vector<std::string> transcripts;  // normalized text per emitted chunk
};

/// The READ/WRITE controller. READ feeds audio to the recognizer until an
/// endpoint (or the end of audio) yields a transcript, which is normalized,
/// tokenized and appended to x_asr. WRITE emits greedy tokens while
/// |y| < alpha * |x_asr| + beta, else switches back to READ. Decoding ends on
/// EOS; once the audio is exhausted an EOS marker closes x_asr, and if the
/// budget runs out without EOS the result is flagged truncated.
class CascadeSession {
 public:
  CascadeSession(CascadeMt mt, CascadeConfig config);

  bool done() const { return done_; }
  bool wants_read() const { return !done_ && reading_; }

  /// Consumes one READ worth of audio: the words that started inside it,
  /// the audio position after it, and whether the audio is exhausted.
  void read(std::span<const TimedWord> words, double audio_end_ms, bool last);
  /// One pass of the write branch: emits a token or switches to READ.
  void step();

  const CascadeResult& result() const { return result_; }

 private:
  void append_transcript(const std::vector<TimedWord>& chunk);
  double budget() const;

  CascadeMt mt_;
  CascadeConfig config_;
  AsrSimulator asr_;
  CascadeResult result_;
  bool reading_ = true;
  bool depleted_ = false;
  bool done_ = false;
  double consumed_ms_ = 0.0;
  std::size_t fed_ = 0;
  // Segment-local counts (whole stream unless reset_per_endpoint).
  std::size_t seg_src_start_ = 0;
  TokenSeq seg_output_;
};

/// Runs the controller over an in-memory stream. The audio spans
/// ceil(total_ms / block_ms) blocks; total_ms defaults to the end of the
/// last word.
CascadeResult cascade_decode(std::span<const TimedWord> stream, const CascadeMt& mt,
                             const CascadeConfig& config,
                             std::optional<double> total_ms = std::nullopt);

/// Audio duration of a stream: end of its last word (0 when empty).
double stream_duration_ms(std::span<const TimedWord> stream);

// ---------------------------------------------------------------------------
// Offline segmentation

struct SegmentOptions {
  double theta_long_s = 0.65;
  double theta_short_s = 0.15;
  int max_words = 40;
};

/// Splits before word i when the pause start_i - end_{i-1} exceeds the
/// active threshold: theta_long while the open segment has at most
/// max_words words, theta_short once it has more.
std::vector<std::vector<TimedWord>> segment_stream(std::span<const TimedWord> words,
                                                   const SegmentOptions& options = {});

using SegmentedStream = std::vector<std::vector<TimedWord>>;

/// Documents separated by `##`; segment ids restart at 0 in each document.
void write_segments_tsv(std::ostream& out, const std::vector<SegmentedStream>& documents);
void write_segments_tsv(const std::string& path, const std::vector<SegmentedStream>& documents);

}  // namespace simulmt
