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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "alg1_oracle.hpp"
#include "simulmt/cascade.hpp"
#include "test_util.hpp"

using namespace simulmt;
using simulmt::testing::MockScorer;
using simulmt::testing::tokenize_words;
using simulmt::testing::word_id;

namespace {

AsrSnapshot snap(double silence, bool decoded, double cost, double utterance) {
  AsrSnapshot s;
  s.silence_s = silence;
  s.decoded_anything = decoded;
  s.final_state_reached = std::isfinite(cost);
  s.cost_relative = cost;
  s.utterance_s = utterance;
  return s;
}

// Copies the visible source; past its end, emits EOS when the source is
// closed by the end marker and <unk> otherwise.
TokenId copy_mt(const TokenSeq& src, const TokenSeq& prefix) {
  if (prefix.size() < src.size()) return src[prefix.size()];
  if (!src.empty() && src.back() == Vocabulary::kEos) return Vocabulary::kEos;
  return Vocabulary::kUnk;
}

TokenId never_eos(const TokenSeq&, const TokenSeq&) { return 6; }

ActionEvent rd(int i, double t) { return {ActionEvent::Kind::kRead, i, t, 0, 0, std::nullopt}; }
ActionEvent wr(TokenId tok, int g, double t) {
  return {ActionEvent::Kind::kWrite, 0, std::nullopt, tok, g, t};
}

}  // namespace

TEST_CASE("endpoint examples") {
  const std::vector<EndpointRule> a{EndpointRule::a(0.65)};
  auto d = detect_endpoint(snap(0.7, false, kInfinity, 0.7), a);
  CHECK(d.fired);
  CHECK(d.rule_index == 0);

  const std::vector<EndpointRule> slow{EndpointRule::a(0.5), EndpointRule::c(0.8),
                                       EndpointRule::b(0.5, 3.0)};
  CHECK(!detect_endpoint(snap(0.3, true, 0.0, 3.0), slow).fired);

  const std::vector<EndpointRule> bc{EndpointRule::b(1.0, 1.0), EndpointRule::c(2.0)};
  CHECK(!detect_endpoint(snap(1.2, true, kInfinity, 5.0), bc).fired);

  const std::vector<EndpointRule> dd{EndpointRule::d(20.0)};
  d = detect_endpoint(snap(0.0, true, 0.5, 20.1), dd);
  CHECK(d.fired);
  CHECK(d.rule_index == 0);
}

TEST_CASE("endpoint reporting order") {
  const std::vector<EndpointRule> rules{EndpointRule::d(1.0), EndpointRule::c(0.5),
                                        EndpointRule::b(0.5, 2.0), EndpointRule::b(0.4, 1.0),
                                        EndpointRule::a(2.0)};
  CHECK(detect_endpoint(snap(0.6, true, 0.5, 5.0), rules).rule_index == 2);
  CHECK(detect_endpoint(snap(0.6, true, 1.5, 5.0), rules).rule_index == 2);
  CHECK(detect_endpoint(snap(0.45, true, 0.5, 5.0), rules).rule_index == 3);
  CHECK(detect_endpoint(snap(0.6, true, 2.5, 5.0), rules).rule_index == 1);
  CHECK(detect_endpoint(snap(2.5, true, 0.1, 5.0), rules).rule_index == 4);
  CHECK(detect_endpoint(snap(0.1, true, 0.1, 5.0), rules).rule_index == 0);
  CHECK(!detect_endpoint(snap(0.1, true, 0.1, 0.5), rules).fired);
  CHECK(!detect_endpoint(snap(5.0, false, kInfinity, 0.5), std::vector<EndpointRule>{
                                                              EndpointRule::c(0.1)})
             .fired);
}

TEST_CASE("endpoint rules parse and validate") {
  CHECK(EndpointRule::parse("a:0.65") == EndpointRule::a(0.65));
  CHECK(EndpointRule::parse("b:1.0:2.5") == EndpointRule::b(1.0, 2.5));
  CHECK(EndpointRule::parse("d:20") == EndpointRule::d(20));
  CHECK(EndpointRule::parse(EndpointRule::c(1.5).name()) == EndpointRule::c(1.5));
  for (const char* bad : {"a", "a:x", "b:1", "e:1", "a:0", "b:1:0", "a:-1"}) {
    CHECK_THROWS_AS(EndpointRule::parse(bad), ValidationError);
  }
  AsrSnapshot s = snap(0.1, true, 1.0, 1.0);
  s.final_state_reached = false;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  CHECK_THROWS_AS(snap(-0.1, true, 0.0, 1.0).validate(), ValidationError);
  const auto defaults = default_endpoint_rules();
  REQUIRE(defaults.size() == 4);
  CHECK(defaults[0] == EndpointRule::a(0.65));
}

TEST_CASE("recognizer on pure silence") {
  AsrSimulator asr({EndpointRule::a(0.65)});
  for (int t = 50; t < 650; t += 50) CHECK(!asr.advance_to(t).endpoint.fired);
  const auto step = asr.advance_to(650);
  CHECK(step.endpoint.fired);
  CHECK(step.chunk.empty());
}

TEST_CASE("recognizer emits decoded words on endpoint") {
  AsrSimulator asr({EndpointRule::c(0.65)});
  const std::vector<TimedWord> words{{"one", 0, 200}, {"two", 250, 250}};
  asr.push_words(words);
  CHECK(!asr.advance_to(300).endpoint.fired);
  CHECK(asr.snapshot().silence_s == 0.0);
  CHECK(!asr.advance_to(1100).endpoint.fired);
  const auto step = asr.advance_to(1200);
  CHECK(step.endpoint.fired);
  CHECK(step.chunk == words);
  CHECK(asr.num_emitted() == 2);
}

TEST_CASE("good final state fires rule b before rule c") {
  AsrSimOptions opts;
  opts.cost_script = {0.0, 0.0, 0.0};
  const std::vector<EndpointRule> rules{EndpointRule::c(0.5), EndpointRule::b(0.5, 1.0)};
  AsrSimulator asr(rules, opts);
  asr.push_words(std::vector<TimedWord>{{"a", 0, 100}, {"b", 1000, 100}, {"c", 2000, 100}});
  int fired = 0;
  for (int t = 100; t <= 2600; t += 100) {
    const auto s = asr.advance_to(t);
    if (s.endpoint.fired && !s.chunk.empty()) {
      CHECK(s.endpoint.rule_index == 1);
      ++fired;
    }
  }
  CHECK(fired == 3);

  AsrSimOptions bad;
  bad.cost_script = {0.0};
  AsrSimulator short_script(rules, bad);
  CHECK_THROWS_AS(short_script.push_words(std::vector<TimedWord>{{"a", 0, 1}, {"b", 2, 1}}),
                  ValidationError);
}

TEST_CASE("recognizer emits each word once") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TimedWord> words;
    double t = 0;
    std::uniform_real_distribution<double> gap(0, 900), dur(50, 500);
    for (int i = 0; i < 15; ++i) {
      t += gap(rng);
      words.push_back({"w" + std::to_string(i), t, dur(rng)});
      t += words.back().duration_ms;
    }
    AsrSimulator asr(default_endpoint_rules());
    asr.push_words(words);
    std::vector<TimedWord> seen;
    for (double now = 0; now <= t; now += 70) {
      auto s = asr.advance_to(now);
      seen.insert(seen.end(), s.chunk.begin(), s.chunk.end());
    }
    asr.advance_to(t);
    auto rest = asr.flush();
    seen.insert(seen.end(), rest.begin(), rest.end());
    CHECK(seen == words);
  }
}

TEST_CASE("hand-stepped cascade trace") {
  const std::vector<TimedWord> stream{{"hello", 0, 400}, {"big", 500, 300}, {"world", 1600, 400}};
  MockScorer mt(copy_mt, 16);
  CascadeConfig cfg;
  cfg.endpoint_rules = {EndpointRule::a(0.65)};
  const auto r = cascade_decode(stream, {{&mt}, tokenize_words}, cfg);
  const TokenId h = word_id("hello"), b = word_id("big"), w = word_id("world");
  std::vector<ActionEvent> expect;
  for (int i = 0; i < 15; ++i) expect.push_back(rd(i, 100.0 * (i + 1)));
  for (TokenId tok : {h, b, Vocabulary::kUnk, Vocabulary::kUnk}) expect.push_back(wr(tok, 15, 1500));
  for (int i = 15; i < 20; ++i) expect.push_back(rd(i, 100.0 * (i + 1)));
  expect.push_back(wr(Vocabulary::kEos, 20, 2000));
  CHECK(r.trace.events == expect);
  CHECK(r.x_asr == TokenSeq{h, b, w, Vocabulary::kEos});
  CHECK(r.transcripts == std::vector<std::string>{"hello big", "world"});
  CHECK(!r.truncated);
}

TEST_CASE("write budget after the first endpoint") {
  std::vector<TimedWord> stream;
  for (int i = 0; i < 10; ++i) stream.push_back({"abc", 200.0 * i, 150});
  stream.push_back({"late", 5000, 100});
  MockScorer mt(never_eos, 16);
  CascadeConfig cfg;
  cfg.alpha = 0.5;
  cfg.beta = 1;
  cfg.endpoint_rules = {EndpointRule::c(0.65)};
  const auto r = cascade_decode(stream, {{&mt}, tokenize_words}, cfg);
  int first_burst = 0;
  bool seen_write = false;
  for (const auto& e : r.trace.events) {
    if (e.kind == ActionEvent::Kind::kWrite) {
      seen_write = true;
      ++first_burst;
    } else if (seen_write) {
      break;
    }
  }
  CHECK(first_burst == 6);
  CHECK(r.truncated);
  CHECK(r.tokens.size() == 7);
}

TEST_CASE("zero-length audio") {
  MockScorer mt(copy_mt, 16);
  CascadeConfig cfg;
  const auto r = cascade_decode({}, {{&mt}, tokenize_words}, cfg);
  CHECK(r.trace.events == std::vector<ActionEvent>{rd(0, 0.0), wr(Vocabulary::kEos, 1, 0.0)});
  CHECK(r.x_asr == TokenSeq{Vocabulary::kEos});
}

TEST_CASE("cascade follows the reference loop") {
  std::mt19937 rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<TimedWord> stream;
    double t = std::uniform_real_distribution<double>(0, 500)(rng);
    const int n = std::uniform_int_distribution<int>(0, 12)(rng);
    for (int i = 0; i < n; ++i) {
      std::string w(1, static_cast<char>('a' + rng() % 26));
      w += "x";
      const double dur = std::uniform_real_distribution<double>(80, 600)(rng);
      stream.push_back({w, t, dur});
      t += dur + std::uniform_real_distribution<double>(0, 1500)(rng);
    }
    CascadeConfig cfg;
    cfg.sz = 1 + static_cast<int>(rng() % 3);
    cfg.alpha = std::uniform_real_distribution<double>(0, 1.5)(rng);
    cfg.beta = 1 + static_cast<double>(rng() % 4);
    cfg.block_ms = trial % 2 ? 100 : 160;
    cfg.reset_per_endpoint = trial % 3 == 0;
    const double total = stream_duration_ms(stream) + (rng() % 3) * 250.0;
    const unsigned salt = rng();
    const simulmt::testing::MockMt fn = [salt](const TokenSeq& src, const TokenSeq& prefix) {
      std::size_t h = salt + 31 * src.size() + 7 * prefix.size();
      for (auto s : src) h = h * 131 + static_cast<std::size_t>(s);
      return static_cast<TokenId>(h % 5 == 0 ? Vocabulary::kEos : 4 + h % 10);
    };
    MockScorer mt(fn, 16);
    const auto got = cascade_decode(stream, {{&mt}, tokenize_words}, cfg, total);
    const auto want = simulmt::testing::oracle_cascade(stream, total, cfg, fn);
    CHECK(got.trace.events == want.events);
    CHECK(got.tokens == want.tokens);
    CHECK(got.x_asr == want.x_asr);
    CHECK(got.truncated == want.truncated);
  }
}

TEST_CASE("cascade configuration checks") {
  MockScorer mt(copy_mt, 16);
  CascadeConfig cfg;
  cfg.beta = 0.5;
  CHECK_THROWS_AS(cascade_decode({}, {{&mt}, tokenize_words}, cfg), ValidationError);
  cfg = {};
  cfg.sz = 0;
  CHECK_THROWS_AS(cascade_decode({}, {{&mt}, tokenize_words}, cfg), ValidationError);
  cfg = {};
  const std::vector<TimedWord> stream{{"a", 0, 100}};
  CHECK_THROWS_AS(cascade_decode(stream, {{&mt}, tokenize_words}, cfg, 50.0), ValidationError);
  const std::vector<TimedWord> overlap{{"a", 0, 100}, {"b", 50, 100}};
  CHECK_THROWS_AS(cascade_decode(overlap, {{&mt}, tokenize_words}, cfg), ValidationError);
}

TEST_CASE("segmentation examples") {
  std::vector<TimedWord> words;
  double t = 0;
  for (int i = 0; i < 10; ++i) {
    words.push_back({"w", t, 100});
    t += 100 + (i == 4 ? 700 : 100);
  }
  auto segs = segment_stream(words);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].size() == 5);

  words.clear();
  t = 0;
  for (int i = 0; i < 30; ++i, t += 600) words.push_back({"w", t, 100});
  CHECK(segment_stream(words).size() == 1);

  words.clear();
  t = 0;
  for (int i = 0; i < 45; ++i, t += 300) words.push_back({"w", t, 100});
  segs = segment_stream(words);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].size() == 41);
  CHECK(segs[1].size() == 4);

  const SegmentOptions defaults;
  CHECK(defaults.theta_long_s == 0.65);
  CHECK(defaults.theta_short_s == 0.15);
  CHECK(defaults.max_words == 40);
  CHECK(segment_stream({}).empty());
}

TEST_CASE("timed stream files") {
  const auto dir = simulmt::testing::scratch_dir("streams");
  const std::vector<std::vector<TimedWord>> docs{{{"a", 0, 100}, {"b", 150, 50.5}}, {}, {{"c", 10, 5}}};
  write_timed_streams((dir / "s.tsv").string(), docs);
  CHECK(read_timed_streams((dir / "s.tsv").string()) == docs);
  simulmt::testing::write_text(dir / "bad.tsv", "a\t0\n");
  CHECK_THROWS_AS(read_timed_streams((dir / "bad.tsv").string()), ValidationError);
  simulmt::testing::write_text(dir / "neg.tsv", "a\t0\t-1\n");
  CHECK_THROWS_AS(read_timed_streams((dir / "neg.tsv").string()), ValidationError);

  std::ostringstream out;
  write_segments_tsv(out, {segment_stream(docs[0]), segment_stream(docs[2])});
  CHECK(out.str() == "a\t0\t100\t0\nb\t150\t50.5\t0\n##\nc\t10\t5\t0\n");
}
