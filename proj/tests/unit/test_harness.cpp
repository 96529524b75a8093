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

#include <cstdlib>
#include <sstream>

#include "simulmt/cli.hpp"
#include "simulmt/harness.hpp"
#include "simulmt/service.hpp"
#include "test_util.hpp"

using namespace simulmt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

TradeoffRecord rec(const std::string& sys, WaitK k, double bleu, double al,
                   std::optional<double> ms = std::nullopt) {
  return {sys, k, bleu, al, ms};
}

struct Cli {
  int code = 0;
  std::string out, err;
};

Cli cli(std::vector<std::string> args, const std::string& stdin_text = "") {
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  Cli r;
  r.code = run_cli(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// A text test set over a word vocabulary whose ids double as target pieces.
struct TextFixture {
  Vocabulary vocab;
  EvalTestset ts;
  TextFixture() {
    for (const char* w : {"a", "b", "c", "d"}) vocab.add(w);
    ts.mode = SweepMode::kT2t;
    ts.source_vocab = &vocab;
    ts.target_vocab = &vocab;
    ts.detokenize = [this](std::span<const TokenId> ids) {
      std::string s;
      for (auto id : ids) s += (s.empty() ? "" : " ") + vocab.token_of(id);
      return s;
    };
    ts.t2t.push_back({{4, 5, 6, 7, 4, Vocabulary::kEos}, "a b c d a"});
    ts.t2t.push_back({{7, 4, 5, 6, Vocabulary::kEos}, "d a b c"});
  }
};

// Reads the whole source, then writes the reference and </s>.
void offline_oracle_client(const RequestFn& request, std::size_t item, const std::string& ref) {
  REQUIRE(request({{"act", "START"}, {"item", item}, {"run", "oracle"}, {"k", "inf"}}).value("ok", false));
  for (;;) {
    const auto r = request({{"act", "READ"}});
    if (r.value("eos", false)) break;
    REQUIRE(r.contains("token"));
  }
  std::istringstream words(ref);
  std::string w;
  while (words >> w) REQUIRE(request({{"act", "WRITE"}, {"token", w}}).value("ok", false));
  CHECK(request({{"act", "WRITE"}, {"token", "</s>"}}).value("done", false));
}

}  // namespace

TEST_CASE("sha256 digests") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const auto dir = testing::scratch_dir("sha");
  testing::write_text(dir / "f", "abc");
  CHECK(sha256_file((dir / "f").string()) == sha256_hex("abc"));
  CHECK_THROWS_AS(sha256_file((dir / "missing").string()), ValidationError);
}

TEST_CASE("run config layering and provenance") {
  const auto dir = testing::scratch_dir("cfg");
  RunConfig cfg("segment", {{"theta", 0.65}, {"max_words", 40}, {"in", ""}, {"flag", false},
                            {"list", json::array({"x"})}});
  CHECK(cfg.source_of("theta") == RunConfig::Source::kDefault);
  testing::write_text(dir / "c.json", R"({"segment": {"theta": 0.5, "max_words": 30}})");
  cfg.apply_file((dir / "c.json").string());
  cfg.set("max_words", "20");
  cfg.set("flag", "true");
  cfg.set("list", "a,b");
  CHECK(cfg.number("theta") == 0.5);
  CHECK(cfg.integer("max_words") == 20);
  CHECK(cfg.flag("flag"));
  CHECK(cfg.list("list") == std::vector<std::string>{"a", "b"});
  CHECK(cfg.source_of("theta") == RunConfig::Source::kConfigFile);
  CHECK(cfg.source_of("max_words") == RunConfig::Source::kFlag);
  const auto j = cfg.to_json();
  CHECK(j.at("command") == "segment");
  CHECK(j.at("provenance").at("theta").at("source") == "config");
  REQUIRE(j.at("inputs").size() == 1);
  CHECK(j.at("inputs")[0].at("sha256") == sha256_file((dir / "c.json").string()));

  CHECK_THROWS_AS(cfg.set("nope", 1), ValidationError);
  CHECK_THROWS_AS(cfg.set("max_words", "many"), ValidationError);
  testing::write_text(dir / "bad.json", R"({"unknown_key": 1})");
  CHECK_THROWS_AS(cfg.apply_file((dir / "bad.json").string()), ValidationError);
  testing::write_text(dir / "broken.json", "{");
  CHECK_THROWS_AS(cfg.apply_file((dir / "broken.json").string()), ValidationError);

  cfg.write_sidecar((dir / "out.tsv").string());
  CHECK(json::parse(testing::read_text(dir / "out.tsv.run.json")) == cfg.to_json());
}

TEST_CASE("plot data") {
  const std::vector<TradeoffRecord> one{rec("s", WaitK(3), 0.5, 2.0)};
  const auto text = format_plotdata(one);
  CHECK(text == "system,k,bleu,al_words,al_ms\ns,3,0.500000,2.000000,\n");
  CHECK(parse_plotdata(text) == one);

  const std::vector<TradeoffRecord> many{
      rec("b", WaitK(1), 0.1, 1.0, 900.0), rec("a", WaitK::infinite(), 0.9, 7.0, 3000.0),
      rec("a", WaitK(2), 0.4, 2.0, 1200.0), rec("b", WaitK(5), 0.3, 4.0, 800.0)};
  const auto sorted = parse_plotdata(format_plotdata(many));
  REQUIRE(sorted.size() == 4);
  CHECK(sorted[0].k_eval == WaitK(2));
  CHECK(sorted[1].k_eval == WaitK::infinite());
  CHECK(sorted[2].k_eval == WaitK(5));
  CHECK(sorted[3].k_eval == WaitK(1));
  CHECK(*sorted[1].al_ms == 3000.0);

  CHECK_THROWS_AS(format_plotdata({}), ValidationError);
  CHECK_THROWS_AS(format_plotdata({rec("a,b", WaitK(1), 0, 1)}), ValidationError);
  CHECK_THROWS_AS(parse_plotdata("wrong,header\n"), ValidationError);
  const auto dir = testing::scratch_dir("plot");
  emit_plotdata(many, (dir / "p.csv").string());
  CHECK(read_plotdata((dir / "p.csv").string()) == sorted);
}

TEST_CASE("model bundles") {
  const auto dir = testing::scratch_dir("bundle");
  const auto bpe = BpeModel::train({"a b c", "c b a"}, 20);
  ModelConfig mc;
  mc.d_model = 8;
  mc.n_heads = 2;
  mc.n_enc_layers = mc.n_dec_layers = 1;
  mc.d_ffn = 8;
  mc.src_vocab_size = mc.tgt_vocab_size = bpe.vocab().size();
  ModelBundle b{init_parameters(mc, 1), bpe, bpe, {{"note", 1}}};
  save_model_bundle((dir / "m.ckpt").string(), b);
  const auto back = load_model_bundle((dir / "m.ckpt").string());
  CHECK(back.params == b.params);
  CHECK(back.source_bpe.merges() == bpe.merges());
  CHECK(back.info.at("note") == 1);
  mc.src_vocab_size = mc.tgt_vocab_size = bpe.vocab().size() + 1;
  ModelBundle wrong{init_parameters(mc, 1), bpe, bpe, {}};
  save_model_bundle((dir / "w.ckpt").string(), wrong);
  CHECK_THROWS_AS(load_model_bundle((dir / "w.ckpt").string()), ValidationError);
}

TEST_CASE("service with an offline oracle client") {
  TextFixture fx;
  EvalService service(fx.ts);
  for (std::size_t i = 0; i < fx.ts.t2t.size(); ++i) {
    auto conn = service.connect();
    offline_oracle_client(connection_channel(*conn), i, fx.ts.t2t[i].reference);
  }
  const auto score = service.score("oracle");
  REQUIRE(score);
  CHECK(score->bleu == doctest::Approx(1.0));
  // Every write comes after the full source, so AL is the source length.
  CHECK(score->al_words == doctest::Approx((6.0 + 5.0) / 2));
  CHECK(service.completed("oracle") == 2);
  CHECK(!service.score("other"));
}

TEST_CASE("service rejects bad frames") {
  TextFixture fx;
  EvalService service(fx.ts);
  auto conn = service.connect();
  auto r = conn->handle("{not json");
  CHECK(r.close);
  CHECK(r.body.contains("error"));

  auto fresh = service.connect();
  CHECK(fresh->handle(R"({"act":"READ"})").close);
  auto c2 = service.connect();
  CHECK(c2->handle(R"({"act":"START","item":9})").close);
  auto c3 = service.connect();
  CHECK(!c3->handle(R"({"act":"START","item":0,"run":"r","k":"1"})").close);
  CHECK(c3->handle(R"({"act":"WRITE","token":"zzz"})").close);
  auto c4 = service.connect();
  CHECK(c4->handle(R"({"act":"JUMP"})").close);
  auto c5 = service.connect();
  CHECK(c5->handle(R"({"act":"SCORE","run":"nothing"})").close);
  CHECK(service.completed("r") == 0);
}

TEST_CASE("service over stdio streams and tcp") {
  TextFixture fx;
  const auto dir = testing::scratch_dir("svc");
  EvalService service(fx.ts, (dir / "log.jsonl").string());
  std::istringstream in(
      R"({"act":"START","item":1,"run":"s","k":"1"})"
      "\n"
      R"({"act":"READ"})"
      "\n"
      R"({"act":"WRITE","token":"d"})"
      "\n"
      R"({"act":"READ"})"
      "\n"
      R"({"act":"WRITE","token":"a"})"
      "\n"
      R"({"act":"WRITE","token":"</s>"})"
      "\n");
  std::ostringstream out;
  serve_stream(service, in, out);
  std::istringstream replies(out.str());
  std::string line;
  int n = 0;
  while (std::getline(replies, line)) {
    CHECK(!json::parse(line).contains("error"));
    ++n;
  }
  CHECK(n == 6);
  CHECK(service.completed("s") == 1);
  CHECK(testing::read_text(dir / "log.jsonl").find("\"run\":\"s\"") != std::string::npos);

  TcpServer server(service, "127.0.0.1", 0);
  server.start();
  {
    TcpClient client("127.0.0.1", server.port());
    const RequestFn channel = [&](const json& req) { return client.request(req); };
    offline_oracle_client(channel, 0, "a b c d a");
    TcpClient bad("127.0.0.1", server.port());
    CHECK(bad.request({{"act", "WRITE"}}).contains("error"));
  }
  server.stop();
  CHECK(service.completed("oracle") == 1);
}

TEST_CASE("command line exit codes") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"bogus"}).code == 1);
  CHECK(cli({"segment", "--no-such-flag"}).code == 1);
  CHECK(cli({"segment", "--in", "/nonexistent/file.tsv"}).code == 1);
  CHECK(cli({"segment", "--help"}).code == 0);
}

TEST_CASE("command line pipeline") {
  const auto dir = testing::scratch_dir("cli");
  const auto p = [&](const char* name) { return (dir / name).string(); };
  REQUIRE(cli({"gen-data", "--task", "copy", "--n", "60", "--seed", "3", "--out", p("c.tsv")}).code == 0);
  CHECK(fs::exists(p("c.tsv.run.json")));
  CHECK(cli({"gen-data", "--task", "copy", "--n", "60", "--seed", "3"}).out ==
        testing::read_text(p("c.tsv")));

  setenv(kConfigEnvVar, "", 1);
  testing::write_text(dir / "train.json", R"({"train": {"d_model": 8, "heads": 2}})");
  auto t = cli({"train", "--config", p("train.json"), "--train", p("c.tsv"), "--dev-size", "10",
                "--enc-layers", "1", "--dec-layers", "1", "--d-ffn", "8", "--epochs", "1",
                "--bpe-size", "60", "--out", p("m.ckpt")});
  REQUIRE(t.code == 0);
  const auto side = json::parse(testing::read_text(dir / "m.ckpt.run.json"));
  CHECK(side.at("provenance").at("d_model").at("source") == "config");
  CHECK(side.at("provenance").at("epochs").at("source") == "flag");

  testing::write_text(dir / "src.txt", "abc def\nxyz\n");
  auto tr = cli({"translate", "--model", p("m.ckpt"), "--in", p("src.txt"), "--k", "2",
                 "--beta-len", "3", "--trace", p("trace.jsonl")});
  CHECK(tr.code == 0);
  std::istringstream traces(testing::read_text(dir / "trace.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(traces, line)) {
    const auto j = json::parse(line);
    CHECK(j.contains("tokens"));
    CHECK(j.contains("trace"));
    ++n;
  }
  CHECK(n == 2);

  auto sw = cli({"sweep", "--model", "x=" + p("m.ckpt"), "--test", p("c.tsv"), "--k", "1,inf",
                 "--beta-len", "3", "--out", p("plot.csv")});
  CHECK(sw.code == 0);
  const auto recs = read_plotdata(p("plot.csv"));
  CHECK(recs.size() == 2);

  testing::write_text(dir / "s.tsv", "hello\t0\t300\nworld\t1200\t300\n##\nagain\t0\t200\n");
  auto seg = cli({"segment", "--in", p("s.tsv")});
  CHECK(seg.code == 0);
  CHECK(seg.out == "hello\t0\t300\t0\nworld\t1200\t300\t1\n##\nagain\t0\t200\t0\n");

  auto served = cli({"serve", "--stdio", "--model", p("m.ckpt"), "--test", p("c.tsv")},
                    R"({"act":"START","item":0,"run":"r","k":"1"})"
                    "\n"
                    R"({"act":"READ"})"
                    "\n"
                    "oops\n");
  CHECK(served.code == 0);
  CHECK(served.out.find("\"error\"") != std::string::npos);

  auto gc = cli({"grad-check", "--probes", "10", "--vocab", "8"});
  CHECK(gc.code == 0);
  CHECK(json::parse(gc.out).at("passed") == true);
}
