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

#include "simulmt/cli.hpp"

#include <signal.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>

#include "simulmt/cascade.hpp"
#include "simulmt/corpus.hpp"
#include "simulmt/harness.hpp"
#include "simulmt/metrics.hpp"
#include "simulmt/online.hpp"
#include "simulmt/service.hpp"
#include "simulmt/training.hpp"
#include "text_util.hpp"

namespace simulmt {

namespace {

using json = nlohmann::json;

struct Io {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

struct OptionSpec {
  std::string key;
  json value;
  std::string help;
};

struct Command {
  std::string name;
  std::string help;
  std::vector<OptionSpec> options;
  std::function<void(RunConfig&, Io&)> run;
};

std::string dashed(std::string key) {
  for (auto& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

std::string required(const RunConfig& cfg, const std::string& key) {
  auto v = cfg.str(key);
  if (v.empty()) throw ValidationError("--" + dashed(key) + " is required");
  return v;
}

// Writes to --out when given, else to the command's standard output.
void with_output(const RunConfig& cfg, Io& io, const std::function<void(std::ostream&)>& fn) {
  const auto path = cfg.str("out");
  if (path.empty()) {
    fn(io.out);
    return;
  }
  std::ofstream file(path);
  if (!file) throw RuntimeFailure("cannot write " + path);
  fn(file);
  file.close();
  if (!file) throw RuntimeFailure("write failed: " + path);
  cfg.write_sidecar(path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(detail::rstrip_cr(line));
  return lines;
}

std::vector<WaitK> parse_k_list(const std::vector<std::string>& items) {
  std::vector<WaitK> out;
  for (const auto& s : items) out.push_back(WaitK::parse(s));
  if (out.empty()) throw ValidationError("at least one k value is needed");
  return out;
}

// --- models -----------------------------------------------------------------

struct LoadedSystem {
  std::string id;
  std::vector<ModelBundle> bundles;
};

void check_compatible(const ModelBundle& a, const ModelBundle& b, const std::string& what) {
  if (a.source_bpe.vocab().tokens() != b.source_bpe.vocab().tokens() ||
      a.target_bpe.vocab().tokens() != b.target_bpe.vocab().tokens()) {
    throw ValidationError(what + ": ensemble members use different vocabularies");
  }
}

// "name=a.ckpt+b.ckpt" or "a.ckpt" (named after the file).
LoadedSystem load_system(const std::string& spec, RunConfig& cfg) {
  LoadedSystem sys;
  std::string paths = spec;
  const auto eq = spec.find('=');
  if (eq != std::string::npos) {
    sys.id = spec.substr(0, eq);
    paths = spec.substr(eq + 1);
  }
  std::string stems;
  for (auto piece : detail::split_exact(paths, '+')) {
    const std::string path(piece);
    if (!stems.empty()) stems += '+';
    stems += std::filesystem::path(path).stem().string();
    if (path.empty()) throw ValidationError("empty model path in '" + spec + "'");
    cfg.add_input(path);
    sys.bundles.push_back(load_model_bundle(path));
    if (sys.bundles.size() > 1) check_compatible(sys.bundles.front(), sys.bundles.back(), spec);
  }
  if (sys.id.empty()) sys.id = stems;
  if (sys.id.find_first_of(",\n") != std::string::npos) {
    throw ValidationError("system name '" + sys.id + "' may not contain commas");
  }
  return sys;
}

LoadedSystem load_ensemble(const RunConfig& cfg_const, RunConfig& cfg) {
  const auto models = cfg_const.list("model");
  if (models.empty()) throw ValidationError("--model is required");
  LoadedSystem sys;
  for (const auto& m : models) {
    auto part = load_system(m, cfg);
    for (auto& b : part.bundles) {
      if (!sys.bundles.empty()) check_compatible(sys.bundles.front(), b, m);
      sys.bundles.push_back(std::move(b));
    }
  }
  sys.id = "system";
  return sys;
}

struct Scorers {
  std::vector<std::unique_ptr<TransformerScorer>> owned;
  std::vector<StepScorer*> raw;
  std::vector<const Parameters*> params;

  explicit Scorers(const LoadedSystem& sys) {
    for (const auto& b : sys.bundles) {
      owned.push_back(std::make_unique<TransformerScorer>(b.params));
      raw.push_back(owned.back().get());
      params.push_back(&b.params);
    }
  }
};

std::vector<EndpointRule> parse_rules(const std::vector<std::string>& specs) {
  std::vector<EndpointRule> rules;
  for (const auto& s : specs) rules.push_back(EndpointRule::parse(s));
  if (rules.empty()) throw ValidationError("at least one endpoint rule is needed");
  return rules;
}

CascadeConfig cascade_config(const RunConfig& cfg) {
  CascadeConfig c;
  c.sz = static_cast<int>(cfg.integer("sz"));
  c.alpha = cfg.number("alpha");
  c.beta = cfg.has("beta") ? cfg.number("beta") : c.beta;
  c.block_ms = cfg.number("block_ms");
  c.endpoint_rules = parse_rules(cfg.list("rule"));
  c.reset_per_endpoint = cfg.flag("reset_per_endpoint");
  c.asr.substitution_rate = cfg.number("substitution_rate");
  c.asr.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  c.validate();
  return c;
}

std::vector<OptionSpec> cascade_options() {
  return {{"sz", 1, "audio blocks per READ"},
          {"alpha", 1.0, "write budget slope"},
          {"block_ms", 100.0, "audio block duration in ms"},
          {"rule", json::array({"a:0.65", "b:0.5:2", "c:1", "d:20"}),
           "endpoint rule a:T, b:T:C, c:T or d:T (repeatable)"},
          {"reset_per_endpoint", false, "restart the MT context at each endpoint"},
          {"substitution_rate", 0.0, "simulated recognition error rate"},
          {"seed", 0, "seed for simulated recognition errors"}};
}

// --- gen-data ---------------------------------------------------------------

void cmd_gen_data(RunConfig& cfg, Io& io) {
  const auto task = parse_toy_task(cfg.str("task"));
  const auto n = cfg.integer("n");
  if (n < 1 || n > 100000000) throw ValidationError("--n must be positive");
  const auto format = cfg.str("format");
  if (format != "tsv" && format != "jsonl") throw ValidationError("--format must be tsv or jsonl");
  const auto pairs =
      gen_toy_corpus(static_cast<std::uint64_t>(cfg.integer("seed")), static_cast<int>(n), task);
  with_output(cfg, io, [&](std::ostream& os) {
    for (const auto& p : pairs) {
      if (format == "tsv") {
        os << p.source << '\t' << p.target << '\n';
      } else {
        os << json{{"src", p.source}, {"tgt", p.target}}.dump() << '\n';
      }
    }
  });
}

// --- train ------------------------------------------------------------------

void cmd_train(RunConfig& cfg, Io& io) {
  const auto train_path = required(cfg, "train");
  const auto out_path = required(cfg, "out");
  cfg.add_input(train_path);
  auto train_text = read_parallel_corpus(train_path);
  std::vector<TextPair> dev_text;
  if (!cfg.str("dev").empty()) {
    cfg.add_input(cfg.str("dev"));
    dev_text = read_parallel_corpus(cfg.str("dev"));
  } else {
    const auto n_dev = cfg.integer("dev_size");
    if (n_dev < 1 || static_cast<std::size_t>(n_dev) >= train_text.size()) {
      throw ValidationError("--dev-size must leave training data");
    }
    dev_text.assign(train_text.end() - n_dev, train_text.end());
    train_text.resize(train_text.size() - static_cast<std::size_t>(n_dev));
  }
  if (train_text.empty() || dev_text.empty()) throw ValidationError("empty training or dev set");

  const bool joint = cfg.flag("joint");
  const int bpe_size = static_cast<int>(cfg.integer("bpe_size"));
  const int tgt_bpe_size =
      cfg.integer("tgt_bpe_size") > 0 ? static_cast<int>(cfg.integer("tgt_bpe_size")) : bpe_size;
  ModelBundle bundle;
  if (joint) {
    std::vector<std::string> lines;
    for (const auto& p : train_text) {
      lines.push_back(p.source);
      lines.push_back(p.target);
    }
    bundle.source_bpe = BpeModel::train(lines, bpe_size);
    bundle.target_bpe = bundle.source_bpe;
  } else {
    std::vector<std::string> src;
    std::vector<std::string> tgt;
    for (const auto& p : train_text) {
      src.push_back(p.source);
      tgt.push_back(p.target);
    }
    bundle.source_bpe = BpeModel::train(src, bpe_size);
    bundle.target_bpe = BpeModel::train(tgt, tgt_bpe_size);
  }
  auto train_set = encode_corpus(bundle.source_bpe, bundle.target_bpe, train_text);
  auto dev_set = encode_corpus(bundle.source_bpe, bundle.target_bpe, dev_text);
  if (cfg.number("max_ratio") > 0.0) {
    const auto before = train_set.size();
    train_set = filter_length_ratio(train_set, cfg.number("max_ratio"));
    io.out << "length filter kept " << train_set.size() << " of " << before << " pairs\n";
  }

  TrainConfig tc;
  tc.model.d_model = static_cast<int>(cfg.integer("d_model"));
  tc.model.n_heads = static_cast<int>(cfg.integer("heads"));
  tc.model.n_enc_layers = static_cast<int>(cfg.integer("enc_layers"));
  tc.model.n_dec_layers = static_cast<int>(cfg.integer("dec_layers"));
  tc.model.d_ffn = static_cast<int>(cfg.integer("d_ffn"));
  tc.model.src_vocab_size = bundle.source_bpe.vocab().size();
  tc.model.tgt_vocab_size = bundle.target_bpe.vocab().size();
  tc.model.joint_vocabulary = joint;
  tc.model.tie_decoder_embeddings = cfg.flag("tie_embeddings");
  const auto mode = cfg.str("mode");
  if (mode == "multipath") {
    tc.loss.mode = LossConfig::Mode::kMultiPath;
  } else if (mode == "single") {
    tc.loss.mode = LossConfig::Mode::kSingleK;
    tc.loss.k = WaitK::parse(cfg.str("k"));
  } else {
    throw ValidationError("--mode must be multipath or single");
  }
  tc.loss.smoothing = cfg.number("smoothing");
  tc.adam.base_lr = cfg.number("lr");
  tc.adam.warmup_steps = cfg.integer("warmup");
  tc.epochs = static_cast<int>(cfg.integer("epochs"));
  tc.batch_size = static_cast<int>(cfg.integer("batch_size"));
  tc.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  tc.model.validate();
  tc.loss.validate();

  io.out << "vocab src=" << tc.model.src_vocab_size << " tgt=" << tc.model.tgt_vocab_size
         << " train=" << train_set.size() << " dev=" << dev_set.size() << '\n';
  auto init = init_parameters(tc.model, tc.seed);
  auto result = train(std::move(init), train_set, dev_set, tc, [&](const EpochLog& e) {
    io.out << "epoch " << e.epoch << " train_loss " << e.train_loss << " dev_loss " << e.dev_loss
           << " lr " << e.lr << std::endl;
  });
  io.out << "best epoch " << result.best_epoch << '\n';
  bundle.params = std::move(result.best);
  bundle.info = {{"train_config", tc.to_json()},
                 {"best_epoch", result.best_epoch},
                 {"run", cfg.to_json()}};
  save_model_bundle(out_path, bundle);
  cfg.write_sidecar(out_path);
  if (!cfg.str("log").empty()) {
    write_train_log_csv(cfg.str("log"), result.log);
    cfg.write_sidecar(cfg.str("log"));
  }
}

// --- translate --------------------------------------------------------------

void cmd_translate(RunConfig& cfg, Io& io) {
  auto sys = load_ensemble(cfg, cfg);
  const auto& lead = sys.bundles.front();
  const auto in_path = required(cfg, "in");
  cfg.add_input(in_path);
  OnlinePolicy policy;
  policy.k_eval = WaitK::parse(cfg.str("k"));
  policy.alpha_len = cfg.number("alpha_len");
  policy.beta_len = static_cast<int>(cfg.integer("beta_len"));
  Scorers scorers(sys);
  std::vector<std::string> hyps;
  json traces = json::array();
  for (const auto& raw : read_lines(in_path)) {
    const auto text = raw.substr(0, raw.find('\t'));
    TokenSeq x = lead.source_bpe.encode(text);
    x.push_back(Vocabulary::kEos);
    auto r = online_greedy_decode(std::span<StepScorer* const>(scorers.raw), x, policy);
    TokenSeq content = r.tokens;
    if (!content.empty() && content.back() == Vocabulary::kEos) content.pop_back();
    hyps.push_back(lead.target_bpe.decode(content));
    json pieces = json::array();
    for (auto t : r.tokens) pieces.push_back(lead.target_bpe.vocab().token_of(t));
    traces.push_back({{"id", traces.size()},
                      {"tokens", pieces},
                      {"detok", hyps.back()},
                      {"trace", r.trace.to_json()},
                      {"k", policy.k_eval.to_string()},
                      {"truncated", r.truncated}});
  }
  with_output(cfg, io, [&](std::ostream& os) {
    for (const auto& h : hyps) os << h << '\n';
  });
  if (!cfg.str("trace").empty()) {
    std::ofstream t(cfg.str("trace"));
    if (!t) throw RuntimeFailure("cannot write " + cfg.str("trace"));
    for (const auto& j : traces) t << j.dump() << '\n';
    t.close();
    cfg.write_sidecar(cfg.str("trace"));
  }
}

// --- cascade ----------------------------------------------------------------

void cmd_cascade(RunConfig& cfg, Io& io) {
  auto sys = load_ensemble(cfg, cfg);
  const auto& lead = sys.bundles.front();
  const auto in_path = required(cfg, "in");
  cfg.add_input(in_path);
  const auto streams = read_timed_streams(in_path);
  const auto config = cascade_config(cfg);
  Scorers scorers(sys);
  CascadeMt mt{scorers.raw, [&](std::string_view s) { return lead.source_bpe.encode(s); },
               nullptr};
  with_output(cfg, io, [&](std::ostream& os) {
    for (std::size_t d = 0; d < streams.size(); ++d) {
      const auto r = cascade_decode(streams[d], mt, config);
      TokenSeq content = r.tokens;
      if (!content.empty() && content.back() == Vocabulary::kEos) content.pop_back();
      json pieces = json::array();
      for (auto t : r.tokens) pieces.push_back(lead.target_bpe.vocab().token_of(t));
      json line = {{"id", d},
                   {"tokens", pieces},
                   {"detok", lead.target_bpe.decode(content)},
                   {"trace", r.trace.to_json()},
                   {"transcripts", r.transcripts},
                   {"truncated", r.truncated}};
      const double total = stream_duration_ms(streams[d]);
      if (total > 0.0 && !r.tokens.empty()) {
        line["al_ms"] = average_lagging_ms(r.trace, total, lagging_target_length(r.trace));
      }
      os << line.dump() << '\n';
    }
  });
}

// --- segment ----------------------------------------------------------------

void cmd_segment(RunConfig& cfg, Io& io) {
  const auto in_path = required(cfg, "in");
  cfg.add_input(in_path);
  SegmentOptions opts;
  opts.theta_long_s = cfg.number("theta");
  opts.theta_short_s = cfg.number("theta_short");
  opts.max_words = static_cast<int>(cfg.integer("max_words"));
  std::vector<SegmentedStream> docs;
  for (const auto& s : read_timed_streams(in_path)) docs.push_back(segment_stream(s, opts));
  with_output(cfg, io, [&](std::ostream& os) { write_segments_tsv(os, docs); });
}

// --- sweep ------------------------------------------------------------------

void cmd_sweep(RunConfig& cfg, Io& io) {
  const auto mode = parse_sweep_mode(cfg.str("mode"));
  const auto specs = cfg.list("model");
  if (specs.empty()) throw ValidationError("--model is required");
  std::vector<LoadedSystem> loaded;
  for (const auto& s : specs) loaded.push_back(load_system(s, cfg));
  for (std::size_t i = 1; i < loaded.size(); ++i) {
    check_compatible(loaded.front().bundles.front(), loaded[i].bundles.front(), specs[i]);
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (loaded[i].id == loaded[j].id) throw ValidationError("duplicate system '" + loaded[i].id + "'");
    }
  }
  const auto& lead = loaded.front().bundles.front();
  const auto test_path = required(cfg, "test");
  cfg.add_input(test_path);
  SweepTestset ts;
  ts.detokenize = [&](std::span<const TokenId> ids) { return lead.target_bpe.decode(ids); };
  ts.tokenize = [&](std::string_view s) { return lead.source_bpe.encode(s); };
  ts.policy.alpha_len = cfg.number("alpha_len");
  ts.policy.beta_len = static_cast<int>(cfg.integer("beta_len"));
  ts.smoothing = parse_bleu_smoothing(cfg.str("smoothing"));
  if (mode == SweepMode::kT2t) {
    for (const auto& p : read_parallel_corpus(test_path)) {
      ts.t2t.push_back({encode_pair(lead.source_bpe, lead.target_bpe, p).source, p.target});
    }
  } else {
    const auto refs_path = required(cfg, "refs");
    cfg.add_input(refs_path);
    const auto streams = read_timed_streams(test_path);
    const auto refs = read_lines(refs_path);
    if (refs.size() < streams.size()) throw ValidationError("fewer references than documents");
    for (std::size_t i = 0; i < streams.size(); ++i) {
      const double total = stream_duration_ms(streams[i]);
      if (!(total > 0.0)) throw ValidationError("document " + std::to_string(i) + " has no audio");
      ts.s2t.push_back({streams[i], total, refs[i]});
    }
    ts.cascade = cascade_config(cfg);
  }
  std::vector<SweepSystem> systems;
  for (const auto& l : loaded) {
    SweepSystem s{l.id, {}};
    for (const auto& b : l.bundles) s.models.push_back(&b.params);
    systems.push_back(std::move(s));
  }
  const auto ks = parse_k_list(cfg.list("k"));
  const auto records = sweep(systems, ks, ts, mode, static_cast<int>(cfg.integer("threads")));
  with_output(cfg, io, [&](std::ostream& os) { os << format_plotdata(records); });
}

// --- serve ------------------------------------------------------------------

void cmd_serve(RunConfig& cfg, Io& io) {
  const auto model_path = required(cfg, "model");
  cfg.add_input(model_path);
  const auto bundle = load_model_bundle(model_path);
  const auto test_path = required(cfg, "test");
  cfg.add_input(test_path);
  EvalTestset ts;
  ts.mode = parse_sweep_mode(cfg.str("mode"));
  ts.source_vocab = &bundle.source_bpe.vocab();
  ts.target_vocab = &bundle.target_bpe.vocab();
  ts.detokenize = [&](std::span<const TokenId> ids) { return bundle.target_bpe.decode(ids); };
  ts.block_ms = cfg.number("block_ms");
  ts.smoothing = parse_bleu_smoothing(cfg.str("smoothing"));
  if (ts.mode == SweepMode::kT2t) {
    for (const auto& p : read_parallel_corpus(test_path)) {
      ts.t2t.push_back({encode_pair(bundle.source_bpe, bundle.target_bpe, p).source, p.target});
    }
  } else {
    const auto refs_path = required(cfg, "refs");
    cfg.add_input(refs_path);
    const auto streams = read_timed_streams(test_path);
    const auto refs = read_lines(refs_path);
    if (refs.size() < streams.size()) throw ValidationError("fewer references than documents");
    for (std::size_t i = 0; i < streams.size(); ++i) {
      ts.s2t.push_back({streams[i], stream_duration_ms(streams[i]), refs[i]});
    }
  }
  EvalService service(std::move(ts), cfg.str("log"));
  if (cfg.flag("stdio")) {
    serve_stream(service, io.in, io.out);
  } else {
    sigset_t mask;
    sigemptyset(&mask);
    sigaddset(&mask, SIGINT);
    sigaddset(&mask, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &mask, nullptr);
    TcpServer server(service, cfg.str("host"), static_cast<int>(cfg.integer("port")));
    io.err << "listening on " << cfg.str("host") << ':' << server.port() << std::endl;
    server.start();
    int sig = 0;
    sigwait(&mask, &sig);
    server.stop();
  }
  const auto records = service.records();
  if (!cfg.str("out").empty() && !records.empty()) {
    emit_plotdata(records, cfg.str("out"));
    cfg.write_sidecar(cfg.str("out"));
  }
  for (const auto& r : records) io.err << to_json(r).dump() << '\n';
}

// --- grad-check -------------------------------------------------------------

void cmd_grad_check(RunConfig& cfg, Io& io) {
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  const int vocab = static_cast<int>(cfg.integer("vocab"));
  const int src_len = static_cast<int>(cfg.integer("src_len"));
  const int tgt_len = static_cast<int>(cfg.integer("tgt_len"));
  if (vocab < 5) throw ValidationError("--vocab must be at least 5");
  if (src_len < 1 || tgt_len < 1) throw ValidationError("sequence lengths must be positive");
  ModelConfig mc;
  mc.src_vocab_size = mc.tgt_vocab_size = vocab;
  auto params = init_parameters(mc, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_int_distribution<TokenId> tok(4, vocab - 1);
  TokenSeq x(src_len), y(tgt_len);
  for (auto& t : x) t = tok(rng);
  for (auto& t : y) t = tok(rng);
  x.back() = Vocabulary::kEos;
  y.back() = Vocabulary::kEos;
  const double eps = cfg.number("smoothing");
  LossFn fn;
  const auto mode = cfg.str("mode");
  if (mode == "single") {
    const auto k = WaitK::parse(cfg.str("k"));
    fn = [&, k](const Parameters& p, Gradients* g) { return path_loss(p, x, y, k, eps, g); };
  } else if (mode == "multipath") {
    fn = [&](const Parameters& p, Gradients* g) {
      std::mt19937_64 draw(seed + 2);
      return multi_path_loss(p, x, y, draw, eps, g).loss;
    };
  } else {
    throw ValidationError("--mode must be single or multipath");
  }
  const auto report =
      grad_check(params, fn, static_cast<int>(cfg.integer("probes")), cfg.number("tol"), seed);
  json probes = json::array();
  for (const auto& p : report.probes) {
    probes.push_back({{"name", p.name},
                      {"index", p.index},
                      {"analytic", p.analytic},
                      {"numeric", p.numeric},
                      {"rel_error", p.rel_error}});
  }
  const json summary = {{"probes", report.probes.size()},
                        {"max_rel_error", report.max_rel_error},
                        {"passed", report.passed}};
  io.out << summary.dump() << '\n';
  if (!cfg.str("out").empty()) {
    std::ofstream f(cfg.str("out"));
    if (!f) throw RuntimeFailure("cannot write " + cfg.str("out"));
    json full = summary;
    full["details"] = probes;
    f << full.dump(2) << '\n';
    f.close();
    cfg.write_sidecar(cfg.str("out"));
  }
  if (!report.passed) throw RuntimeFailure("gradient check failed");
}

// ---------------------------------------------------------------------------

std::vector<Command> commands() {
  std::vector<Command> cmds;
  cmds.push_back({"gen-data",
                  "generate a synthetic parallel corpus",
                  {{"task", "digit_to_word", "copy, local_swap or digit_to_word"},
                   {"n", 10000, "number of pairs"},
                   {"seed", 1, "generator seed"},
                   {"format", "tsv", "tsv or jsonl"},
                   {"out", "", "output file (default: stdout)"}},
                  cmd_gen_data});
  cmds.push_back({"train",
                  "train a wait-k transformer",
                  {{"train", "", "training corpus (TSV or JSONL)"},
                   {"dev", "", "dev corpus (default: hold out the last --dev-size pairs)"},
                   {"dev_size", 500, "held-out pairs when --dev is not given"},
                   {"out", "", "model file"},
                   {"log", "", "per-epoch CSV log"},
                   {"joint", true, "one joint subword vocabulary for both sides"},
                   {"bpe_size", 96, "subword vocabulary size (source, or joint)"},
                   {"tgt_bpe_size", 0, "target vocabulary size when not joint (0: same)"},
                   {"tie_embeddings", true, "tie output projection to target embeddings"},
                   {"max_ratio", 0.0, "drop pairs with a longer length ratio (0: off)"},
                   {"mode", "multipath", "multipath or single"},
                   {"k", "inf", "training lag in single mode"},
                   {"smoothing", 0.1, "label smoothing"},
                   {"lr", 0.04, "base learning rate"},
                   {"warmup", 400, "warmup steps"},
                   {"epochs", 30, "training epochs"},
                   {"batch_size", 32, "sentences per batch"},
                   {"seed", 1, "initialization and shuffling seed"},
                   {"d_model", 64, "model width"},
                   {"heads", 4, "attention heads"},
                   {"enc_layers", 2, "encoder layers"},
                   {"dec_layers", 2, "decoder layers"},
                   {"d_ffn", 128, "feed-forward width"}},
                  cmd_train});
  cmds.push_back({"translate",
                  "decode text with a wait-k policy",
                  {{"model", json::array(), "model file (repeat or use a+b to ensemble)"},
                   {"in", "", "source sentences, one per line"},
                   {"out", "", "hypotheses (default: stdout)"},
                   {"trace", "", "JSON-lines action traces"},
                   {"k", "inf", "lag k, or inf"},
                   {"alpha_len", 1.0, "length cap slope"},
                   {"beta_len", 50, "length cap offset"}},
                  cmd_translate});
  auto cascade_opts = cascade_options();
  cascade_opts.insert(cascade_opts.begin(),
                      {{"model", json::array(), "model file (repeat or use a+b to ensemble)"},
                       {"in", "", "timed word streams (TSV)"},
                       {"out", "", "JSON-lines results (default: stdout)"},
                       {"beta", 2.0, "write budget offset"}});
  cmds.push_back({"cascade", "run the speech cascade over timed streams", cascade_opts,
                  cmd_cascade});
  cmds.push_back({"segment",
                  "split timed streams at pauses",
                  {{"in", "", "timed word streams (TSV)"},
                   {"out", "", "segment TSV (default: stdout)"},
                   {"theta", 0.65, "pause threshold in seconds"},
                   {"theta_short", 0.15, "threshold once a segment is long"},
                   {"max_words", 40, "words before the short threshold applies"}},
                  cmd_segment});
  auto sweep_opts = cascade_options();
  sweep_opts.insert(sweep_opts.begin(),
                    {{"model", json::array(), "system as name=a.ckpt[+b.ckpt] (repeatable)"},
                     {"test", "", "test corpus (t2t) or timed streams (s2t)"},
                     {"refs", "", "references, one per document (s2t)"},
                     {"mode", "t2t", "t2t or s2t"},
                     {"k", json::array({"2", "3", "5", "7", "9", "11"}),
                      "lags (t2t) or budget offsets (s2t)"},
                     {"out", "", "plot CSV (default: stdout)"},
                     {"threads", 1, "parallel sweep points"},
                     {"smoothing", "none", "BLEU smoothing: none or add-one"},
                     {"alpha_len", 1.0, "length cap slope"},
                     {"beta_len", 50, "length cap offset"}});
  cmds.push_back({"sweep", "latency/quality sweep", sweep_opts, cmd_sweep});
  cmds.push_back({"serve",
                  "run the streaming evaluation service",
                  {{"model", "", "model file providing the vocabularies"},
                   {"test", "", "test corpus (t2t) or timed streams (s2t)"},
                   {"refs", "", "references, one per document (s2t)"},
                   {"mode", "t2t", "t2t or s2t"},
                   {"host", "127.0.0.1", "bind address"},
                   {"port", 0, "TCP port (0: any free port)"},
                   {"stdio", false, "serve one connection on stdin/stdout"},
                   {"block_ms", 100.0, "audio block duration in ms"},
                   {"smoothing", "none", "BLEU smoothing: none or add-one"},
                   {"log", "", "append-only JSON-lines session log"},
                   {"out", "", "plot CSV written on shutdown"}},
                  cmd_serve});
  cmds.push_back({"grad-check",
                  "compare analytic and numeric gradients",
                  {{"probes", 100, "number of probed weights"},
                   {"tol", 1e-4, "maximum relative error"},
                   {"mode", "single", "single or multipath"},
                   {"k", "2", "lag for single mode"},
                   {"smoothing", 0.1, "label smoothing"},
                   {"vocab", 24, "vocabulary size"},
                   {"src_len", 6, "source length"},
                   {"tgt_len", 7, "target length"},
                   {"seed", 1, "seed"},
                   {"out", "", "JSON report"}},
                  cmd_grad_check});
  return cmds;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
  const auto cmds = commands();
  CLI::App app{"Simultaneous translation toolkit", "simulmt"};
  app.require_subcommand(1);
  struct Bound {
    const Command* command;
    CLI::App* sub;
    std::string config;
    std::map<std::string, std::pair<CLI::Option*, std::vector<std::string>>> values;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const auto& c : cmds) {
    auto b = std::make_unique<Bound>();
    b->command = &c;
    b->sub = app.add_subcommand(c.name, c.help);
    b->sub->add_option("--config", b->config,
                       std::string("JSON settings file (default: $") + kConfigEnvVar + ")");
    for (const auto& o : c.options) {
      auto& slot = b->values[o.key];
      const auto flag = "--" + dashed(o.key);
      std::string help = o.help;
      if (!(o.value.is_string() && o.value.get<std::string>().empty()) &&
          !(o.value.is_array() && o.value.empty())) {
        help += " [" + (o.value.is_string() ? o.value.get<std::string>() : o.value.dump()) + "]";
      }
      if (o.value.is_boolean()) {
        slot.first = b->sub->add_flag(flag, slot.second, help)->expected(0, 1);
      } else if (o.value.is_array()) {
        slot.first = b->sub->add_option(flag, slot.second, help)->delimiter(',');
      } else {
        slot.first = b->sub->add_option(flag, slot.second, help)->expected(1);
      }
    }
    bound.push_back(std::move(b));
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  for (auto& b : bound) {
    if (!b->sub->parsed()) continue;
    try {
      json defaults = json::object();
      for (const auto& o : b->command->options) defaults[o.key] = o.value;
      RunConfig cfg(b->command->name, defaults);
      std::string config_path = b->config;
      if (config_path.empty()) {
        if (const char* env = std::getenv(kConfigEnvVar)) config_path = env;
      }
      if (!config_path.empty()) cfg.apply_file(config_path);
      for (const auto& o : b->command->options) {
        auto& [opt, vals] = b->values[o.key];
        if (opt->count() == 0) continue;
        if (o.value.is_boolean()) {
          cfg.set(o.key, vals.empty() ? json("true") : json(vals.back()));
        } else if (o.value.is_array()) {
          cfg.set(o.key, json(vals));
        } else {
          cfg.set(o.key, json(vals.back()));
        }
      }
      Io io{in, out, err};
      b->command->run(cfg, io);
      return 0;
    } catch (const ValidationError& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    } catch (const nlohmann::json::exception& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      err << "failed: " << e.what() << '\n';
      return 2;
    }
  }
  err << app.help();
  return 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return run_cli(args, std::cin, out, err);
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cin, std::cout, std::cerr);
}

}  // namespace simulmt
