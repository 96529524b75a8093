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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "simulmt/bpe.hpp"
#include "simulmt/cascade.hpp"
#include "simulmt/corpus.hpp"
#include "simulmt/harness.hpp"
#include "simulmt/metrics.hpp"
#include "simulmt/normalize.hpp"
#include "simulmt/online.hpp"
#include "simulmt/training.hpp"

namespace py = pybind11;
using namespace simulmt;

namespace {

using WordTuple = std::tuple<std::string, double, double>;

WaitK to_waitk(std::optional<int> k) { return k ? WaitK(*k) : WaitK::infinite(); }

std::vector<TimedWord> to_stream(const std::vector<WordTuple>& words) {
  std::vector<TimedWord> out;
  out.reserve(words.size());
  for (const auto& [w, start, dur] : words) out.push_back({w, start, dur});
  return out;
}

py::list trace_to_list(const ActionTrace& trace, const Vocabulary& vocab) {
  py::list out;
  for (const auto& e : trace.events) {
    py::dict d;
    if (e.kind == ActionEvent::Kind::kRead) {
      d["action"] = "READ";
      d["index"] = e.source_index;
      if (e.timestamp_ms) d["t_ms"] = *e.timestamp_ms;
    } else {
      d["action"] = "WRITE";
      d["token"] = vocab.token_of(e.token);
      d["g"] = e.g_tokens;
      if (e.g_ms) d["g_ms"] = *e.g_ms;
    }
    out.append(d);
  }
  return out;
}

py::dict result_to_dict(const TokenSeq& tokens, const ActionTrace& trace, bool truncated,
                        const BpeModel& target) {
  TokenSeq content = tokens;
  if (!content.empty() && content.back() == Vocabulary::kEos) content.pop_back();
  py::list pieces;
  for (auto t : tokens) pieces.append(target.vocab().token_of(t));
  py::dict d;
  d["text"] = target.decode(content);
  d["tokens"] = pieces;
  d["trace"] = trace_to_list(trace, target.vocab());
  d["truncated"] = truncated;
  return d;
}

class Model {
 public:
  explicit Model(const std::string& path) : bundle_(load_model_bundle(path)) {}

  py::dict translate(const std::string& text, std::optional<int> k, double alpha_len,
                     int beta_len) const {
    TokenSeq x = bundle_.source_bpe.encode(text);
    x.push_back(Vocabulary::kEos);
    const Parameters* models[] = {&bundle_.params};
    DecodeResult r;
    {
      py::gil_scoped_release release;
      r = online_greedy_decode(models, x, {to_waitk(k), alpha_len, beta_len});
    }
    auto d = result_to_dict(r.tokens, r.trace, r.truncated, bundle_.target_bpe);
    d["al"] = r.tokens.empty() ? 0.0
                               : average_lagging_words(r.trace, static_cast<int>(x.size()),
                                                       lagging_target_length(r.trace));
    return d;
  }

  py::dict translate_stream(const std::vector<WordTuple>& words, double alpha, double beta,
                            int sz, double block_ms, bool reset_per_endpoint) const {
    const auto stream = to_stream(words);
    CascadeConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.sz = sz;
    cfg.block_ms = block_ms;
    cfg.reset_per_endpoint = reset_per_endpoint;
    TransformerScorer scorer(bundle_.params);
    const CascadeMt mt{{&scorer},
                       [this](std::string_view s) { return bundle_.source_bpe.encode(s); },
                       nullptr};
    CascadeResult r;
    {
      py::gil_scoped_release release;
      r = cascade_decode(stream, mt, cfg);
    }
    auto d = result_to_dict(r.tokens, r.trace, r.truncated, bundle_.target_bpe);
    d["transcripts"] = r.transcripts;
    const double total = stream_duration_ms(stream);
    if (total > 0.0 && !r.tokens.empty()) {
      d["al_ms"] = average_lagging_ms(r.trace, total, lagging_target_length(r.trace));
    }
    return d;
  }

  const BpeModel& source_bpe() const { return bundle_.source_bpe; }
  const BpeModel& target_bpe() const { return bundle_.target_bpe; }

 private:
  ModelBundle bundle_;
};

}  // namespace

PYBIND11_MODULE(_simulmt, m) {
  m.doc() = "Simultaneous translation with wait-k transformers and ASR cascades";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

  m.attr("PAD") = Vocabulary::kPad;
  m.attr("BOS") = Vocabulary::kBos;
  m.attr("EOS") = Vocabulary::kEos;
  m.attr("UNK") = Vocabulary::kUnk;

  m.def(
      "wait_k_z", [](std::optional<int> k, int t, int src_len) { return wait_k_z(to_waitk(k), t, src_len); },
      py::arg("k"), py::arg("t"), py::arg("src_len"),
      "Source tokens visible when writing target token t; k=None waits for the whole source.");

  py::class_<BpeModel>(m, "BpeModel")
      .def_static("train", &BpeModel::train, py::arg("corpus"), py::arg("vocab_size"))
      .def_static("load", &BpeModel::load_file, py::arg("path"))
      .def("save", &BpeModel::save_file, py::arg("path"))
      .def("encode", &BpeModel::encode, py::arg("text"))
      .def("encode_pieces", &BpeModel::encode_pieces, py::arg("text"))
      .def("decode", [](const BpeModel& b, const TokenSeq& ids) { return b.decode(ids); },
           py::arg("ids"))
      .def_property_readonly("vocab_size", [](const BpeModel& b) { return b.vocab().size(); })
      .def_property_readonly("merges", &BpeModel::merges);

  m.def("number_to_words", &number_to_words, py::arg("n"));
  m.def(
      "asr_normalize",
      [](const std::string& text) { return asr_normalize(text, default_number_lexicon()); },
      py::arg("text"));

  m.def(
      "gen_toy_corpus",
      [](std::uint64_t seed, int n, const std::string& task) {
        std::vector<std::pair<std::string, std::string>> out;
        for (auto& p : gen_toy_corpus(seed, n, parse_toy_task(task))) {
          out.emplace_back(std::move(p.source), std::move(p.target));
        }
        return out;
      },
      py::arg("seed"), py::arg("n_pairs"), py::arg("task"));

  m.def(
      "corpus_bleu",
      [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs, int max_n,
         const std::string& smoothing) {
        const auto b = corpus_bleu_text(hyps, refs, max_n, parse_bleu_smoothing(smoothing));
        py::dict d;
        d["score"] = b.score;
        d["precisions"] = b.precisions;
        d["brevity_penalty"] = b.brevity_penalty;
        d["hyp_len"] = b.hyp_len;
        d["ref_len"] = b.ref_len;
        return d;
      },
      py::arg("hyps"), py::arg("refs"), py::arg("max_n") = 4, py::arg("smoothing") = "none");

  m.def(
      "average_lagging",
      [](const std::vector<double>& g, double src_len, int tgt_len, double ideal_step) {
        return average_lagging(g, src_len, tgt_len, ideal_step);
      },
      py::arg("g"), py::arg("src_len"), py::arg("tgt_len"), py::arg("ideal_step"));

  m.def(
      "detect_endpoint",
      [](double silence_s, bool decoded_anything, double cost_relative, double utterance_s,
         std::optional<std::vector<std::string>> rules) -> std::optional<std::size_t> {
        AsrSnapshot snap;
        snap.silence_s = silence_s;
        snap.decoded_anything = decoded_anything;
        snap.final_state_reached = cost_relative < kInfinity;
        snap.cost_relative = cost_relative;
        snap.utterance_s = utterance_s;
        std::vector<EndpointRule> parsed;
        if (rules) {
          for (const auto& r : *rules) parsed.push_back(EndpointRule::parse(r));
        } else {
          parsed = default_endpoint_rules();
        }
        return detect_endpoint(snap, parsed).rule_index;
      },
      py::arg("silence_s"), py::arg("decoded_anything"), py::arg("cost_relative") = kInfinity,
      py::arg("utterance_s") = 0.0, py::arg("rules") = py::none(),
      "Index of the reporting endpoint rule, or None when no rule fires.");

  m.def(
      "segment_stream",
      [](const std::vector<WordTuple>& words, double theta_long_s, double theta_short_s,
         int max_words) {
        const auto segs = segment_stream(to_stream(words), {theta_long_s, theta_short_s, max_words});
        std::vector<std::vector<WordTuple>> out;
        for (const auto& seg : segs) {
          auto& o = out.emplace_back();
          for (const auto& w : seg) o.emplace_back(w.word, w.start_ms, w.duration_ms);
        }
        return out;
      },
      py::arg("words"), py::arg("theta_long_s") = 0.65, py::arg("theta_short_s") = 0.15,
      py::arg("max_words") = 40, "Splits (word, start_ms, duration_ms) tuples at pauses.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("path"))
      .def("translate", &Model::translate, py::arg("text"), py::arg("k") = py::none(),
           py::arg("alpha_len") = 1.0, py::arg("beta_len") = 50)
      .def("translate_stream", &Model::translate_stream, py::arg("words"), py::arg("alpha") = 1.0,
           py::arg("beta") = 2.0, py::arg("sz") = 1, py::arg("block_ms") = 100.0,
           py::arg("reset_per_endpoint") = false)
      .def_property_readonly("source_bpe", &Model::source_bpe, py::return_value_policy::reference_internal)
      .def_property_readonly("target_bpe", &Model::target_bpe, py::return_value_policy::reference_internal);

#ifdef SIMULMT_VERSION
  m.attr("__version__") = SIMULMT_VERSION;
#endif
}
