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

#include "simulmt/transformer.hpp"

#include <cmath>
#include <numeric>

#include "kernels.hpp"

namespace simulmt {
namespace {

void append_rows(Matrix& dst, const Matrix& rows) {
  if (dst.size() == 0) {
    dst = rows;
    return;
  }
  const auto old = dst.rows();
  dst.conservativeResize(old + rows.rows(), Eigen::NoChange);
  dst.bottomRows(rows.rows()) = rows;
}

}  // namespace

Transformer::Transformer(const Parameters& params)
    : params_(params),
      embed_scale_(std::sqrt(static_cast<double>(params.config().d_model))),
      embed_src_(params.slot("embed.src")),
      embed_tgt_(params.slot("embed.tgt")),
      out_weight_(params.slot("out.weight")),
      out_bias_(params.slot("out.bias")) {
  const auto& cfg = params.config();
  cfg.validate();
  auto norm = [&](const std::string& p) { return NormSlots{params.slot(p + ".g"), params.slot(p + ".b")}; };
  auto attn = [&](const std::string& p) {
    return AttnSlots{params.slot(p + ".wq"), params.slot(p + ".bq"), params.slot(p + ".wk"),
                     params.slot(p + ".bk"), params.slot(p + ".wv"), params.slot(p + ".bv"),
                     params.slot(p + ".wo"), params.slot(p + ".bo")};
  };
  auto ffn = [&](const std::string& p) {
    return FfnSlots{params.slot(p + ".w1"), params.slot(p + ".b1"), params.slot(p + ".w2"),
                    params.slot(p + ".b2")};
  };
  for (int l = 0; l < cfg.n_enc_layers; ++l) {
    const auto p = "enc." + std::to_string(l);
    enc_.push_back({norm(p + ".ln1"), attn(p + ".attn"), norm(p + ".ln2"), ffn(p + ".ffn")});
  }
  enc_ln_ = norm("enc.ln");
  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    const auto p = "dec." + std::to_string(l);
    dec_.push_back({norm(p + ".ln1"), attn(p + ".self"), norm(p + ".ln2"), attn(p + ".cross"),
                    norm(p + ".ln3"), ffn(p + ".ffn")});
  }
  dec_ln_ = norm("dec.ln");
}

Matrix Transformer::embed_rows(int table_slot, std::span<const TokenId> ids, int first_pos) const {
  const auto& tab = t(table_slot);
  Matrix out(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = ids[i];
    if (id < 0 || id >= tab.rows()) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tab.rows()));
    }
    const auto r = static_cast<Eigen::Index>(i);
    out.row(r) = embed_scale_ * tab.row(id);
    kernels::add_sinusoid(out.row(r), first_pos + static_cast<int>(i));
  }
  return out;
}

EncoderState Transformer::encode_prefix(std::span<const TokenId> new_tokens,
                                        EncoderState state) const {
  if (new_tokens.empty()) throw ValidationError("encode_prefix needs at least one token");
  const auto& cfg = config();
  const auto n_enc = static_cast<std::size_t>(cfg.n_enc_layers);
  const auto n_dec = static_cast<std::size_t>(cfg.n_dec_layers);
  if (state.layer_outputs.empty()) {
    state.layer_outputs.resize(n_enc);
    state.self_keys.resize(n_enc);
    state.self_values.resize(n_enc);
    state.cross_keys.resize(n_dec);
    state.cross_values.resize(n_dec);
  }
  const int z_old = state.length();
  Matrix x = embed_rows(embed_src_, new_tokens, z_old);
  std::vector<int> visible(new_tokens.size());
  std::iota(visible.begin(), visible.end(), z_old + 1);

  for (std::size_t l = 0; l < n_enc; ++l) {
    const auto& L = enc_[l];
    Matrix h = kernels::layer_norm(x, t(L.ln1.g), t(L.ln1.b));
    const Matrix q = kernels::linear(h, t(L.attn.wq), t(L.attn.bq));
    append_rows(state.self_keys[l], kernels::linear(h, t(L.attn.wk), t(L.attn.bk)));
    append_rows(state.self_values[l], kernels::linear(h, t(L.attn.wv), t(L.attn.bv)));
    const Matrix a = kernels::masked_attention(q, state.self_keys[l], state.self_values[l],
                                               cfg.n_heads, visible);
    x += kernels::linear(a, t(L.attn.wo), t(L.attn.bo));
    h = kernels::layer_norm(x, t(L.ln2.g), t(L.ln2.b));
    const Matrix f = kernels::linear(h, t(L.ffn.w1), t(L.ffn.b1)).cwiseMax(0.0);
    x += kernels::linear(f, t(L.ffn.w2), t(L.ffn.b2));
    append_rows(state.layer_outputs[l], x);
  }
  const Matrix mem = kernels::layer_norm(x, t(enc_ln_.g), t(enc_ln_.b));
  append_rows(state.memory, mem);
  for (std::size_t l = 0; l < n_dec; ++l) {
    const auto& C = dec_[l].cross;
    append_rows(state.cross_keys[l], kernels::linear(mem, t(C.wk), t(C.bk)));
    append_rows(state.cross_values[l], kernels::linear(mem, t(C.wv), t(C.bv)));
  }
  return state;
}

RowVector Transformer::decode_step(const EncoderState& enc, DecoderState& dec, TokenId prev_token,
                                   int z) const {
  if (z < 1 || z > enc.length()) {
    throw ValidationError("decode_step: z=" + std::to_string(z) + " outside encoded prefix of " +
                          std::to_string(enc.length()));
  }
  const auto& cfg = config();
  const auto n_dec = static_cast<std::size_t>(cfg.n_dec_layers);
  if (dec.self_keys.empty()) {
    dec.self_keys.resize(n_dec);
    dec.self_values.resize(n_dec);
  }
  const TokenId ids[1] = {prev_token};
  Matrix x = embed_rows(embed_tgt_, ids, dec.step);
  const std::vector<int> self_visible{dec.step + 1};
  const std::vector<int> cross_visible{z};
  for (std::size_t l = 0; l < n_dec; ++l) {
    const auto& L = dec_[l];
    Matrix h = kernels::layer_norm(x, t(L.ln1.g), t(L.ln1.b));
    Matrix q = kernels::linear(h, t(L.self.wq), t(L.self.bq));
    append_rows(dec.self_keys[l], kernels::linear(h, t(L.self.wk), t(L.self.bk)));
    append_rows(dec.self_values[l], kernels::linear(h, t(L.self.wv), t(L.self.bv)));
    Matrix a = kernels::masked_attention(q, dec.self_keys[l], dec.self_values[l], cfg.n_heads,
                                         self_visible);
    x += kernels::linear(a, t(L.self.wo), t(L.self.bo));

    h = kernels::layer_norm(x, t(L.ln2.g), t(L.ln2.b));
    q = kernels::linear(h, t(L.cross.wq), t(L.cross.bq));
    const Matrix keys = enc.cross_keys[l].topRows(z);
    const Matrix values = enc.cross_values[l].topRows(z);
    a = kernels::masked_attention(q, keys, values, cfg.n_heads, cross_visible);
    x += kernels::linear(a, t(L.cross.wo), t(L.cross.bo));

    h = kernels::layer_norm(x, t(L.ln3.g), t(L.ln3.b));
    const Matrix f = kernels::linear(h, t(L.ffn.w1), t(L.ffn.b1)).cwiseMax(0.0);
    x += kernels::linear(f, t(L.ffn.w2), t(L.ffn.b2));
  }
  const Matrix h = kernels::layer_norm(x, t(dec_ln_.g), t(dec_ln_.b));
  Matrix logits = h * t(out_weight_).transpose();
  logits.rowwise() += t(out_bias_).row(0);
  ++dec.step;
  return kernels::log_softmax(logits).row(0);
}

Tape::Var Transformer::build_encoder(Tape& tape, std::span<const TokenId> x) const {
  if (x.empty()) throw ValidationError("empty source sequence");
  const auto& cfg = config();
  std::vector<int> causal(x.size());
  std::iota(causal.begin(), causal.end(), 1);
  auto h = tape.embed(tape.param(embed_src_), x, 0, embed_scale_);
  for (const auto& L : enc_) {
    auto n = tape.layer_norm(h, tape.param(L.ln1.g), tape.param(L.ln1.b));
    auto q = tape.linear(n, tape.param(L.attn.wq), tape.param(L.attn.bq));
    auto k = tape.linear(n, tape.param(L.attn.wk), tape.param(L.attn.bk));
    auto v = tape.linear(n, tape.param(L.attn.wv), tape.param(L.attn.bv));
    auto a = tape.attention(q, k, v, cfg.n_heads, causal);
    h = tape.add(h, tape.linear(a, tape.param(L.attn.wo), tape.param(L.attn.bo)));
    n = tape.layer_norm(h, tape.param(L.ln2.g), tape.param(L.ln2.b));
    auto f = tape.relu(tape.linear(n, tape.param(L.ffn.w1), tape.param(L.ffn.b1)));
    h = tape.add(h, tape.linear(f, tape.param(L.ffn.w2), tape.param(L.ffn.b2)));
  }
  return tape.layer_norm(h, tape.param(enc_ln_.g), tape.param(enc_ln_.b));
}

Tape::Var Transformer::build_decoder(Tape& tape, Tape::Var memory, std::span<const TokenId> y_in,
                                     const std::vector<int>& cross_visible) const {
  const auto& cfg = config();
  std::vector<int> causal(y_in.size());
  std::iota(causal.begin(), causal.end(), 1);
  auto h = tape.embed(tape.param(embed_tgt_), y_in, 0, embed_scale_);
  for (const auto& L : dec_) {
    auto n = tape.layer_norm(h, tape.param(L.ln1.g), tape.param(L.ln1.b));
    auto q = tape.linear(n, tape.param(L.self.wq), tape.param(L.self.bq));
    auto k = tape.linear(n, tape.param(L.self.wk), tape.param(L.self.bk));
    auto v = tape.linear(n, tape.param(L.self.wv), tape.param(L.self.bv));
    auto a = tape.attention(q, k, v, cfg.n_heads, causal);
    h = tape.add(h, tape.linear(a, tape.param(L.self.wo), tape.param(L.self.bo)));

    n = tape.layer_norm(h, tape.param(L.ln2.g), tape.param(L.ln2.b));
    q = tape.linear(n, tape.param(L.cross.wq), tape.param(L.cross.bq));
    k = tape.linear(memory, tape.param(L.cross.wk), tape.param(L.cross.bk));
    v = tape.linear(memory, tape.param(L.cross.wv), tape.param(L.cross.bv));
    a = tape.attention(q, k, v, cfg.n_heads, cross_visible);
    h = tape.add(h, tape.linear(a, tape.param(L.cross.wo), tape.param(L.cross.bo)));

    n = tape.layer_norm(h, tape.param(L.ln3.g), tape.param(L.ln3.b));
    auto f = tape.relu(tape.linear(n, tape.param(L.ffn.w1), tape.param(L.ffn.b1)));
    h = tape.add(h, tape.linear(f, tape.param(L.ffn.w2), tape.param(L.ffn.b2)));
  }
  h = tape.layer_norm(h, tape.param(dec_ln_.g), tape.param(dec_ln_.b));
  return tape.log_softmax(tape.project(h, tape.param(out_weight_), tape.param(out_bias_)));
}

Matrix Transformer::teacher_forced_log_probs(std::span<const TokenId> x,
                                             std::span<const TokenId> y,
                                             std::span<const int> path) const {
  validate_path(path, y.size(), static_cast<int>(x.size()));
  Tape tape(params_, /*record=*/false);
  const auto memory = build_encoder(tape, x);
  std::vector<TokenId> y_in;
  y_in.reserve(y.size());
  y_in.push_back(1);  // BOS
  y_in.insert(y_in.end(), y.begin(), y.end() - 1);
  const auto lp = build_decoder(tape, memory, y_in, std::vector<int>(path.begin(), path.end()));
  return tape.value(lp);
}

void validate_path(std::span<const int> path, std::size_t tgt_len, int src_len) {
  if (path.size() != tgt_len || tgt_len == 0) {
    throw ValidationError("read path length must equal the (non-empty) target length");
  }
  int prev = 1;
  for (int z : path) {
    if (z < prev || z > src_len) {
      throw ValidationError("read path must be non-decreasing within [1, |x|]");
    }
    prev = z;
  }
}

EncoderState encode_prefix(const Parameters& params, std::span<const TokenId> new_tokens,
                           EncoderState state) {
  return Transformer(params).encode_prefix(new_tokens, std::move(state));
}

std::pair<RowVector, DecoderState> decode_step(const Parameters& params, const EncoderState& enc,
                                               DecoderState dec, TokenId prev_token, int z) {
  RowVector lp = Transformer(params).decode_step(enc, dec, prev_token, z);
  return {std::move(lp), std::move(dec)};
}

std::vector<double> forward_teacher_forced(const Parameters& params, std::span<const TokenId> x,
                                           std::span<const TokenId> y, std::span<const int> path) {
  const Matrix lp = Transformer(params).teacher_forced_log_probs(x, y, path);
  std::vector<double> out(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) {
    const auto id = y[t];
    if (id < 0 || id >= lp.cols()) throw ValidationError("target token outside vocabulary");
    out[t] = lp(static_cast<Eigen::Index>(t), id);
  }
  return out;
}

}  // namespace simulmt
