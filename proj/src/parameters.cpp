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

#include "simulmt/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "simulmt/common.hpp"

namespace simulmt {

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || n_enc_layers < 1 || n_dec_layers < 1 || d_ffn < 1 ||
      src_vocab_size < 1 || tgt_vocab_size < 1) {
    throw ValidationError("model config sizes must all be >= 1");
  }
  if (d_model % n_heads != 0) throw ValidationError("d_model must be divisible by n_heads");
  if (joint_vocabulary && src_vocab_size != tgt_vocab_size) {
    throw ValidationError("joint vocabulary requires src_vocab_size == tgt_vocab_size");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d_model", d_model},
          {"n_heads", n_heads},
          {"n_enc_layers", n_enc_layers},
          {"n_dec_layers", n_dec_layers},
          {"d_ffn", d_ffn},
          {"src_vocab_size", src_vocab_size},
          {"tgt_vocab_size", tgt_vocab_size},
          {"tie_decoder_embeddings", tie_decoder_embeddings},
          {"joint_vocabulary", joint_vocabulary}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "d_model") c.d_model = value.get<int>();
    else if (key == "n_heads") c.n_heads = value.get<int>();
    else if (key == "n_enc_layers") c.n_enc_layers = value.get<int>();
    else if (key == "n_dec_layers") c.n_dec_layers = value.get<int>();
    else if (key == "d_ffn") c.d_ffn = value.get<int>();
    else if (key == "src_vocab_size") c.src_vocab_size = value.get<int>();
    else if (key == "tgt_vocab_size") c.tgt_vocab_size = value.get<int>();
    else if (key == "tie_decoder_embeddings") c.tie_decoder_embeddings = value.get<bool>();
    else if (key == "joint_vocabulary") c.joint_vocabulary = value.get<bool>();
    else throw ValidationError("unknown model config key '" + key + "'");
  }
  return c;
}

void Parameters::add(const std::string& name, Matrix value) {
  if (slot_of_.count(name)) throw ValidationError("duplicate parameter '" + name + "'");
  slot_of_.emplace(name, static_cast<int>(storage_.size()));
  storage_.push_back(std::move(value));
  slot_names_.push_back(name);
  names_.push_back(name);
}

void Parameters::tie(const std::string& alias, const std::string& target) {
  if (slot_of_.count(alias)) throw ValidationError("duplicate parameter '" + alias + "'");
  slot_of_.emplace(alias, slot(target));
  names_.push_back(alias);
}

int Parameters::slot(const std::string& name) const {
  auto it = slot_of_.find(name);
  if (it == slot_of_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t Parameters::num_scalars() const {
  std::size_t n = 0;
  for (const auto& m : storage_) n += static_cast<std::size_t>(m.size());
  return n;
}

bool Parameters::all_finite() const {
  for (const auto& m : storage_) {
    if (!m.allFinite()) return false;
  }
  return true;
}

std::vector<Matrix> Parameters::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(storage_.size());
  for (const auto& m : storage_) out.push_back(Matrix::Zero(m.rows(), m.cols()));
  return out;
}

bool operator==(const Parameters& a, const Parameters& b) {
  if (!(a.config_ == b.config_) || a.names_ != b.names_ || a.slot_of_ != b.slot_of_) return false;
  for (std::size_t i = 0; i < a.storage_.size(); ++i) {
    const auto& x = a.storage_[i];
    const auto& y = b.storage_[i];
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) != 0) {
      return false;
    }
  }
  return true;
}

namespace {

class Initializer {
 public:
  Initializer(Parameters& params, std::uint64_t seed) : params_(params), rng_(seed) {}

  void uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
    params_.add(name, std::move(m));
  }
  void xavier(const std::string& name, Eigen::Index fan_in, Eigen::Index fan_out) {
    uniform(name, fan_in, fan_out, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  }
  void constant(const std::string& name, Eigen::Index cols, double value) {
    params_.add(name, Matrix::Constant(1, cols, value));
  }
  void layer_norm(const std::string& prefix, Eigen::Index d) {
    constant(prefix + ".g", d, 1.0);
    constant(prefix + ".b", d, 0.0);
  }
  void attention(const std::string& prefix, Eigen::Index d) {
    for (const char* p : {"q", "k", "v", "o"}) {
      xavier(prefix + ".w" + p, d, d);
      constant(prefix + ".b" + p, d, 0.0);
    }
  }
  void ffn(const std::string& prefix, Eigen::Index d, Eigen::Index d_ffn) {
    xavier(prefix + ".w1", d, d_ffn);
    constant(prefix + ".b1", d_ffn, 0.0);
    xavier(prefix + ".w2", d_ffn, d);
    constant(prefix + ".b2", d, 0.0);
  }

 private:
  Parameters& params_;
  std::mt19937_64 rng_;
};

}  // namespace

Parameters init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Parameters params(config);
  Initializer init(params, seed);
  const Eigen::Index d = config.d_model;
  const double embed_bound = std::sqrt(3.0 / static_cast<double>(d));

  init.uniform("embed.tgt", config.tgt_vocab_size, d, embed_bound);
  if (config.joint_vocabulary) {
    params.tie("embed.src", "embed.tgt");
  } else {
    init.uniform("embed.src", config.src_vocab_size, d, embed_bound);
  }
  if (config.tie_decoder_embeddings) {
    params.tie("out.weight", "embed.tgt");
  } else {
    init.uniform("out.weight", config.tgt_vocab_size, d, embed_bound);
  }
  init.constant("out.bias", config.tgt_vocab_size, 0.0);

  for (int l = 0; l < config.n_enc_layers; ++l) {
    const auto p = "enc." + std::to_string(l);
    init.layer_norm(p + ".ln1", d);
    init.attention(p + ".attn", d);
    init.layer_norm(p + ".ln2", d);
    init.ffn(p + ".ffn", d, config.d_ffn);
  }
  init.layer_norm("enc.ln", d);
  for (int l = 0; l < config.n_dec_layers; ++l) {
    const auto p = "dec." + std::to_string(l);
    init.layer_norm(p + ".ln1", d);
    init.attention(p + ".self", d);
    init.layer_norm(p + ".ln2", d);
    init.attention(p + ".cross", d);
    init.layer_norm(p + ".ln3", d);
    init.ffn(p + ".ffn", d, config.d_ffn);
  }
  init.layer_norm("dec.ln", d);
  return params;
}

namespace {

constexpr const char* kMagic = "simulmt-checkpoint 1";

void write_le(std::ostream& out, const Matrix& m) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
      bits = __builtin_bswap64(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
}

void read_le(std::istream& in, Matrix& m) {
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if constexpr (std::endian::native != std::endian::little) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
      m.data()[i] = std::bit_cast<double>(__builtin_bswap64(bits));
    }
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Parameters& params,
                     const nlohmann::json& extra) {
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (int s = 0; s < params.num_slots(); ++s) {
    offsets.push_back(offset);
    offset += static_cast<std::size_t>(params.slot_tensor(s).size()) * sizeof(double);
  }
  for (const auto& name : params.names()) {
    const int s = params.slot(name);
    const auto& m = params.slot_tensor(s);
    nlohmann::json entry = {{"name", name},
                            {"shape", {m.rows(), m.cols()}},
                            {"offset", offsets[static_cast<std::size_t>(s)]}};
    if (params.slot_name(s) != name) entry["alias_of"] = params.slot_name(s);
    manifest.push_back(entry);
  }
  nlohmann::json header = {{"config", params.config().to_json()},
                           {"tensors", manifest},
                           {"payload_bytes", offset},
                           {"extra", extra}};
  const auto header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write checkpoint " + path);
  out << kMagic << ' ' << header_text.size() << '\n' << header_text;
  for (int s = 0; s < params.num_slots(); ++s) write_le(out, params.slot_tensor(s));
  if (!out) throw RuntimeFailure("failed writing checkpoint " + path);
}

Parameters load_checkpoint(const std::string& path, nlohmann::json* extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path);
  std::string first;
  std::getline(in, first);
  const std::string magic(kMagic);
  if (first.rfind(magic + " ", 0) != 0) throw ValidationError(path + ": not a checkpoint");
  const auto header_bytes = std::stoul(first.substr(magic.size() + 1));
  std::string header_text(header_bytes, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_bytes));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": bad checkpoint header: " + e.what());
  }
  Parameters params(ModelConfig::from_json(header.at("config")));
  std::vector<std::pair<std::string, std::size_t>> slot_offsets;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    if (entry.contains("alias_of")) {
      params.tie(name, entry.at("alias_of").get<std::string>());
      continue;
    }
    const auto shape = entry.at("shape");
    params.add(name, Matrix(shape[0].get<Eigen::Index>(), shape[1].get<Eigen::Index>()));
    slot_offsets.emplace_back(name, entry.at("offset").get<std::size_t>());
  }
  const auto payload_start = in.tellg();
  for (const auto& [name, off] : slot_offsets) {
    in.seekg(payload_start + static_cast<std::streamoff>(off));
    read_le(in, params.at(name));
    if (!in) throw ValidationError(path + ": truncated payload at '" + name + "'");
  }
  if (extra) *extra = header.value("extra", nlohmann::json::object());
  return params;
}

}  // namespace simulmt
