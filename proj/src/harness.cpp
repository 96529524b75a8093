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

#include "simulmt/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "text_util.hpp"

namespace simulmt {

namespace {

std::string to_hex(const unsigned char* data, unsigned int n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (unsigned int i = 0; i < n; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 15]);
  }
  return out;
}

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw RuntimeFailure("SHA-256 initialization failed");
    }
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw RuntimeFailure("SHA-256 update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &n) != 1) throw RuntimeFailure("SHA-256 failed");
    return to_hex(md, n);
  }

 private:
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

// ---------------------------------------------------------------------------

RunConfig::RunConfig(std::string command, nlohmann::json defaults) : command_(std::move(command)) {
  if (!defaults.is_object()) throw ValidationError("config defaults must be an object");
  for (auto& [k, v] : defaults.items()) values_[k] = Entry{v, Source::kDefault, ""};
}

nlohmann::json RunConfig::coerce(const std::string& key, const nlohmann::json& value) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ValidationError("unknown setting '" + key + "' for command " + command_);
  }
  const auto& def = it->second.value;
  auto bad = [&] {
    return ValidationError("setting '" + key + "' expects " + std::string(def.type_name()) +
                           ", got " + value.dump());
  };
  if (def.is_boolean()) {
    if (value.is_boolean()) return value;
    if (value.is_string()) {
      const auto s = value.get<std::string>();
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
    }
    throw bad();
  }
  if (def.is_number_integer()) {
    if (value.is_number_integer()) return value;
    if (value.is_number_float()) {
      const double d = value.get<double>();
      if (d == static_cast<double>(static_cast<long long>(d))) return static_cast<long long>(d);
    }
    if (value.is_string()) {
      const auto s = value.get<std::string>();
      try {
        std::size_t used = 0;
        long long v = std::stoll(s, &used);
        if (used == s.size()) return v;
      } catch (const std::exception&) {
      }
    }
    throw bad();
  }
  if (def.is_number()) {
    if (value.is_number()) return value.get<double>();
    if (value.is_string()) {
      const auto s = value.get<std::string>();
      try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used == s.size()) return v;
      } catch (const std::exception&) {
      }
    }
    throw bad();
  }
  if (def.is_string()) {
    if (value.is_string()) return value;
    throw bad();
  }
  if (def.is_array()) {
    nlohmann::json out = nlohmann::json::array();
    auto add = [&](const nlohmann::json& v) {
      if (v.is_string()) {
        const auto text = v.get<std::string>();
        for (auto piece : detail::split_exact(text, ',')) {
          if (!piece.empty()) out.push_back(std::string(piece));
        }
      } else if (v.is_number()) {
        out.push_back(v.dump());
      } else {
        throw bad();
      }
    };
    if (value.is_array()) {
      for (const auto& v : value) add(v);
    } else {
      add(value);
    }
    return out;
  }
  throw bad();
}

void RunConfig::apply(const nlohmann::json& values, Source source, const std::string& origin) {
  if (!values.is_object()) throw ValidationError("config must be a JSON object");
  for (auto& [k, v] : values.items()) {
    if (k == command_ && v.is_object()) {
      apply(v, source, origin);
      continue;
    }
    auto coerced = coerce(k, v);
    values_[k] = Entry{std::move(coerced), source, origin};
  }
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  apply(j, Source::kConfigFile, path);
  add_input(path);
}

void RunConfig::set(const std::string& key, nlohmann::json value, Source source) {
  auto coerced = coerce(key, value);
  values_[key] = Entry{std::move(coerced), source, ""};
}

const nlohmann::json& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown setting '" + key + "'");
  return it->second.value;
}

std::string RunConfig::str(const std::string& key) const { return get(key).get<std::string>(); }
double RunConfig::number(const std::string& key) const { return get(key).get<double>(); }
long long RunConfig::integer(const std::string& key) const { return get(key).get<long long>(); }
bool RunConfig::flag(const std::string& key) const { return get(key).get<bool>(); }

std::vector<std::string> RunConfig::list(const std::string& key) const {
  return get(key).get<std::vector<std::string>>();
}

RunConfig::Source RunConfig::source_of(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown setting '" + key + "'");
  return it->second.source;
}

std::string RunConfig::source_name(Source s) {
  switch (s) {
    case Source::kDefault: return "default";
    case Source::kConfigFile: return "config";
    case Source::kFlag: return "flag";
  }
  return "?";
}

void RunConfig::add_input(const std::string& path) {
  for (const auto& [p, h] : inputs_) {
    if (p == path) return;
  }
  inputs_.emplace_back(path, sha256_file(path));
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json values = nlohmann::json::object();
  nlohmann::json prov = nlohmann::json::object();
  for (const auto& [k, e] : values_) {
    values[k] = e.value;
    prov[k] = {{"source", source_name(e.source)}};
    if (!e.origin.empty()) prov[k]["origin"] = e.origin;
  }
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& [p, h] : inputs_) inputs.push_back({{"path", p}, {"sha256", h}});
  return {{"command", command_},
          {"values", values},
          {"provenance", prov},
          {"inputs", inputs},
          {"version", "0.1.0"}};
}

void RunConfig::write_sidecar(const std::string& output_path) const {
  const std::string path = output_path + ".run.json";
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  out << to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", kPlotPrecision, v);
  return buf;
}

double sort_lag(const TradeoffRecord& r) { return r.al_ms ? *r.al_ms : r.al_words; }

}  // namespace

std::string format_plotdata(std::vector<TradeoffRecord> records) {
  if (records.empty()) throw ValidationError("no records to plot");
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.system_id != b.system_id) return a.system_id < b.system_id;
    if (sort_lag(a) != sort_lag(b)) return sort_lag(a) < sort_lag(b);
    return a.al_words < b.al_words;
  });
  std::ostringstream os;
  os << "system,k,bleu,al_words,al_ms\n";
  for (const auto& r : records) {
    if (r.system_id.find_first_of(",\n\"") != std::string::npos) {
      throw ValidationError("system id '" + r.system_id + "' cannot be written to CSV");
    }
    os << r.system_id << ',' << r.k_eval.to_string() << ',' << fixed(r.bleu) << ','
       << fixed(r.al_words) << ',' << (r.al_ms ? fixed(*r.al_ms) : std::string()) << '\n';
  }
  return os.str();
}

void emit_plotdata(const std::vector<TradeoffRecord>& records, const std::string& path) {
  const std::string text = format_plotdata(records);
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  out << text;
}

std::vector<TradeoffRecord> parse_plotdata(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || detail::rstrip_cr(line) != "system,k,bleu,al_words,al_ms") {
    throw ValidationError("plot data: missing header");
  }
  std::vector<TradeoffRecord> out;
  while (std::getline(in, line)) {
    line = detail::rstrip_cr(line);
    if (line.empty()) continue;
    auto f = detail::split_exact(line, ',');
    if (f.size() != 5) throw ValidationError("plot data: expected 5 fields in '" + line + "'");
    TradeoffRecord r;
    r.system_id = std::string(f[0]);
    r.k_eval = WaitK::parse(std::string(f[1]));
    try {
      r.bleu = std::stod(std::string(f[2]));
      r.al_words = std::stod(std::string(f[3]));
      if (!f[4].empty()) r.al_ms = std::stod(std::string(f[4]));
    } catch (const std::exception&) {
      throw ValidationError("plot data: bad number in '" + line + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TradeoffRecord> read_plotdata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plotdata(ss.str());
}

nlohmann::json to_json(const TradeoffRecord& record) {
  nlohmann::json j = {{"system", record.system_id},
                      {"k", record.k_eval.to_string()},
                      {"bleu", record.bleu},
                      {"al_words", record.al_words}};
  j["al_ms"] = record.al_ms ? nlohmann::json(*record.al_ms) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------

void save_model_bundle(const std::string& path, const ModelBundle& bundle) {
  std::ostringstream src;
  std::ostringstream tgt;
  bundle.source_bpe.save(src);
  bundle.target_bpe.save(tgt);
  const nlohmann::json extra = {
      {"source_bpe", src.str()}, {"target_bpe", tgt.str()}, {"info", bundle.info}};
  save_checkpoint(path, bundle.params, extra);
}

ModelBundle load_model_bundle(const std::string& path) {
  nlohmann::json extra;
  ModelBundle b;
  b.params = load_checkpoint(path, &extra);
  if (!extra.contains("source_bpe") || !extra.contains("target_bpe")) {
    throw ValidationError(path + ": checkpoint carries no subword models");
  }
  std::istringstream src(extra["source_bpe"].get<std::string>());
  std::istringstream tgt(extra["target_bpe"].get<std::string>());
  b.source_bpe = BpeModel::load(src);
  b.target_bpe = BpeModel::load(tgt);
  b.info = extra.value("info", nlohmann::json::object());
  const auto& cfg = b.params.config();
  if (b.source_bpe.vocab().size() != cfg.src_vocab_size ||
      b.target_bpe.vocab().size() != cfg.tgt_vocab_size) {
    throw ValidationError(path + ": subword vocabularies do not match the model");
  }
  return b;
}

}  // namespace simulmt
