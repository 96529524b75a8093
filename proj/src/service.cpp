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

#include "simulmt/service.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "simulmt/harness.hpp"

namespace simulmt {

namespace {

constexpr std::size_t kMaxLine = 1 << 20;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json words_json(std::span<const TimedWord> words) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& w : words) {
    out.push_back({{"word", w.word}, {"start_ms", w.start_ms}, {"duration_ms", w.duration_ms}});
  }
  return out;
}

std::vector<TimedWord> words_from_json(const nlohmann::json& j) {
  std::vector<TimedWord> out;
  for (const auto& w : j) {
    out.push_back({w.at("word").get<std::string>(), w.at("start_ms").get<double>(),
                   w.at("duration_ms").get<double>()});
  }
  return out;
}

}  // namespace

EvalService::EvalService(EvalTestset testset, std::string log_path)
    : testset_(std::move(testset)), log_path_(std::move(log_path)) {
  if (!testset_.target_vocab) throw ValidationError("service needs a target vocabulary");
  if (!testset_.detokenize) throw ValidationError("service needs a detokenizer");
  if (testset_.mode == SweepMode::kT2t) {
    if (!testset_.source_vocab) throw ValidationError("text service needs a source vocabulary");
    if (testset_.t2t.empty()) throw ValidationError("empty text test set");
  } else {
    if (testset_.s2t.empty()) throw ValidationError("empty speech test set");
    if (!(testset_.block_ms > 0.0)) throw ValidationError("block_ms must be > 0");
  }
}

std::unique_ptr<EvalService::Connection> EvalService::connect() {
  return std::unique_ptr<Connection>(new Connection(*this));
}

EvalService::Connection::Reply EvalService::Connection::handle(const std::string& line) {
  try {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("malformed frame: ") + e.what());
    }
    if (!req.is_object() || !req.contains("act") || !req["act"].is_string()) {
      throw ProtocolError("frame must be an object with a string \"act\"");
    }
    const auto act = req["act"].get<std::string>();
    if (act == "START") return {start(req), false};
    if (act == "READ") return {read(req), false};
    if (act == "WRITE") return {write(req), false};
    if (act == "END") {
      if (!active_) throw ProtocolError("END without an active session");
      return {finish(), false};
    }
    if (act == "SCORE") {
      const auto run = req.value("run", std::string("default"));
      auto rec = service_.score(run);
      if (!rec) throw ProtocolError("no completed sessions for run '" + run + "'");
      auto body = to_json(*rec);
      body["n"] = service_.completed(run);
      return {body, false};
    }
    throw ProtocolError("unknown act '" + act + "'");
  } catch (const std::exception& e) {
    active_.reset();
    return {{{"error", e.what()}}, true};
  }
}

nlohmann::json EvalService::Connection::start(const nlohmann::json& req) {
  if (active_) throw ProtocolError("START while a session is active");
  if (!req.contains("item") || !req["item"].is_number_unsigned()) {
    throw ProtocolError("START needs a non-negative integer \"item\"");
  }
  const auto item = req["item"].get<std::size_t>();
  const auto& ts = service_.testset_;
  const std::size_t n = ts.mode == SweepMode::kT2t ? ts.t2t.size() : ts.s2t.size();
  if (item >= n) throw ProtocolError("item " + std::to_string(item) + " out of range");
  Active a;
  a.id = service_.next_session_++;
  a.item = item;
  a.run = req.value("run", std::string("default"));
  const auto k = req.contains("k") ? (req["k"].is_string() ? req["k"].get<std::string>()
                                                           : req["k"].dump())
                                   : std::string("inf");
  try {
    a.k = WaitK::parse(k);
  } catch (const std::exception&) {
    throw ProtocolError("bad k '" + k + "'");
  }
  active_ = std::move(a);
  return {{"ok", true}, {"item", item}, {"session", active_->id}};
}

nlohmann::json EvalService::Connection::read(const nlohmann::json& req) {
  if (!active_) throw ProtocolError("READ without an active session");
  auto& a = *active_;
  const auto& ts = service_.testset_;
  if (ts.mode == SweepMode::kT2t) {
    const auto& src = ts.t2t[a.item].source;
    if (a.cursor >= src.size()) return {{"eos", true}};
    const TokenId id = src[a.cursor];
    a.trace.read(static_cast<int>(a.cursor));
    ++a.cursor;
    return {{"token", ts.source_vocab->token_of(id)}};
  }
  if (a.depleted) return {{"eos", true}};
  long long blocks = 1;
  if (req.contains("blocks")) {
    if (!req["blocks"].is_number_integer() || req["blocks"].get<long long>() < 1) {
      throw ProtocolError("\"blocks\" must be a positive integer");
    }
    blocks = req["blocks"].get<long long>();
  }
  const auto& item = ts.s2t[a.item];
  const auto n_blocks = static_cast<long long>(std::ceil(item.total_ms / ts.block_ms));
  const auto z = std::min<long long>(n_blocks, static_cast<long long>(a.cursor) + blocks);
  const double end = std::min(static_cast<double>(z) * ts.block_ms, item.total_ms);
  std::size_t upto = a.words_sent;
  while (upto < item.stream.size() && item.stream[upto].start_ms < end) ++upto;
  nlohmann::json reply = {
      {"block_ms", end - a.consumed_ms},
      {"t_ms", end},
      {"words", words_json(std::span(item.stream).subspan(a.words_sent, upto - a.words_sent))},
      {"last", z == n_blocks}};
  a.cursor = static_cast<std::size_t>(z);
  a.words_sent = upto;
  a.consumed_ms = end;
  a.depleted = z == n_blocks;
  a.trace.read(static_cast<int>(a.cursor), end);
  return reply;
}

nlohmann::json EvalService::Connection::write(const nlohmann::json& req) {
  if (!active_) throw ProtocolError("WRITE without an active session");
  if (!req.contains("token") || !req["token"].is_string()) {
    throw ProtocolError("WRITE needs a string \"token\"");
  }
  const auto piece = req["token"].get<std::string>();
  const auto& vocab = *service_.testset_.target_vocab;
  if (!vocab.contains(piece)) throw ProtocolError("unknown target token '" + piece + "'");
  const TokenId id = vocab.id_of(piece);
  auto& a = *active_;
  std::optional<double> g_ms;
  if (service_.testset_.mode == SweepMode::kS2t) g_ms = a.consumed_ms;
  a.trace.write(id, a.trace.num_reads(), g_ms);
  a.output.push_back(id);
  if (id == Vocabulary::kEos) return finish();
  return {{"ok", true}};
}

nlohmann::json EvalService::Connection::finish() {
  auto a = std::move(*active_);
  active_.reset();
  if (a.output.empty()) throw ProtocolError("session ended without any WRITE");
  const auto& ts = service_.testset_;
  TokenSeq content = a.output;
  if (content.back() == Vocabulary::kEos) content.pop_back();
  ScoredItem s;
  s.hypothesis = ts.detokenize(content);
  s.trace = std::move(a.trace);
  if (ts.mode == SweepMode::kT2t) {
    s.reference = ts.t2t[a.item].reference;
    s.src_tokens = static_cast<int>(ts.t2t[a.item].source.size());
  } else {
    s.reference = ts.s2t[a.item].reference;
    s.src_tokens = std::max(1, s.trace.num_reads());
    s.src_ms = ts.s2t[a.item].total_ms;
  }
  service_.store(a.run, a.k, a.item, std::move(s));
  return {{"ok", true}, {"done", true}};
}

void EvalService::store(const std::string& run, WaitK k, std::size_t item, ScoredItem scored) {
  std::lock_guard lock(mu_);
  if (!log_path_.empty()) {
    std::ofstream log(log_path_, std::ios::app);
    nlohmann::json line = {{"run", run},
                           {"k", k.to_string()},
                           {"item", item},
                           {"hypothesis", scored.hypothesis},
                           {"trace", scored.trace.to_json()}};
    log << line.dump() << '\n';
  }
  auto& rec = runs_[run];
  rec.k = k;
  rec.items[item] = std::move(scored);
}

std::optional<TradeoffRecord> EvalService::score(const std::string& run) const {
  std::vector<ScoredItem> items;
  WaitK k;
  {
    std::lock_guard lock(mu_);
    auto it = runs_.find(run);
    if (it == runs_.end() || it->second.items.empty()) return std::nullopt;
    k = it->second.k;
    for (const auto& [i, s] : it->second.items) items.push_back(s);
  }
  return score_point(run, k, items, testset_.smoothing);
}

std::vector<TradeoffRecord> EvalService::records() const {
  std::vector<std::string> names;
  {
    std::lock_guard lock(mu_);
    for (const auto& [name, r] : runs_) names.push_back(name);
  }
  std::vector<TradeoffRecord> out;
  for (const auto& n : names) {
    if (auto r = score(n)) out.push_back(std::move(*r));
  }
  return out;
}

std::size_t EvalService::completed(const std::string& run) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(run);
  return it == runs_.end() ? 0 : it->second.items.size();
}

// ---------------------------------------------------------------------------

void serve_stream(EvalService& service, std::istream& in, std::ostream& out) {
  auto conn = service.connect();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto reply = conn->handle(line);
    out << reply.body.dump() << '\n' << std::flush;
    if (reply.close) break;
  }
}

namespace {

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

// Reads one '\n'-terminated line; false on EOF or error.
bool recv_line(int fd, std::string& buffer, std::string& line) {
  for (;;) {
    const auto pos = buffer.find('\n');
    if (pos != std::string::npos) {
      line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    if (buffer.size() > kMaxLine) return false;
    char chunk[4096];
    const auto n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

addrinfo* resolve(const std::string& host, int port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(),
                               std::to_string(port).c_str(), &hints, &res);
  if (rc != 0) throw ValidationError("cannot resolve " + host + ": " + gai_strerror(rc));
  return res;
}

}  // namespace

TcpServer::TcpServer(EvalService& service, const std::string& host, int port)
    : service_(service) {
  if (port < 0 || port > 65535) throw ValidationError("port out of range");
  addrinfo* res = resolve(host, port, true);
  for (auto* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
      listen_fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (listen_fd_ < 0) {
    throw RuntimeFailure("cannot listen on " + host + ":" + std::to_string(port) + ": " +
                         std::strerror(errno));
  }
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  if (addr.ss_family == AF_INET) {
    port_ = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  } else {
    port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
  }
}

TcpServer::~TcpServer() {
  stop();
  if (acceptor_.joinable()) acceptor_.join();
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpServer::run() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    std::lock_guard lock(mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    open_fds_.insert(fd);
    workers_.emplace_back([this, fd] { handle(fd); });
  }
}

void TcpServer::start() { acceptor_ = std::thread([this] { run(); }); }

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  std::lock_guard lock(mu_);
  for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
}

void TcpServer::handle(int fd) {
  auto conn = service_.connect();
  std::string buffer;
  std::string line;
  while (recv_line(fd, buffer, line)) {
    if (line.empty()) continue;
    auto reply = conn->handle(line);
    if (!send_all(fd, reply.body.dump() + "\n") || reply.close) break;
  }
  std::lock_guard lock(mu_);
  open_fds_.erase(fd);
  ::close(fd);
}

TcpClient::TcpClient(const std::string& host, int port) {
  addrinfo* res = resolve(host, port, false);
  for (auto* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw RuntimeFailure("cannot connect to " + host + ":" + std::to_string(port));
}

TcpClient::~TcpClient() {
  if (fd_ >= 0) ::close(fd_);
}

nlohmann::json TcpClient::request(const nlohmann::json& req) {
  if (!send_all(fd_, req.dump() + "\n")) throw RuntimeFailure("connection lost");
  std::string line;
  if (!recv_line(fd_, buffer_, line)) throw RuntimeFailure("connection closed by server");
  return nlohmann::json::parse(line);
}

RequestFn connection_channel(EvalService::Connection& conn) {
  return [&conn](const nlohmann::json& req) { return conn.handle(req.dump()).body; };
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json checked(const RequestFn& request, const nlohmann::json& req) {
  auto reply = request(req);
  if (reply.contains("error")) throw RuntimeFailure("server: " + reply["error"].get<std::string>());
  return reply;
}

}  // namespace

DecodeResult drive_waitk_session(const RequestFn& request, std::size_t item,
                                 const std::string& run, const std::vector<StepScorer*>& models,
                                 const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                                 const OnlinePolicy& policy) {
  checked(request, {{"act", "START"}, {"item", item}, {"run", run},
                    {"k", policy.k_eval.to_string()}});
  WaitKSession session(models, policy);
  while (!session.done()) {
    if (session.wants_read()) {
      auto reply = checked(request, {{"act", "READ"}});
      if (reply.value("eos", false)) {
        session.finish_source();
      } else {
        session.read(source_vocab.id_of(reply.at("token").get<std::string>()));
      }
      continue;
    }
    const TokenId tok = session.write();
    checked(request, {{"act", "WRITE"}, {"token", target_vocab.token_of(tok)}});
  }
  if (session.truncated()) checked(request, {{"act", "END"}});
  return session.result();
}

CascadeResult drive_cascade_session(const RequestFn& request, std::size_t item,
                                    const std::string& run, const std::string& k_label,
                                    const CascadeMt& mt, const CascadeConfig& config,
                                    const Vocabulary& target_vocab) {
  checked(request, {{"act", "START"}, {"item", item}, {"run", run}, {"k", k_label}});
  CascadeSession session(mt, config);
  std::size_t written = 0;
  while (!session.done()) {
    if (session.wants_read()) {
      auto reply = checked(request, {{"act", "READ"}, {"blocks", config.sz}});
      if (reply.value("eos", false)) throw RuntimeFailure("server ended the audio early");
      const auto words = words_from_json(reply.at("words"));
      session.read(words, reply.at("t_ms").get<double>(), reply.at("last").get<bool>());
      continue;
    }
    session.step();
    const auto& tokens = session.result().tokens;
    for (; written < tokens.size(); ++written) {
      checked(request, {{"act", "WRITE"}, {"token", target_vocab.token_of(tokens[written])}});
    }
  }
  if (session.result().truncated) checked(request, {{"act", "END"}});
  return session.result();
}

}  // namespace simulmt
