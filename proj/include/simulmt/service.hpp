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

#include <atomic>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "simulmt/cascade.hpp"
#include "simulmt/metrics.hpp"
#include "simulmt/online.hpp"
#include "simulmt/vocabulary.hpp"

namespace simulmt {

// Line-delimited JSON protocol, one request and one reply per line.
//
//   {"act":"START","item":i,"run":"name","k":"3"}  -> {"ok":true,"item":i,"session":id}
//   {"act":"READ"}                     t2t -> {"token":"piece"}  or {"eos":true}
//   {"act":"READ","blocks":n}          s2t -> {"block_ms":d,"t_ms":t,"words":[...],"last":b}
//                                             or {"eos":true}
//   {"act":"WRITE","token":"piece"}        -> {"ok":true}  (+ "done":true on </s>)
//   {"act":"END"}                          -> {"ok":true,"done":true}  (finish without </s>)
//   {"act":"SCORE","run":"name"}           -> {"system":..,"k":..,"bleu":..,"al_words":..,"al_ms":..,"n":..}
//
// Delays are measured by the server from the READs it has answered. Any
// malformed or out-of-order request gets {"error":"..."} and closes the
// connection; other connections are unaffected.

struct EvalTestset {
  SweepMode mode = SweepMode::kT2t;
  std::vector<T2tItem> t2t;
  std::vector<S2tItem> s2t;
  const Vocabulary* source_vocab = nullptr;  // t2t: reveals source pieces
  const Vocabulary* target_vocab = nullptr;  // maps written pieces to ids
  std::function<std::string(std::span<const TokenId>)> detokenize;
  double block_ms = 100.0;
  BleuSmoothing smoothing = BleuSmoothing::kNone;
};

class EvalService {
 public:
  explicit EvalService(EvalTestset testset, std::string log_path = "");

  /// Protocol state of one connection.
  class Connection {
   public:
    struct Reply {
      nlohmann::json body;
      bool close = false;
    };
    Reply handle(const std::string& line);

   private:
    friend class EvalService;
    explicit Connection(EvalService& service) : service_(service) {}
    nlohmann::json start(const nlohmann::json& req);
    nlohmann::json read(const nlohmann::json& req);
    nlohmann::json write(const nlohmann::json& req);
    nlohmann::json finish();

    struct Active {
      std::uint64_t id = 0;
      std::size_t item = 0;
      std::string run;
      WaitK k;
      std::size_t cursor = 0;  // tokens revealed (t2t) or blocks (s2t)
      std::size_t words_sent = 0;
      bool depleted = false;
      double consumed_ms = 0.0;
      ActionTrace trace;
      TokenSeq output;
    };
    EvalService& service_;
    std::optional<Active> active_;
  };

  std::unique_ptr<Connection> connect();

  /// Corpus score over the completed sessions of a run, in item order.
  std::optional<TradeoffRecord> score(const std::string& run) const;
  std::vector<TradeoffRecord> records() const;
  std::size_t completed(const std::string& run) const;
  const EvalTestset& testset() const { return testset_; }

 private:
  void store(const std::string& run, WaitK k, std::size_t item, ScoredItem scored);

  EvalTestset testset_;
  std::string log_path_;
  std::atomic<std::uint64_t> next_session_{1};
  mutable std::mutex mu_;
  struct RunRecord {
    WaitK k;
    std::map<std::size_t, ScoredItem> items;
  };
  std::map<std::string, RunRecord> runs_;
};

/// Serves one connection over a pair of streams until EOF or an error.
void serve_stream(EvalService& service, std::istream& in, std::ostream& out);

/// TCP transport: one thread per connection.
class TcpServer {
 public:
  /// Binds immediately; port 0 picks a free port.
  TcpServer(EvalService& service, const std::string& host, int port);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  int port() const { return port_; }
  /// Accepts connections until stop() is called.
  void run();
  /// Starts run() on a background thread.
  void start();
  void stop();

 private:
  void handle(int fd);

  EvalService& service_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::set<int> open_fds_;
  std::vector<std::thread> workers_;
};

/// Sends one request line and waits for the reply.
using RequestFn = std::function<nlohmann::json(const nlohmann::json&)>;

class TcpClient {
 public:
  TcpClient(const std::string& host, int port);
  ~TcpClient();
  TcpClient(const TcpClient&) = delete;
  TcpClient& operator=(const TcpClient&) = delete;

  nlohmann::json request(const nlohmann::json& req);

 private:
  int fd_ = -1;
  std::string buffer_;
};

/// In-process channel over a Connection, for tests and the stdio client.
RequestFn connection_channel(EvalService::Connection& conn);

/// Drives one text session with a wait-k decoder over the protocol.
DecodeResult drive_waitk_session(const RequestFn& request, std::size_t item,
                                 const std::string& run, const std::vector<StepScorer*>& models,
                                 const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                                 const OnlinePolicy& policy);

/// Drives one speech session with the cascade controller over the protocol.
CascadeResult drive_cascade_session(const RequestFn& request, std::size_t item,
                                    const std::string& run, const std::string& k_label,
                                    const CascadeMt& mt, const CascadeConfig& config,
                                    const Vocabulary& target_vocab);

}  // namespace simulmt
