#pragma once

// Sequence scorer interface and its line-delimited JSON wire protocol.
//
//   -> {"version":1,"op":"logprobs","sample":{token_ids, content_ids, position_ids, lm_mask, clf_index}}
//   <- {"version":1,"logprobs":[...vocab_size floats...]}
//   -> {"version":1,"op":"classify","samples":[sample, ...]}
//   <- {"version":1,"logits":[...one float per sample...]}
//   <- {"version":1,"error":"..."} on failure
//
// A logprobs request asks for the distribution of the token following the
// sample's tokens.

#include <cmath>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "opdial/error.hpp"
#include "opdial/process.hpp"
#include "opdial/sequence.hpp"
#include "opdial/types.hpp"

namespace opdial {

inline constexpr int kScorerProtocolVersion = 1;

class ScorerClient {
 public:
  virtual ~ScorerClient() = default;
  virtual std::vector<double> next_token_logprobs(const EncodedSample& prefix) = 0;
  virtual std::vector<double> classify(const std::vector<EncodedSample>& candidates) = 0;
};

inline void check_logprobs(const std::vector<double>& lp, std::size_t vocab_size = 0) {
  if (lp.empty()) throw ProtocolError("empty logprob vector");
  if (vocab_size && lp.size() != vocab_size)
    throw ProtocolError("logprob vector has " + std::to_string(lp.size()) + " entries, expected " +
                        std::to_string(vocab_size));
  double z = 0;
  for (double v : lp) {
    if (std::isnan(v) || v > 1e-9) throw ProtocolError("logprob entry is not a log-probability");
    z += std::exp(v);
  }
  if (std::abs(z - 1.0) >= 1e-4) throw ProtocolError("logprobs do not sum to 1 (sum " + std::to_string(z) + ")");
}

// Client side of the protocol over any request/response transport.
class ProtocolScorer : public ScorerClient {
 public:
  using Transport = std::function<std::string(const std::string&)>;

  explicit ProtocolScorer(Transport transport) : transport_(std::move(transport)) {}

  std::vector<double> next_token_logprobs(const EncodedSample& prefix) override {
    Json resp = call({{"version", kScorerProtocolVersion}, {"op", "logprobs"}, {"sample", to_json(prefix)}});
    auto lp = floats(resp, "logprobs");
    check_logprobs(lp);
    return lp;
  }

  std::vector<double> classify(const std::vector<EncodedSample>& candidates) override {
    Json samples = Json::array();
    for (const auto& c : candidates) samples.push_back(to_json(c));
    Json resp = call({{"version", kScorerProtocolVersion}, {"op", "classify"}, {"samples", samples}});
    auto logits = floats(resp, "logits");
    if (logits.size() != candidates.size())
      throw ProtocolError("classify returned " + std::to_string(logits.size()) + " logits for " +
                          std::to_string(candidates.size()) + " samples");
    return logits;
  }

 private:
  Json call(const Json& req) {
    std::string line = transport_(req.dump());
    Json resp;
    try {
      resp = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(std::string("scorer sent invalid JSON: ") + e.what());
    }
    if (!resp.is_object() || !resp.contains("version")) throw ProtocolError("scorer response has no version");
    if (resp["version"] != kScorerProtocolVersion) throw ProtocolError("unsupported scorer protocol version");
    if (resp.contains("error")) throw ProtocolError("scorer error: " + resp["error"].dump());
    return resp;
  }

  static std::vector<double> floats(const Json& resp, const char* key) {
    try {
      return resp.at(key).get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("scorer response lacks '") + key + "': " + e.what());
    }
  }

  Transport transport_;
};

// Scorer running as a child process speaking the protocol on stdin/stdout.
class SubprocessScorer : public ScorerClient {
 public:
  explicit SubprocessScorer(const std::string& command)
      : proc_(std::make_unique<LineProcess>(command)),
        client_([p = proc_.get()](const std::string& line) { return p->request(line); }) {}

  std::vector<double> next_token_logprobs(const EncodedSample& prefix) override {
    return client_.next_token_logprobs(prefix);
  }
  std::vector<double> classify(const std::vector<EncodedSample>& candidates) override {
    return client_.classify(candidates);
  }

 private:
  std::unique_ptr<LineProcess> proc_;
  ProtocolScorer client_;
};

// Server side: answers one request per line until end of input. Malformed
// requests get an error response and the loop continues.
inline void serve_scorer(std::istream& in, std::ostream& out, ScorerClient& impl) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json reply = {{"version", kScorerProtocolVersion}};
    try {
      Json req = Json::parse(line);
      if (!req.is_object() || req.value("version", 0) != kScorerProtocolVersion)
        throw ProtocolError("missing or unsupported version");
      std::string op = req.at("op").get<std::string>();
      if (op == "logprobs") {
        reply["logprobs"] = impl.next_token_logprobs(sample_from_json(req.at("sample")));
      } else if (op == "classify") {
        std::vector<EncodedSample> samples;
        for (const auto& s : req.at("samples")) samples.push_back(sample_from_json(s));
        reply["logits"] = impl.classify(samples);
      } else {
        throw ProtocolError("unknown op '" + op + "'");
      }
    } catch (const std::exception& e) {
      reply = {{"version", kScorerProtocolVersion}, {"error", e.what()}};
    }
    out << reply.dump() << "\n" << std::flush;
  }
}

// ---------------------------------------------------------------------------
// Stub scorers

// Uniform next-token distribution. Classification logits are independent
// uniform draws from a seeded generator, so every candidate is equally likely
// to rank first.
class UniformScorer : public ScorerClient {
 public:
  UniformScorer(int vocab_size, std::uint64_t seed = 0) : vocab_(vocab_size), rng_(seed) {
    if (vocab_size <= 0) throw ConfigError("uniform scorer needs a positive vocabulary size");
  }

  std::vector<double> next_token_logprobs(const EncodedSample&) override {
    return std::vector<double>(static_cast<std::size_t>(vocab_), -std::log(static_cast<double>(vocab_)));
  }

  std::vector<double> classify(const std::vector<EncodedSample>& candidates) override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> out;
    for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back(u(rng_));
    return out;
  }

 private:
  int vocab_;
  Rng rng_;
};

}  // namespace opdial
