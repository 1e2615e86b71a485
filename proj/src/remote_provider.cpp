#include "dxrank/remote_provider.hpp"

#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "dxrank/errors.hpp"

namespace dxrank {

namespace {

std::vector<std::string> load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open vocabulary " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!doc.is_array())
    throw ValidationError(path.string() + ": vocabulary must be a JSON array");
  std::vector<std::string> vocab;
  for (const auto& tok : doc) {
    if (!tok.is_string())
      throw ValidationError(path.string() + ": vocabulary entries must be strings");
    vocab.push_back(tok.get<std::string>());
  }
  return vocab;
}

// Splits http://host:port into pieces httplib::Client accepts directly.
const nlohmann::json& require_field(const nlohmann::json& doc, const char* field,
                                    const char* where) {
  if (!doc.contains(field))
    throw ProtocolError(std::string(where) + ": missing field \"" + field + "\"");
  return doc[field];
}

std::vector<TokenId> parse_token_array(const nlohmann::json& value,
                                       const char* field, const char* where) {
  if (!value.is_array())
    throw ProtocolError(std::string(where) + ": field \"" + field +
                        "\" must be an array of integers");
  std::vector<TokenId> out;
  for (const auto& v : value) {
    if (!v.is_number_integer())
      throw ProtocolError(std::string(where) + ": field \"" + field +
                          "\" must be an array of integers");
    out.push_back(v.get<TokenId>());
  }
  return out;
}

class InFlightGuard {
 public:
  InFlightGuard(std::mutex& m, std::condition_variable& cv, int& count, int limit)
      : mutex_(m), cv_(cv), count_(count) {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [&] { return count_ < limit; });
    ++count_;
  }
  ~InFlightGuard() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      --count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex& mutex_;
  std::condition_variable& cv_;
  int& count_;
};

}  // namespace

RemoteProvider::RemoteProvider(RemoteConfig config)
    : RemoteProvider(std::move(config), std::vector<std::string>{}) {}

RemoteProvider::RemoteProvider(RemoteConfig config,
                               std::vector<std::string> vocabulary)
    : config_(std::move(config)) {
  if (vocabulary.empty()) vocabulary = load_vocabulary(config_.vocabulary_file);
  tokenizer_ = std::make_unique<Tokenizer>(std::move(vocabulary));
  id_ = ProviderId{config_.provider_name, config_.provider_version,
                   tokenizer_->fingerprint()};
}

RemoteProvider::~RemoteProvider() = default;

std::string RemoteProvider::post_json(const std::string& path,
                                      const std::string& body) const {
  InFlightGuard guard(gate_mutex_, gate_cv_, in_flight_, config_.max_in_flight);
  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.request_timeout);
    client.set_read_timeout(config_.request_timeout);
    client.set_write_timeout(config_.request_timeout);
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    return res->body;
  }
  throw TransportError(config_.endpoint + path + " failed after " +
                           std::to_string(config_.max_attempts) +
                           " attempts: " + last_error,
                       /*retryable=*/true);
}

TokenLogProbs RemoteProvider::score_continuation(
    const std::string& context, std::span<const TokenId> continuation) const {
  if (continuation.empty())
    throw DomainError("score_continuation: empty continuation");
  nlohmann::ordered_json request;
  request["context"] = context;
  request["continuation_tokens"] =
      std::vector<TokenId>(continuation.begin(), continuation.end());
  request["provider"] = config_.provider_name;

  const std::string body = post_json("/v1/logprobs", request.dump());
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("/v1/logprobs: response is not JSON: ") +
                        e.what());
  }

  TokenLogProbs out;
  out.tokens = parse_token_array(require_field(response, "tokens", "/v1/logprobs"),
                                 "tokens", "/v1/logprobs");
  const auto& logprobs = require_field(response, "logprobs", "/v1/logprobs");
  if (!logprobs.is_array())
    throw ProtocolError("/v1/logprobs: field \"logprobs\" must be an array");
  for (const auto& v : logprobs) {
    if (!v.is_number())
      throw ProtocolError("/v1/logprobs: field \"logprobs\" must contain numbers");
    double lp = v.get<double>();
    if (lp > 0.0)
      throw ProtocolError("/v1/logprobs: field \"logprobs\" contains " +
                          std::to_string(lp) + " > 0");
    out.logprobs.push_back(lp);
  }
  if (out.tokens.size() != continuation.size())
    throw ProtocolError("/v1/logprobs: field \"tokens\" has length " +
                        std::to_string(out.tokens.size()) + ", expected " +
                        std::to_string(continuation.size()));
  if (out.logprobs.size() != out.tokens.size())
    throw ProtocolError("/v1/logprobs: field \"logprobs\" has length " +
                        std::to_string(out.logprobs.size()) + ", expected " +
                        std::to_string(out.tokens.size()));
  return out;
}

GreedyResult RemoteProvider::greedy_decode(const std::string& context,
                                           int max_tokens,
                                           const std::set<TokenId>& stop) const {
  if (max_tokens < 1) throw DomainError("greedy_decode: max_tokens must be >= 1");
  nlohmann::ordered_json request;
  request["context"] = context;
  request["max_tokens"] = max_tokens;
  request["stop"] = std::vector<TokenId>(stop.begin(), stop.end());

  const std::string body = post_json("/v1/greedy", request.dump());
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("/v1/greedy: response is not JSON: ") +
                        e.what());
  }
  GreedyResult out;
  const auto& text = require_field(response, "text", "/v1/greedy");
  if (!text.is_string())
    throw ProtocolError("/v1/greedy: field \"text\" must be a string");
  out.text = text.get<std::string>();
  out.tokens = parse_token_array(require_field(response, "tokens", "/v1/greedy"),
                                 "tokens", "/v1/greedy");
  return out;
}

}  // namespace dxrank
