#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

#include "dxrank/provider.hpp"

namespace dxrank {

struct RemoteConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8800
  std::string provider_name = "remote";
  std::string provider_version = "0";
  // JSON array of token strings; must match the server's tokenizer.
  std::filesystem::path vocabulary_file;

  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  int max_in_flight = 4;
  std::chrono::seconds request_timeout{30};
};

/**
 * HTTP client for a log-prob server.
 *
 *   POST /v1/logprobs {"context": s, "continuation_tokens": [int], "provider": s}
 *     -> {"tokens": [int], "logprobs": [number]}
 *   POST /v1/greedy   {"context": s, "max_tokens": int, "stop": [int]}
 *     -> {"text": s, "tokens": [int]}
 *
 * Non-2xx responses and connection failures retry with exponential backoff
 * up to max_attempts, then surface as TransportError. Responses violating
 * the schema (wrong shapes, logprob > 0, length mismatch) are ProtocolError
 * naming the offending field. In-flight requests are bounded by
 * max_in_flight; independent queries may run concurrently.
 */
class RemoteProvider : public Provider {
 public:
  explicit RemoteProvider(RemoteConfig config);
  // For tests: vocabulary supplied directly instead of via file.
  RemoteProvider(RemoteConfig config, std::vector<std::string> vocabulary);
  ~RemoteProvider() override;

  const ProviderId& id() const override { return id_; }
  const Tokenizer& tokenizer() const override { return *tokenizer_; }

  TokenLogProbs score_continuation(
      const std::string& context,
      std::span<const TokenId> continuation) const override;

  GreedyResult greedy_decode(const std::string& context, int max_tokens,
                             const std::set<TokenId>& stop) const override;

 private:
  std::string post_json(const std::string& path, const std::string& body) const;

  RemoteConfig config_;
  ProviderId id_;
  std::unique_ptr<Tokenizer> tokenizer_;

  mutable std::mutex gate_mutex_;
  mutable std::condition_variable gate_cv_;
  mutable int in_flight_ = 0;
};

}  // namespace dxrank
