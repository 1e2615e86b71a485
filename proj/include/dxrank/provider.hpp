#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "dxrank/tokenizer.hpp"

namespace dxrank {

// Identity of a scoring backend. Two providers with equal ids must return
// identical log-probs for identical queries; caches key on this.
struct ProviderId {
  std::string name;
  std::string version;
  std::string tokenizer_fingerprint;

  bool operator==(const ProviderId&) const = default;
};

// Per-token natural-log probabilities for one continuation, aligned with
// `tokens`. Every entry is <= 0.
struct TokenLogProbs {
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;
};

struct GreedyResult {
  std::string text;
  std::vector<TokenId> tokens;
};

/**
 * Token-likelihood oracle. Given a context string and a continuation token
 * sequence, returns log p(y_t | context, y_<t) per token; also performs
 * deterministic greedy decoding (argmax each step, ties to the lowest token
 * id, halting on a stop token or after max_tokens).
 *
 * Implementations must be safe for concurrent queries and must not let
 * results depend on interleaving.
 */
class Provider {
 public:
  virtual ~Provider() = default;

  virtual const ProviderId& id() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;

  // Pre: continuation non-empty. Tokens outside the vocabulary are a
  // QueryError; backend failures are TransportError.
  virtual TokenLogProbs score_continuation(
      const std::string& context, std::span<const TokenId> continuation) const = 0;

  // Pre: max_tokens >= 1. A stop token halts decoding and is not emitted.
  virtual GreedyResult greedy_decode(const std::string& context, int max_tokens,
                                     const std::set<TokenId>& stop) const = 0;
};

}  // namespace dxrank
