#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "dxrank/provider.hpp"

namespace dxrank {

/**
 * Deterministic table-based provider, the test oracle backend.
 *
 * The spec file lists an explicit next-token distribution per context token
 * sequence. Lookup rules:
 *   - listed context, listed token      -> the listed probability
 *   - listed context, unlisted token    -> default_smoothing split equally
 *                                          over the tokens the entry omits
 *   - unlisted context                  -> uniform over the vocabulary
 *
 * Immutable after load; queries are pure functions of (table, context,
 * continuation), so repeated queries are bit-identical.
 */
class TableProvider : public Provider {
 public:
  static TableProvider load(const std::filesystem::path& path);
  static TableProvider from_json(const nlohmann::json& spec);

  const ProviderId& id() const override { return id_; }
  const Tokenizer& tokenizer() const override { return *tokenizer_; }

  TokenLogProbs score_continuation(
      const std::string& context,
      std::span<const TokenId> continuation) const override;

  GreedyResult greedy_decode(const std::string& context, int max_tokens,
                             const std::set<TokenId>& stop) const override;

  // Probability of `next` after the exact token sequence `context`.
  double token_prob(std::span<const TokenId> context, TokenId next) const;

 private:
  TableProvider() = default;

  TokenId argmax_token(std::span<const TokenId> context) const;

  ProviderId id_;
  std::unique_ptr<Tokenizer> tokenizer_;
  std::map<std::vector<TokenId>, std::map<TokenId, double>> entries_;
  double default_smoothing_ = 0.0;
};

}  // namespace dxrank
