#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dxrank {

using TokenId = std::int32_t;

/**
 * Vocabulary-driven tokenizer shared by the table and remote backends.
 *
 * Tokenization is greedy longest-match: at each position the longest
 * vocabulary string starting there is consumed; if none matches, the
 * character is dropped. Detokenization joins token strings with single
 * spaces. Both directions are pure functions of the vocabulary, so equal
 * inputs always yield equal outputs within one configuration.
 */
class Tokenizer {
 public:
  // Vocabulary entries must be non-empty and unique. Token ids are the
  // positions in `vocabulary`.
  explicit Tokenizer(std::vector<std::string> vocabulary);

  std::vector<TokenId> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> tokens) const;

  std::size_t vocab_size() const { return vocab_.size(); }
  const std::string& token_text(TokenId id) const;  // QueryError if out of range
  std::optional<TokenId> find(std::string_view token) const;
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  // Hex FNV-1a over the vocabulary; equal fingerprints mean equal τ(·).
  std::string fingerprint() const { return fingerprint_; }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> by_text_;
  // Ids of tokens grouped by first byte, longest first, for the greedy scan.
  std::unordered_map<char, std::vector<TokenId>> by_first_char_;
  std::string fingerprint_;
};

// Nullable handle to the run's active tokenizer. The provider owns the
// tokenizer; everything else goes through this handle.
class TokenizerRef {
 public:
  TokenizerRef() = default;
  explicit TokenizerRef(const Tokenizer* tokenizer) : tokenizer_(tokenizer) {}

  bool configured() const { return tokenizer_ != nullptr; }
  const Tokenizer& get() const;  // StateError when not configured
  std::vector<TokenId> tokenize(std::string_view text) const;

 private:
  const Tokenizer* tokenizer_ = nullptr;
};

}  // namespace dxrank
