#include "dxrank/tokenizer.hpp"

#include <algorithm>

#include "dxrank/errors.hpp"
#include "dxrank/hash.hpp"

namespace dxrank {

std::string to_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

Tokenizer::Tokenizer(std::vector<std::string> vocabulary)
    : vocab_(std::move(vocabulary)) {
  if (vocab_.empty()) throw ValidationError("tokenizer: empty vocabulary");
  by_text_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    const std::string& tok = vocab_[i];
    if (tok.empty())
      throw ValidationError("tokenizer: empty token at index " +
                            std::to_string(i));
    auto [_, inserted] = by_text_.emplace(tok, static_cast<TokenId>(i));
    if (!inserted)
      throw ValidationError("tokenizer: duplicate token \"" + tok + "\"");
    by_first_char_[tok.front()].push_back(static_cast<TokenId>(i));
  }
  for (auto& [ch, ids] : by_first_char_) {
    std::sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
      return vocab_[a].size() > vocab_[b].size();
    });
  }
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const std::string& tok : vocab_) {
    h = fnv1a64(tok, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  }
  fingerprint_ = to_hex(h);
}

std::vector<TokenId> Tokenizer::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto it = by_first_char_.find(text[pos]);
    TokenId matched = -1;
    if (it != by_first_char_.end()) {
      for (TokenId id : it->second) {
        const std::string& tok = vocab_[id];
        if (text.compare(pos, tok.size(), tok) == 0) {
          matched = id;
          break;  // candidates are longest-first
        }
      }
    }
    if (matched >= 0) {
      out.push_back(matched);
      pos += vocab_[matched].size();
    } else {
      ++pos;  // dropped by normalization
    }
  }
  return out;
}

std::string Tokenizer::detokenize(std::span<const TokenId> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += token_text(tokens[i]);
  }
  return out;
}

const std::string& Tokenizer::token_text(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size())
    throw QueryError("token id " + std::to_string(id) +
                     " outside vocabulary of size " +
                     std::to_string(vocab_.size()));
  return vocab_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Tokenizer::find(std::string_view token) const {
  auto it = by_text_.find(std::string(token));
  if (it == by_text_.end()) return std::nullopt;
  return it->second;
}

const Tokenizer& TokenizerRef::get() const {
  if (!tokenizer_) throw StateError("no tokenizer configured");
  return *tokenizer_;
}

std::vector<TokenId> TokenizerRef::tokenize(std::string_view text) const {
  return get().tokenize(text);
}

}  // namespace dxrank
