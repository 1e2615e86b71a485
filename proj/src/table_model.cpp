#include "dxrank/table_model.hpp"

#include <cmath>
#include <fstream>

#include "dxrank/errors.hpp"
#include "dxrank/hash.hpp"

namespace dxrank {

namespace {

constexpr double kDistributionSumTolerance = 1e-9;

std::vector<std::string> parse_vocabulary(const nlohmann::json& spec) {
  if (!spec.contains("vocabulary") || !spec["vocabulary"].is_array())
    throw ValidationError("table model: missing vocabulary array");
  std::vector<std::string> vocab;
  for (const auto& tok : spec["vocabulary"]) {
    if (!tok.is_string())
      throw ValidationError("table model: vocabulary entries must be strings");
    vocab.push_back(tok.get<std::string>());
  }
  return vocab;
}

TokenId token_id_or_throw(const Tokenizer& tokenizer, const std::string& text,
                          const char* where) {
  auto id = tokenizer.find(text);
  if (!id)
    throw ValidationError(std::string("table model: ") + where + " token \"" +
                          text + "\" not in vocabulary");
  return *id;
}

}  // namespace

TableProvider TableProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(spec);
}

TableProvider TableProvider::from_json(const nlohmann::json& spec) {
  TableProvider model;
  model.tokenizer_ = std::make_unique<Tokenizer>(parse_vocabulary(spec));

  if (!spec.contains("default_smoothing") ||
      !spec["default_smoothing"].is_number())
    throw ValidationError("table model: missing default_smoothing");
  model.default_smoothing_ = spec["default_smoothing"].get<double>();
  if (!(model.default_smoothing_ > 0.0 && model.default_smoothing_ < 1.0))
    throw ValidationError("table model: default_smoothing must be in (0, 1)");

  if (spec.contains("entries")) {
    if (!spec["entries"].is_array())
      throw ValidationError("table model: entries must be an array");
    for (const auto& entry : spec["entries"]) {
      if (!entry.is_object() || !entry.contains("context") ||
          !entry.contains("next") || !entry["context"].is_array() ||
          !entry["next"].is_object())
        throw ValidationError(
            "table model: entry needs a context array and a next object");
      std::vector<TokenId> context;
      for (const auto& tok : entry["context"]) {
        if (!tok.is_string())
          throw ValidationError("table model: context tokens must be strings");
        context.push_back(token_id_or_throw(
            *model.tokenizer_, tok.get<std::string>(), "context"));
      }
      std::map<TokenId, double> dist;
      double sum = 0.0;
      for (const auto& [text, prob] : entry["next"].items()) {
        if (!prob.is_number())
          throw ValidationError("table model: probability for \"" + text +
                                "\" is not a number");
        double p = prob.get<double>();
        if (!(p > 0.0 && p <= 1.0))
          throw ValidationError("table model: probability for \"" + text +
                                "\" outside (0, 1]");
        dist[token_id_or_throw(*model.tokenizer_, text, "next")] = p;
        sum += p;
      }
      if (dist.empty())
        throw ValidationError("table model: empty next distribution");
      if (std::abs(sum - 1.0) > kDistributionSumTolerance)
        throw ValidationError("table model: distribution sums to " +
                              std::to_string(sum) + ", expected 1");
      auto [_, inserted] = model.entries_.emplace(std::move(context), std::move(dist));
      if (!inserted)
        throw ValidationError("table model: duplicate context entry");
    }
  }

  // The file schema carries no name/version; identity is the content itself.
  model.id_ = ProviderId{"table", fnv1a64_hex(spec.dump()),
                         model.tokenizer_->fingerprint()};
  return model;
}

double TableProvider::token_prob(std::span<const TokenId> context,
                                 TokenId next) const {
  tokenizer_->token_text(next);  // range check, QueryError on violation
  const std::size_t vocab = tokenizer_->vocab_size();
  auto it = entries_.find(std::vector<TokenId>(context.begin(), context.end()));
  if (it == entries_.end()) return 1.0 / static_cast<double>(vocab);
  const auto& dist = it->second;
  auto hit = dist.find(next);
  if (hit != dist.end()) return hit->second;
  const std::size_t unlisted = vocab - dist.size();
  // next is unlisted, so unlisted >= 1 here.
  return default_smoothing_ / static_cast<double>(unlisted);
}

TokenLogProbs TableProvider::score_continuation(
    const std::string& context, std::span<const TokenId> continuation) const {
  if (continuation.empty())
    throw DomainError("score_continuation: empty continuation");
  std::vector<TokenId> prefix = tokenizer_->tokenize(context);
  TokenLogProbs out;
  out.tokens.assign(continuation.begin(), continuation.end());
  out.logprobs.reserve(continuation.size());
  for (TokenId token : continuation) {
    out.logprobs.push_back(std::log(token_prob(prefix, token)));
    prefix.push_back(token);
  }
  return out;
}

TokenId TableProvider::argmax_token(std::span<const TokenId> context) const {
  TokenId best = 0;
  double best_prob = -1.0;
  for (std::size_t id = 0; id < tokenizer_->vocab_size(); ++id) {
    double p = token_prob(context, static_cast<TokenId>(id));
    if (p > best_prob) {  // strict: ties keep the lowest token id
      best_prob = p;
      best = static_cast<TokenId>(id);
    }
  }
  return best;
}

GreedyResult TableProvider::greedy_decode(const std::string& context,
                                          int max_tokens,
                                          const std::set<TokenId>& stop) const {
  if (max_tokens < 1) throw DomainError("greedy_decode: max_tokens must be >= 1");
  std::vector<TokenId> prefix = tokenizer_->tokenize(context);
  GreedyResult result;
  while (static_cast<int>(result.tokens.size()) < max_tokens) {
    TokenId next = argmax_token(prefix);
    if (stop.count(next)) break;
    result.tokens.push_back(next);
    prefix.push_back(next);
  }
  result.text = tokenizer_->detokenize(result.tokens);
  return result;
}

}  // namespace dxrank
