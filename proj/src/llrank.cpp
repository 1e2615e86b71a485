#include "dxrank/llrank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "dxrank/errors.hpp"
#include "dxrank/parallel.hpp"

namespace dxrank {

namespace {

double mean_nll(const TokenLogProbs& lp) {
  double sum = 0.0;
  for (double logprob : lp.logprobs) sum -= logprob;
  return sum / static_cast<double>(lp.logprobs.size());
}

}  // namespace

PriorCache::PriorCache(ProviderId provider, std::string prefix_hash)
    : provider_(std::move(provider)), prefix_hash_(std::move(prefix_hash)) {}

PriorCache PriorCache::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("provider") ||
      !doc.contains("prefix_hash") || !doc.contains("entries"))
    throw ParseError(path.string() +
                     ": cache needs provider, prefix_hash and entries");
  const auto& p = doc["provider"];
  PriorCache cache(
      ProviderId{p.value("name", ""), p.value("version", ""),
                 p.value("tokenizer_fingerprint", "")},
      doc["prefix_hash"].get<std::string>());
  for (const auto& [code, value] : doc["entries"].items()) {
    if (!value.is_number())
      throw ParseError(path.string() + ": entry " + code + " is not a number");
    cache.entries_[code] = value.get<double>();
  }
  return cache;
}

void PriorCache::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json doc;
  doc["provider"] = {{"name", provider_.name},
                     {"version", provider_.version},
                     {"tokenizer_fingerprint", provider_.tokenizer_fingerprint}};
  doc["prefix_hash"] = prefix_hash_;
  nlohmann::ordered_json entries = nlohmann::ordered_json::object();
  for (const auto& [code, value] : entries_) entries[code] = value;
  doc["entries"] = std::move(entries);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

void PriorCache::require_valid_for(const ProviderId& provider,
                                   const std::string& prefix_hash) const {
  if (provider_ != provider)
    throw CacheInvalidError("prior cache built under provider " +
                            provider_.name + "/" + provider_.version +
                            ", queried under " + provider.name + "/" +
                            provider.version);
  if (prefix_hash_ != prefix_hash)
    throw CacheInvalidError("prior cache built for a different prompt prefix");
}

std::optional<double> PriorCache::lookup(const std::string& code) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(code);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void PriorCache::insert(const std::string& code, double l_prior) {
  std::lock_guard<std::mutex> lock(mutex_);
  entries_[code] = l_prior;
}

double conditional_nll(const Report& report, const Label& label,
                       const PromptTemplate& prompt, const Provider& provider) {
  if (label.token_ids.empty())
    throw StateError("label " + label.code + " has no cached tokenization");
  TokenLogProbs lp =
      provider.score_continuation(prompt.render(report.text), label.token_ids);
  return mean_nll(lp);
}

double prior_nll(const Label& label, const PromptTemplate& prompt,
                 const Provider& provider, PriorCache& cache) {
  cache.require_valid_for(provider.id(), prompt.prefix_hash());
  if (auto hit = cache.lookup(label.code)) return *hit;
  if (label.token_ids.empty())
    throw StateError("label " + label.code + " has no cached tokenization");
  TokenLogProbs lp =
      provider.score_continuation(prompt.report_free(), label.token_ids);
  double value = mean_nll(lp);
  cache.insert(label.code, value);
  return value;
}

double pmi_score(double l_cond, double l_prior, double alpha) {
  if (alpha < 0.0) throw DomainError("alpha must be nonnegative");
  if (alpha == 0.0) return -l_cond;
  // A -inf logprob makes l_cond infinite; the label scores -inf and ranks
  // last even when its prior is infinite too.
  if (std::isinf(l_cond) && l_cond > 0.0)
    return -std::numeric_limits<double>::infinity();
  return -l_cond + alpha * l_prior;
}

ScoreBreakdown score_label(const Report& report, const Label& label,
                           const PromptTemplate& prompt,
                           const Provider& provider, double alpha,
                           PriorCache& cache) {
  ScoreBreakdown b;
  b.label_code = label.code;
  b.l_cond = conditional_nll(report, label, prompt, provider);
  b.l_prior = prior_nll(label, prompt, provider, cache);
  b.alpha = alpha;
  b.score = pmi_score(b.l_cond, b.l_prior, alpha);
  return b;
}

RankedList rank_from_parts(const std::string& report_id,
                           const LabelCatalog& catalog,
                           const std::vector<double>& l_cond,
                           const std::vector<double>& l_prior, double alpha) {
  const std::size_t m = catalog.size();
  if (l_cond.size() != m || l_prior.size() != m)
    throw DomainError("rank_from_parts: sizes do not match the catalog");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> score(m);
  for (std::size_t j = 0; j < m; ++j)
    score[j] = pmi_score(l_cond[j], l_prior[j], alpha);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;  // canonical catalog index
  });
  RankedList list;
  list.report_id = report_id;
  list.entries.reserve(m);
  for (std::size_t j : order) {
    RankedEntry entry;
    entry.code = catalog.at(j).code;
    entry.score = score[j];
    entry.l_cond = l_cond[j];
    entry.l_prior = l_prior[j];
    list.entries.push_back(std::move(entry));
  }
  return list;
}

RankedList rank_catalog(const Report& report, const LabelCatalog& catalog,
                        const PromptTemplate& prompt, const Provider& provider,
                        double alpha, PriorCache& cache, int threads) {
  if (alpha < 0.0) throw DomainError("alpha must be nonnegative");
  const std::size_t m = catalog.size();
  std::vector<double> l_cond(m), l_prior(m);
  // Priors first: single pass, shared across labels via the cache.
  for (std::size_t j = 0; j < m; ++j)
    l_prior[j] = prior_nll(catalog.at(j), prompt, provider, cache);
  parallel_for(m, threads, [&](std::size_t j) {
    l_cond[j] = conditional_nll(report, catalog.at(j), prompt, provider);
  });
  return rank_from_parts(report.id, catalog, l_cond, l_prior, alpha);
}

ScoreParts compute_score_parts(const std::vector<Report>& reports,
                               const LabelCatalog& catalog,
                               const PromptTemplate& prompt,
                               const Provider& provider, PriorCache& cache,
                               int threads) {
  const std::size_t m = catalog.size();
  ScoreParts parts;
  parts.report_ids.reserve(reports.size());
  for (const Report& r : reports) parts.report_ids.push_back(r.id);
  parts.l_prior.resize(m);
  for (std::size_t j = 0; j < m; ++j)
    parts.l_prior[j] = prior_nll(catalog.at(j), prompt, provider, cache);
  parts.l_cond.assign(reports.size(), std::vector<double>(m));
  parallel_for(reports.size() * m, threads, [&](std::size_t flat) {
    const std::size_t r = flat / m;
    const std::size_t j = flat % m;
    parts.l_cond[r][j] =
        conditional_nll(reports[r], catalog.at(j), prompt, provider);
  });
  return parts;
}

}  // namespace dxrank
