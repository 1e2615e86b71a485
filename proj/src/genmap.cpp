#include "dxrank/genmap.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

namespace dxrank {

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      current += static_cast<char>(std::tolower(uc));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

RarityWeights build_rarity_weights(const LabelCatalog& catalog) {
  RarityWeights weights;
  for (const Label& label : catalog.labels()) {
    std::set<std::string> distinct;
    for (std::string& w : word_tokens(label.name)) distinct.insert(std::move(w));
    for (const std::string& w : distinct) ++weights.doc_freq[w];
  }
  return weights;
}

bool overlap_key_before(const OverlapKey& a, const OverlapKey& b) {
  if (a.overlap_count != b.overlap_count)
    return a.overlap_count > b.overlap_count;
  if (a.rarity_score != b.rarity_score) return a.rarity_score > b.rarity_score;
  return a.catalog_index < b.catalog_index;
}

OverlapKey phrase_overlap_key(const std::set<std::string>& phrase_words,
                              const Label& label, std::size_t catalog_index,
                              const RarityWeights& weights) {
  OverlapKey key;
  key.catalog_index = catalog_index;
  std::set<std::string> label_words;
  for (std::string& w : word_tokens(label.name)) label_words.insert(std::move(w));
  for (const std::string& w : label_words) {
    if (phrase_words.count(w)) {
      ++key.overlap_count;
      key.rarity_score += weights.weight(w);
    }
  }
  return key;
}

double overlap_key_scalar(const OverlapKey& key) {
  return static_cast<double>(key.overlap_count) +
         key.rarity_score / (static_cast<double>(key.overlap_count) + 1.0);
}

RankedList map_phrase(const std::string& phrase, const LabelCatalog& catalog,
                      const RarityWeights& weights,
                      const std::string& report_id) {
  std::set<std::string> phrase_words;
  for (std::string& w : word_tokens(phrase)) phrase_words.insert(std::move(w));

  std::vector<OverlapKey> keys;
  keys.reserve(catalog.size());
  for (std::size_t j = 0; j < catalog.size(); ++j)
    keys.push_back(phrase_overlap_key(phrase_words, catalog.at(j), j, weights));

  std::vector<std::size_t> order(catalog.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return overlap_key_before(keys[a], keys[b]);
  });

  RankedList list;
  list.report_id = report_id;
  list.entries.reserve(catalog.size());
  for (std::size_t j : order) {
    RankedEntry entry;
    entry.code = catalog.at(j).code;
    entry.score = overlap_key_scalar(keys[j]);
    list.entries.push_back(std::move(entry));
  }
  return list;
}

RankedList genmap_rank(const Report& report, const LabelCatalog& catalog,
                       const PromptTemplate& prompt, const Provider& provider,
                       const RarityWeights& weights,
                       const GreedyParams& params) {
  GreedyResult decoded =
      provider.greedy_decode(prompt.render(report.text), params.max_tokens,
                             params.stop);
  return map_phrase(decoded.text, catalog, weights, report.id);
}

}  // namespace dxrank
