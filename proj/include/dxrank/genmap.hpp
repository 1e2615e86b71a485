#pragma once

#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dxrank/corpus.hpp"
#include "dxrank/llrank.hpp"
#include "dxrank/provider.hpp"

namespace dxrank {

// Word tokens for overlap matching: lowercased maximal alphanumeric runs.
// Independent of any provider tokenizer.
std::vector<std::string> word_tokens(std::string_view text);

/**
 * Inverse-document-frequency weights over the label corpus. A word present
 * in `doc_freq` appears in doc_freq labels; its weight is 1/doc_freq, so a
 * word shared by every label is worth 1/M and a unique word is worth 1.
 */
struct RarityWeights {
  std::unordered_map<std::string, int> doc_freq;

  // 0 for words absent from every label (they can never be shared).
  double weight(const std::string& word) const {
    auto it = doc_freq.find(word);
    return it == doc_freq.end() ? 0.0 : 1.0 / static_cast<double>(it->second);
  }
};

RarityWeights build_rarity_weights(const LabelCatalog& catalog);

// Two-part ranking key: overlap count first, summed rarity of the shared
// words second, canonical catalog index last.
struct OverlapKey {
  int overlap_count = 0;
  double rarity_score = 0.0;
  std::size_t catalog_index = 0;
};

// True when `a` ranks strictly before `b`.
bool overlap_key_before(const OverlapKey& a, const OverlapKey& b);

OverlapKey phrase_overlap_key(const std::set<std::string>& phrase_words,
                              const Label& label, std::size_t catalog_index,
                              const RarityWeights& weights);

// Order-preserving scalar for the output record's single score field:
// rarity never reaches overlap+1, so the integer part is the overlap count
// and ties in the scalar are exactly ties in the key.
double overlap_key_scalar(const OverlapKey& key);

// Complete ranking of the catalog against one generated phrase.
RankedList map_phrase(const std::string& phrase, const LabelCatalog& catalog,
                      const RarityWeights& weights,
                      const std::string& report_id = {});

struct GreedyParams {
  int max_tokens = 32;
  std::set<TokenId> stop;
};

// Greedy-decode a diagnostic phrase for the report, then map it.
RankedList genmap_rank(const Report& report, const LabelCatalog& catalog,
                       const PromptTemplate& prompt, const Provider& provider,
                       const RarityWeights& weights, const GreedyParams& params);

}  // namespace dxrank
