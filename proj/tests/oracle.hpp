#pragma once

// Test-only oracles: independent reimplementations of the contracts under
// test. They walk raw data (table spec JSON, label strings, decision lists)
// directly and share no code with the library paths they verify.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Table-model walk
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> vocab;
  std::map<std::vector<int>, std::map<int, double>> entries;
  double smoothing = 0.0;
};

inline Table table_from_json(const nlohmann::json& spec) {
  Table t;
  for (const auto& tok : spec.at("vocabulary"))
    t.vocab.push_back(tok.get<std::string>());
  t.smoothing = spec.at("default_smoothing").get<double>();
  auto id_of = [&](const std::string& text) {
    for (std::size_t i = 0; i < t.vocab.size(); ++i)
      if (t.vocab[i] == text) return static_cast<int>(i);
    throw std::runtime_error("oracle: unknown token " + text);
  };
  if (spec.contains("entries")) {
    for (const auto& entry : spec["entries"]) {
      std::vector<int> ctx;
      for (const auto& tok : entry.at("context"))
        ctx.push_back(id_of(tok.get<std::string>()));
      std::map<int, double> dist;
      for (const auto& [text, p] : entry.at("next").items())
        dist[id_of(text)] = p.get<double>();
      t.entries[ctx] = dist;
    }
  }
  return t;
}

// Greedy longest-match, reimplemented with a plain quadratic scan.
inline std::vector<int> tokenize(const Table& t, const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    int best = -1;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < t.vocab.size(); ++i) {
      const std::string& tok = t.vocab[i];
      if (tok.size() > best_len && text.compare(pos, tok.size(), tok) == 0) {
        best = static_cast<int>(i);
        best_len = tok.size();
      }
    }
    if (best < 0) {
      ++pos;
    } else {
      out.push_back(best);
      pos += best_len;
    }
  }
  return out;
}

inline double prob(const Table& t, const std::vector<int>& ctx, int next) {
  auto it = t.entries.find(ctx);
  if (it == t.entries.end()) return 1.0 / static_cast<double>(t.vocab.size());
  auto hit = it->second.find(next);
  if (hit != it->second.end()) return hit->second;
  return t.smoothing /
         static_cast<double>(t.vocab.size() - it->second.size());
}

// Per-token mean NLL of `continuation` after the tokenized context string.
inline double mean_nll(const Table& t, const std::string& context,
                       const std::vector<int>& continuation) {
  std::vector<int> ctx = tokenize(t, context);
  double total = 0.0;
  for (int token : continuation) {
    total += -std::log(prob(t, ctx, token));
    ctx.push_back(token);
  }
  return total / static_cast<double>(continuation.size());
}

// Argsort by score descending, ties to the lower index; selection sort on
// purpose so it shares nothing with std::sort-based paths.
inline std::vector<std::size_t> argsort_desc(const std::vector<double>& scores) {
  std::vector<std::size_t> order;
  std::vector<bool> used(scores.size(), false);
  for (std::size_t round = 0; round < scores.size(); ++round) {
    std::size_t best = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (used[i]) continue;
      if (best == scores.size() || scores[i] > scores[best]) best = i;
    }
    used[best] = true;
    order.push_back(best);
  }
  return order;
}

// ---------------------------------------------------------------------------
// GenMap comparator
// ---------------------------------------------------------------------------

inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct Key {
  int overlap = 0;
  double rarity = 0.0;
  std::size_t index = 0;
};

// Keys for every label name against a phrase, counting document frequency
// from scratch.
inline std::vector<Key> phrase_keys(const std::string& phrase,
                                    const std::vector<std::string>& label_names) {
  std::map<std::string, int> doc_freq;
  for (const std::string& name : label_names) {
    std::set<std::string> distinct;
    for (const std::string& w : words(name)) distinct.insert(w);
    for (const std::string& w : distinct) ++doc_freq[w];
  }
  std::set<std::string> phrase_set;
  for (const std::string& w : words(phrase)) phrase_set.insert(w);

  std::vector<Key> keys;
  for (std::size_t i = 0; i < label_names.size(); ++i) {
    Key key;
    key.index = i;
    std::set<std::string> label_set;
    for (const std::string& w : words(label_names[i])) label_set.insert(w);
    for (const std::string& w : label_set) {
      if (phrase_set.count(w)) {
        ++key.overlap;
        key.rarity += 1.0 / doc_freq[w];
      }
    }
    keys.push_back(key);
  }
  return keys;
}

inline bool key_before(const Key& a, const Key& b) {
  if (a.overlap != b.overlap) return a.overlap > b.overlap;
  if (a.rarity != b.rarity) return a.rarity > b.rarity;
  return a.index < b.index;
}

// Selection sort over keys; returns label indices best-first.
inline std::vector<std::size_t> rank_keys(std::vector<Key> keys) {
  std::vector<std::size_t> order;
  std::vector<bool> used(keys.size(), false);
  for (std::size_t round = 0; round < keys.size(); ++round) {
    std::size_t best = keys.size();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (used[i]) continue;
      if (best == keys.size() || key_before(keys[i], keys[best])) best = i;
    }
    used[best] = true;
    order.push_back(keys[best].index);
  }
  return order;
}

// ---------------------------------------------------------------------------
// Metric counting
// ---------------------------------------------------------------------------

struct Judged {
  std::vector<std::string> ranked;
  std::string gold;
};

inline double hit_percent(const std::vector<Judged>& runs, int k) {
  int hits = 0;
  for (const Judged& r : runs) {
    auto end = r.ranked.begin() +
               std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(r.ranked.size()));
    if (std::find(r.ranked.begin(), end, r.gold) != end) ++hits;
  }
  return 100.0 * hits / static_cast<double>(runs.size());
}

inline double macro_f1_percent(const std::vector<Judged>& runs, int k) {
  std::set<std::string> classes;
  for (const Judged& r : runs) classes.insert(r.gold);
  double sum = 0.0;
  for (const std::string& c : classes) {
    int tp = 0, fp = 0, fn = 0;
    for (const Judged& r : runs) {
      auto end = r.ranked.begin() +
                 std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(r.ranked.size()));
      bool predicted = std::find(r.ranked.begin(), end, c) != end;
      if (r.gold == c && predicted) ++tp;
      if (r.gold != c && predicted) ++fp;
      if (r.gold == c && !predicted) ++fn;
    }
    double denom = 2.0 * tp + fp + fn;
    sum += denom == 0.0 ? 0.0 : 2.0 * tp / denom;
  }
  return 100.0 * sum / static_cast<double>(classes.size());
}

// ---------------------------------------------------------------------------
// Random scoring instances (vocab <= 8 tokens, <= 10 labels)
// ---------------------------------------------------------------------------

struct Instance {
  nlohmann::json spec;                   // table spec
  std::vector<std::string> label_names;  // built from vocab words
  std::string report_text;
  std::string template_text = "<< {report} >>";
};

inline Instance make_instance(std::mt19937& rng) {
  static const std::vector<std::string> pool = {"ba", "ce", "di", "fo",
                                                "gu", "ha", "ki", "lo"};
  Instance inst;
  std::uniform_int_distribution<int> vocab_size(2, 8);
  const int v = vocab_size(rng);
  std::vector<std::string> vocab(pool.begin(), pool.begin() + v);

  std::uniform_int_distribution<int> label_count(1, 10);
  std::uniform_int_distribution<int> name_len(1, 3);
  std::uniform_int_distribution<int> word_pick(0, v - 1);
  const int labels = label_count(rng);
  for (int i = 0; i < labels; ++i) {
    std::string name;
    const int len = name_len(rng);
    for (int w = 0; w < len; ++w) {
      if (w > 0) name += ' ';
      name += vocab[static_cast<std::size_t>(word_pick(rng))];
    }
    inst.label_names.push_back(name);
  }

  std::uniform_int_distribution<int> report_len(0, 3);
  const int rlen = report_len(rng);
  for (int w = 0; w < rlen; ++w) {
    if (w > 0) inst.report_text += ' ';
    inst.report_text += vocab[static_cast<std::size_t>(word_pick(rng))];
  }
  if (inst.report_text.empty()) inst.report_text = "...";

  // Entries over random prefixes of (report tokens ++ label tokens) so the
  // walks actually hit them.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> smoothing(0.01, 0.5);
  std::set<std::vector<std::string>> contexts;
  std::vector<std::string> report_words;
  {
    std::string cur;
    for (char c : inst.report_text) {
      if (c == ' ') {
        if (!cur.empty()) report_words.push_back(cur);
        cur.clear();
      } else if (std::isalpha(static_cast<unsigned char>(c))) {
        cur += c;
      }
    }
    if (!cur.empty()) report_words.push_back(cur);
  }
  for (const std::string& name : inst.label_names) {
    for (int with_report = 0; with_report < 2; ++with_report) {
      std::vector<std::string> walk;
      if (with_report) walk = report_words;
      std::string cur;
      for (char c : name + " ") {
        if (c == ' ') {
          if (!cur.empty()) walk.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      for (std::size_t take = 0; take < walk.size(); ++take) {
        if (unit(rng) < 0.6)
          contexts.insert(
              std::vector<std::string>(walk.begin(),
                                       walk.begin() + static_cast<std::ptrdiff_t>(take)));
      }
    }
  }

  nlohmann::json entries = nlohmann::json::array();
  for (const auto& ctx : contexts) {
    std::uniform_int_distribution<int> support(1, v);
    const int k = support(rng);
    std::vector<int> ids(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) ids[static_cast<std::size_t>(i)] = i;
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<double> weights;
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
      weights.push_back(unit(rng) + 0.05);
      total += weights.back();
    }
    nlohmann::json next = nlohmann::json::object();
    for (int i = 0; i < k; ++i)
      next[vocab[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])]] =
          weights[static_cast<std::size_t>(i)] / total;
    entries.push_back({{"context", ctx}, {"next", next}});
  }

  inst.spec = {{"vocabulary", vocab},
               {"default_smoothing", smoothing(rng)},
               {"entries", entries}};
  return inst;
}

}  // namespace oracle
