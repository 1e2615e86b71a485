#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dxrank/tokenizer.hpp"

namespace dxrank {

// One patient self-report. `text` is the free-text narrative the scorers
// condition on; `gold_label` is the evaluation target when present.
struct Report {
  std::string id;
  std::string text;
  std::optional<std::string> specialty;
  std::optional<std::string> gold_label;
};

// One candidate diagnosis. `token_ids` caches τ(name) under the active
// tokenizer; empty until the catalog is tokenized.
struct Label {
  std::string code;
  std::string name;
  std::vector<TokenId> token_ids;
};

/**
 * The fixed candidate set. Label order is the canonical index (file order)
 * and doubles as the final tie-break everywhere a ranking is produced.
 * Read-only after load.
 */
class LabelCatalog {
 public:
  explicit LabelCatalog(std::vector<Label> labels);

  std::size_t size() const { return labels_.size(); }
  const Label& at(std::size_t index) const { return labels_.at(index); }
  const std::vector<Label>& labels() const { return labels_; }
  std::optional<std::size_t> index_of(std::string_view code) const;
  bool contains(std::string_view code) const { return index_of(code).has_value(); }

  // Fills token_ids for every label; ValidationError if any label
  // tokenizes to nothing (T(c) >= 1).
  void tokenize(const TokenizerRef& tokenizer);
  bool tokenized() const;

 private:
  std::vector<Label> labels_;
  std::unordered_map<std::string, std::size_t> by_code_;
};

/**
 * Fixed prompt with one {report} slot. The conditional context is the
 * template rendered with the report text; the prior context is the same
 * template with the slot blanked, so the surrounding tokens stay aligned
 * between the two scores.
 */
class PromptTemplate {
 public:
  static constexpr std::string_view kSlot = "{report}";

  static PromptTemplate from_string(std::string text);
  static PromptTemplate from_file(const std::filesystem::path& path);

  std::string render(std::string_view report_text) const;
  const std::string& report_free() const { return report_free_; }
  const std::string& text() const { return text_; }

  // Hex FNV-1a of the report-free prefix; keys the prior cache.
  std::string prefix_hash() const;

 private:
  std::string text_;
  std::string report_free_;
  std::size_t slot_pos_ = 0;
};

// One JSON record per line: {"id": ..., "text": ..., "specialty"?, "gold_label"?}.
// Reports come back in file order; duplicate ids and empty texts are rejected.
std::vector<Report> load_reports(const std::filesystem::path& path);

// Tab-separated code<TAB>name, no header. Canonical index = row order.
LabelCatalog load_catalog(const std::filesystem::path& path);
// Same, with eager tokenization of every label name (T(c) >= 1 enforced).
LabelCatalog load_catalog(const std::filesystem::path& path,
                          const TokenizerRef& tokenizer);
void save_catalog(const LabelCatalog& catalog,
                  const std::filesystem::path& path);

}  // namespace dxrank
