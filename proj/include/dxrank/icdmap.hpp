#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace dxrank {

// One equivalence-mapping row. Codes are uppercase-normalized on parse;
// flags come strictly from {0, 1}.
struct GemRow {
  std::string source;
  std::string target;
  bool exact = false;
  bool mappable = false;

  bool operator==(const GemRow&) const = default;
};

enum class MapStage { kIcd9To10, kIcd10To11 };
enum class MapStatus {
  kResolved,
  kWithheldMultiCandidate,
  kWithheldInexact,
  kExcludedNonDisease,
};

const char* to_string(MapStage stage);
const char* to_string(MapStatus status);

// Outcome for one source code at one stage. Resolved decisions carry the
// single surviving target; withheld ones carry the distinct candidates
// (empty when nothing survived filtering).
struct MappingDecision {
  std::string source;
  MapStatus status = MapStatus::kWithheldInexact;
  MapStage stage = MapStage::kIcd9To10;
  std::string target;                   // resolved / excluded only
  std::vector<std::string> candidates;  // withheld_multi_candidate only
};

// A code to convert plus its version flag (9 or 10).
struct CodeInput {
  std::string code;
  int version = 0;
};

// TSV source<TAB>target<TAB>exact<TAB>mappable, no header.
std::vector<GemRow> parse_gem(const std::filesystem::path& path);
void save_gem(std::span<const GemRow> rows, const std::filesystem::path& path);

// Keeps rows flagged both exact and mappable.
std::vector<GemRow> filter_exact_mappable(std::span<const GemRow> rows);

// One decision per distinct source: exactly one distinct target resolves,
// two or more withhold; duplicate identical rows collapse first. Sources
// absent from `rows` get no decision here.
std::vector<MappingDecision> enforce_one_to_one(std::span<const GemRow> rows,
                                                MapStage stage);

// TSV code<TAB>version, version in {9, 10}. Bad version or duplicate code
// is an input error naming the row.
std::vector<CodeInput> load_code_inputs(const std::filesystem::path& path);

// One code per line, '#' comments allowed; uppercase-normalized.
std::set<std::string> load_code_set(const std::filesystem::path& path);

// Routes ICD-9 inputs through their stage-1 decision then 10->11, and
// native ICD-10 inputs directly; a withheld stage withholds the whole
// chain at the earliest blocking stage. Fully resolved targets found in
// `non_disease` become excluded_non_disease. `icd9_decisions` is the
// enforce_one_to_one output over the filtered 9->10 table; the 10->11 rows
// must already be filtered for the exact+mappable rule. Output order
// follows `inputs`; every input yields exactly one decision.
std::vector<MappingDecision> chain_to_icd11(
    std::span<const MappingDecision> icd9_decisions,
    std::span<const GemRow> icd10_to_11_rows,
    std::span<const CodeInput> inputs,
    const std::set<std::string>& non_disease = {});

// resolved.tsv: header source<TAB>icd11, then resolved rows by source code.
void write_resolved(std::span<const MappingDecision> decisions,
                    const std::filesystem::path& path);

// review_queue.tsv: header source<TAB>stage<TAB>candidates, withheld rows
// by source code, candidates comma-joined.
void write_review_queue(std::span<const MappingDecision> decisions,
                        const std::filesystem::path& path);

}  // namespace dxrank
