#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dxrank/corpus.hpp"
#include "dxrank/llrank.hpp"

namespace dxrank {

// Counts of reports dropped from an evaluation, surfaced, never silent.
struct EvalWarnings {
  int missing_gold = 0;
  int gold_not_in_catalog = 0;

  int total() const { return missing_gold + gold_not_in_catalog; }
};

/**
 * An evaluation run: complete rankings joined with gold labels. Reports
 * without a usable gold label are excluded at construction and counted in
 * warnings(). After construction every entry's gold code exists in the
 * catalog and every ranking covers the full catalog.
 */
class EvalRun {
 public:
  struct Entry {
    std::vector<std::string> ranked_codes;  // best first, |catalog| long
    std::string gold;
    std::optional<std::string> specialty;
  };

  static EvalRun build(const std::vector<RankedList>& rankings,
                       const std::vector<Report>& reports,
                       const LabelCatalog& catalog,
                       std::vector<int> ks = {3, 5, 10});

  // Keyed by report id (ordered, so iteration is deterministic).
  const std::map<std::string, Entry>& entries() const { return entries_; }
  const EvalWarnings& warnings() const { return warnings_; }
  const std::vector<int>& ks() const { return ks_; }
  std::size_t catalog_size() const { return catalog_size_; }
  const std::vector<std::string>& catalog_codes() const { return catalog_codes_; }

 private:
  std::map<std::string, Entry> entries_;
  EvalWarnings warnings_;
  std::vector<int> ks_;
  std::size_t catalog_size_ = 0;
  std::vector<std::string> catalog_codes_;
};

// Percent of reports whose gold code is in the top k. DomainError if k < 1
// or the run is empty.
double hit_at_k(const EvalRun& run, int k);

// Which classes the macro average runs over. The paper's tables do not pin
// this down; gold-present is the default and both are reported.
enum class MacroClasses { kGoldPresent, kAllCatalog };

// Top-k membership as multi-label prediction, per-class F1 (0 when the
// denominator is 0), macro-averaged, x100.
double macro_f1_at_k(const EvalRun& run, int k,
                     MacroClasses classes = MacroClasses::kGoldPresent);

// 100 * (m2 - m1) / m1; nullopt marks the undefined m1 = 0 case.
// DomainError when m1 < 0.
std::optional<double> relative_improvement(double m1, double m2);

// Arithmetic mean of unrounded deltas. DomainError on an empty list.
double mean_improvement(std::span<const double> deltas);

// hit_at_k restricted to each specialty; untagged reports group under
// "unspecified".
std::map<std::string, double> per_specialty_hit(const EvalRun& run, int k);

// One-decimal percent rendering, round half away from zero, e.g. "130.3".
std::string format_percent(double value, int decimals = 1);

// --- Comparison report (two scoring methods, Table-1-shaped) ---

struct MethodMetrics {
  std::map<int, double> hit;       // k -> percent
  std::map<int, double> macro_f1;  // k -> percent
};

struct ModelComparison {
  std::string model;
  MethodMetrics m1;  // baseline
  MethodMetrics m2;  // re-ranker
};

struct ComparisonReport {
  std::vector<int> ks;
  std::vector<ModelComparison> models;
};

// Per-model deltas plus the mean-delta footer (undefined deltas excluded
// from the mean; an all-undefined column yields nullopt).
struct ComparisonDeltas {
  // model -> (column -> delta); columns are "hit@k"/"macro_f1@k".
  std::vector<std::map<std::string, std::optional<double>>> per_model;
  std::map<std::string, std::optional<double>> mean;
};

ComparisonDeltas comparison_deltas(const ComparisonReport& report);
std::string render_comparison_table(const ComparisonReport& report);
std::string comparison_json(const ComparisonReport& report);

}  // namespace dxrank
