#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dxrank/genmap.hpp"
#include "dxrank/icdmap.hpp"
#include "dxrank/llrank.hpp"
#include "dxrank/metrics.hpp"
#include "dxrank/provider.hpp"

namespace dxrank {

struct ProviderSpec {
  std::string kind = "table";  // "table" | "remote"
  std::filesystem::path table_model;
  std::string endpoint;
  std::filesystem::path tokenizer;  // remote vocabulary file
  std::string name = "remote";
  std::string version = "0";
};

/**
 * Everything one reproducible run needs. Serializes to a JSON config file;
 * flags override fields. All operations driven by a config are seedless
 * and deterministic, so equal configs and inputs give byte-equal outputs.
 */
struct RunConfig {
  ProviderSpec provider;
  std::filesystem::path template_file;
  std::filesystem::path catalog_file;
  std::filesystem::path reports_file;
  std::filesystem::path cache_file;
  std::filesystem::path out_dir;
  double alpha = 1.0;
  std::vector<int> ks = {3, 5, 10};
  int max_tokens = 32;
  std::vector<std::string> stop_tokens;
  int threads = 1;
  bool no_build_cache = false;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& doc);
  nlohmann::ordered_json to_json() const;

  void validate() const;  // UsageError on bad alpha/ks/threads/provider kind
};

std::unique_ptr<Provider> make_provider(const ProviderSpec& spec);

struct BatchOutcome {
  int succeeded = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // id -> message

  bool partial() const { return !failures.empty(); }
};

// Writes rankings.jsonl and errors.jsonl under out_dir, records ordered by
// report id; persists the prior cache when a cache path is configured.
BatchOutcome run_rank(const RunConfig& config);

// Same surface for the generation+mapping baseline (no l_cond/l_prior in
// the records, no cache involved).
BatchOutcome run_genmap(const RunConfig& config);

// Computes priors for the whole catalog and writes the cache file.
void run_build_prior_cache(const RunConfig& config);

struct EvalArgs {
  std::filesystem::path m1_rankings;
  std::filesystem::path m2_rankings;
  std::filesystem::path reports_file;
  std::filesystem::path catalog_file;
  std::vector<int> ks = {3, 5, 10};
  std::string model_name = "model";
  std::filesystem::path out_dir;
};

// Two-ranking-files mode: joins both rankings with gold labels, computes
// Hit@k / Macro-F1@k, writes metrics.txt + metrics.json.
ComparisonReport run_eval(const EvalArgs& args);

// Summary mode: precomputed per-model M1/M2 metric values in, the same
// rendered comparison out.
ComparisonReport load_comparison_summary(const std::filesystem::path& path);
ComparisonReport run_eval_summary(const std::filesystem::path& summary,
                                  const std::filesystem::path& out_dir);

struct AlphaSweepRow {
  double alpha = 0.0;
  std::map<int, double> hit;       // k -> percent
  std::map<int, double> macro_f1;  // k -> percent
};

// One (l_cond, l_prior) pass, recombined per alpha; writes sweep.csv.
std::vector<AlphaSweepRow> run_alpha_sweep(const RunConfig& config,
                                           const std::vector<double>& alphas);

struct MapIcdArgs {
  std::filesystem::path gem_9_to_10;
  std::filesystem::path gem_10_to_11;
  std::filesystem::path inputs;
  std::filesystem::path exclude;  // optional non-disease list
  std::filesystem::path out_dir;
};

// Full chain; writes resolved.tsv + review_queue.tsv.
std::vector<MappingDecision> run_map_icd(const MapIcdArgs& args);

// JSONL ranking records: {"report_id": ..., "ranking": [{"code", "score",
// "l_cond"?, "l_prior"?}]}.
void write_rankings(const std::vector<RankedList>& rankings,
                    const std::filesystem::path& path);
std::vector<RankedList> load_rankings(const std::filesystem::path& path);

}  // namespace dxrank
