// dxrank: rank a fixed diagnosis catalog against free-text patient reports
// by likelihood scoring, run the generation+mapping baseline, evaluate
// rankings, and drive the ICD code-mapping pipeline.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dxrank/errors.hpp"
#include "dxrank/metrics.hpp"
#include "dxrank/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;      // usage or input validation
constexpr int kExitProvider = 2;   // provider, transport or protocol
constexpr int kExitPartial = 3;    // batch finished with per-report errors

struct ConfigFlags {
  std::string config_file;
  std::string provider_kind, table_model, endpoint, tokenizer;
  std::string provider_name, provider_version;
  std::string template_file, catalog_file, reports_file, cache_file, out_dir;
  double alpha = 1.0;
  std::vector<int> ks;
  int max_tokens = 32;
  std::vector<std::string> stop_tokens;
  int threads = 1;
  bool no_build_cache = false;
};

// Flags override config-file fields; only flags the user actually passed
// count as overrides.
void add_common_options(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_file, "JSON run config");
  cmd->add_option("--provider", flags.provider_kind,
                  "Provider backend: table or remote");
  cmd->add_option("--table-model", flags.table_model,
                  "Table model spec file (table provider)");
  cmd->add_option("--endpoint", flags.endpoint,
                  "Server base URL (remote provider)");
  cmd->add_option("--tokenizer", flags.tokenizer,
                  "Vocabulary JSON for the remote provider's tokenizer");
  cmd->add_option("--provider-name", flags.provider_name,
                  "Remote provider name (cache key)");
  cmd->add_option("--provider-version", flags.provider_version,
                  "Remote provider version (cache key)");
  cmd->add_option("--template", flags.template_file,
                  "Prompt template file with a {report} slot");
  cmd->add_option("--catalog", flags.catalog_file,
                  "Label catalog TSV (code<TAB>name)");
  cmd->add_option("--reports", flags.reports_file, "Reports JSONL");
  cmd->add_option("--cache", flags.cache_file, "Prior cache JSON path");
  cmd->add_option("--out", flags.out_dir, "Output directory");
  cmd->add_option("--alpha", flags.alpha, "Prior weight (default 1.0)");
  cmd->add_option("--k", flags.ks, "Cutoffs, e.g. --k 3 5 10")->delimiter(',');
  cmd->add_option("--max-tokens", flags.max_tokens,
                  "Greedy decoding budget (default 32)");
  cmd->add_option("--stop-token", flags.stop_tokens,
                  "Greedy stop token text (repeatable)");
  cmd->add_option("--threads", flags.threads, "Scoring worker count");
  cmd->add_flag("--no-build-cache", flags.no_build_cache,
                "Fail instead of building a missing prior cache");
}

dxrank::RunConfig resolve_config(const CLI::App* cmd, const ConfigFlags& flags) {
  dxrank::RunConfig config;
  if (!flags.config_file.empty())
    config = dxrank::RunConfig::from_file(flags.config_file);
  auto passed = [cmd](const std::string& name) {
    return cmd->count(name) > 0;
  };
  if (passed("--provider")) config.provider.kind = flags.provider_kind;
  if (passed("--table-model")) config.provider.table_model = flags.table_model;
  if (passed("--endpoint")) config.provider.endpoint = flags.endpoint;
  if (passed("--tokenizer")) config.provider.tokenizer = flags.tokenizer;
  if (passed("--provider-name")) config.provider.name = flags.provider_name;
  if (passed("--provider-version"))
    config.provider.version = flags.provider_version;
  if (passed("--template")) config.template_file = flags.template_file;
  if (passed("--catalog")) config.catalog_file = flags.catalog_file;
  if (passed("--reports")) config.reports_file = flags.reports_file;
  if (passed("--cache")) config.cache_file = flags.cache_file;
  if (passed("--out")) config.out_dir = flags.out_dir;
  if (passed("--alpha")) config.alpha = flags.alpha;
  if (passed("--k")) config.ks = flags.ks;
  if (passed("--max-tokens")) config.max_tokens = flags.max_tokens;
  if (passed("--stop-token")) config.stop_tokens = flags.stop_tokens;
  if (passed("--threads")) config.threads = flags.threads;
  if (passed("--no-build-cache")) config.no_build_cache = flags.no_build_cache;
  return config;
}

int finish_batch(const dxrank::BatchOutcome& outcome) {
  std::cout << outcome.succeeded << " report(s) ranked, "
            << outcome.failures.size() << " failed\n";
  for (const auto& [id, message] : outcome.failures)
    std::cerr << "error: report " << id << ": " << message << '\n';
  return outcome.partial() ? kExitPartial : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diagnosis label ranking under autoregressive language models"};
  app.require_subcommand(1);

  ConfigFlags rank_flags, genmap_flags, sweep_flags, cache_flags;

  CLI::App* rank = app.add_subcommand(
      "rank", "Score and rank the catalog per report (likelihood re-ranking)");
  add_common_options(rank, rank_flags);

  CLI::App* genmap = app.add_subcommand(
      "genmap", "Greedy-decode a phrase per report and map it to the catalog");
  add_common_options(genmap, genmap_flags);

  CLI::App* sweep = app.add_subcommand(
      "alpha-sweep", "Recompute rankings and metrics over a list of alphas");
  add_common_options(sweep, sweep_flags);
  std::vector<double> alphas;
  sweep->add_option("--alphas", alphas, "Alpha values, e.g. --alphas 0,0.5,1")
      ->delimiter(',');

  CLI::App* build_cache = app.add_subcommand(
      "build-prior-cache", "Compute report-free NLLs for every label");
  add_common_options(build_cache, cache_flags);

  CLI::App* eval = app.add_subcommand(
      "eval", "Compare two ranking files (or a precomputed summary)");
  std::string m1_file, m2_file, eval_reports, eval_catalog, summary_file;
  std::string model_name = "model", eval_out;
  std::vector<int> eval_ks = {3, 5, 10};
  eval->add_option("--m1", m1_file, "Baseline rankings JSONL");
  eval->add_option("--m2", m2_file, "Re-ranker rankings JSONL");
  eval->add_option("--reports", eval_reports, "Reports JSONL with gold labels");
  eval->add_option("--catalog", eval_catalog, "Label catalog TSV");
  eval->add_option("--summary", summary_file,
                   "Precomputed per-model metric values JSON");
  eval->add_option("--model", model_name, "Model name for the table block");
  eval->add_option("--k", eval_ks, "Cutoffs")->delimiter(',');
  eval->add_option("--out", eval_out, "Output directory");

  CLI::App* map_icd = app.add_subcommand(
      "map-icd", "Resolve ICD-9/ICD-10 codes to ICD-11 with a review queue");
  std::string gem9, gem10, icd_inputs, icd_exclude, icd_out;
  map_icd->add_option("--gem-9-10", gem9, "ICD-9 to ICD-10 mapping TSV")
      ->required();
  map_icd->add_option("--gem-10-11", gem10, "ICD-10 to ICD-11 mapping TSV")
      ->required();
  map_icd->add_option("--inputs", icd_inputs, "Input codes TSV (code<TAB>version)")
      ->required();
  map_icd->add_option("--exclude", icd_exclude,
                      "Non-disease ICD-11 codes to exclude, one per line");
  map_icd->add_option("--out", icd_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (rank->parsed())
      return finish_batch(dxrank::run_rank(resolve_config(rank, rank_flags)));
    if (genmap->parsed())
      return finish_batch(
          dxrank::run_genmap(resolve_config(genmap, genmap_flags)));
    if (sweep->parsed()) {
      auto rows = dxrank::run_alpha_sweep(resolve_config(sweep, sweep_flags),
                                          alphas);
      for (const auto& row : rows) {
        std::cout << "alpha=" << row.alpha;
        for (const auto& [k, v] : row.hit)
          std::cout << "  hit@" << k << "=" << dxrank::format_percent(v, 2);
        for (const auto& [k, v] : row.macro_f1)
          std::cout << "  macro_f1@" << k << "="
                    << dxrank::format_percent(v, 2);
        std::cout << '\n';
      }
      return kExitOk;
    }
    if (build_cache->parsed()) {
      dxrank::run_build_prior_cache(resolve_config(build_cache, cache_flags));
      return kExitOk;
    }
    if (eval->parsed()) {
      if (!summary_file.empty()) {
        if (eval_out.empty()) throw dxrank::UsageError("eval needs --out");
        auto report = dxrank::run_eval_summary(summary_file, eval_out);
        std::cout << dxrank::render_comparison_table(report);
        return kExitOk;
      }
      if (m1_file.empty() || m2_file.empty() || eval_reports.empty() ||
          eval_catalog.empty() || eval_out.empty())
        throw dxrank::UsageError(
            "eval needs --m1, --m2, --reports, --catalog and --out "
            "(or --summary and --out)");
      dxrank::EvalArgs args;
      args.m1_rankings = m1_file;
      args.m2_rankings = m2_file;
      args.reports_file = eval_reports;
      args.catalog_file = eval_catalog;
      args.ks = eval_ks;
      args.model_name = model_name;
      args.out_dir = eval_out;
      auto report = dxrank::run_eval(args);
      std::cout << dxrank::render_comparison_table(report);
      return kExitOk;
    }
    if (map_icd->parsed()) {
      dxrank::MapIcdArgs args;
      args.gem_9_to_10 = gem9;
      args.gem_10_to_11 = gem10;
      args.inputs = icd_inputs;
      args.exclude = icd_exclude;
      args.out_dir = icd_out;
      auto decisions = dxrank::run_map_icd(args);
      int resolved = 0, withheld = 0, excluded = 0;
      for (const auto& d : decisions) {
        switch (d.status) {
          case dxrank::MapStatus::kResolved: ++resolved; break;
          case dxrank::MapStatus::kExcludedNonDisease: ++excluded; break;
          default: ++withheld; break;
        }
      }
      std::cout << decisions.size() << " input(s): " << resolved
                << " resolved, " << withheld << " withheld for review, "
                << excluded << " excluded\n";
      return kExitOk;
    }
  } catch (const dxrank::TransportError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitProvider;
  } catch (const dxrank::ProtocolError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitProvider;
  } catch (const dxrank::QueryError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitProvider;
  } catch (const dxrank::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
