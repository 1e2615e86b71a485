#include "dxrank/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "dxrank/errors.hpp"
#include "dxrank/parallel.hpp"
#include "dxrank/remote_provider.hpp"
#include "dxrank/table_model.hpp"

namespace dxrank {

namespace {

std::string path_str(const std::filesystem::path& p) { return p.string(); }

nlohmann::json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void ensure_out_dir(const std::filesystem::path& dir) {
  if (dir.empty()) throw UsageError("no output directory configured");
  std::filesystem::create_directories(dir);
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  return out;
}

// Provider failures are per-report events; everything else aborts the run.
// Returns the failure message, or nullopt to rethrow.
template <typename Fn>
std::optional<std::string> catch_provider_failure(Fn&& fn) {
  try {
    fn();
    return std::nullopt;
  } catch (const TransportError& e) {
    return std::string(e.what());
  } catch (const ProtocolError& e) {
    return std::string(e.what());
  } catch (const QueryError& e) {
    return std::string(e.what());
  }
}

void write_error_records(
    const std::vector<std::pair<std::string, std::string>>& failures,
    const std::filesystem::path& path) {
  auto sorted = failures;
  std::sort(sorted.begin(), sorted.end());
  std::ofstream out = open_output(path);
  for (const auto& [id, message] : sorted) {
    nlohmann::ordered_json rec;
    rec["report_id"] = id;
    rec["error"] = message;
    out << rec.dump() << '\n';
  }
}

GreedyParams greedy_params(const RunConfig& config, const Provider& provider) {
  GreedyParams params;
  params.max_tokens = config.max_tokens;
  for (const std::string& text : config.stop_tokens) {
    auto id = provider.tokenizer().find(text);
    if (!id)
      throw ValidationError("stop token \"" + text + "\" not in vocabulary");
    params.stop.insert(*id);
  }
  return params;
}

// Loads or initializes the prior cache per the config's cache policy.
PriorCache prepare_cache(const RunConfig& config, const Provider& provider,
                         const PromptTemplate& prompt) {
  const ProviderId& id = provider.id();
  const std::string hash = prompt.prefix_hash();
  if (!config.cache_file.empty() && std::filesystem::exists(config.cache_file)) {
    PriorCache cache = PriorCache::load(config.cache_file);
    try {
      cache.require_valid_for(id, hash);
      return cache;
    } catch (const CacheInvalidError&) {
      if (config.no_build_cache) throw;
      // stale: rebuild below
    }
  } else if (config.no_build_cache) {
    throw StateError("prior cache " + path_str(config.cache_file) +
                     " is missing and --no-build-cache is set");
  }
  return PriorCache(id, hash);
}

struct LoadedRun {
  std::unique_ptr<Provider> provider;
  PromptTemplate prompt;
  LabelCatalog catalog;
  std::vector<Report> reports;
};

LoadedRun load_run(const RunConfig& config) {
  config.validate();
  LoadedRun run{make_provider(config.provider),
                PromptTemplate::from_file(config.template_file),
                load_catalog(config.catalog_file),
                load_reports(config.reports_file)};
  run.catalog.tokenize(TokenizerRef(&run.provider->tokenizer()));
  return run;
}

BatchOutcome write_batch(const std::vector<RankedList>& rankings,
                         const std::vector<std::pair<std::string, std::string>>& failures,
                         const std::filesystem::path& out_dir) {
  auto sorted = rankings;
  std::sort(sorted.begin(), sorted.end(),
            [](const RankedList& a, const RankedList& b) {
              return a.report_id < b.report_id;
            });
  write_rankings(sorted, out_dir / "rankings.jsonl");
  write_error_records(failures, out_dir / "errors.jsonl");
  BatchOutcome outcome;
  outcome.succeeded = static_cast<int>(sorted.size());
  outcome.failures = failures;
  std::sort(outcome.failures.begin(), outcome.failures.end());
  return outcome;
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  return from_json(parse_json_file(path));
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("config must be a JSON object");
  RunConfig config;
  if (doc.contains("provider")) {
    const auto& p = doc["provider"];
    config.provider.kind = p.value("kind", config.provider.kind);
    config.provider.table_model = p.value("table_model", std::string());
    config.provider.endpoint = p.value("endpoint", std::string());
    config.provider.tokenizer = p.value("tokenizer", std::string());
    config.provider.name = p.value("name", config.provider.name);
    config.provider.version = p.value("version", config.provider.version);
  }
  config.template_file = doc.value("template", std::string());
  config.catalog_file = doc.value("catalog", std::string());
  config.reports_file = doc.value("reports", std::string());
  config.cache_file = doc.value("cache", std::string());
  config.out_dir = doc.value("out", std::string());
  config.alpha = doc.value("alpha", config.alpha);
  if (doc.contains("ks")) config.ks = doc["ks"].get<std::vector<int>>();
  config.max_tokens = doc.value("max_tokens", config.max_tokens);
  if (doc.contains("stop_tokens"))
    config.stop_tokens = doc["stop_tokens"].get<std::vector<std::string>>();
  config.threads = doc.value("threads", config.threads);
  config.no_build_cache = doc.value("no_build_cache", config.no_build_cache);
  return config;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json doc;
  doc["provider"] = {{"kind", provider.kind},
                     {"table_model", path_str(provider.table_model)},
                     {"endpoint", provider.endpoint},
                     {"tokenizer", path_str(provider.tokenizer)},
                     {"name", provider.name},
                     {"version", provider.version}};
  doc["template"] = path_str(template_file);
  doc["catalog"] = path_str(catalog_file);
  doc["reports"] = path_str(reports_file);
  doc["cache"] = path_str(cache_file);
  doc["out"] = path_str(out_dir);
  doc["alpha"] = alpha;
  doc["ks"] = ks;
  doc["max_tokens"] = max_tokens;
  doc["stop_tokens"] = stop_tokens;
  doc["threads"] = threads;
  doc["no_build_cache"] = no_build_cache;
  return doc;
}

void RunConfig::validate() const {
  if (alpha < 0.0) throw UsageError("--alpha must be nonnegative");
  if (ks.empty()) throw UsageError("--k list must be non-empty");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1) throw UsageError("--k values must be >= 1");
    if (i > 0 && ks[i] <= ks[i - 1])
      throw UsageError("--k list must be strictly increasing");
  }
  if (max_tokens < 1) throw UsageError("--max-tokens must be >= 1");
  if (threads < 1) throw UsageError("--threads must be >= 1");
  if (provider.kind != "table" && provider.kind != "remote")
    throw UsageError("--provider must be table or remote");
  if (provider.kind == "table" && provider.table_model.empty())
    throw UsageError("table provider needs --table-model");
  if (provider.kind == "remote" && provider.endpoint.empty())
    throw UsageError("remote provider needs --endpoint");
  if (provider.kind == "remote" && provider.tokenizer.empty())
    throw UsageError("remote provider needs --tokenizer");
}

std::unique_ptr<Provider> make_provider(const ProviderSpec& spec) {
  if (spec.kind == "table")
    return std::make_unique<TableProvider>(TableProvider::load(spec.table_model));
  if (spec.kind == "remote") {
    RemoteConfig config;
    config.endpoint = spec.endpoint;
    config.vocabulary_file = spec.tokenizer;
    config.provider_name = spec.name;
    config.provider_version = spec.version;
    return std::make_unique<RemoteProvider>(std::move(config));
  }
  throw UsageError("unknown provider kind \"" + spec.kind + "\"");
}

void write_rankings(const std::vector<RankedList>& rankings,
                    const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  for (const RankedList& list : rankings) {
    nlohmann::ordered_json rec;
    rec["report_id"] = list.report_id;
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const RankedEntry& entry : list.entries) {
      nlohmann::ordered_json e;
      e["code"] = entry.code;
      e["score"] = entry.score;
      if (entry.l_cond) e["l_cond"] = *entry.l_cond;
      if (entry.l_prior) e["l_prior"] = *entry.l_prior;
      entries.push_back(std::move(e));
    }
    rec["ranking"] = std::move(entries);
    out << rec.dump() << '\n';
  }
}

std::vector<RankedList> load_rankings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<RankedList> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("report_id") || !rec.contains("ranking"))
      throw ParseError(where + ": record needs report_id and ranking");
    RankedList list;
    list.report_id = rec["report_id"].get<std::string>();
    for (const auto& e : rec["ranking"]) {
      RankedEntry entry;
      entry.code = e.at("code").get<std::string>();
      entry.score = e.value("score", 0.0);
      if (e.contains("l_cond")) entry.l_cond = e["l_cond"].get<double>();
      if (e.contains("l_prior")) entry.l_prior = e["l_prior"].get<double>();
      list.entries.push_back(std::move(entry));
    }
    out.push_back(std::move(list));
  }
  return out;
}

BatchOutcome run_rank(const RunConfig& config) {
  LoadedRun run = load_run(config);
  ensure_out_dir(config.out_dir);
  PriorCache cache = prepare_cache(config, *run.provider, run.prompt);

  // Prior pass up front: report-independent, shared, and persisted.
  for (const Label& label : run.catalog.labels())
    prior_nll(label, run.prompt, *run.provider, cache);
  if (!config.cache_file.empty()) cache.save(config.cache_file);

  std::vector<RankedList> rankings;
  std::vector<std::pair<std::string, std::string>> failures;
  for (const Report& report : run.reports) {
    auto failure = catch_provider_failure([&] {
      rankings.push_back(rank_catalog(report, run.catalog, run.prompt,
                                      *run.provider, config.alpha, cache,
                                      config.threads));
    });
    if (failure) failures.emplace_back(report.id, *failure);
  }
  return write_batch(rankings, failures, config.out_dir);
}

BatchOutcome run_genmap(const RunConfig& config) {
  LoadedRun run = load_run(config);
  ensure_out_dir(config.out_dir);
  RarityWeights weights = build_rarity_weights(run.catalog);
  GreedyParams params = greedy_params(config, *run.provider);

  std::vector<std::optional<RankedList>> results(run.reports.size());
  std::vector<std::optional<std::pair<std::string, std::string>>> errors(
      run.reports.size());
  parallel_for(run.reports.size(), config.threads, [&](std::size_t i) {
    const Report& report = run.reports[i];
    auto failure = catch_provider_failure([&] {
      results[i] = genmap_rank(report, run.catalog, run.prompt, *run.provider,
                               weights, params);
    });
    if (failure) errors[i] = std::make_pair(report.id, *failure);
  });

  std::vector<RankedList> rankings;
  std::vector<std::pair<std::string, std::string>> failures;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i]) rankings.push_back(std::move(*results[i]));
    if (errors[i]) failures.push_back(std::move(*errors[i]));
  }
  return write_batch(rankings, failures, config.out_dir);
}

void run_build_prior_cache(const RunConfig& config) {
  config.validate();
  if (config.cache_file.empty())
    throw UsageError("build-prior-cache needs --cache PATH");
  std::unique_ptr<Provider> provider = make_provider(config.provider);
  PromptTemplate prompt = PromptTemplate::from_file(config.template_file);
  LabelCatalog catalog = load_catalog(config.catalog_file);
  catalog.tokenize(TokenizerRef(&provider->tokenizer()));

  PriorCache cache(provider->id(), prompt.prefix_hash());
  for (const Label& label : catalog.labels())
    prior_nll(label, prompt, *provider, cache);
  if (config.cache_file.has_parent_path())
    std::filesystem::create_directories(config.cache_file.parent_path());
  cache.save(config.cache_file);
}

namespace {

void require_same_ids(const std::vector<RankedList>& m1,
                      const std::vector<RankedList>& m2) {
  std::set<std::string> ids1, ids2;
  for (const auto& r : m1) ids1.insert(r.report_id);
  for (const auto& r : m2) ids2.insert(r.report_id);
  if (ids1 == ids2) return;
  std::string only1, only2;
  for (const auto& id : ids1)
    if (!ids2.count(id)) only1 += (only1.empty() ? "" : ", ") + id;
  for (const auto& id : ids2)
    if (!ids1.count(id)) only2 += (only2.empty() ? "" : ", ") + id;
  throw ValidationError("ranking files cover different report ids; only in M1: [" +
                        only1 + "]; only in M2: [" + only2 + "]");
}

MethodMetrics method_metrics(const EvalRun& run) {
  MethodMetrics metrics;
  for (int k : run.ks()) {
    metrics.hit[k] = hit_at_k(run, k);
    metrics.macro_f1[k] = macro_f1_at_k(run, k);
  }
  return metrics;
}

void write_comparison(const ComparisonReport& report,
                      const std::filesystem::path& out_dir,
                      const EvalRun* m1_run = nullptr,
                      const EvalRun* m2_run = nullptr) {
  ensure_out_dir(out_dir);
  open_output(out_dir / "metrics.txt") << render_comparison_table(report);
  nlohmann::ordered_json doc = nlohmann::ordered_json::parse(comparison_json(report));
  if (m1_run && m2_run) {
    doc["warnings"] = {{"m1",
                        {{"missing_gold", m1_run->warnings().missing_gold},
                         {"gold_not_in_catalog", m1_run->warnings().gold_not_in_catalog}}},
                       {"m2",
                        {{"missing_gold", m2_run->warnings().missing_gold},
                         {"gold_not_in_catalog", m2_run->warnings().gold_not_in_catalog}}}};
    nlohmann::ordered_json specialty;
    for (int k : m2_run->ks()) {
      nlohmann::ordered_json per_k;
      for (const auto& [group, value] : per_specialty_hit(*m2_run, k))
        per_k[group] = value;
      specialty["hit@" + std::to_string(k)] = std::move(per_k);
    }
    doc["m2_per_specialty"] = std::move(specialty);
    nlohmann::ordered_json all_catalog;
    for (int k : m2_run->ks())
      all_catalog["macro_f1@" + std::to_string(k)] =
          macro_f1_at_k(*m2_run, k, MacroClasses::kAllCatalog);
    doc["m2_macro_f1_all_catalog"] = std::move(all_catalog);
  }
  open_output(out_dir / "metrics.json") << doc.dump(2) << '\n';
}

}  // namespace

ComparisonReport run_eval(const EvalArgs& args) {
  std::vector<RankedList> m1 = load_rankings(args.m1_rankings);
  std::vector<RankedList> m2 = load_rankings(args.m2_rankings);
  require_same_ids(m1, m2);
  std::vector<Report> reports = load_reports(args.reports_file);
  LabelCatalog catalog = load_catalog(args.catalog_file);

  EvalRun m1_run = EvalRun::build(m1, reports, catalog, args.ks);
  EvalRun m2_run = EvalRun::build(m2, reports, catalog, args.ks);

  ComparisonReport report;
  report.ks = args.ks;
  report.models.push_back(ModelComparison{args.model_name,
                                          method_metrics(m1_run),
                                          method_metrics(m2_run)});
  write_comparison(report, args.out_dir, &m1_run, &m2_run);
  return report;
}

ComparisonReport load_comparison_summary(const std::filesystem::path& path) {
  nlohmann::json doc = parse_json_file(path);
  if (!doc.is_object() || !doc.contains("ks") || !doc.contains("models"))
    throw ParseError(path.string() + ": summary needs ks and models");
  ComparisonReport report;
  report.ks = doc["ks"].get<std::vector<int>>();
  for (const auto& entry : doc["models"]) {
    ModelComparison model;
    model.model = entry.at("model").get<std::string>();
    for (const char* kind : {"m1", "m2"}) {
      MethodMetrics& mm = kind == std::string("m1") ? model.m1 : model.m2;
      const auto& values = entry.at(kind);
      for (int k : report.ks) {
        mm.hit[k] = values.at("hit@" + std::to_string(k)).get<double>();
        mm.macro_f1[k] = values.at("macro_f1@" + std::to_string(k)).get<double>();
      }
    }
    report.models.push_back(std::move(model));
  }
  return report;
}

ComparisonReport run_eval_summary(const std::filesystem::path& summary,
                                  const std::filesystem::path& out_dir) {
  ComparisonReport report = load_comparison_summary(summary);
  write_comparison(report, out_dir);
  return report;
}

std::vector<AlphaSweepRow> run_alpha_sweep(const RunConfig& config,
                                           const std::vector<double>& alphas) {
  if (alphas.empty()) throw UsageError("--alphas must be non-empty");
  for (double a : alphas)
    if (a < 0.0) throw UsageError("--alphas must be nonnegative");
  LoadedRun run = load_run(config);
  ensure_out_dir(config.out_dir);
  PriorCache cache = prepare_cache(config, *run.provider, run.prompt);
  for (const Label& label : run.catalog.labels())
    prior_nll(label, run.prompt, *run.provider, cache);
  if (!config.cache_file.empty()) cache.save(config.cache_file);

  // One conditional pass over (report, label); failed reports drop out of
  // the sweep with an error record, matching the rank command's contract.
  const std::size_t m = run.catalog.size();
  std::vector<std::vector<double>> l_cond(run.reports.size(),
                                          std::vector<double>(m));
  std::vector<std::optional<std::pair<std::string, std::string>>> errors(
      run.reports.size());
  parallel_for(run.reports.size(), config.threads, [&](std::size_t r) {
    auto failure = catch_provider_failure([&] {
      for (std::size_t j = 0; j < m; ++j)
        l_cond[r][j] = conditional_nll(run.reports[r], run.catalog.at(j),
                                       run.prompt, *run.provider);
    });
    if (failure) errors[r] = std::make_pair(run.reports[r].id, *failure);
  });

  std::vector<double> l_prior(m);
  for (std::size_t j = 0; j < m; ++j)
    l_prior[j] = prior_nll(run.catalog.at(j), run.prompt, *run.provider, cache);

  std::vector<Report> usable;
  std::vector<std::size_t> usable_index;
  std::vector<std::pair<std::string, std::string>> failures;
  for (std::size_t r = 0; r < run.reports.size(); ++r) {
    if (errors[r]) {
      failures.push_back(*errors[r]);
    } else {
      usable.push_back(run.reports[r]);
      usable_index.push_back(r);
    }
  }
  write_error_records(failures, config.out_dir / "errors.jsonl");
  if (usable.empty()) throw ValidationError("alpha sweep: no usable reports");

  std::vector<AlphaSweepRow> rows;
  for (double alpha : alphas) {
    std::vector<RankedList> rankings;
    rankings.reserve(usable.size());
    for (std::size_t u = 0; u < usable.size(); ++u)
      rankings.push_back(rank_from_parts(usable[u].id, run.catalog,
                                         l_cond[usable_index[u]], l_prior,
                                         alpha));
    EvalRun eval = EvalRun::build(rankings, usable, run.catalog, config.ks);
    AlphaSweepRow row;
    row.alpha = alpha;
    for (int k : config.ks) {
      row.hit[k] = hit_at_k(eval, k);
      row.macro_f1[k] = macro_f1_at_k(eval, k);
    }
    rows.push_back(std::move(row));
  }

  std::ofstream csv = open_output(config.out_dir / "sweep.csv");
  csv << "alpha";
  for (int k : config.ks) csv << ",hit@" << k;
  for (int k : config.ks) csv << ",macro_f1@" << k;
  csv << '\n';
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  for (const AlphaSweepRow& row : rows) {
    csv << num(row.alpha);
    for (int k : config.ks) csv << ',' << num(row.hit.at(k));
    for (int k : config.ks) csv << ',' << num(row.macro_f1.at(k));
    csv << '\n';
  }
  return rows;
}

std::vector<MappingDecision> run_map_icd(const MapIcdArgs& args) {
  std::vector<GemRow> rows9 = filter_exact_mappable(parse_gem(args.gem_9_to_10));
  std::vector<GemRow> rows10 = filter_exact_mappable(parse_gem(args.gem_10_to_11));
  std::vector<CodeInput> inputs = load_code_inputs(args.inputs);
  std::set<std::string> deny;
  if (!args.exclude.empty()) deny = load_code_set(args.exclude);

  std::vector<MappingDecision> stage1 =
      enforce_one_to_one(rows9, MapStage::kIcd9To10);
  std::vector<MappingDecision> decisions =
      chain_to_icd11(stage1, rows10, inputs, deny);

  ensure_out_dir(args.out_dir);
  write_resolved(decisions, args.out_dir / "resolved.tsv");
  write_review_queue(decisions, args.out_dir / "review_queue.tsv");
  return decisions;
}

}  // namespace dxrank
