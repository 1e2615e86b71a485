#include "doctest.h"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "dxrank/errors.hpp"
#include "dxrank/runner.hpp"
#include "dxrank/table_model.hpp"

using namespace dxrank;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = DXRANK_FIXTURES_DIR;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

RunConfig demo_config(const std::filesystem::path& out_dir) {
  RunConfig config;
  config.provider.kind = "table";
  config.provider.table_model = kFixtures / "demo" / "table_model.json";
  config.template_file = kFixtures / "demo" / "template.txt";
  config.catalog_file = kFixtures / "demo" / "catalog.tsv";
  config.reports_file = kFixtures / "demo" / "reports.jsonl";
  config.out_dir = out_dir;
  config.ks = {1, 3, 5};
  config.stop_tokens = {"done"};
  return config;
}

}  // namespace

TEST_CASE("run config round-trips through its JSON serialization") {
  RunConfig config = demo_config("/tmp/out");
  config.alpha = 0.5;
  config.threads = 4;
  config.cache_file = "/tmp/cache.json";
  config.provider.endpoint = "http://127.0.0.1:1234";
  auto doc = config.to_json();
  RunConfig back = RunConfig::from_json(doc);
  CHECK(back.to_json() == doc);
  CHECK(back.alpha == 0.5);
  CHECK(back.ks == std::vector<int>{1, 3, 5});
  CHECK(back.stop_tokens == std::vector<std::string>{"done"});
}

TEST_CASE("config validation catches bad values before any provider work") {
  RunConfig config = demo_config("/tmp/out");
  config.alpha = -1.0;
  CHECK_THROWS_AS(config.validate(), UsageError);
  config.alpha = 1.0;
  config.ks = {5, 3};
  CHECK_THROWS_AS(config.validate(), UsageError);
  config.ks = {};
  CHECK_THROWS_AS(config.validate(), UsageError);
  config.ks = {3};
  config.threads = 0;
  CHECK_THROWS_AS(config.validate(), UsageError);
  config.threads = 1;
  config.provider.kind = "quantum";
  CHECK_THROWS_AS(config.validate(), UsageError);
}

TEST_CASE("run_rank produces one record per report, matching rank_catalog") {
  auto out = fresh_dir("runner_rank");
  RunConfig config = demo_config(out);
  config.cache_file = out / "prior.json";
  BatchOutcome outcome = run_rank(config);
  CHECK(outcome.succeeded == 5);
  CHECK(outcome.failures.empty());

  auto rankings = load_rankings(out / "rankings.jsonl");
  REQUIRE(rankings.size() == 5);

  // Frozen expectations from an independent walk of the demo table.
  const std::map<std::string, double> expected_prior = {
      {"1A00", 1.2039728043259359},  {"CA40", 0.8859784209659376},
      {"BA00", 0.42490049530266111}, {"CA22", 1.7532789486599909},
      {"MD30", 0.68459126497708611}, {"ME84", 1.8971199848858813}};
  const std::map<std::string, std::pair<std::string, double>> expected_top = {
      {"r1", {"1A00", 0.30809306971190853}},
      {"r2", {"CA40", 0.17833747196936622}},
      {"r3", {"BA00", 0.39925384810888576}},
      {"r4", {"CA22", 0.60198640216296795}},
      {"r5", {"MD30", 0.4243218919376292}}};
  for (const RankedList& list : rankings) {
    REQUIRE(list.entries.size() == 6);
    const auto& [gold, l_cond] = expected_top.at(list.report_id);
    CHECK(list.entries[0].code == gold);
    CHECK(*list.entries[0].l_cond == doctest::Approx(l_cond).epsilon(1e-12));
    for (const RankedEntry& e : list.entries)
      CHECK(*e.l_prior ==
            doctest::Approx(expected_prior.at(e.code)).epsilon(1e-12));
  }

  // Engine-level oracle: direct rank_catalog on the same inputs.
  auto provider = make_provider(config.provider);
  PromptTemplate prompt = PromptTemplate::from_file(config.template_file);
  LabelCatalog catalog = load_catalog(config.catalog_file,
                                      TokenizerRef(&provider->tokenizer()));
  PriorCache cache(provider->id(), prompt.prefix_hash());
  for (const Report& report : load_reports(config.reports_file)) {
    RankedList direct =
        rank_catalog(report, catalog, prompt, *provider, config.alpha, cache);
    const RankedList* from_file = nullptr;
    for (const auto& list : rankings)
      if (list.report_id == report.id) from_file = &list;
    REQUIRE(from_file != nullptr);
    for (std::size_t i = 0; i < direct.entries.size(); ++i) {
      CHECK(from_file->entries[i].code == direct.entries[i].code);
      CHECK(from_file->entries[i].score == direct.entries[i].score);
    }
  }
}

TEST_CASE("rerunning an identical config is byte-identical") {
  auto out1 = fresh_dir("runner_det1");
  auto out2 = fresh_dir("runner_det2");
  RunConfig config1 = demo_config(out1);
  config1.cache_file = out1 / "prior.json";
  RunConfig config2 = demo_config(out2);
  config2.cache_file = out2 / "prior.json";
  run_rank(config1);
  run_rank(config2);
  CHECK(slurp(out1 / "rankings.jsonl") == slurp(out2 / "rankings.jsonl"));
  CHECK(slurp(out1 / "prior.json") == slurp(out2 / "prior.json"));

  // and rerunning in place, now with a warm cache
  run_rank(config1);
  CHECK(slurp(out1 / "rankings.jsonl") == slurp(out2 / "rankings.jsonl"));
}

TEST_CASE("missing cache with no_build_cache is an explicit error") {
  auto out = fresh_dir("runner_nocache");
  RunConfig config = demo_config(out);
  config.cache_file = out / "missing.json";
  config.no_build_cache = true;
  CHECK_THROWS_AS(run_rank(config), StateError);
}

TEST_CASE("a stale cache is rebuilt unless no_build_cache forbids it") {
  auto out = fresh_dir("runner_stale");
  RunConfig config = demo_config(out);
  config.cache_file = out / "prior.json";
  // build a cache under a different provider id
  PriorCache stale(ProviderId{"other", "9", "ff"}, "deadbeef");
  stale.insert("1A00", 1.0);
  stale.save(config.cache_file);

  SUBCASE("rebuild happens silently") {
    BatchOutcome outcome = run_rank(config);
    CHECK(outcome.succeeded == 5);
    PriorCache rebuilt = PriorCache::load(config.cache_file);
    CHECK(rebuilt.provider().name == "table");
  }
  SUBCASE("no_build_cache surfaces the mismatch") {
    config.no_build_cache = true;
    CHECK_THROWS_AS(run_rank(config), CacheInvalidError);
  }
}

TEST_CASE("run_genmap matches map_phrase composition and is deterministic") {
  auto out1 = fresh_dir("runner_gm1");
  auto out2 = fresh_dir("runner_gm2");
  RunConfig config1 = demo_config(out1);
  RunConfig config2 = demo_config(out2);
  BatchOutcome outcome = run_genmap(config1);
  CHECK(outcome.succeeded == 5);
  run_genmap(config2);
  CHECK(slurp(out1 / "rankings.jsonl") == slurp(out2 / "rankings.jsonl"));

  auto rankings = load_rankings(out1 / "rankings.jsonl");
  REQUIRE(rankings.size() == 5);
  // decoded phrases are designed into the demo table
  const std::map<std::string, std::string> decoded = {
      {"r1", "fever rash"}, {"r2", "cough fever"}, {"r3", "chest pain"},
      {"r4", "cough fever"}, {"r5", "chest pain"}};
  LabelCatalog catalog = load_catalog(config1.catalog_file);
  RarityWeights weights = build_rarity_weights(catalog);
  for (const RankedList& list : rankings) {
    RankedList direct =
        map_phrase(decoded.at(list.report_id), catalog, weights, list.report_id);
    REQUIRE(list.entries.size() == direct.entries.size());
    for (std::size_t i = 0; i < direct.entries.size(); ++i) {
      CHECK(list.entries[i].code == direct.entries[i].code);
      CHECK(list.entries[i].score == direct.entries[i].score);
    }
    // genmap records carry no likelihood fields
    CHECK_FALSE(list.entries[0].l_cond.has_value());
    CHECK_FALSE(list.entries[0].l_prior.has_value());
  }
}

TEST_CASE("build-prior-cache writes a loadable, valid cache") {
  auto out = fresh_dir("runner_buildcache");
  RunConfig config = demo_config(out);
  config.cache_file = out / "prior.json";
  run_build_prior_cache(config);
  PriorCache cache = PriorCache::load(config.cache_file);
  CHECK(cache.size() == 6);
  CHECK(cache.provider().name == "table");
  CHECK_THROWS_AS(
      run_build_prior_cache([&] {
        RunConfig c = config;
        c.cache_file.clear();
        return c;
      }()),
      UsageError);
}

TEST_CASE("alpha sweep reuses one pass and peaks at alpha=1 on the demo") {
  auto out = fresh_dir("runner_sweep");
  RunConfig config = demo_config(out);
  auto rows = run_alpha_sweep(config, {0.0, 1.0});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].alpha == 0.0);
  CHECK(rows[1].alpha == 1.0);
  // head-biased demo corpus: the prior rescues the two rare-gold reports
  CHECK(rows[1].hit.at(1) >= rows[0].hit.at(1));
  CHECK(rows[0].hit.at(1) == doctest::Approx(60.0));
  CHECK(rows[1].hit.at(1) == doctest::Approx(100.0));

  std::string csv = slurp(out / "sweep.csv");
  CHECK(csv.find("alpha,hit@1,hit@3,hit@5,macro_f1@1,macro_f1@3,macro_f1@5") ==
        0);

  SUBCASE("single alpha gives a single row") {
    auto single = run_alpha_sweep(config, {0.5});
    CHECK(single.size() == 1);
  }
  SUBCASE("duplicate alphas give identical rows") {
    auto dup = run_alpha_sweep(config, {1.0, 1.0});
    REQUIRE(dup.size() == 2);
    CHECK(dup[0].hit == dup[1].hit);
    CHECK(dup[0].macro_f1 == dup[1].macro_f1);
  }
  SUBCASE("alpha=0 row equals the pure-conditional ranking metrics") {
    auto zero = run_alpha_sweep(config, {0.0});
    CHECK(zero[0].hit == rows[0].hit);
    CHECK(zero[0].macro_f1 == rows[0].macro_f1);
  }
  SUBCASE("negative alpha is rejected up front") {
    CHECK_THROWS_AS(run_alpha_sweep(config, {-0.5}), UsageError);
    CHECK_THROWS_AS(run_alpha_sweep(config, {}), UsageError);
  }
}

TEST_CASE("run_eval compares two ranking files") {
  auto rank_out = fresh_dir("runner_eval_rank");
  auto genmap_out = fresh_dir("runner_eval_genmap");
  auto eval_out = fresh_dir("runner_eval_out");
  RunConfig config = demo_config(rank_out);
  run_rank(config);
  RunConfig gm = demo_config(genmap_out);
  run_genmap(gm);

  EvalArgs args;
  args.m1_rankings = genmap_out / "rankings.jsonl";
  args.m2_rankings = rank_out / "rankings.jsonl";
  args.reports_file = config.reports_file;
  args.catalog_file = config.catalog_file;
  args.ks = {1, 3, 5};
  args.model_name = "demo-table";
  args.out_dir = eval_out;
  ComparisonReport report = run_eval(args);

  REQUIRE(report.models.size() == 1);
  CHECK(report.models[0].m1.hit.at(1) == doctest::Approx(60.0));
  CHECK(report.models[0].m2.hit.at(1) == doctest::Approx(100.0));
  CHECK(slurp(eval_out / "metrics.txt").find("demo-table") != std::string::npos);
  auto doc = json::parse(slurp(eval_out / "metrics.json"));
  CHECK(doc["models"][0]["delta"]["hit@1"].get<double>() ==
        doctest::Approx(100.0 * (100.0 - 60.0) / 60.0));
  CHECK(doc.contains("m2_per_specialty"));

  SUBCASE("M1 == M2 gives all-zero deltas") {
    EvalArgs same = args;
    same.m1_rankings = rank_out / "rankings.jsonl";
    ComparisonReport self = run_eval(same);
    ComparisonDeltas deltas = comparison_deltas(self);
    for (const auto& [column, delta] : deltas.per_model[0])
      CHECK(*delta == 0.0);
  }
}

TEST_CASE("run_eval rejects ranking files covering different ids") {
  auto rank_out = fresh_dir("runner_eval_mismatch");
  RunConfig config = demo_config(rank_out);
  run_rank(config);

  // drop one record from a copy
  auto truncated = rank_out / "truncated.jsonl";
  {
    std::ifstream in(rank_out / "rankings.jsonl");
    std::ofstream out(truncated, std::ios::binary);
    std::string line;
    int n = 0;
    while (std::getline(in, line))
      if (++n > 1) out << line << '\n';
  }
  EvalArgs args;
  args.m1_rankings = truncated;
  args.m2_rankings = rank_out / "rankings.jsonl";
  args.reports_file = config.reports_file;
  args.catalog_file = config.catalog_file;
  args.ks = {1};
  args.out_dir = fresh_dir("runner_eval_mismatch_out");
  CHECK_THROWS_WITH_AS(run_eval(args), doctest::Contains("r1"),
                       ValidationError);
}

TEST_CASE("eval summary mode renders the multi-model fixture") {
  auto out = fresh_dir("runner_eval_summary");
  ComparisonReport report =
      run_eval_summary(kFixtures / "table1_values.json", out);
  CHECK(report.models.size() == 7);
  std::string table = slurp(out / "metrics.txt");
  CHECK(table.find("MedAlpaca (7B)") != std::string::npos);
  CHECK(table.find("130.3%") != std::string::npos);
  CHECK(table.find("80.1%") != std::string::npos);
}

TEST_CASE("a failing report yields an error record while the batch continues") {
  // Remote provider against a stub that fails for one report's context.
  httplib::Server server;
  server.Post("/v1/logprobs", [](const httplib::Request& req,
                                 httplib::Response& res) {
    auto body = json::parse(req.body);
    if (body["context"].get<std::string>().find("poison") !=
        std::string::npos) {
      res.status = 500;
      return;
    }
    auto tokens = body["continuation_tokens"];
    json out = {{"tokens", tokens}, {"logprobs", json::array()}};
    for (std::size_t i = 0; i < tokens.size(); ++i)
      out["logprobs"].push_back(-0.5);
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto out = fresh_dir("runner_partial");
  auto vocab_file = out / "vocab.json";
  {
    std::ofstream v(vocab_file);
    v << R"(["fever","rash","cough","chest","pain","breath","done","poison"])";
  }
  auto reports_file = out / "reports.jsonl";
  {
    std::ofstream r(reports_file);
    for (int i = 1; i <= 9; ++i)
      r << R"({"id": "ok)" << i << R"(", "text": "fever and rash"})" << '\n';
    r << R"({"id": "bad", "text": "poison pill"})" << '\n';
  }

  RunConfig config;
  config.provider.kind = "remote";
  config.provider.endpoint = "http://127.0.0.1:" + std::to_string(port);
  config.provider.tokenizer = vocab_file;
  config.template_file = kFixtures / "demo" / "template.txt";
  config.catalog_file = kFixtures / "demo" / "catalog.tsv";
  config.reports_file = reports_file;
  config.out_dir = out;

  BatchOutcome outcome = run_rank(config);
  CHECK(outcome.succeeded == 9);
  REQUIRE(outcome.failures.size() == 1);
  CHECK(outcome.failures[0].first == "bad");
  CHECK(outcome.partial());

  auto rankings = load_rankings(out / "rankings.jsonl");
  CHECK(rankings.size() == 9);
  std::string errors = slurp(out / "errors.jsonl");
  auto error_rec = json::parse(errors);
  CHECK(error_rec["report_id"] == "bad");

  server.stop();
  listener.join();
}

TEST_CASE("map-icd runner writes the fixture outputs") {
  auto out = fresh_dir("runner_icd");
  MapIcdArgs args;
  args.gem_9_to_10 = kFixtures / "icd" / "gem_9_10.tsv";
  args.gem_10_to_11 = kFixtures / "icd" / "gem_10_11.tsv";
  args.inputs = kFixtures / "icd" / "input_codes.tsv";
  args.exclude = kFixtures / "icd" / "non_disease.txt";
  args.out_dir = out;
  auto decisions = run_map_icd(args);
  CHECK(decisions.size() == 20);
  CHECK(slurp(out / "resolved.tsv") ==
        "source\ticd11\n0010\t1A00\nB180\t1E51\n");
  std::string queue = slurp(out / "review_queue.tsv");
  CHECK(queue.find("25000\ticd9_to_10\tE118,E119") != std::string::npos);
  CHECK(queue.find("R00\ticd10_to_11\t") != std::string::npos);

  SUBCASE("empty input file gives header-only outputs") {
    auto empty_out = fresh_dir("runner_icd_empty");
    auto empty_inputs = empty_out / "inputs.tsv";
    std::ofstream(empty_inputs).close();
    MapIcdArgs empty_args = args;
    empty_args.inputs = empty_inputs;
    empty_args.out_dir = empty_out;
    auto none = run_map_icd(empty_args);
    CHECK(none.empty());
    CHECK(slurp(empty_out / "resolved.tsv") == "source\ticd11\n");
    CHECK(slurp(empty_out / "review_queue.tsv") ==
          "source\tstage\tcandidates\n");
  }
}
