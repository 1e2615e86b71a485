#include "doctest.h"

#include <cmath>
#include <random>

#include "dxrank/errors.hpp"
#include "dxrank/table_model.hpp"
#include "oracle.hpp"

using namespace dxrank;
using nlohmann::json;

namespace {

json tiny_spec() {
  return {{"vocabulary", {"s", "a", "b"}},
          {"default_smoothing", 0.01},
          {"entries",
           {{{"context", {"s"}}, {"next", {{"a", 0.5}, {"b", 0.5}}}}}}};
}

}  // namespace

TEST_CASE("score_continuation reads the table through") {
  TableProvider model = TableProvider::from_json(tiny_spec());
  auto a = model.tokenizer().find("a");
  REQUIRE(a.has_value());
  TokenLogProbs lp = model.score_continuation("s", std::vector<TokenId>{*a});
  REQUIRE(lp.logprobs.size() == 1);
  CHECK(lp.logprobs[0] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(lp.tokens == std::vector<TokenId>{*a});
}

TEST_CASE("unlisted context is uniform over the vocabulary") {
  json spec = {{"vocabulary", {"a", "b", "c", "d"}},
               {"default_smoothing", 0.1},
               {"entries", json::array()}};
  TableProvider model = TableProvider::from_json(spec);
  TokenLogProbs lp =
      model.score_continuation("a b", std::vector<TokenId>{0, 1, 2});
  for (double logprob : lp.logprobs)
    CHECK(logprob == doctest::Approx(std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("listed context splits smoothing mass over unlisted tokens") {
  json spec = {{"vocabulary", {"a", "b", "c", "d"}},
               {"default_smoothing", 0.02},
               {"entries",
                {{{"context", json::array()}, {"next", {{"a", 1.0}}}}}}};
  TableProvider model = TableProvider::from_json(spec);
  CHECK(model.token_prob({}, 0) == doctest::Approx(1.0));
  // three unlisted tokens share 0.02
  CHECK(model.token_prob({}, 2) == doctest::Approx(0.02 / 3.0).epsilon(1e-12));
}

TEST_CASE("identical queries are bit-identical across replays") {
  std::mt19937 rng(7);
  oracle::Instance inst = oracle::make_instance(rng);
  TableProvider model = TableProvider::from_json(inst.spec);
  std::uniform_int_distribution<int> tok(
      0, static_cast<int>(model.tokenizer().vocab_size()) - 1);
  for (int q = 0; q < 100; ++q) {
    std::vector<TokenId> continuation;
    const int len = 1 + (q % 4);
    for (int i = 0; i < len; ++i) continuation.push_back(tok(rng));
    std::string context = q % 2 ? inst.report_text : "";
    TokenLogProbs first = model.score_continuation(context, continuation);
    TokenLogProbs second = model.score_continuation(context, continuation);
    CHECK(first.tokens == second.tokens);
    REQUIRE(first.logprobs.size() == second.logprobs.size());
    for (std::size_t i = 0; i < first.logprobs.size(); ++i)
      CHECK(first.logprobs[i] == second.logprobs[i]);  // bitwise
  }
}

TEST_CASE("probability validity: exp(logprob) in (0, 1]") {
  std::mt19937 rng(11);
  for (int round = 0; round < 20; ++round) {
    oracle::Instance inst = oracle::make_instance(rng);
    TableProvider model = TableProvider::from_json(inst.spec);
    const int v = static_cast<int>(model.tokenizer().vocab_size());
    std::vector<TokenId> all(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) all[static_cast<std::size_t>(i)] = i;
    TokenLogProbs lp = model.score_continuation(inst.report_text, all);
    for (double logprob : lp.logprobs) {
      CHECK(logprob <= 0.0);
      CHECK(std::exp(logprob) > 0.0);
    }
  }
}

TEST_CASE("spec validation") {
  json bad_sum = tiny_spec();
  bad_sum["entries"][0]["next"]["a"] = 0.6;  // 0.6 + 0.5 > 1
  CHECK_THROWS_AS(TableProvider::from_json(bad_sum), ValidationError);

  json bad_smooth = tiny_spec();
  bad_smooth["default_smoothing"] = 0.0;
  CHECK_THROWS_AS(TableProvider::from_json(bad_smooth), ValidationError);
  bad_smooth["default_smoothing"] = 1.0;
  CHECK_THROWS_AS(TableProvider::from_json(bad_smooth), ValidationError);

  json unknown_token = tiny_spec();
  unknown_token["entries"][0]["next"] = {{"zz", 1.0}};
  CHECK_THROWS_AS(TableProvider::from_json(unknown_token), ValidationError);

  json dup_context = tiny_spec();
  dup_context["entries"].push_back(dup_context["entries"][0]);
  CHECK_THROWS_AS(TableProvider::from_json(dup_context), ValidationError);
}

TEST_CASE("continuation token outside the vocabulary is a query error") {
  TableProvider model = TableProvider::from_json(tiny_spec());
  CHECK_THROWS_AS(model.score_continuation("s", std::vector<TokenId>{99}),
                  QueryError);
  CHECK_THROWS_AS(model.score_continuation("s", std::vector<TokenId>{}),
                  DomainError);
}

TEST_CASE("equal spec means equal provider id, different spec differs") {
  TableProvider a = TableProvider::from_json(tiny_spec());
  TableProvider b = TableProvider::from_json(tiny_spec());
  json other = tiny_spec();
  other["default_smoothing"] = 0.05;
  TableProvider c = TableProvider::from_json(other);
  CHECK(a.id() == b.id());
  CHECK_FALSE(a.id() == c.id());
}

TEST_CASE("greedy decode: forced path stops on the stop token") {
  json spec = {{"vocabulary", {"a", "stop"}},
               {"default_smoothing", 0.01},
               {"entries",
                {{{"context", {"ctx"}}, {"next", {{"a", 0.9}, {"stop", 0.1}}}},
                 {{"context", {"ctx", "a"}}, {"next", {{"stop", 1.0}}}}}}};
  spec["vocabulary"] = {"a", "stop", "ctx"};
  TableProvider model = TableProvider::from_json(spec);
  auto stop_id = model.tokenizer().find("stop");
  REQUIRE(stop_id.has_value());
  GreedyResult result = model.greedy_decode("ctx", 10, {*stop_id});
  CHECK(result.text == "a");
  CHECK(result.tokens == std::vector<TokenId>{0});
}

TEST_CASE("greedy decode: exact ties go to the lowest token id") {
  json spec = {{"vocabulary", {"a", "b"}},
               {"default_smoothing", 0.01},
               {"entries",
                {{{"context", json::array()},
                  {"next", {{"a", 0.5}, {"b", 0.5}}}}}}};
  TableProvider model = TableProvider::from_json(spec);
  GreedyResult result = model.greedy_decode("", 1, {});
  CHECK(result.tokens == std::vector<TokenId>{0});
}

TEST_CASE("greedy decode: max_tokens caps emission") {
  json spec = {{"vocabulary", {"a", "b"}},
               {"default_smoothing", 0.01},
               {"entries", json::array()}};
  TableProvider model = TableProvider::from_json(spec);
  GreedyResult result = model.greedy_decode("", 2, {});
  CHECK(result.tokens.size() == 2);
  CHECK(result.text == "a a");
  CHECK_THROWS_AS(model.greedy_decode("", 0, {}), DomainError);
}

TEST_CASE("greedy decode is a pure function of its inputs") {
  std::mt19937 rng(23);
  oracle::Instance inst = oracle::make_instance(rng);
  TableProvider model = TableProvider::from_json(inst.spec);
  GreedyResult a = model.greedy_decode(inst.report_text, 8, {0});
  GreedyResult b = model.greedy_decode(inst.report_text, 8, {0});
  CHECK(a.text == b.text);
  CHECK(a.tokens == b.tokens);
}
