#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "islu/corpus.hpp"

using namespace islu;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / ("islu_test_corpus_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

Corpus corpus_of(std::vector<std::pair<std::string, std::string>> rows) {
  std::vector<Utterance> utts;
  for (auto& [intent, text] : rows) {
    Utterance u;
    u.intent = intent;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) u.tokens.push_back(tok);
    utts.push_back(u);
  }
  return make_corpus(utts);
}

void check_stream_invariants(const StreamSet& set) {
  for (const auto& s : set.samples) {
    REQUIRE(s.length() > 0);
    CHECK(s.eos_flags.back() == 1);
    int flags = 0;
    for (int f : s.eos_flags) flags += f;
    CHECK(flags == s.num_utterances());
    int expect_start = 0;
    for (const auto& span : s.utt_spans) {
      CHECK(span.start == expect_start);
      CHECK(span.end > span.start);
      for (int t = span.start; t < span.end; ++t) {
        CHECK(s.eos_flags[t] == (t == span.end - 1 ? 1 : 0));
        CHECK(s.intent_ids[t] == s.intent_ids[span.start]);
      }
      expect_start = span.end;
    }
    CHECK(expect_start == s.length());
    CHECK(s.num_utterances() >= 1);
    CHECK(s.num_utterances() <= set.max_utts);
  }
}

}  // namespace

TEST_CASE("load_corpus parses intent and lowercased tokens") {
  auto p = write_temp("basic.tsv", "flight\tshow me Flights to DENVER\nairfare\thow much\n");
  Corpus c = load_corpus(p);
  REQUIRE(c.utterances.size() == 2);
  CHECK(c.utterances[0].tokens.size() == 5);
  CHECK(c.utterances[0].intent == "flight");
  CHECK(c.utterances[0].tokens[2] == "flights");
  CHECK(c.utterances[0].tokens[4] == "denver");
  CHECK(c.intent_set == std::vector<std::string>{"flight", "airfare"});
  fs::remove(p);
}

TEST_CASE("load_corpus errors") {
  CHECK_THROWS_AS(load_corpus("/nonexistent/islu.tsv"), DataError);

  auto empty = write_temp("empty.tsv", "");
  CHECK_THROWS_WITH_AS(load_corpus(empty), doctest::Contains("empty corpus"), DataError);

  auto no_tab = write_temp("notab.tsv", "flight\tok line\nbroken line without tab\n");
  CHECK_THROWS_WITH_AS(load_corpus(no_tab), doctest::Contains(":2:"), DataError);

  auto no_tokens = write_temp("notok.tsv", "flight\t   \n");
  CHECK_THROWS_WITH_AS(load_corpus(no_tokens), doctest::Contains(":1:"), DataError);
  for (auto& p : {empty, no_tab, no_tokens}) fs::remove(p);
}

TEST_CASE("save_corpus round-trips through load_corpus") {
  Corpus c = gen_synthetic({3, 25, 2, 7, 5});
  auto p = fs::temp_directory_path() / "islu_test_corpus_roundtrip.tsv";
  save_corpus(c, p);
  Corpus back = load_corpus(p);
  REQUIRE(back.utterances.size() == c.utterances.size());
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    CHECK(back.utterances[i].tokens == c.utterances[i].tokens);
    CHECK(back.utterances[i].intent == c.utterances[i].intent);
  }
  CHECK(back.intent_set == c.intent_set);
  fs::remove(p);
}

TEST_CASE("build_vocab") {
  Corpus c = corpus_of({{"x", "a b"}, {"y", "a"}});
  Vocabulary v = build_vocab(c, 1);
  CHECK(v.size() == 3);
  CHECK(v.lookup(Vocabulary::kUnkToken) == 0);
  CHECK(v.lookup("a") == 1);
  CHECK(v.lookup("b") == 2);
  CHECK(v.lookup("unseen-word") == 0);

  Vocabulary v2 = build_vocab(c, 2);
  CHECK(v2.size() == 2);
  CHECK(v2.lookup("b") == Vocabulary::kUnk);

  CHECK_THROWS_AS(build_vocab(c, 0), std::invalid_argument);
}

TEST_CASE("build_vocab is independent of corpus order") {
  Corpus c = corpus_of({{"x", "d c b a"}, {"y", "b a e"}, {"x", "c d"}});
  Corpus rev = corpus_of({{"x", "c d"}, {"y", "e a b"}, {"x", "a b c d"}});
  CHECK(build_vocab(c, 1) == build_vocab(rev, 1));
  // counts: a2 b2 c2 d2 e1 -> ties lexicographic
  CHECK(build_vocab(c, 1).words() ==
        std::vector<std::string>{"<unk>", "a", "b", "c", "d", "e"});
}

TEST_CASE("stitch_streams with max_utts=1 is one sample per utterance") {
  Corpus c = gen_synthetic({4, 30, 3, 6, 1});
  Vocabulary v = build_vocab(c);
  StreamSet set = stitch_streams(c, v, 1, 9);
  CHECK(set.samples.size() == c.utterances.size());
  for (const auto& s : set.samples) {
    CHECK(s.num_utterances() == 1);
    for (int t = 0; t + 1 < s.length(); ++t) CHECK(s.eos_flags[t] == 0);
    CHECK(s.eos_flags.back() == 1);
  }
  check_stream_invariants(set);
}

TEST_CASE("stitch_streams builds eos flags at utterance ends") {
  Corpus c = corpus_of({{"a", "w1 w2 w3"}, {"b", "w4 w5 w6 w7"}});
  Vocabulary v = build_vocab(c);
  // Find a seed that groups both utterances into one sample.
  bool found = false;
  for (std::uint64_t seed = 0; seed < 50 && !found; ++seed) {
    StreamSet set = stitch_streams(c, v, 2, seed);
    if (set.samples.size() != 1) continue;
    found = true;
    const auto& s = set.samples[0];
    CHECK(s.length() == 7);
    std::vector<int> eos_at;
    for (int t = 0; t < 7; ++t)
      if (s.eos_flags[t]) eos_at.push_back(t);
    // Whichever order was drawn, boundaries sit at 2|6 or 3|6.
    CHECK(eos_at.size() == 2);
    CHECK(eos_at[1] == 6);
    CHECK((eos_at[0] == 2 || eos_at[0] == 3));
  }
  CHECK(found);
}

TEST_CASE("stitch_streams conserves tokens, utterances and intents") {
  for (std::uint64_t seed : {0u, 1u, 2u, 77u}) {
    for (int max_utts : {1, 2, 3, 5, 10}) {
      Corpus c = gen_synthetic({5, 97, 2, 9, seed});
      Vocabulary v = build_vocab(c);
      StreamSet set = stitch_streams(c, v, max_utts, seed);
      check_stream_invariants(set);
      std::size_t tokens = 0, utts = 0;
      std::map<int, int> per_intent;
      for (const auto& s : set.samples) {
        tokens += s.length();
        utts += s.num_utterances();
        for (const auto& span : s.utt_spans) ++per_intent[s.intent_ids[span.start]];
      }
      CHECK(tokens == c.token_count());
      CHECK(utts == c.utterances.size());
      std::map<int, int> expected;
      for (const auto& u : c.utterances) ++expected[c.intent_index(u.intent)];
      CHECK(per_intent == expected);
    }
  }
}

TEST_CASE("stitch_streams is deterministic under a seed") {
  Corpus c = gen_synthetic({3, 60, 3, 8, 4});
  Vocabulary v = build_vocab(c);
  CHECK(dump_streams(stitch_streams(c, v, 4, 12), v) == dump_streams(stitch_streams(c, v, 4, 12), v));
  CHECK(dump_streams(stitch_streams(c, v, 4, 12), v) != dump_streams(stitch_streams(c, v, 4, 13), v));
  CHECK_THROWS_AS(stitch_streams(c, v, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(stitch_streams(Corpus{}, v, 2, 1), DataError);
}

TEST_CASE("dump_streams marks utterance-final tokens") {
  Corpus c = corpus_of({{"a", "x y"}});
  Vocabulary v = build_vocab(c);
  CHECK(dump_streams(stitch_streams(c, v, 1, 0), v) == "x y|\n");
}

TEST_CASE("gen_synthetic") {
  SUBCASE("every utterance holds a keyword of its intent") {
    Corpus c = gen_synthetic({2, 10, 3, 6, 7});
    CHECK(c.utterances.size() == 10);
    for (const auto& u : c.utterances) {
      const int idx = std::stoi(u.intent.substr(6));
      const auto kws = synthetic_keywords(idx);
      const bool has_kw = std::any_of(u.tokens.begin(), u.tokens.end(), [&](const std::string& t) {
        return std::find(kws.begin(), kws.end(), t) != kws.end();
      });
      CHECK(has_kw);
      CHECK(u.tokens.size() >= 3);
      CHECK(u.tokens.size() <= 6);
    }
  }
  SUBCASE("same seed gives the same corpus") {
    Corpus a = gen_synthetic({4, 50, 2, 9, 3});
    Corpus b = gen_synthetic({4, 50, 2, 9, 3});
    REQUIRE(a.utterances.size() == b.utterances.size());
    for (std::size_t i = 0; i < a.utterances.size(); ++i) {
      CHECK(a.utterances[i].tokens == b.utterances[i].tokens);
      CHECK(a.utterances[i].intent == b.utterances[i].intent);
    }
  }
  SUBCASE("keyword sets are disjoint and separate from the filler pool") {
    std::set<std::string> seen;
    for (int i = 0; i < 8; ++i)
      for (const auto& k : synthetic_keywords(i)) CHECK(seen.insert(k).second);
    CHECK(synthetic_filler_pool().size() == 50);
    for (const auto& f : synthetic_filler_pool()) CHECK(seen.insert(f).second);
  }
  SUBCASE("length range is honored") {
    Corpus c = gen_synthetic({3, 400, 4, 10, 1});
    std::set<std::size_t> lens;
    for (const auto& u : c.utterances) lens.insert(u.tokens.size());
    CHECK(*lens.begin() == 4);
    CHECK(*lens.rbegin() == 10);
  }
  SUBCASE("invalid ranges are rejected") {
    CHECK_THROWS_AS(gen_synthetic({1, 10, 3, 6, 0}), std::invalid_argument);
    CHECK_THROWS_AS(gen_synthetic({2, 10, 1, 6, 0}), std::invalid_argument);
    CHECK_THROWS_AS(gen_synthetic({2, 10, 6, 3, 0}), std::invalid_argument);
  }
}

TEST_CASE("make_corpus validates utterances") {
  CHECK_THROWS_AS(make_corpus({Utterance{{}, "a"}}), DataError);
  CHECK_THROWS_AS(make_corpus({Utterance{{"x"}, ""}}), DataError);
  CHECK_THROWS_AS(make_corpus({Utterance{{"x y"}, "a"}}), DataError);
}
