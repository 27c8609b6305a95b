#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "islu/evaluation.hpp"
#include "islu/streaming.hpp"
#include "oracles.hpp"

using namespace islu;

namespace {

Model make_model(Variant v, const Vocabulary& vocab, const std::vector<std::string>& labels,
                 std::uint64_t seed = 1) {
  Model m;
  m.config.variant = v;
  m.config.vocab_size = vocab.size();
  m.config.embedding_dim = 6;
  m.config.hidden_dim = 5;
  m.config.n_intents = static_cast<int>(labels.size());
  m.config.seed = seed;
  Rng rng(seed);
  m.params = oracles::random_params(m.config, rng, 0.8);
  m.vocab = vocab;
  m.intent_labels = labels;
  return m;
}

// EOS_ONLY detector whose output is a constant: probability ~1 or ~0.
Model constant_eos(const Vocabulary& vocab, const std::vector<std::string>& labels, bool fire) {
  Model m = make_model(Variant::EosOnly, vocab, labels);
  m.params.eos->w_out.fill(0.0);
  m.params.eos->b_out.fill(fire ? 50.0 : -50.0);
  return m;
}

// EOS_ONLY detector that fires exactly on the "." token. One hidden unit
// latches tanh(20 x0) with a closed forget gate, and only "." has x0 = 1.
Model period_detector(const Vocabulary& vocab, const std::vector<std::string>& labels) {
  Model m;
  m.config.variant = Variant::EosOnly;
  m.config.vocab_size = vocab.size();
  m.config.embedding_dim = 2;
  m.config.hidden_dim = 1;
  m.config.n_intents = static_cast<int>(labels.size());
  m.params = init_model(m.config);
  m.params.embedding.fill(0.0);
  m.params.embedding.at(vocab.lookup("."), 0) = 1.0;
  auto& lstm = m.params.eos->lstm;
  lstm.wx.fill(0.0);
  lstm.wh.fill(0.0);
  lstm.b.values() = {20.0, -20.0, 0.0, 20.0};  // i, f, g, o
  lstm.wx.at(2, 0) = 20.0;
  m.params.eos->w_out.fill(100.0);
  m.params.eos->b_out.fill(-50.0);
  m.vocab = vocab;
  m.intent_labels = labels;
  return m;
}

struct Fixture {
  Vocabulary vocab{{"a", "b", "c", "d", "."}};
  std::vector<std::string> labels{"x", "y", "z"};
};

std::vector<Event> commits(const std::vector<Event>& events) {
  std::vector<Event> out;
  for (const auto& e : events)
    if (e.type == Event::Type::IntentCommitted) out.push_back(e);
  return out;
}

std::vector<Event> run(Session& s, const std::vector<int>& tokens,
                       const std::vector<int>* flags = nullptr) {
  std::vector<Event> all;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto ev = flags ? s.push(tokens[t], (*flags)[t] != 0) : s.push(tokens[t]);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  return all;
}

}  // namespace

TEST_CASE_FIXTURE(Fixture, "session compatibility checks") {
  const Model online = make_model(Variant::Online, vocab, labels);
  const Model eos = make_model(Variant::EosOnly, vocab, labels);
  const Model mt = make_model(Variant::Multitask, vocab, labels);

  CHECK_THROWS_AS(open_session(online, EosMode::Predicted), std::invalid_argument);
  CHECK_THROWS_AS(open_session(eos, EosMode::Oracle), std::invalid_argument);
  CHECK_THROWS_AS(open_session(online, EosMode::Predicted, &online), std::invalid_argument);
  Model other = eos;
  other.vocab = Vocabulary({"q"});
  CHECK_THROWS_AS(open_session(online, EosMode::Predicted, &other), std::invalid_argument);

  CHECK_NOTHROW(open_session(online, EosMode::Oracle));
  CHECK_NOTHROW(open_session(online, EosMode::Predicted, &eos));
  CHECK_NOTHROW(open_session(mt, EosMode::Predicted));
  CHECK_NOTHROW(open_session(mt, EosMode::Predicted, &eos));

  Session oracle = open_session(online, EosMode::Oracle);
  CHECK_THROWS_AS(oracle.push(1), std::invalid_argument);
  Session predicted = open_session(mt, EosMode::Predicted);
  CHECK_THROWS_AS(predicted.push(1, true), std::invalid_argument);
  CHECK_THROWS_AS(predicted.push(99), std::out_of_range);
  CHECK_THROWS_AS(predicted.set_threshold(1.0), std::invalid_argument);
}

TEST_CASE_FIXTURE(Fixture, "oracle mode commits once per utterance at its last token") {
  const Model online = make_model(Variant::Online, vocab, labels);
  Session s = open_session(online, EosMode::Oracle);
  const std::vector<int> tokens = {1, 2, 3, 4, 2};
  const std::vector<int> flags = {0, 0, 0, 0, 1};
  const auto events = run(s, tokens, &flags);
  const auto c = commits(events);
  REQUIRE(c.size() == 1);
  CHECK(c[0].position == 4);
  CHECK(c[0].span == Span{0, 5});
  CHECK(events.size() == tokens.size() + 2);
  // HYPOTHESIS first, then EOS_DETECTED, then INTENT_COMMITTED at the boundary.
  CHECK(events[4].type == Event::Type::Hypothesis);
  CHECK(events[5].type == Event::Type::EosDetected);
  CHECK(events[5].eos_prob == 1.0);
  CHECK(events[6].intent_dist == events[4].intent_dist);
}

TEST_CASE_FIXTURE(Fixture, "forced EOS probabilities") {
  const Model online = make_model(Variant::Online, vocab, labels);
  const std::vector<int> tokens = {1, 2, 3, 4, 1, 1};

  Model always = constant_eos(vocab, labels, true);
  Session on = open_session(online, EosMode::Predicted, &always);
  const auto c = commits(run(on, tokens));
  REQUIRE(c.size() == tokens.size());
  for (std::size_t t = 0; t < c.size(); ++t) CHECK(c[t].span == Span{int(t), int(t) + 1});

  Model never = constant_eos(vocab, labels, false);
  Session off = open_session(online, EosMode::Predicted, &never);
  CHECK(commits(run(off, tokens)).empty());
  CHECK(off.utterance_start() == 0);
  CHECK(off.position() == static_cast<int>(tokens.size()));
}

TEST_CASE_FIXTURE(Fixture, "threshold controls commits") {
  const Model mt = make_model(Variant::Multitask, vocab, labels, 4);
  const std::vector<int> tokens = {1, 2, 3, 4, 1, 2, 3, 4};
  // Probabilities from the whole-sequence forward pass.
  const ForwardResult fr = forward(mt.params, mt.config, tokens, false);
  double lo = 1, hi = 0;
  for (int t = 0; t < 8; ++t) {
    lo = std::min(lo, fr.eos_prob(t));
    hi = std::max(hi, fr.eos_prob(t));
  }
  REQUIRE(lo < hi);
  Session below = open_session(mt, EosMode::Predicted);
  below.set_threshold(std::min(0.999, hi + (1 - hi) / 2));
  CHECK(commits(run(below, tokens)).empty());
  Session above = open_session(mt, EosMode::Predicted);
  above.set_threshold(std::max(1e-3, lo / 2));
  CHECK(commits(run(above, tokens)).size() == tokens.size());
  Session mid = open_session(mt, EosMode::Predicted);
  const double th = (lo + hi) / 2;
  mid.set_threshold(th);
  int expected = 0;
  for (int t = 0; t < 8; ++t) expected += fr.eos_prob(t) >= th;
  CHECK(static_cast<int>(commits(run(mid, tokens)).size()) == expected);
}

TEST_CASE("session replay reproduces the evaluator") {
  const Corpus corpus = gen_synthetic({4, 40, 3, 7, 2});
  const Vocabulary vocab = build_vocab(corpus);
  const StreamSet streams = stitch_streams(corpus, vocab, 4, 9);
  for (Variant v : {Variant::Multitask, Variant::MultitaskFeedback}) {
    CAPTURE(to_string(v));
    Model m = make_model(v, vocab, corpus.intent_set, 6);
    // Centre the EOS threshold on this model's outputs so commits happen.
    const StreamPredictions p0 = predict(m, streams.samples[0]);
    double mean = 0;
    for (double p : p0.eos_prob) mean += p / p0.eos_prob.size();
    m.config.eos_threshold = mean;

    const EvalReport oracle = eval_oracle(m, streams);
    const EvalReport predicted = eval_predicted(m, nullptr, streams);
    long correct_oracle = 0, correct_predicted = 0, n = 0;
    std::size_t rec = 0;
    for (const auto& sample : streams.samples) {
      Session so = open_session(m, EosMode::Oracle);
      const auto oc = commits(run(so, sample.token_ids, &sample.eos_flags));
      REQUIRE(oc.size() == sample.utt_spans.size());
      Session sp = open_session(m, EosMode::Predicted);
      const auto pc = commits(run(sp, sample.token_ids));
      for (std::size_t u = 0; u < sample.utt_spans.size(); ++u, ++rec) {
        const Span span = sample.utt_spans[u];
        const int gold = sample.intent_ids[span.start];
        CHECK(oc[u].span == span);
        CHECK(oc[u].intent == oracle.records[rec].oracle_prediction);
        correct_oracle += oc[u].intent == gold;
        std::vector<int> inside;
        for (const auto& e : pc)
          if (e.position >= span.start && e.position < span.end) inside.push_back(e.intent);
        CHECK(inside == predicted.records[rec].committed);
        correct_predicted += !inside.empty() && inside.back() == gold;
        ++n;
      }
    }
    CHECK(static_cast<double>(correct_oracle) / n == oracle.intent_acc_oracle);
    CHECK(static_cast<double>(correct_predicted) / n == predicted.intent_acc_predicted);
  }
}

TEST_CASE_FIXTURE(Fixture, "composite with an exact detector matches oracle mode") {
  const Model online = make_model(Variant::Online, vocab, labels, 3);
  const Model detector = period_detector(vocab, labels);
  const int dot = vocab.lookup(".");
  const std::vector<int> tokens = {1, 2, dot, 3, dot, 4, 1, 2, dot};
  std::vector<int> flags;
  for (int t : tokens) flags.push_back(t == dot);

  const auto composite = commits(run_composite(online, detector, tokens));
  Session so = open_session(online, EosMode::Oracle);
  const auto oracle = commits(run(so, tokens, &flags));
  REQUIRE(composite.size() == 3);
  REQUIRE(oracle.size() == composite.size());
  for (std::size_t k = 0; k < oracle.size(); ++k) {
    CHECK(composite[k].span == oracle[k].span);
    CHECK(composite[k].intent == oracle[k].intent);
    CHECK(composite[k].intent_dist == oracle[k].intent_dist);
  }
}

TEST_CASE_FIXTURE(Fixture, "commits partition the consumed prefix") {
  const Model mt = make_model(Variant::MultitaskFeedback, vocab, labels, 8);
  Session s = open_session(mt, EosMode::Predicted);
  s.set_threshold(0.5);
  Rng rng(4);
  std::uniform_int_distribution<int> tok(0, vocab.size() - 1);
  std::vector<int> tokens(200);
  for (int& t : tokens) t = tok(rng);
  const auto c = commits(run(s, tokens));
  int expected_start = 0;
  for (const auto& e : c) {
    CHECK(e.span.start == expected_start);
    CHECK(e.span.end == e.position + 1);
    CHECK(e.span.length() >= 1);
    expected_start = e.span.end;
  }
  CHECK(s.utterance_start() == expected_start);
}

TEST_CASE_FIXTURE(Fixture, "state carries across boundaries and sessions are deterministic") {
  const Model online = make_model(Variant::Online, vocab, labels, 2);
  const std::vector<int> tokens = {1, 2, 3, 4, 2, 1};
  const std::vector<int> flags = {0, 1, 0, 0, 1, 1};
  Session a = open_session(online, EosMode::Oracle);
  Session b = open_session(online, EosMode::Oracle);
  const auto ea = run(a, tokens, &flags);
  CHECK(ea == run(b, tokens, &flags));

  // Hypotheses equal the whole-sequence forward pass: nothing resets at EOS.
  const ForwardResult fr = forward(online.params, online.config, tokens, false);
  int t = 0;
  for (const auto& e : ea)
    if (e.type == Event::Type::Hypothesis) {
      const Vec ref = fr.intent_dist(t++);
      for (std::size_t c = 0; c < ref.size(); ++c) CHECK(e.intent_dist[c] == ref[c]);
    }
  // A fresh session on the second utterance alone sees different state.
  Session fresh = open_session(online, EosMode::Oracle);
  const std::vector<int> second_flags = {0, 0, 1};
  const auto ef = run(fresh, {3, 4, 2}, &second_flags);
  CHECK(commits(ef)[0].intent_dist != commits(ea)[1].intent_dist);
}

TEST_CASE_FIXTURE(Fixture, "event formatting") {
  Event h;
  h.type = Event::Type::Hypothesis;
  h.position = 7;
  h.intent_dist = {0.1, 0.25, 0.65};
  CHECK(format_event(h, labels) == "7\tHYPOTHESIS\tz:0.6500 y:0.2500 x:0.1000");
  Event e;
  e.type = Event::Type::EosDetected;
  e.position = 3;
  e.eos_prob = 0.91234;
  CHECK(format_event(e, labels) == "3\tEOS_DETECTED\teos:0.9123");
  Event c = h;
  c.type = Event::Type::IntentCommitted;
  c.intent_dist = {0.2, 0.1, 0.3, 0.4};
  CHECK(format_event(c, labels) == "7\tINTENT_COMMITTED\t3:0.4000 z:0.3000 x:0.2000");
}
