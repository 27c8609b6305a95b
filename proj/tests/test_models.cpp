#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "islu/models.hpp"
#include "oracles.hpp"

using namespace islu;
namespace fs = std::filesystem;

namespace {

const Variant kAllVariants[] = {Variant::Offline, Variant::Online, Variant::EosOnly,
                                Variant::Multitask, Variant::MultitaskFeedback};

ModelConfig tiny_config(Variant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.vocab_size = 5;
  cfg.embedding_dim = 3;
  cfg.hidden_dim = 2;
  cfg.n_intents = 2;
  cfg.seed = 1;
  return cfg;
}

Model tiny_model(Variant v, std::uint64_t seed = 4) {
  Model m;
  m.config = tiny_config(v);
  Rng rng(seed);
  m.params = oracles::random_params(m.config, rng);
  m.vocab = Vocabulary({"a", "b", "c", "d"});
  m.intent_labels = {"x", "y"};
  return m;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("init_model shapes and determinism") {
  ModelConfig cfg = tiny_config(Variant::MultitaskFeedback);
  cfg.embedding_dim = 6;
  cfg.hidden_dim = 4;
  Parameters a = init_model(cfg), b = init_model(cfg);
  CHECK(a == b);
  CHECK(a.intent->lstm.wx.cols() == 7);
  CHECK(a.eos->lstm.wx.cols() == 6);
  CHECK(a.embedding.rows() == 5);
  // forget-gate bias
  for (int k = 0; k < 4; ++k) CHECK(a.intent->lstm.b[4 + k] == 1.0);
  CHECK(a.intent->lstm.b[0] == 0.0);
  a.for_each([](const std::string& name, const Tensor& t) {
    if (name.ends_with(".b")) return;
    for (double v : t.values()) CHECK(std::abs(v) <= 0.08);
  });

  ModelConfig off = cfg;
  off.variant = Variant::Offline;
  Parameters o = init_model(off);
  CHECK_FALSE(o.eos.has_value());
  CHECK(o.intent.has_value());

  ModelConfig eos_only = cfg;
  eos_only.variant = Variant::EosOnly;
  CHECK_FALSE(init_model(eos_only).intent.has_value());
}

TEST_CASE("MULTITASK and MULTITASK_FB differ only in the feedback column") {
  ModelConfig mt = tiny_config(Variant::Multitask);
  ModelConfig fb = tiny_config(Variant::MultitaskFeedback);
  Parameters a = init_model(mt), b = init_model(fb);
  CHECK(a.embedding == b.embedding);
  CHECK(a.eos->lstm.wx == b.eos->lstm.wx);
  CHECK(a.intent->lstm.wh == b.intent->lstm.wh);
  CHECK(a.intent->w_out == b.intent->w_out);
  for (int r = 0; r < a.intent->lstm.wx.rows(); ++r)
    for (int c = 0; c < mt.embedding_dim; ++c)
      CHECK(a.intent->lstm.wx.at(r, c) == b.intent->lstm.wx.at(r, c));
}

TEST_CASE("ModelConfig validation and serialization") {
  ModelConfig cfg = tiny_config(Variant::Online);
  cfg.dropout = 0.15;
  CHECK(ModelConfig::parse(cfg.serialize()) == cfg);
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.dropout = 0.1;
  cfg.eos_threshold = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(parse_variant("BIDIRECTIONAL"), std::invalid_argument);
  for (Variant v : kAllVariants) CHECK(parse_variant(to_string(v)) == v);
}

TEST_CASE("forward shapes") {
  for (Variant v : kAllVariants) {
    Model m = tiny_model(v);
    ForwardResult fr = forward(m.params, m.config, std::vector<int>{3}, false);
    CHECK(fr.intent_logits.rows() == (has_intent_branch(v) ? 1 : 0));
    CHECK(fr.eos_logits.size() == (has_eos_branch(v) ? 1u : 0u));
    CHECK_THROWS_AS(forward(m.params, m.config, std::vector<int>{5}, false), std::out_of_range);
  }
}

TEST_CASE("OFFLINE and ONLINE share the forward computation") {
  Model off = tiny_model(Variant::Offline);
  Model on = tiny_model(Variant::Online);
  REQUIRE(off.params == on.params);
  const std::vector<int> toks = {1, 4, 2, 0, 3};
  CHECK(forward(off.params, off.config, toks, false).intent_logits ==
        forward(on.params, on.config, toks, false).intent_logits);
}

TEST_CASE("MULTITASK_FB with a silent EOS branch feeds back a constant 0.5") {
  Model m = tiny_model(Variant::MultitaskFeedback);
  // Zero EOS head: logit 0 at every step, so p_eos = 0.5.
  m.params.eos->w_out.fill(0.0);
  m.params.eos->b_out.fill(0.0);
  const std::vector<int> toks = {2, 2, 4, 1, 0, 3};
  ForwardResult fr = forward(m.params, m.config, toks, false);
  const auto expected = oracles::fb_intent_logits_constant_half(m.params, toks);
  for (std::size_t t = 0; t < toks.size(); ++t) {
    CHECK(fr.eos_prob(static_cast<int>(t)) == 0.5);
    for (int c = 0; c < 2; ++c)
      CHECK(std::abs(fr.intent_logits.at(static_cast<int>(t), c) - expected[t][c]) < 1e-12);
  }
}

TEST_CASE("backward: zero loss yields zero gradients") {
  Model m = tiny_model(Variant::Online);
  StreamSample s;
  s.token_ids = {1, 2, 3};
  s.eos_flags = {0, 0, 0};
  s.intent_ids = {0, 0, 0};
  Gradients g = compute_gradients(m.params, m.config, s, false);
  CHECK(g.loss == 0.0);
  CHECK(g.degenerate);
  g.grads.for_each([](const std::string&, const Tensor& t) {
    for (double v : t.values()) CHECK(v == 0.0);
  });
}

TEST_CASE("backward: intent head gets no gradient from an EOS-free mask") {
  Model m = tiny_model(Variant::Multitask);
  StreamSample s;
  s.token_ids = {1, 2, 3};
  s.eos_flags = {0, 0, 0};
  s.intent_ids = {1, 1, 1};
  Gradients g = compute_gradients(m.params, m.config, s, false);
  for (const Tensor* t : {&g.grads.intent->w_out, &g.grads.intent->b_out, &g.grads.intent->lstm.wx})
    for (double v : t->values()) CHECK(v == 0.0);
  double eos_sum = 0.0;
  for (double v : g.grads.eos->w_out.values()) eos_sum += std::abs(v);
  CHECK(eos_sum > 0.0);
}

TEST_CASE("backward matches central finite differences for every variant") {
  for (Variant v : kAllVariants) {
    CAPTURE(to_string(v));
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      Model m = tiny_model(v, seed);
      Rng rng(seed + 100);
      StreamSample s = oracles::tiny_sample(5, 2, rng);
      GradCheckResult r = gradient_check(m.params, m.config, s, 1e-5);
      CHECK(r.checked == m.params.num_values());
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("backward with dropout matches finite differences under fixed masks") {
  for (Variant v : {Variant::Online, Variant::MultitaskFeedback}) {
    Model m = tiny_model(v, 9);
    m.config.dropout = 0.3;
    Rng rng(77);
    StreamSample s = oracles::tiny_sample(5, 2, rng);
    GradCheckResult r = gradient_check(m.params, m.config, s, 1e-5, 42u);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("step folding equals forward in inference mode") {
  Rng rng(5);
  std::uniform_int_distribution<int> tok(0, 4);
  for (Variant v : kAllVariants) {
    Model m = tiny_model(v, 13);
    std::vector<int> toks(9);
    for (int& t : toks) t = tok(rng);
    ForwardResult fr = forward(m.params, m.config, toks, false);
    StreamState st = StreamState::fresh(m.config);
    for (int t = 0; t < 9; ++t) {
      auto [next, out] = step(m.params, m.config, st, toks[t]);
      CHECK(next.steps == t + 1);
      st = next;
      if (has_intent_branch(v)) {
        const Vec expect = fr.intent_dist(t);
        for (int c = 0; c < 2; ++c) CHECK(std::abs((*out.intent_dist)[c] - expect[c]) < 1e-12);
      } else {
        CHECK_FALSE(out.intent_dist.has_value());
      }
      if (has_eos_branch(v)) {
        CHECK(std::abs(*out.eos_prob - fr.eos_prob(t)) < 1e-12);
        CHECK(*out.eos_prob > 0.0);
        CHECK(*out.eos_prob < 1.0);
      }
    }
  }
}

TEST_CASE("state carried across two forward segments equals one session") {
  // Replay oracle: the second utterance run from the first one's final
  // state must match the tail of the joint run.
  Model m = tiny_model(Variant::MultitaskFeedback, 21);
  const std::vector<int> first = {1, 2, 3}, second = {4, 0, 2, 1};
  std::vector<int> joint = first;
  joint.insert(joint.end(), second.begin(), second.end());
  ForwardResult fr = forward(m.params, m.config, joint, false);

  StreamState st = StreamState::fresh(m.config);
  for (int t : first) st = step(m.params, m.config, st, t).first;
  for (std::size_t k = 0; k < second.size(); ++k) {
    auto [next, out] = step(m.params, m.config, st, second[k]);
    st = next;
    const int t = static_cast<int>(first.size() + k);
    CHECK((*out.intent_dist) == fr.intent_dist(t));
  }
}

TEST_CASE("step does not mutate the caller's state") {
  Model m = tiny_model(Variant::Online);
  StreamState fresh = StreamState::fresh(m.config);
  auto [next, out] = step(m.params, m.config, fresh, 2);
  CHECK(fresh.intent_h == Vec(2, 0.0));
  CHECK(fresh.steps == 0);
  CHECK(next.intent_h != Vec(2, 0.0));
  CHECK_THROWS_AS(step(m.params, m.config, fresh, -1), std::out_of_range);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const fs::path dir = fs::temp_directory_path();
  for (Variant v : kAllVariants) {
    Model m = tiny_model(v, 31);
    m.params.embedding[0] = 0.1 + 0.2;  // not representable in short form
    m.params.embedding[1] = -1.2345678901234567e-300;
    const fs::path p1 = dir / "islu_ckpt_a.txt", p2 = dir / "islu_ckpt_b.txt";
    save_checkpoint(m, p1);
    Model back = load_checkpoint(p1);
    CHECK(back.params == m.params);
    CHECK(back.config == m.config);
    CHECK(back.vocab == m.vocab);
    CHECK(back.intent_labels == m.intent_labels);
    save_checkpoint(back, p2);
    CHECK(read_file(p1) == read_file(p2));
    fs::remove(p1);
    fs::remove(p2);
  }
}

TEST_CASE("checkpoint format header and layout") {
  Model m = tiny_model(Variant::EosOnly);
  const std::string text = checkpoint_text(m);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line == "ISLU-CKPT v1");
  std::getline(in, line);
  CHECK(line.rfind("variant=EOS_ONLY,", 0) == 0);
  CHECK(text.find("\nembedding 5 3\n") != std::string::npos);
  CHECK(text.find("\neos.lstm.wx 8 3\n") != std::string::npos);
}

TEST_CASE("checkpoint errors") {
  Model m = tiny_model(Variant::Multitask);
  const std::string text = checkpoint_text(m);

  SUBCASE("truncated file") {
    CHECK_THROWS_AS(parse_checkpoint(text.substr(0, text.size() / 2)), CheckpointError);
    CHECK_THROWS_AS(parse_checkpoint(text.substr(0, text.size() - 4)), CheckpointError);
  }
  SUBCASE("version mismatch") {
    std::string v2 = text;
    v2.replace(0, 12, "ISLU-CKPT v2");
    CHECK_THROWS_WITH_AS(parse_checkpoint(v2), doctest::Contains("version"), CheckpointError);
  }
  SUBCASE("cross-variant load") {
    Model eos = tiny_model(Variant::EosOnly);
    std::string swapped = checkpoint_text(eos);
    // Claim MULTITASK in the config line while the tensors are EOS_ONLY's.
    swapped.replace(swapped.find("EOS_ONLY"), 8, "MULTITASK");
    CHECK_THROWS_AS(parse_checkpoint(swapped), CheckpointError);

    const fs::path p = fs::temp_directory_path() / "islu_ckpt_eos.txt";
    save_checkpoint(eos, p);
    CHECK_THROWS_WITH_AS(load_checkpoint(p, Variant::Multitask), doctest::Contains("variant"),
                         CheckpointError);
    CHECK_NOTHROW(load_checkpoint(p, Variant::EosOnly));
    fs::remove(p);
  }
  SUBCASE("corrupt number") {
    std::string bad = text;
    const auto pos = bad.find("\nembedding 5 3\n") + 15;
    bad.replace(pos, 3, "x.y");
    CHECK_THROWS_AS(parse_checkpoint(bad), CheckpointError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt"), CheckpointError);
  }
}
