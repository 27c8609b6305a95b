#include "islu/models.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace islu {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Offline: return "OFFLINE";
    case Variant::Online: return "ONLINE";
    case Variant::EosOnly: return "EOS_ONLY";
    case Variant::Multitask: return "MULTITASK";
    case Variant::MultitaskFeedback: return "MULTITASK_FB";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::Offline, Variant::Online, Variant::EosOnly, Variant::Multitask,
                    Variant::MultitaskFeedback})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown variant '" + name + "'");
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_double17(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& s, const std::string& what) {
  T value{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("bad value for " + what + ": '" + s + "'");
  return value;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1 || embedding_dim < 1 || hidden_dim < 1)
    throw std::invalid_argument("model dimensions must be >= 1");
  if (has_intent_branch(variant) && n_intents < 2)
    throw std::invalid_argument("n_intents must be >= 2");
  if (n_intents < 1) throw std::invalid_argument("n_intents must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0,1)");
  if (!(eos_threshold > 0.0 && eos_threshold < 1.0))
    throw std::invalid_argument("eos_threshold must be in (0,1)");
}

std::string ModelConfig::serialize() const {
  std::ostringstream out;
  out << "variant=" << to_string(variant) << ",vocab_size=" << vocab_size
      << ",embedding_dim=" << embedding_dim << ",hidden_dim=" << hidden_dim
      << ",n_intents=" << n_intents << ",dropout=" << format_double(dropout)
      << ",eos_threshold=" << format_double(eos_threshold) << ",seed=" << seed;
  return out.str();
}

ModelConfig ModelConfig::parse(const std::string& line) {
  ModelConfig cfg;
  std::map<std::string, std::string> kv;
  std::istringstream in(line);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config item without '=': " + item);
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  const std::vector<std::string> keys = {"variant",   "vocab_size", "embedding_dim",
                                         "hidden_dim", "n_intents",  "dropout",
                                         "eos_threshold", "seed"};
  for (const auto& k : keys)
    if (!kv.count(k)) throw std::invalid_argument("config missing key '" + k + "'");
  if (kv.size() != keys.size()) throw std::invalid_argument("config has unknown keys");
  cfg.variant = parse_variant(kv["variant"]);
  cfg.vocab_size = parse_number<int>(kv["vocab_size"], "vocab_size");
  cfg.embedding_dim = parse_number<int>(kv["embedding_dim"], "embedding_dim");
  cfg.hidden_dim = parse_number<int>(kv["hidden_dim"], "hidden_dim");
  cfg.n_intents = parse_number<int>(kv["n_intents"], "n_intents");
  cfg.dropout = parse_number<double>(kv["dropout"], "dropout");
  cfg.eos_threshold = parse_number<double>(kv["eos_threshold"], "eos_threshold");
  cfg.seed = parse_number<std::uint64_t>(kv["seed"], "seed");
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn) {
  fn("embedding", p.embedding);
  auto branch = [&](const std::string& prefix, auto& b) {
    fn(prefix + ".lstm.wx", b.lstm.wx);
    fn(prefix + ".lstm.wh", b.lstm.wh);
    fn(prefix + ".lstm.b", b.lstm.b);
    fn(prefix + ".out.w", b.w_out);
    fn(prefix + ".out.b", b.b_out);
  };
  if (p.intent) branch("intent", *p.intent);
  if (p.eos) branch("eos", *p.eos);
}

Branch make_branch(int input_dim, int hidden_dim, int outputs) {
  Branch b;
  b.lstm = LstmParams(input_dim, hidden_dim);
  b.w_out = Tensor::matrix(outputs, hidden_dim);
  b.b_out = Tensor::vector(outputs);
  return b;
}

int intent_input_dim(const ModelConfig& cfg) {
  return cfg.embedding_dim + (cfg.variant == Variant::MultitaskFeedback ? 1 : 0);
}

}  // namespace

void Parameters::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_tensors(*this, fn);
}

void Parameters::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_tensors(*this, fn);
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  z.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

std::size_t Parameters::num_values() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

Parameters init_model(const ModelConfig& cfg) {
  cfg.validate();
  const int e = cfg.embedding_dim;
  const int h = cfg.hidden_dim;
  Parameters p;
  p.embedding = Tensor::matrix(cfg.vocab_size, e);
  if (has_intent_branch(cfg.variant)) p.intent = make_branch(intent_input_dim(cfg), h, cfg.n_intents);
  if (has_eos_branch(cfg.variant)) p.eos = make_branch(e, h, 1);

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> u(-0.08, 0.08);
  auto fill_uniform = [&](Tensor& t, int col_limit) {
    for (int r = 0; r < t.rows(); ++r)
      for (int c = 0; c < std::min(col_limit, t.cols()); ++c) t.at(r, c) = u(rng);
  };
  auto init_branch = [&](Branch& b, int base_cols) {
    fill_uniform(b.lstm.wx, base_cols);
    fill_uniform(b.lstm.wh, h);
    fill_uniform(b.w_out, h);
    for (int k = h; k < 2 * h; ++k) b.lstm.b[k] = 1.0;  // forget gate
  };
  // Draw order keeps MULTITASK and MULTITASK_FB identical apart from the
  // feedback column, which is drawn last.
  fill_uniform(p.embedding, e);
  if (p.eos) init_branch(*p.eos, e);
  if (p.intent) init_branch(*p.intent, e);
  if (cfg.variant == Variant::MultitaskFeedback)
    for (int r = 0; r < p.intent->lstm.wx.rows(); ++r) p.intent->lstm.wx.at(r, e) = u(rng);
  return p;
}

StreamState StreamState::fresh(const ModelConfig& cfg) {
  StreamState s;
  if (has_intent_branch(cfg.variant)) {
    s.intent_h.assign(cfg.hidden_dim, 0.0);
    s.intent_c.assign(cfg.hidden_dim, 0.0);
  }
  if (has_eos_branch(cfg.variant)) {
    s.eos_h.assign(cfg.hidden_dim, 0.0);
    s.eos_c.assign(cfg.hidden_dim, 0.0);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Forward / step

namespace {

struct StepMasks {
  const Vec* emb = nullptr;
  const Vec* eos_out = nullptr;
  const Vec* intent_out = nullptr;
};

Vec masked(const Vec& v, const Vec* mask) {
  if (!mask) return v;
  Vec out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] * (*mask)[k];
  return out;
}

// Advances every branch by one token. Shared by forward() and step() so the
// two paths perform identical arithmetic.
void advance(const Parameters& p, const ModelConfig& cfg, StreamState& st, int token,
             const StepMasks& masks, std::span<double> intent_logits, double* eos_logit,
             Tape* tape, const double* frozen_feedback = nullptr) {
  if (token < 0 || token >= p.embedding.rows())
    throw std::out_of_range("token id " + std::to_string(token) + " outside vocabulary");
  const auto row = p.embedding.row(token);
  const Vec emb = masked(Vec(row.begin(), row.end()), masks.emb);
  if (tape) {
    tape->tokens.push_back(token);
    tape->embedded.push_back(emb);
  }

  double eos_prob = 0.0;
  if (p.eos) {
    LstmCache cache;
    auto out = lstm_step(emb, st.eos_h, st.eos_c, p.eos->lstm, tape ? &cache : nullptr);
    st.eos_h = std::move(out.h);
    st.eos_c = std::move(out.c);
    const Vec head_in = masked(st.eos_h, masks.eos_out);
    double z = p.eos->b_out[0];
    for (int k = 0; k < cfg.hidden_dim; ++k) z += p.eos->w_out[k] * head_in[k];
    *eos_logit = z;
    eos_prob = sigmoid(z);
    if (tape) {
      tape->eos_steps.push_back(std::move(cache));
      tape->eos_head_in.push_back(head_in);
    }
  }

  if (p.intent) {
    Vec x = emb;
    if (cfg.variant == Variant::MultitaskFeedback)
      x.push_back(frozen_feedback ? *frozen_feedback : eos_prob);
    LstmCache cache;
    auto out = lstm_step(x, st.intent_h, st.intent_c, p.intent->lstm, tape ? &cache : nullptr);
    st.intent_h = std::move(out.h);
    st.intent_c = std::move(out.c);
    const Vec head_in = masked(st.intent_h, masks.intent_out);
    std::copy(p.intent->b_out.values().begin(), p.intent->b_out.values().end(),
              intent_logits.begin());
    matvec(p.intent->w_out, head_in, intent_logits, true);
    if (tape) {
      tape->intent_steps.push_back(std::move(cache));
      tape->intent_head_in.push_back(head_in);
    }
  }
  ++st.steps;
}

}  // namespace

ForwardResult forward(const Parameters& params, const ModelConfig& cfg,
                      std::span<const int> token_ids, bool training, Rng* rng,
                      std::span<const double> frozen_feedback) {
  const bool use_dropout = training && cfg.dropout > 0.0;
  if (use_dropout && !rng) throw std::invalid_argument("forward: dropout needs a generator");
  const int t_len = static_cast<int>(token_ids.size());
  if (!frozen_feedback.empty() && static_cast<int>(frozen_feedback.size()) != t_len)
    throw std::invalid_argument("forward: frozen feedback length mismatch");
  ForwardResult fr;
  if (params.intent) fr.intent_logits = Tensor::matrix(t_len, cfg.n_intents);
  if (params.eos) fr.eos_logits.assign(t_len, 0.0);

  StreamState st = StreamState::fresh(cfg);
  for (int t = 0; t < t_len; ++t) {
    StepMasks masks;
    Vec emb_mask, eos_mask, intent_mask;
    if (use_dropout) {
      emb_mask = dropout_mask(cfg.embedding_dim, cfg.dropout, *rng, true);
      masks.emb = &emb_mask;
      if (params.eos) {
        eos_mask = dropout_mask(cfg.hidden_dim, cfg.dropout, *rng, true);
        masks.eos_out = &eos_mask;
      }
      if (params.intent) {
        intent_mask = dropout_mask(cfg.hidden_dim, cfg.dropout, *rng, true);
        masks.intent_out = &intent_mask;
      }
    }
    std::span<double> logits;
    if (params.intent) logits = fr.intent_logits.row(t);
    double eos_logit = 0.0;
    advance(params, cfg, st, token_ids[t], masks, logits, &eos_logit, &fr.tape,
            frozen_feedback.empty() ? nullptr : &frozen_feedback[t]);
    if (params.eos) fr.eos_logits[t] = eos_logit;
    fr.tape.emb_mask.push_back(std::move(emb_mask));
    fr.tape.eos_out_mask.push_back(std::move(eos_mask));
    fr.tape.intent_out_mask.push_back(std::move(intent_mask));
  }
  return fr;
}

std::pair<StreamState, StepOutput> step(const Parameters& params, const ModelConfig& cfg,
                                        const StreamState& state, int token_id) {
  StreamState next = state;
  Vec logits(params.intent ? cfg.n_intents : 0);
  double eos_logit = 0.0;
  advance(params, cfg, next, token_id, StepMasks{}, logits, &eos_logit, nullptr);
  StepOutput out;
  if (params.intent) out.intent_dist = softmax(logits);
  if (params.eos) out.eos_prob = sigmoid(eos_logit);
  return {std::move(next), std::move(out)};
}

// ---------------------------------------------------------------------------
// Backward

namespace {

// Runs BPTT through one branch. d_logit(t) yields the loss gradient w.r.t.
// that step's outputs; returns per-step gradients w.r.t. the LSTM input.
std::vector<Vec> backprop_branch(const Branch& branch, Branch& grad,
                                 const std::vector<LstmCache>& steps,
                                 const std::vector<Vec>& head_in,
                                 const std::vector<Vec>& out_mask,
                                 const std::function<std::span<const double>(int)>& d_logit) {
  const int t_len = static_cast<int>(steps.size());
  const int hd = branch.lstm.hidden_dim();
  std::vector<Vec> dx(t_len);
  Vec dh(hd, 0.0), dc(hd, 0.0);
  for (int t = t_len - 1; t >= 0; --t) {
    const auto dl = d_logit(t);
    Vec dh_head(hd, 0.0);
    bool any = false;
    for (double v : dl) any = any || v != 0.0;
    if (any) {
      outer_acc(grad.w_out, dl, head_in[t]);
      for (std::size_t k = 0; k < dl.size(); ++k) grad.b_out[k] += dl[k];
      matvec_transposed_acc(branch.w_out, dl, dh_head);
      if (!out_mask[t].empty())
        for (int k = 0; k < hd; ++k) dh_head[k] *= out_mask[t][k];
    }
    for (int k = 0; k < hd; ++k) dh[k] += dh_head[k];
    dx[t] = lstm_step_backward(steps[t], branch.lstm, grad.lstm, dh, dc);
  }
  return dx;
}

}  // namespace

Parameters backward(const Parameters& params, const ModelConfig& cfg, const Tape& tape,
                    const Tensor& d_intent_logits, const Vec& d_eos_logits) {
  Parameters grads = params.zeros_like();
  const int t_len = static_cast<int>(tape.tokens.size());
  const int e = cfg.embedding_dim;
  std::vector<Vec> d_emb(t_len, Vec(e, 0.0));

  if (params.intent) {
    if (d_intent_logits.rows() != t_len) throw std::invalid_argument("backward: intent grad shape");
    auto dx = backprop_branch(*params.intent, *grads.intent, tape.intent_steps,
                              tape.intent_head_in, tape.intent_out_mask,
                              [&](int t) { return d_intent_logits.row(t); });
    // The feedback column (index e) is dropped: the EOS probability is a constant input.
    for (int t = 0; t < t_len; ++t)
      for (int k = 0; k < e; ++k) d_emb[t][k] += dx[t][k];
  }
  if (params.eos) {
    if (static_cast<int>(d_eos_logits.size()) != t_len)
      throw std::invalid_argument("backward: eos grad shape");
    auto dx = backprop_branch(*params.eos, *grads.eos, tape.eos_steps, tape.eos_head_in,
                              tape.eos_out_mask, [&](int t) {
                                return std::span<const double>(&d_eos_logits[t], 1);
                              });
    for (int t = 0; t < t_len; ++t)
      for (int k = 0; k < e; ++k) d_emb[t][k] += dx[t][k];
  }
  for (int t = 0; t < t_len; ++t) {
    auto row = grads.embedding.row(tape.tokens[t]);
    const Vec& mask = tape.emb_mask[t];
    for (int k = 0; k < e; ++k) row[k] += mask.empty() ? d_emb[t][k] : d_emb[t][k] * mask[k];
  }
  return grads;
}

LossGrad variant_loss(const ModelConfig& cfg, const ForwardResult& fr, const StreamSample& s) {
  LossInputs in;
  in.intent_ids = s.intent_ids;
  in.eos_flags = s.eos_flags;
  if (!fr.intent_logits.empty()) in.intent_logits = &fr.intent_logits;
  if (!fr.eos_logits.empty()) in.eos_logits = &fr.eos_logits;

  LossGrad out;
  if (has_intent_branch(cfg.variant)) out = masked_intent_loss_grad(in);
  if (has_eos_branch(cfg.variant)) {
    LossGrad eos = eos_bce_loss_grad(fr.eos_logits, s.eos_flags);
    out.loss += eos.loss;
    out.d_eos_logits = std::move(eos.d_eos_logits);
  }
  return out;
}

Gradients compute_gradients(const Parameters& params, const ModelConfig& cfg,
                            const StreamSample& sample, bool training, Rng* rng) {
  ForwardResult fr = forward(params, cfg, sample.token_ids, training, rng);
  LossGrad lg = variant_loss(cfg, fr, sample);
  Gradients g;
  g.loss = lg.loss;
  g.degenerate = lg.degenerate;
  g.grads = backward(params, cfg, fr.tape, lg.d_intent_logits, lg.d_eos_logits);
  return g;
}

double compute_loss(const Parameters& params, const ModelConfig& cfg, const StreamSample& sample,
                    bool training, Rng* rng, std::span<const double> frozen_feedback) {
  ForwardResult fr = forward(params, cfg, sample.token_ids, training, rng, frozen_feedback);
  LossInputs in;
  in.intent_ids = sample.intent_ids;
  in.eos_flags = sample.eos_flags;
  in.intent_logits = &fr.intent_logits;
  in.eos_logits = &fr.eos_logits;
  switch (cfg.variant) {
    case Variant::Offline:
    case Variant::Online: return masked_intent_loss(in);
    case Variant::EosOnly: return eos_bce_loss(fr.eos_logits, sample.eos_flags);
    default: return multitask_loss(in);
  }
}

GradCheckResult gradient_check(const Parameters& params, const ModelConfig& cfg,
                               const StreamSample& sample, double delta,
                               std::optional<std::uint64_t> dropout_seed) {
  const bool training = dropout_seed.has_value();
  Vec feedback;
  if (cfg.variant == Variant::MultitaskFeedback) {
    Rng rng(dropout_seed.value_or(0));
    const ForwardResult base = forward(params, cfg, sample.token_ids, training, &rng);
    for (int t = 0; t < sample.length(); ++t) feedback.push_back(base.eos_prob(t));
  }
  auto loss_at = [&](const Parameters& p) {
    Rng rng(dropout_seed.value_or(0));
    return compute_loss(p, cfg, sample, training, &rng, feedback);
  };
  Rng rng(dropout_seed.value_or(0));
  const Gradients analytic = compute_gradients(params, cfg, sample, training, &rng);

  std::map<std::string, const Tensor*> analytic_by_name;
  analytic.grads.for_each(
      [&](const std::string& name, const Tensor& t) { analytic_by_name[name] = &t; });

  GradCheckResult res;
  Parameters probe = params;
  probe.for_each([&](const std::string& name, Tensor& t) {
    const Tensor& a = *analytic_by_name.at(name);
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double orig = t[k];
      t[k] = orig + delta;
      const double up = loss_at(probe);
      t[k] = orig - delta;
      const double down = loss_at(probe);
      t[k] = orig;
      const double numeric = (up - down) / (2.0 * delta);
      const double err = relative_error(a[k], numeric);
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_tensor = name;
      }
      ++res.checked;
    }
  });
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointHeader = "ISLU-CKPT v1";

Parameters expected_layout(const ModelConfig& cfg) {
  Parameters p;
  p.embedding = Tensor::matrix(cfg.vocab_size, cfg.embedding_dim);
  if (has_intent_branch(cfg.variant))
    p.intent = make_branch(intent_input_dim(cfg), cfg.hidden_dim, cfg.n_intents);
  if (has_eos_branch(cfg.variant)) p.eos = make_branch(cfg.embedding_dim, cfg.hidden_dim, 1);
  return p;
}

}  // namespace

std::string checkpoint_text(const Model& model) {
  std::string out;
  out += kCheckpointHeader;
  out += '\n';
  out += model.config.serialize() + '\n';
  out += "vocab " + std::to_string(model.vocab.size()) + '\n';
  for (const auto& w : model.vocab.words()) out += w + '\n';
  out += "intents " + std::to_string(model.intent_labels.size()) + '\n';
  for (const auto& l : model.intent_labels) out += l + '\n';
  model.params.for_each([&](const std::string& name, const Tensor& t) {
    out += name;
    for (int d : t.dims()) out += ' ' + std::to_string(d);
    out += '\n';
    // Rank-1 tensors are written as one row.
    const bool rank1 = t.dims().size() == 1;
    const int line_rows = rank1 ? 1 : t.rows();
    const int line_cols = rank1 ? t.rows() : t.cols();
    for (int r = 0; r < line_rows; ++r) {
      for (int c = 0; c < line_cols; ++c) {
        if (c) out += ' ';
        out += format_double17(t[static_cast<std::size_t>(r) * line_cols + c]);
      }
      out += '\n';
    }
  });
  out += "end\n";
  return out;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_text(model);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Model parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) throw CheckpointError(std::string("corrupt checkpoint: missing ") + what);
    return line;
  };

  if (next_line("header") != kCheckpointHeader) {
    if (line.rfind("ISLU-CKPT", 0) == 0) throw CheckpointError("unsupported checkpoint version: " + line);
    throw CheckpointError("not a checkpoint file");
  }
  Model m;
  try {
    m.config = ModelConfig::parse(next_line("config"));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("corrupt checkpoint config: ") + e.what());
  }

  auto read_count = [&](const std::string& keyword) {
    std::istringstream hs(next_line(keyword.c_str()));
    std::string kw;
    long n = -1;
    if (!(hs >> kw >> n) || kw != keyword || n < 0)
      throw CheckpointError("corrupt checkpoint: bad '" + keyword + "' section");
    return n;
  };
  const long nv = read_count("vocab");
  std::vector<std::string> words;
  for (long k = 0; k < nv; ++k) words.push_back(next_line("vocabulary entry"));
  if (words.empty() || words[0] != Vocabulary::kUnkToken)
    throw CheckpointError("corrupt checkpoint: vocabulary must start with UNK");
  m.vocab = Vocabulary(std::vector<std::string>(words.begin() + 1, words.end()));
  if (m.vocab.size() != m.config.vocab_size)
    throw CheckpointError("shape mismatch: vocabulary size differs from config");
  const long ni = read_count("intents");
  for (long k = 0; k < ni; ++k) m.intent_labels.push_back(next_line("intent label"));

  m.params = expected_layout(m.config);
  m.params.for_each([&](const std::string& name, Tensor& t) {
    std::istringstream hs(next_line(name.c_str()));
    std::string got_name;
    hs >> got_name;
    std::vector<int> dims;
    int d;
    while (hs >> d) dims.push_back(d);
    if (got_name != name) throw CheckpointError("variant mismatch: expected tensor '" + name + "', found '" + got_name + "'");
    if (dims != t.dims()) throw CheckpointError("shape mismatch for tensor '" + name + "'");
    const bool rank1 = dims.size() == 1;
    const int line_rows = rank1 ? 1 : t.rows();
    const int line_cols = rank1 ? t.rows() : t.cols();
    std::size_t k = 0;
    for (int r = 0; r < line_rows; ++r) {
      std::istringstream vs(next_line("tensor values"));
      std::string tok;
      int c = 0;
      while (vs >> tok) {
        if (c >= line_cols) throw CheckpointError("corrupt checkpoint: too many values in '" + name + "'");
        double v = 0.0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
          throw CheckpointError("corrupt checkpoint: bad number in '" + name + "'");
        t[k++] = v;
        ++c;
      }
      if (c != line_cols) throw CheckpointError("corrupt checkpoint: short row in '" + name + "'");
    }
  });
  if (next_line("end marker") != "end") {
    throw CheckpointError("variant mismatch or corrupt checkpoint: unexpected '" + line + "'");
  }
  m.params.for_each([](const std::string& name, const Tensor& t) {
    if (!t.all_finite()) throw CheckpointError("corrupt checkpoint: non-finite values in '" + name + "'");
  });
  return m;
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

Model load_checkpoint(const std::filesystem::path& path, Variant expected) {
  Model m = load_checkpoint(path);
  if (m.config.variant != expected)
    throw CheckpointError("variant mismatch: checkpoint holds " + to_string(m.config.variant) +
                          ", expected " + to_string(expected));
  return m;
}

}  // namespace islu
