#include "islu/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "islu/evaluation.hpp"

namespace islu {

void TrainSpec::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (max_utts_train < 1) throw std::invalid_argument("max_utts_train must be >= 1");
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  if (config.embedding_dim < 1 || config.hidden_dim < 1)
    throw std::invalid_argument("model dimensions must be >= 1");
  if (!(config.dropout >= 0.0 && config.dropout < 1.0))
    throw std::invalid_argument("dropout must be in [0,1)");
  if (!(config.eos_threshold > 0.0 && config.eos_threshold < 1.0))
    throw std::invalid_argument("eos_threshold must be in (0,1)");
  for (int h : grid_hidden)
    if (h < 1) throw std::invalid_argument("grid_hidden entries must be >= 1");
  for (double d : grid_dropout)
    if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("grid_dropout entries must be in [0,1)");
}

int TrainSpec::regime_max_utts() const {
  return config.variant == Variant::Offline ? 1 : max_utts_train;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
std::vector<T> parse_list(const std::string& v) {
  std::vector<T> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::istringstream is(item);
    T x{};
    if (!(is >> x) || !is.eof()) throw std::invalid_argument("bad list value '" + item + "'");
    out.push_back(x);
  }
  return out;
}

template <typename T>
T parse_scalar(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T x{};
  if (!(is >> x) || !is.eof()) throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
  return x;
}

}  // namespace

TrainSpec parse_train_spec(const std::string& text) {
  TrainSpec spec;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("train config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "variant") spec.config.variant = parse_variant(val);
      else if (key == "embedding_dim") spec.config.embedding_dim = parse_scalar<int>(key, val);
      else if (key == "hidden_dim") spec.config.hidden_dim = parse_scalar<int>(key, val);
      else if (key == "dropout") spec.config.dropout = parse_scalar<double>(key, val);
      else if (key == "eos_threshold") spec.config.eos_threshold = parse_scalar<double>(key, val);
      else if (key == "lr") spec.lr = parse_scalar<double>(key, val);
      else if (key == "epochs") spec.epochs = parse_scalar<int>(key, val);
      else if (key == "max_utts_train") spec.max_utts_train = parse_scalar<int>(key, val);
      else if (key == "seed") spec.seed = parse_scalar<std::uint64_t>(key, val);
      else if (key == "min_count") spec.min_count = parse_scalar<int>(key, val);
      else if (key == "clip_norm") spec.clip_norm = parse_scalar<double>(key, val);
      else if (key == "grid_hidden") spec.grid_hidden = parse_list<int>(val);
      else if (key == "grid_dropout") spec.grid_dropout = parse_list<double>(val);
      else throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      throw DataError("train config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  return spec;
}

TrainSpec load_train_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open train config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_spec(ss.str());
}

std::string TrainHistory::csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,train_loss,dev_intent_acc,dev_eos_acc,clipped\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.train_loss << ',';
    if (has_intent) out << e.dev_intent_acc;
    out << ',';
    if (has_eos) out << e.dev_eos_acc;
    out << ',' << e.clipped << '\n';
  }
  return out.str();
}

double dev_score(const Model& model, const StreamSet& dev) {
  if (model.params.intent) return eval_oracle(model, dev).intent_acc_oracle;
  return eval_eos(model, dev).eos_token_acc;
}

StreamSet dev_streams(const TrainSpec& spec, const Model& model, const Corpus& dev_corpus) {
  return stitch_streams(dev_corpus, model.vocab, spec.regime_max_utts(), spec.seed + 1,
                        &model.intent_labels);
}

namespace {

void check_corpora(const Corpus& train_corpus, const Corpus& dev_corpus) {
  if (train_corpus.utterances.empty()) throw DataError("empty training corpus");
  if (dev_corpus.utterances.empty()) throw DataError("empty dev corpus");
  for (const auto& intent : dev_corpus.intent_set)
    if (train_corpus.intent_index(intent) < 0)
      throw DataError("dev intent '" + intent + "' does not occur in the training corpus");
}

double global_norm(const Parameters& g) {
  double sq = 0.0;
  g.for_each([&](const std::string&, const Tensor& t) {
    for (double v : t.values()) sq += v * v;
  });
  return std::sqrt(sq);
}

}  // namespace

TrainResult train(const TrainSpec& spec, const Corpus& train_corpus, const Corpus& dev_corpus) {
  spec.validate();
  check_corpora(train_corpus, dev_corpus);

  Model model;
  model.vocab = build_vocab(train_corpus, spec.min_count);
  model.intent_labels = train_corpus.intent_set;
  model.config = spec.config;
  model.config.vocab_size = model.vocab.size();
  model.config.n_intents = static_cast<int>(model.intent_labels.size());
  model.config.seed = spec.seed;
  model.params = init_model(model.config);

  const StreamSet train_streams =
      stitch_streams(train_corpus, model.vocab, spec.regime_max_utts(), spec.seed);
  const StreamSet dev = dev_streams(spec, model, dev_corpus);

  std::vector<AdamMoments> moments;
  model.params.for_each([&](const std::string&, const Tensor& t) {
    moments.push_back({Tensor(t.dims()), Tensor(t.dims())});
  });
  AdamOptions adam;
  adam.lr = spec.lr;

  TrainResult result;
  result.history.has_intent = has_intent_branch(model.config.variant);
  result.history.has_eos = has_eos_branch(model.config.variant);
  result.model = model;
  bool have_best = false;

  Rng rng(spec.seed + 2);
  std::vector<std::size_t> order(train_streams.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long step_count = 0;

  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      Gradients g =
          compute_gradients(model.params, model.config, train_streams.samples[idx], true, &rng);
      loss_sum += g.loss;
      rec.degenerate += g.degenerate;
      if (spec.clip_norm > 0.0) {
        const double norm = global_norm(g.grads);
        if (norm > spec.clip_norm) {
          const double scale = spec.clip_norm / norm;
          g.grads.for_each([&](const std::string&, Tensor& t) {
            for (double& v : t.values()) v *= scale;
          });
          ++rec.clipped;
        }
      }
      ++step_count;
      std::vector<const Tensor*> grads;
      g.grads.for_each([&](const std::string&, const Tensor& t) { grads.push_back(&t); });
      std::size_t k = 0;
      model.params.for_each([&](const std::string&, Tensor& t) {
        adam_step(t, *grads[k], moments[k], adam, step_count);
        ++k;
      });
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());

    double score = 0.0;
    if (result.history.has_intent) {
      const EvalReport r = result.history.has_eos ? eval_predicted(model, nullptr, dev)
                                                  : eval_oracle(model, dev);
      rec.dev_intent_acc = r.intent_acc_oracle;
      rec.dev_eos_acc = r.eos_token_acc;
      score = rec.dev_intent_acc;
    } else {
      rec.dev_eos_acc = eval_eos(model, dev).eos_token_acc;
      score = rec.dev_eos_acc;
    }
    result.history.epochs.push_back(rec);
    if (!have_best || score > result.history.best_score) {
      have_best = true;
      result.history.best_score = score;
      result.history.best_epoch = epoch;
      result.model.params = model.params;
    }
  }
  return result;
}

GridResult grid_search(const TrainSpec& spec, const Corpus& train_corpus,
                       const Corpus& dev_corpus) {
  std::vector<int> hidden = spec.grid_hidden.empty() ? std::vector<int>{spec.config.hidden_dim}
                                                     : spec.grid_hidden;
  std::vector<double> dropout = spec.grid_dropout.empty()
                                    ? std::vector<double>{spec.config.dropout}
                                    : spec.grid_dropout;
  std::sort(hidden.begin(), hidden.end());
  hidden.erase(std::unique(hidden.begin(), hidden.end()), hidden.end());
  std::sort(dropout.begin(), dropout.end());
  dropout.erase(std::unique(dropout.begin(), dropout.end()), dropout.end());
  check_corpora(train_corpus, dev_corpus);

  GridResult out;
  bool have_best = false;
  for (int h : hidden) {
    for (double d : dropout) {
      TrainSpec point = spec;
      point.config.hidden_dim = h;
      point.config.dropout = d;
      point.grid_hidden.clear();
      point.grid_dropout.clear();
      TrainResult r = train(point, train_corpus, dev_corpus);
      // Ascending iteration plus a strict comparison keeps the smaller
      // hidden size, then the smaller dropout, on ties.
      if (!have_best || r.history.best_score > out.best_history.best_score) {
        have_best = true;
        out.best = r.model;
        out.best_history = r.history;
      }
      out.points.push_back({h, d, std::move(r.history)});
    }
  }
  return out;
}

}  // namespace islu
