// islu: command-line front end for corpus generation, stream stitching,
// training, evaluation, gradient checking and token-by-token streaming.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "islu/corpus.hpp"
#include "islu/evaluation.hpp"
#include "islu/models.hpp"
#include "islu/streaming.hpp"
#include "islu/training.hpp"

namespace {

using namespace islu;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void echo_seed(std::uint64_t seed) { std::cerr << "seed=" << seed << '\n'; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 1)
      throw CLI::ValidationError("--max-utts", "expected a comma-separated list of positive integers");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--max-utts", "empty list");
  return out;
}

struct GenArgs {
  int intents = 8, utts = 1000, len_min = 4, len_max = 10;
  std::uint64_t seed = 0;
  std::string out;
};

int run_gen(const GenArgs& a) {
  echo_seed(a.seed);
  Corpus c = gen_synthetic({a.intents, a.utts, a.len_min, a.len_max, a.seed});
  save_corpus(c, a.out);
  std::cout << "wrote " << c.utterances.size() << " utterances, " << c.intent_set.size()
            << " intents to " << a.out << '\n';
  return 0;
}

struct StitchArgs {
  std::string corpus, out;
  int max_utts = 3;
  int min_count = 1;
  std::uint64_t seed = 0;
};

int run_stitch(const StitchArgs& a) {
  echo_seed(a.seed);
  Corpus c = load_corpus(a.corpus);
  Vocabulary v = build_vocab(c, a.min_count);
  StreamSet set = stitch_streams(c, v, a.max_utts, a.seed);
  write_text(a.out, dump_streams(set, v));
  std::cout << "wrote " << set.samples.size() << " streams to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string corpus, dev, variant, config, out, history;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  TrainSpec spec = a.config.empty() ? TrainSpec{} : load_train_spec(a.config);
  if (!a.variant.empty()) spec.config.variant = parse_variant(a.variant);
  if (a.seed) spec.seed = *a.seed;
  echo_seed(spec.seed);
  Corpus train_corpus = load_corpus(a.corpus);
  Corpus dev_corpus = load_corpus(a.dev);

  Model model;
  TrainHistory history;
  const bool grid = spec.grid_hidden.size() > 1 || spec.grid_dropout.size() > 1;
  if (grid) {
    GridResult g = grid_search(spec, train_corpus, dev_corpus);
    for (const auto& p : g.points)
      std::cout << "grid hidden=" << p.hidden_dim << " dropout=" << p.dropout
                << " dev=" << p.history.best_score << '\n';
    model = std::move(g.best);
    history = std::move(g.best_history);
  } else {
    if (spec.grid_hidden.size() == 1) spec.config.hidden_dim = spec.grid_hidden[0];
    if (spec.grid_dropout.size() == 1) spec.config.dropout = spec.grid_dropout[0];
    TrainResult r = train(spec, train_corpus, dev_corpus);
    model = std::move(r.model);
    history = std::move(r.history);
  }
  for (const auto& e : history.epochs) {
    std::cout << "epoch " << e.epoch << " loss=" << e.train_loss;
    if (history.has_intent) std::cout << " dev_intent_acc=" << e.dev_intent_acc;
    if (history.has_eos) std::cout << " dev_eos_acc=" << e.dev_eos_acc;
    if (e.clipped) std::cout << " clipped=" << e.clipped;
    std::cout << '\n';
  }
  std::cout << "best epoch " << history.best_epoch << " dev=" << history.best_score << '\n';
  save_checkpoint(model, a.out);
  if (!a.history.empty()) write_text(a.history, history.csv());
  return 0;
}

struct EvalArgs {
  std::string checkpoint, eos_checkpoint, corpus, max_utts = "1,3,5,10", mode = "oracle", report;
  std::optional<double> threshold;
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
  echo_seed(a.seed);
  const std::vector<int> lengths = parse_int_list(a.max_utts);
  Model model = load_checkpoint(a.checkpoint);
  std::optional<Model> eos_model;
  if (!a.eos_checkpoint.empty()) eos_model = load_checkpoint(a.eos_checkpoint);
  Corpus corpus = load_corpus(a.corpus);
  const bool predicted = a.mode == "predicted";

  const bool intent_capable = model.params.intent.has_value();
  if (predicted && intent_capable && !model.params.eos && !eos_model)
    throw std::invalid_argument("--mode predicted needs an EOS source: " +
                                to_string(model.config.variant) +
                                " has no EOS branch; pass --eos-checkpoint");

  nlohmann::ordered_json doc;
  doc["model"] = to_string(model.config.variant);
  if (eos_model) doc["eos_model"] = to_string(eos_model->config.variant);
  doc["mode"] = a.mode;
  doc["seed"] = a.seed;
  doc["cells"] = nlohmann::ordered_json::array();
  std::string csv = report_csv_header();
  std::string label = to_string(model.config.variant);
  if (eos_model) label += "+" + to_string(eos_model->config.variant);

  for (int k : lengths) {
    StreamSet streams = stitch_streams(corpus, model.vocab, k, a.seed, &model.intent_labels);
    EvalReport r;
    if (!intent_capable) r = eval_eos(model, streams);
    else if (predicted)
      r = eval_predicted(model, eos_model ? &*eos_model : nullptr, streams, a.threshold);
    else r = eval_oracle(model, streams);

    std::cout << "max_utts=" << k;
    if (r.has_intent) std::cout << " intent_acc_oracle=" << r.intent_acc_oracle;
    if (r.has_intent && r.has_eos)
      std::cout << " intent_acc_predicted=" << r.intent_acc_predicted
                << " intent_acc_matched=" << r.intent_acc_matched;
    if (r.has_eos) std::cout << " eos_token_acc=" << r.eos_token_acc << " eos_f1=" << r.eos_f1;
    std::cout << '\n';

    doc["cells"].push_back({{"max_utts", k},
                            {"report", nlohmann::ordered_json::parse(report_json(r, model.intent_labels))}});
    csv += report_csv_row(label, k, r);
    if (!a.report.empty() && r.has_intent)
      write_text(a.report + ".hist_utt" + std::to_string(k) + ".csv",
                 histogram_csv(early_detection(r)));
  }
  if (!a.report.empty()) {
    write_text(a.report, doc.dump(2) + "\n");
    write_text(a.report + ".csv", csv);
  }
  return 0;
}

struct StreamArgs {
  std::string checkpoint, eos_checkpoint;
  std::optional<double> threshold;
  bool oracle = false;
};

int run_stream(const StreamArgs& a) {
  echo_seed(0);
  Model model = load_checkpoint(a.checkpoint);
  std::optional<Model> eos_model;
  if (!a.eos_checkpoint.empty()) eos_model = load_checkpoint(a.eos_checkpoint);
  Session session(model, a.oracle ? EosMode::Oracle : EosMode::Predicted,
                  eos_model ? &*eos_model : nullptr);
  if (a.threshold) session.set_threshold(*a.threshold);

  std::string line;
  while (std::getline(std::cin, line)) {
    std::istringstream words(line);
    std::string word;
    while (words >> word) {
      bool flagged = false;
      if (word.size() > 1 && word.back() == '|') {
        word.pop_back();
        flagged = true;
      }
      for (char& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      auto events = a.oracle ? session.push_word(word, flagged) : session.push_word(word);
      for (const auto& e : events) std::cout << format_event(e, model.intent_labels) << '\n';
    }
    std::cout.flush();
  }
  return 0;
}

struct GradArgs {
  std::string variant = "MULTITASK_FB";
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradArgs& a) {
  echo_seed(a.seed);
  ModelConfig cfg;
  cfg.variant = parse_variant(a.variant);
  cfg.vocab_size = 5;
  cfg.embedding_dim = 3;
  cfg.hidden_dim = 2;
  cfg.n_intents = 2;
  cfg.seed = a.seed;
  Parameters params = init_model(cfg);
  // Spread the weights so every gate is away from its linear regime.
  Rng rng(a.seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  params.for_each([&](const std::string&, Tensor& t) {
    for (double& v : t.values()) v = u(rng);
  });
  Corpus c = make_corpus({Utterance{{"a", "b"}, "x"}, Utterance{{"c", "d"}, "y"}});
  Vocabulary vocab({"a", "b", "c", "d"});
  std::vector<const Utterance*> both = {&c.utterances[0], &c.utterances[1]};
  StreamSample sample = encode_stream(both, vocab, c.intent_set);
  GradCheckResult r = gradient_check(params, cfg, sample, 1e-5);
  std::cout << "variant=" << a.variant << " values=" << r.checked
            << " max_rel_error=" << r.max_rel_error << " worst=" << r.worst_tensor << '\n';
  return r.max_rel_error < 1e-4 ? 0 : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental intent detection over unsegmented word streams"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic labeled corpus");
  gen_cmd->add_option("--intents", gen.intents, "Number of intents")->check(CLI::Range(2, 1000));
  gen_cmd->add_option("--utts", gen.utts, "Number of utterances")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--len-min", gen.len_min, "Minimum utterance length")->check(CLI::Range(2, 1000));
  gen_cmd->add_option("--len-max", gen.len_max, "Maximum utterance length")->check(CLI::Range(2, 1000));
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Output corpus (TSV)")->required();

  StitchArgs st;
  auto* stitch_cmd = app.add_subcommand("stitch", "Stitch utterances into unsegmented streams");
  stitch_cmd->add_option("--corpus", st.corpus, "Input corpus (TSV)")->required();
  stitch_cmd->add_option("--max-utts", st.max_utts, "Maximum utterances per stream")->check(CLI::PositiveNumber);
  stitch_cmd->add_option("--min-count", st.min_count, "Vocabulary frequency cutoff")->check(CLI::PositiveNumber);
  stitch_cmd->add_option("--seed", st.seed, "Random seed");
  stitch_cmd->add_option("--out", st.out, "Output stream dump")->required();

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train one model variant");
  train_cmd->add_option("--corpus", tr.corpus, "Training corpus (TSV)")->required();
  train_cmd->add_option("--dev", tr.dev, "Development corpus (TSV)")->required();
  train_cmd->add_option("--variant", tr.variant,
                        "OFFLINE | ONLINE | EOS_ONLY | MULTITASK | MULTITASK_FB");
  train_cmd->add_option("--config", tr.config, "key=value training config file");
  train_cmd->add_option("--out", tr.out, "Output checkpoint")->required();
  train_cmd->add_option("--history", tr.history, "Write per-epoch history CSV");
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Random seed (overrides config)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on stitched streams");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--eos-checkpoint", ev.eos_checkpoint, "Separate EOS_ONLY checkpoint");
  eval_cmd->add_option("--corpus", ev.corpus, "Test corpus (TSV)")->required();
  eval_cmd->add_option("--max-utts", ev.max_utts, "Comma-separated stream lengths");
  eval_cmd->add_option("--mode", ev.mode, "oracle | predicted")
      ->check(CLI::IsMember({"oracle", "predicted"}));
  eval_cmd->add_option("--report", ev.report, "Write JSON report (plus .csv and histograms)");
  eval_cmd->add_option("--threshold", ev.threshold, "EOS decision threshold")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--seed", ev.seed, "Stitching seed");

  StreamArgs sa;
  auto* stream_cmd = app.add_subcommand("stream", "Read tokens from stdin and print events");
  stream_cmd->add_option("--checkpoint", sa.checkpoint, "Model checkpoint")->required();
  stream_cmd->add_option("--eos-checkpoint", sa.eos_checkpoint, "Separate EOS_ONLY checkpoint");
  stream_cmd->add_option("--threshold", sa.threshold, "EOS decision threshold")->check(CLI::Range(0.0, 1.0));
  stream_cmd->add_flag("--oracle", sa.oracle, "Take boundaries from a trailing '|' on tokens");

  GradArgs ga;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check on a tiny model");
  grad_cmd->add_option("--variant", ga.variant, "Model variant");
  grad_cmd->add_option("--seed", ga.seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) {
      if (gen.len_max < gen.len_min) {
        std::cerr << "error: --len-max must be >= --len-min\n";
        return kExitUsage;
      }
      return run_gen(gen);
    }
    if (*stitch_cmd) return run_stitch(st);
    if (*train_cmd) {
      if (*train_seed_opt) tr.seed = train_seed;
      return run_train(tr);
    }
    if (*eval_cmd) return run_eval(ev);
    if (*stream_cmd) return run_stream(sa);
    if (*grad_cmd) return run_gradcheck(ga);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
