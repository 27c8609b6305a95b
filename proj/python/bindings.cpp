#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "islu/corpus.hpp"
#include "islu/evaluation.hpp"
#include "islu/models.hpp"
#include "islu/neural.hpp"
#include "islu/streaming.hpp"
#include "islu/training.hpp"

namespace py = pybind11;
using namespace islu;

namespace {

Tensor to_matrix(const std::vector<Vec>& rows) {
  const int cols = rows.empty() ? 0 : static_cast<int>(rows.front().size());
  Tensor t = Tensor::matrix(static_cast<int>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != cols)
      throw std::invalid_argument("logits rows must all have the same length");
    std::copy(rows[r].begin(), rows[r].end(), t.row(static_cast<int>(r)).begin());
  }
  return t;
}

void check_lengths(std::size_t t, const std::vector<int>& ids, const std::vector<int>& flags) {
  if (ids.size() != t || flags.size() != t)
    throw std::invalid_argument("intent_ids and eos_flags must have one entry per position");
}

Model new_model(const ModelConfig& config, const Vocabulary& vocab,
                const std::vector<std::string>& labels) {
  Model m;
  m.config = config;
  m.config.vocab_size = vocab.size();
  m.config.n_intents = static_cast<int>(labels.size());
  m.params = init_model(m.config);
  m.vocab = vocab;
  m.intent_labels = labels;
  return m;
}

py::dict forward_dict(const Model& m, const std::vector<int>& tokens) {
  const ForwardResult fr = forward(m.params, m.config, tokens, false);
  py::dict out;
  if (m.params.intent) {
    std::vector<Vec> dist;
    for (std::size_t t = 0; t < tokens.size(); ++t) dist.push_back(fr.intent_dist(static_cast<int>(t)));
    out["intent_dist"] = dist;
  } else {
    out["intent_dist"] = py::none();
  }
  if (m.params.eos) {
    Vec eos;
    for (std::size_t t = 0; t < tokens.size(); ++t) eos.push_back(fr.eos_prob(static_cast<int>(t)));
    out["eos_prob"] = eos;
  } else {
    out["eos_prob"] = py::none();
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Incremental intent detection over unsegmented word streams";

  auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", data_error.ptr());

  // ---- corpus -------------------------------------------------------------
  py::class_<Utterance>(m, "Utterance")
      .def(py::init<std::vector<std::string>, std::string>(), py::arg("tokens"), py::arg("intent"))
      .def_readwrite("tokens", &Utterance::tokens)
      .def_readwrite("intent", &Utterance::intent)
      .def("__repr__", [](const Utterance& u) {
        std::string s = "Utterance(" + u.intent + ":";
        for (const auto& t : u.tokens) s += " " + t;
        return s + ")";
      });

  py::class_<Corpus>(m, "Corpus")
      .def_readonly("utterances", &Corpus::utterances)
      .def_readonly("intent_set", &Corpus::intent_set)
      .def("token_count", &Corpus::token_count)
      .def("__len__", [](const Corpus& c) { return c.utterances.size(); });
  m.def("make_corpus", &make_corpus, py::arg("utterances"));
  m.def("load_corpus", &load_corpus, py::arg("path"));
  m.def("save_corpus", &save_corpus, py::arg("corpus"), py::arg("path"));
  m.def(
      "gen_synthetic",
      [](int n_intents, int n_utts, int len_min, int len_max, std::uint64_t seed) {
        return gen_synthetic({n_intents, n_utts, len_min, len_max, seed});
      },
      py::arg("n_intents") = 8, py::arg("n_utts") = 100, py::arg("len_min") = 4,
      py::arg("len_max") = 10, py::arg("seed") = 0);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<std::vector<std::string>>(), py::arg("words"))
      .def("lookup", &Vocabulary::lookup)
      .def("word", &Vocabulary::word)
      .def("words", &Vocabulary::words)
      .def("__len__", &Vocabulary::size)
      .def("__eq__", [](const Vocabulary& a, const Vocabulary& b) { return a == b; });
  m.def("build_vocab", &build_vocab, py::arg("corpus"), py::arg("min_count") = 1);

  py::class_<Span>(m, "Span")
      .def_readonly("start", &Span::start)
      .def_readonly("end", &Span::end)
      .def("__repr__", [](const Span& s) {
        return "Span(" + std::to_string(s.start) + ", " + std::to_string(s.end) + ")";
      });
  py::class_<StreamSample>(m, "StreamSample")
      .def_readonly("token_ids", &StreamSample::token_ids)
      .def_readonly("eos_flags", &StreamSample::eos_flags)
      .def_readonly("intent_ids", &StreamSample::intent_ids)
      .def_readonly("utt_spans", &StreamSample::utt_spans)
      .def("__len__", &StreamSample::length);
  py::class_<StreamSet>(m, "StreamSet")
      .def_readonly("samples", &StreamSet::samples)
      .def_readonly("max_utts", &StreamSet::max_utts)
      .def_readonly("seed", &StreamSet::seed)
      .def_readonly("intent_labels", &StreamSet::intent_labels)
      .def("__len__", [](const StreamSet& s) { return s.samples.size(); });
  m.def(
      "stitch_streams",
      [](const Corpus& c, const Vocabulary& v, int max_utts, std::uint64_t seed,
         std::optional<std::vector<std::string>> labels) {
        return stitch_streams(c, v, max_utts, seed, labels ? &*labels : nullptr);
      },
      py::arg("corpus"), py::arg("vocab"), py::arg("max_utts"), py::arg("seed") = 0,
      py::arg("intent_labels") = py::none());
  m.def("dump_streams", &dump_streams, py::arg("streams"), py::arg("vocab"));

  // ---- losses -------------------------------------------------------------
  m.def(
      "masked_intent_loss",
      [](const std::vector<Vec>& logits, const std::vector<int>& ids, const std::vector<int>& flags) {
        check_lengths(logits.size(), ids, flags);
        const Tensor t = to_matrix(logits);
        return masked_intent_loss({&t, nullptr, ids, flags});
      },
      py::arg("intent_logits"), py::arg("intent_ids"), py::arg("eos_flags"));
  m.def(
      "eos_bce_loss",
      [](const Vec& eos_logits, const std::vector<int>& flags) {
        if (flags.size() != eos_logits.size())
          throw std::invalid_argument("eos_flags must have one entry per position");
        return eos_bce_loss(eos_logits, flags);
      },
      py::arg("eos_logits"), py::arg("eos_flags"));
  m.def(
      "multitask_loss",
      [](const std::vector<Vec>& logits, const Vec& eos_logits, const std::vector<int>& ids,
         const std::vector<int>& flags) {
        check_lengths(logits.size(), ids, flags);
        if (eos_logits.size() != logits.size())
          throw std::invalid_argument("eos_logits must have one entry per position");
        const Tensor t = to_matrix(logits);
        return multitask_loss({&t, &eos_logits, ids, flags});
      },
      py::arg("intent_logits"), py::arg("eos_logits"), py::arg("intent_ids"), py::arg("eos_flags"));

  // ---- models -------------------------------------------------------------
  py::enum_<Variant>(m, "Variant")
      .value("OFFLINE", Variant::Offline)
      .value("ONLINE", Variant::Online)
      .value("EOS_ONLY", Variant::EosOnly)
      .value("MULTITASK", Variant::Multitask)
      .value("MULTITASK_FB", Variant::MultitaskFeedback);
  m.def("parse_variant", &parse_variant, py::arg("name"));

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("variant", &ModelConfig::variant)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("embedding_dim", &ModelConfig::embedding_dim)
      .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
      .def_readwrite("n_intents", &ModelConfig::n_intents)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def_readwrite("eos_threshold", &ModelConfig::eos_threshold)
      .def_readwrite("seed", &ModelConfig::seed)
      .def("serialize", &ModelConfig::serialize)
      .def("__repr__", &ModelConfig::serialize);

  py::class_<Model>(m, "Model")
      .def(py::init(&new_model), py::arg("config"), py::arg("vocab"), py::arg("intent_labels"),
           "Fresh model initialized from config.seed; vocab_size and n_intents follow the "
           "vocabulary and labels.")
      .def_readonly("config", &Model::config)
      .def_readonly("vocab", &Model::vocab)
      .def_readonly("intent_labels", &Model::intent_labels)
      .def("num_parameters", [](const Model& mo) { return mo.params.num_values(); })
      .def("forward", &forward_dict, py::arg("tokens"),
           "Whole-sequence inference: {'intent_dist': T x C or None, 'eos_prob': T or None}.")
      .def("checkpoint_text", [](const Model& mo) { return checkpoint_text(mo); })
      .def("save", [](const Model& mo, const std::filesystem::path& p) { save_checkpoint(mo, p); },
           py::arg("path"));
  m.def("load_checkpoint", py::overload_cast<const std::filesystem::path&>(&load_checkpoint),
        py::arg("path"));
  m.def("parse_checkpoint", &parse_checkpoint, py::arg("text"));

  py::class_<StreamState>(m, "StreamState")
      .def_static("fresh", [](const Model& mo) { return StreamState::fresh(mo.config); }, py::arg("model"))
      .def_readonly("steps", &StreamState::steps);
  m.def(
      "step",
      [](const Model& mo, const StreamState& state, int token) {
        auto [next, out] = step(mo.params, mo.config, state, token);
        return py::make_tuple(next, out.intent_dist, out.eos_prob);
      },
      py::arg("model"), py::arg("state"), py::arg("token"),
      "One token of stateful inference: (new_state, intent_dist or None, eos_prob or None). "
      "The input state is not modified.");

  py::class_<GradCheckResult>(m, "GradCheckResult")
      .def_readonly("max_rel_error", &GradCheckResult::max_rel_error)
      .def_readonly("worst_tensor", &GradCheckResult::worst_tensor)
      .def_readonly("checked", &GradCheckResult::checked);
  m.def(
      "gradient_check",
      [](const Model& mo, const StreamSample& sample, double delta) {
        return gradient_check(mo.params, mo.config, sample, delta);
      },
      py::arg("model"), py::arg("sample"), py::arg("delta") = 1e-5);

  // ---- training -----------------------------------------------------------
  py::class_<TrainSpec>(m, "TrainSpec")
      .def(py::init<>())
      .def_readwrite("config", &TrainSpec::config)
      .def_readwrite("lr", &TrainSpec::lr)
      .def_readwrite("epochs", &TrainSpec::epochs)
      .def_readwrite("max_utts_train", &TrainSpec::max_utts_train)
      .def_readwrite("seed", &TrainSpec::seed)
      .def_readwrite("min_count", &TrainSpec::min_count)
      .def_readwrite("clip_norm", &TrainSpec::clip_norm)
      .def_readwrite("grid_hidden", &TrainSpec::grid_hidden)
      .def_readwrite("grid_dropout", &TrainSpec::grid_dropout);
  m.def("parse_train_spec", &parse_train_spec, py::arg("text"));

  py::class_<EpochRecord>(m, "EpochRecord")
      .def_readonly("epoch", &EpochRecord::epoch)
      .def_readonly("train_loss", &EpochRecord::train_loss)
      .def_readonly("dev_intent_acc", &EpochRecord::dev_intent_acc)
      .def_readonly("dev_eos_acc", &EpochRecord::dev_eos_acc)
      .def_readonly("clipped", &EpochRecord::clipped);
  py::class_<TrainHistory>(m, "TrainHistory")
      .def_readonly("epochs", &TrainHistory::epochs)
      .def_readonly("best_epoch", &TrainHistory::best_epoch)
      .def_readonly("best_score", &TrainHistory::best_score)
      .def("csv", &TrainHistory::csv);
  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("history", &TrainResult::history);
  m.def("train", &train, py::arg("spec"), py::arg("train_corpus"), py::arg("dev_corpus"),
        py::call_guard<py::gil_scoped_release>());

  // ---- streaming ----------------------------------------------------------
  py::enum_<EosMode>(m, "EosMode")
      .value("PREDICTED", EosMode::Predicted)
      .value("ORACLE", EosMode::Oracle);
  py::enum_<Event::Type>(m, "EventType")
      .value("HYPOTHESIS", Event::Type::Hypothesis)
      .value("EOS_DETECTED", Event::Type::EosDetected)
      .value("INTENT_COMMITTED", Event::Type::IntentCommitted);
  py::class_<Event>(m, "Event")
      .def_readonly("type", &Event::type)
      .def_readonly("position", &Event::position)
      .def_readonly("intent_dist", &Event::intent_dist)
      .def_readonly("eos_prob", &Event::eos_prob)
      .def_readonly("span", &Event::span)
      .def_readonly("intent", &Event::intent);
  m.def("format_event", &format_event, py::arg("event"), py::arg("labels"));

  // The session borrows its models; keep_alive ties their lifetime to it.
  py::class_<Session>(m, "Session")
      .def(py::init<const Model&, EosMode, const Model*>(), py::arg("intent_model"),
           py::arg("mode"), py::arg("eos_model") = nullptr, py::keep_alive<1, 2>(),
           py::keep_alive<1, 4>())
      .def("push", &Session::push, py::arg("token_id"), py::arg("oracle_eos") = py::none())
      .def("push_word", &Session::push_word, py::arg("word"), py::arg("oracle_eos") = py::none())
      .def("set_threshold", &Session::set_threshold, py::arg("threshold"))
      .def_property_readonly("position", &Session::position)
      .def_property_readonly("utterance_start", &Session::utterance_start)
      .def_property_readonly("threshold", &Session::threshold);

  // ---- evaluation ---------------------------------------------------------
  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("intent_acc_oracle", &EvalReport::intent_acc_oracle)
      .def_readonly("intent_acc_predicted", &EvalReport::intent_acc_predicted)
      .def_readonly("intent_acc_matched", &EvalReport::intent_acc_matched)
      .def_readonly("intent_acc_false_pos", &EvalReport::intent_acc_false_pos)
      .def_readonly("eos_token_acc", &EvalReport::eos_token_acc)
      .def_readonly("eos_precision", &EvalReport::eos_precision)
      .def_readonly("eos_recall", &EvalReport::eos_recall)
      .def_readonly("eos_f1", &EvalReport::eos_f1)
      .def_readonly("n_utterances", &EvalReport::n_utterances)
      .def_readonly("n_tokens", &EvalReport::n_tokens)
      .def("to_json", &report_json, py::arg("labels"));
  m.def("eval_oracle", &eval_oracle, py::arg("model"), py::arg("streams"));
  m.def(
      "eval_predicted",
      [](const Model& intent, const StreamSet& streams, const Model* eos,
         std::optional<double> threshold) { return eval_predicted(intent, eos, streams, threshold); },
      py::arg("intent_model"), py::arg("streams"), py::arg("eos_model") = nullptr,
      py::arg("threshold") = py::none());
  m.def("eval_eos", &eval_eos, py::arg("eos_model"), py::arg("streams"));

  py::class_<EarlyDetectionDist>(m, "EarlyDetectionDist")
      .def_readonly("weights", &EarlyDetectionDist::weights)
      .def_readonly("mean_position", &EarlyDetectionDist::mean_position)
      .def_readonly("mean_first_touch", &EarlyDetectionDist::mean_first_touch)
      .def_readonly("n_utterances", &EarlyDetectionDist::n_utterances);
  m.def("early_detection", py::overload_cast<const EvalReport&>(&early_detection), py::arg("report"));
  m.def("early_detection", py::overload_cast<const Model&, const StreamSet&>(&early_detection),
        py::arg("model"), py::arg("streams"));
  m.def("paired_early_positions", &paired_early_positions, py::arg("a"), py::arg("b"));
  m.def("permutation_test", &permutation_test, py::arg("a"), py::arg("b"),
        py::arg("n_perm") = 10000, py::arg("seed") = 0);
}
