#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "islu/corpus.hpp"
#include "islu/models.hpp"

namespace islu {

/// Per-position model outputs for one stream.
struct StreamPredictions {
  std::vector<Vec> intent_dist;  // T rows of C probabilities; empty without an intent source
  Vec eos_prob;                  // T; empty without an EOS source
};

StreamPredictions predict(const Model& model, const StreamSample& sample);
/// Intent outputs from `intent_model`, EOS outputs from `eos_model`.
StreamPredictions predict(const Model& intent_model, const Model& eos_model,
                          const StreamSample& sample);

struct UtteranceRecord {
  int sample = 0;
  Span span;
  int gold = 0;
  int oracle_prediction = -1;
  std::vector<int> committed;  // predictions at predicted EOS inside the span, in order
  // Normalized early-detection positions in (0,1], set when the oracle
  // prediction is correct.
  std::optional<double> early_stable;
  std::optional<double> early_first;
};

struct EvalReport {
  bool has_intent = false;
  bool has_eos = false;

  double intent_acc_oracle = 0.0;
  double intent_acc_predicted = 0.0;
  double intent_acc_matched = 0.0;
  double intent_acc_false_pos = 0.0;
  double eos_token_acc = 0.0;
  double eos_precision = 0.0;
  double eos_recall = 0.0;
  double eos_f1 = 0.0;

  long n_utterances = 0;
  long n_tokens = 0;
  long n_gold_eos = 0;
  long n_predicted_eos = 0;
  long n_matched = 0;
  long n_false_pos = 0;

  std::vector<UtteranceRecord> records;
};

/// Scores predictions against the streams' gold labels. Predicted EOS is
/// `eos_prob >= threshold`.
EvalReport evaluate_predictions(const StreamSet& streams,
                                const std::vector<StreamPredictions>& predictions,
                                double threshold = 0.5);

/// Intent accuracy at oracle EOS (plus per-utterance records).
EvalReport eval_oracle(const Model& model, const StreamSet& streams);

/// All metrics. EOS comes from `eos_model` when given, otherwise from the
/// intent model's own EOS branch; std::invalid_argument if neither exists.
EvalReport eval_predicted(const Model& intent_model, const Model* eos_model,
                          const StreamSet& streams, std::optional<double> threshold = std::nullopt);

/// EOS metrics only, for models without an intent branch.
EvalReport eval_eos(const Model& eos_model, const StreamSet& streams);

struct EarlyDetectionDist {
  static constexpr int kBins = 20;
  std::vector<double> weights;  // kBins entries, sum to 1 when any utterance qualifies
  double mean_position = 0.0;   // class-balanced
  double mean_first_touch = 0.0;
  long n_utterances = 0;
};

/// Histogram of stable-correct positions weighted so every intent class
/// contributes equally.
EarlyDetectionDist early_detection(const EvalReport& report);
EarlyDetectionDist early_detection(const Model& model, const StreamSet& streams);

/// Stable-correct-prefix point of one utterance, or nullopt if the
/// prediction at the span end is wrong. `first_touch` receives the first
/// correct position.
std::optional<double> early_position(const std::vector<int>& argmax, Span span, int gold,
                                     double* first_touch = nullptr);

/// Positions of the utterances for which both reports define one. Both
/// reports must come from the same StreamSet.
std::pair<std::vector<double>, std::vector<double>> paired_early_positions(const EvalReport& a,
                                                                         const EvalReport& b);

/// Two-sided paired sign-flip permutation test on the mean difference.
/// Returns (1 + #{|perm stat| >= |observed|}) / (1 + n_perm).
double permutation_test(const std::vector<double>& a, const std::vector<double>& b,
                        int n_perm = 10000, std::uint64_t seed = 0);

std::string report_json(const EvalReport& report, const std::vector<std::string>& labels);
std::string report_csv_header();
std::string report_csv_row(const std::string& model, int max_utts, const EvalReport& report);
std::string histogram_csv(const EarlyDetectionDist& dist);

}  // namespace islu
