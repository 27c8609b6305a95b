#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "islu/corpus.hpp"
#include "islu/models.hpp"

namespace islu {

struct TrainSpec {
  ModelConfig config;  // vocab_size / n_intents / seed are filled in by train()
  double lr = 0.001;
  int epochs = 20;
  // Utterances per training stream for the online regimes; OFFLINE always uses 1.
  int max_utts_train = 3;
  std::uint64_t seed = 0;
  int min_count = 1;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::vector<int> grid_hidden;
  std::vector<double> grid_dropout;

  void validate() const;
  /// Utterances per training stream after applying the variant's regime.
  int regime_max_utts() const;
};

/// Reads `key=value` lines ('#' starts a comment). Unknown keys are errors.
TrainSpec load_train_spec(const std::filesystem::path& path);
TrainSpec parse_train_spec(const std::string& text);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_intent_acc = 0.0;  // at oracle EOS; unset for EOS_ONLY
  double dev_eos_acc = 0.0;     // per-token; unset without an EOS branch
  long clipped = 0;             // samples whose gradient norm was clipped
  long degenerate = 0;          // samples without any EOS position
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_score = 0.0;
  bool has_intent = true;
  bool has_eos = false;

  std::string csv() const;
};

struct TrainResult {
  Model model;  // parameters from the best dev epoch
  TrainHistory history;
};

/// Trains one configuration with Adam at batch size 1. The best epoch is
/// chosen by dev intent accuracy at oracle EOS, or dev per-token EOS
/// accuracy for EOS_ONLY. Throws DataError for empty corpora or dev
/// intents unseen in training.
TrainResult train(const TrainSpec& spec, const Corpus& train_corpus, const Corpus& dev_corpus);

/// Dev score used for model selection.
double dev_score(const Model& model, const StreamSet& dev);

/// Streams train() evaluates against for model selection.
StreamSet dev_streams(const TrainSpec& spec, const Model& model, const Corpus& dev_corpus);

struct GridPoint {
  int hidden_dim = 0;
  double dropout = 0.0;
  TrainHistory history;
};

struct GridResult {
  Model best;
  TrainHistory best_history;
  std::vector<GridPoint> points;
};

/// Trains every (hidden_dim, dropout) pair. Ties go to the smaller hidden
/// size, then the smaller dropout.
GridResult grid_search(const TrainSpec& spec, const Corpus& train_corpus,
                       const Corpus& dev_corpus);

}  // namespace islu
