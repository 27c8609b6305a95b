#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "islu/corpus.hpp"
#include "islu/neural.hpp"

namespace islu {

enum class Variant { Offline, Online, EosOnly, Multitask, MultitaskFeedback };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

inline bool has_intent_branch(Variant v) { return v != Variant::EosOnly; }
inline bool has_eos_branch(Variant v) {
  return v == Variant::EosOnly || v == Variant::Multitask || v == Variant::MultitaskFeedback;
}

struct ModelConfig {
  Variant variant = Variant::Online;
  int vocab_size = 1;
  int embedding_dim = 556;
  int hidden_dim = 64;
  int n_intents = 2;
  double dropout = 0.0;
  double eos_threshold = 0.5;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
  /// `key=value` pairs joined by commas.
  std::string serialize() const;
  static ModelConfig parse(const std::string& line);

  bool operator==(const ModelConfig&) const = default;
};

/// A recurrent branch with its time-distributed linear output layer.
struct Branch {
  LstmParams lstm;
  Tensor w_out;  // K x H
  Tensor b_out;  // K

  bool operator==(const Branch&) const = default;
};

struct Parameters {
  Tensor embedding;  // V x E
  std::optional<Branch> intent;
  std::optional<Branch> eos;

  /// Visits every tensor with a stable name, in checkpoint order.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  /// Same structure, all zeros.
  Parameters zeros_like() const;
  std::size_t num_values() const;

  bool operator==(const Parameters&) const = default;
};

Parameters init_model(const ModelConfig& config);

/// Per-session recurrent state. Fresh state is all zero.
struct StreamState {
  Vec intent_h, intent_c;
  Vec eos_h, eos_c;
  long steps = 0;

  static StreamState fresh(const ModelConfig& config);
};

struct StepOutput {
  std::optional<Vec> intent_dist;
  std::optional<double> eos_prob;
};

/// Intermediates recorded by forward() for backward().
struct Tape {
  std::vector<int> tokens;
  std::vector<Vec> embedded;  // post-dropout embedding per step
  std::vector<Vec> emb_mask;
  std::vector<LstmCache> intent_steps, eos_steps;
  std::vector<Vec> intent_out_mask, eos_out_mask;
  std::vector<Vec> intent_head_in, eos_head_in;  // masked hidden fed to the heads
};

struct ForwardResult {
  Tensor intent_logits;  // T x C, empty without an intent branch
  Vec eos_logits;        // T, empty without an EOS branch
  Tape tape;

  Vec intent_dist(int t) const { return softmax(intent_logits.row(t)); }
  double eos_prob(int t) const { return sigmoid(eos_logits[t]); }
};

/// Left-to-right pass from zero state. Dropout masks are drawn from `rng`
/// only when training. For MultitaskFeedback the EOS branch runs first at
/// every step and its probability is appended to the intent LSTM input;
/// a non-empty `frozen_feedback` replaces that probability position by position.
ForwardResult forward(const Parameters& params, const ModelConfig& config,
                      std::span<const int> token_ids, bool training, Rng* rng = nullptr,
                      std::span<const double> frozen_feedback = {});

/// Exact BPTT gradients given loss gradients w.r.t. the logits. The feedback
/// probability is treated as a constant input.
Parameters backward(const Parameters& params, const ModelConfig& config, const Tape& tape,
                    const Tensor& d_intent_logits, const Vec& d_eos_logits);

/// Loss the variant is trained with: masked intent CE, EOS BCE, or their sum.
LossGrad variant_loss(const ModelConfig& config, const ForwardResult& fr,
                      const StreamSample& sample);

struct Gradients {
  double loss = 0.0;
  bool degenerate = false;
  Parameters grads;
};

Gradients compute_gradients(const Parameters& params, const ModelConfig& config,
                            const StreamSample& sample, bool training, Rng* rng = nullptr);

/// Loss only (used by the finite-difference checker).
double compute_loss(const Parameters& params, const ModelConfig& config,
                    const StreamSample& sample, bool training, Rng* rng = nullptr,
                    std::span<const double> frozen_feedback = {});

/// One token in inference mode. The state is never reset.
std::pair<StreamState, StepOutput> step(const Parameters& params, const ModelConfig& config,
                                        const StreamState& state, int token_id);

/// Everything needed to run a trained model on text.
struct Model {
  ModelConfig config;
  Parameters params;
  Vocabulary vocab;
  std::vector<std::string> intent_labels;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path);
std::string checkpoint_text(const Model& model);
/// Throws CheckpointError on version mismatch, corrupt content, or shape mismatch.
Model load_checkpoint(const std::filesystem::path& path);
Model parse_checkpoint(const std::string& text);
/// Loads and additionally requires the stored variant to be `expected`.
Model load_checkpoint(const std::filesystem::path& path, Variant expected);

/// Result of a central finite-difference check over every parameter value.
/// For MultitaskFeedback the feedback column is held at its unperturbed
/// values, matching the constant-input treatment in backward().
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t checked = 0;
};

/// With `dropout_seed` the loss runs in training mode and every evaluation
/// draws the same dropout masks from a fresh generator seeded with it.
GradCheckResult gradient_check(const Parameters& params, const ModelConfig& config,
                               const StreamSample& sample, double delta = 1e-5,
                               std::optional<std::uint64_t> dropout_seed = std::nullopt);

}  // namespace islu
