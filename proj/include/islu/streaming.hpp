#pragma once

#include <optional>
#include <string>
#include <vector>

#include "islu/corpus.hpp"
#include "islu/models.hpp"

namespace islu {

enum class EosMode { Predicted, Oracle };

struct Event {
  enum class Type { Hypothesis, EosDetected, IntentCommitted };

  Type type = Type::Hypothesis;
  int position = 0;
  Vec intent_dist;     // Hypothesis, IntentCommitted
  double eos_prob = 0; // EosDetected (1.0 for an oracle boundary)
  Span span;           // IntentCommitted: [utterance start, position + 1)
  int intent = -1;     // IntentCommitted: argmax of intent_dist

  bool operator==(const Event&) const = default;
};

std::string to_string(Event::Type type);

/// Token-at-a-time inference over an unsegmented stream. The recurrent
/// state is carried across detected boundaries and never reset. A session
/// borrows its models; they must outlive it.
class Session {
 public:
  /// `eos_model` pairs a separate EOS_ONLY detector with an intent model.
  /// Throws std::invalid_argument when the mode has no EOS source, the
  /// intent model has no intent branch, or the vocabularies differ.
  Session(const Model& intent_model, EosMode mode, const Model* eos_model = nullptr);

  /// Consumes one token. `oracle_eos` must be given exactly in oracle mode.
  std::vector<Event> push(int token_id, std::optional<bool> oracle_eos = std::nullopt);
  /// Looks the word up in the intent model's vocabulary first.
  std::vector<Event> push_word(const std::string& word,
                               std::optional<bool> oracle_eos = std::nullopt);

  int position() const { return position_; }
  int utterance_start() const { return utt_start_; }
  EosMode mode() const { return mode_; }
  double threshold() const { return threshold_; }
  void set_threshold(double threshold);
  const Model& intent_model() const { return *intent_; }

 private:
  const Model* intent_;
  const Model* eos_;
  EosMode mode_;
  double threshold_;
  StreamState intent_state_;
  StreamState eos_state_;
  int position_ = 0;
  int utt_start_ = 0;
};

Session open_session(const Model& intent_model, EosMode mode, const Model* eos_model = nullptr);

/// Runs an ONLINE/OFFLINE intent model and an EOS_ONLY detector in lockstep.
std::vector<Event> run_composite(const Model& intent_model, const Model& eos_model,
                                 const std::vector<int>& tokens);

/// `pos<TAB>event_type<TAB>payload`; payload is the top-3 `label:prob`
/// pairs or `eos:prob`.
std::string format_event(const Event& event, const std::vector<std::string>& labels);

}  // namespace islu
