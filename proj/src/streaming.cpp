#include "islu/streaming.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace islu {

std::string to_string(Event::Type type) {
  switch (type) {
    case Event::Type::Hypothesis: return "HYPOTHESIS";
    case Event::Type::EosDetected: return "EOS_DETECTED";
    case Event::Type::IntentCommitted: return "INTENT_COMMITTED";
  }
  return "?";
}

Session::Session(const Model& intent_model, EosMode mode, const Model* eos_model)
    : intent_(&intent_model), eos_(eos_model), mode_(mode) {
  if (!intent_model.params.intent)
    throw std::invalid_argument(to_string(intent_model.config.variant) +
                                " has no intent branch to stream from");
  if (eos_model) {
    if (!eos_model->params.eos)
      throw std::invalid_argument("EOS model " + to_string(eos_model->config.variant) +
                                  " has no EOS branch");
    if (!(eos_model->vocab == intent_model.vocab))
      throw std::invalid_argument("vocabulary mismatch between intent and EOS models");
  }
  const Model* eos_src = eos_ ? eos_ : (intent_model.params.eos ? intent_ : nullptr);
  if (mode == EosMode::Predicted && !eos_src)
    throw std::invalid_argument("predicted-eos mode needs an EOS source; " +
                                to_string(intent_model.config.variant) +
                                " must be paired with an EOS_ONLY model");
  threshold_ = eos_src ? eos_src->config.eos_threshold : 0.5;
  intent_state_ = StreamState::fresh(intent_model.config);
  if (eos_) eos_state_ = StreamState::fresh(eos_->config);
}

void Session::set_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("threshold must be in (0,1)");
  threshold_ = threshold;
}

std::vector<Event> Session::push(int token_id, std::optional<bool> oracle_eos) {
  if (mode_ == EosMode::Oracle && !oracle_eos)
    throw std::invalid_argument("oracle-eos mode requires an EOS flag with every token");
  if (mode_ == EosMode::Predicted && oracle_eos)
    throw std::invalid_argument("EOS flags are only accepted in oracle-eos mode");

  auto [next_intent, out] = step(intent_->params, intent_->config, intent_state_, token_id);
  std::optional<double> eos_prob = out.eos_prob;
  StreamState next_eos;
  if (eos_) {
    auto [s, eos_out] = step(eos_->params, eos_->config, eos_state_, token_id);
    next_eos = std::move(s);
    eos_prob = eos_out.eos_prob;
  }
  intent_state_ = std::move(next_intent);
  if (eos_) eos_state_ = std::move(next_eos);

  std::vector<Event> events;
  Event hyp;
  hyp.type = Event::Type::Hypothesis;
  hyp.position = position_;
  hyp.intent_dist = *out.intent_dist;
  events.push_back(hyp);

  const bool boundary = mode_ == EosMode::Oracle ? *oracle_eos : *eos_prob >= threshold_;
  if (boundary) {
    Event eos;
    eos.type = Event::Type::EosDetected;
    eos.position = position_;
    eos.eos_prob = mode_ == EosMode::Oracle ? 1.0 : *eos_prob;
    events.push_back(eos);

    Event commit;
    commit.type = Event::Type::IntentCommitted;
    commit.position = position_;
    commit.intent_dist = hyp.intent_dist;
    commit.span = {utt_start_, position_ + 1};
    commit.intent = static_cast<int>(
        std::max_element(hyp.intent_dist.begin(), hyp.intent_dist.end()) - hyp.intent_dist.begin());
    events.push_back(std::move(commit));
    utt_start_ = position_ + 1;
  }
  ++position_;
  return events;
}

std::vector<Event> Session::push_word(const std::string& word, std::optional<bool> oracle_eos) {
  return push(intent_->vocab.lookup(word), oracle_eos);
}

Session open_session(const Model& intent_model, EosMode mode, const Model* eos_model) {
  return Session(intent_model, mode, eos_model);
}

std::vector<Event> run_composite(const Model& intent_model, const Model& eos_model,
                                 const std::vector<int>& tokens) {
  Session session(intent_model, EosMode::Predicted, &eos_model);
  std::vector<Event> all;
  for (int tok : tokens) {
    auto ev = session.push(tok);
    all.insert(all.end(), std::make_move_iterator(ev.begin()), std::make_move_iterator(ev.end()));
  }
  return all;
}

std::string format_event(const Event& event, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out.precision(4);
  out << std::fixed;
  out << event.position << '\t' << to_string(event.type) << '\t';
  if (event.type == Event::Type::EosDetected) {
    out << "eos:" << event.eos_prob;
    return out.str();
  }
  std::vector<int> idx(event.intent_dist.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return event.intent_dist[a] > event.intent_dist[b]; });
  const std::size_t k = std::min<std::size_t>(3, idx.size());
  for (std::size_t i = 0; i < k; ++i) {
    if (i) out << ' ';
    const int c = idx[i];
    out << (c < static_cast<int>(labels.size()) ? labels[c] : std::to_string(c)) << ':'
        << event.intent_dist[c];
  }
  return out.str();
}

}  // namespace islu
