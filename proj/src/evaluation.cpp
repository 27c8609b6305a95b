#include "islu/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace islu {

namespace {

int argmax(const Vec& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / den : 0.0; }

}  // namespace

StreamPredictions predict(const Model& model, const StreamSample& sample) {
  const ForwardResult fr = forward(model.params, model.config, sample.token_ids, false);
  StreamPredictions p;
  for (int t = 0; t < sample.length(); ++t) {
    if (!fr.intent_logits.empty()) p.intent_dist.push_back(fr.intent_dist(t));
    if (!fr.eos_logits.empty()) p.eos_prob.push_back(fr.eos_prob(t));
  }
  return p;
}

StreamPredictions predict(const Model& intent_model, const Model& eos_model,
                          const StreamSample& sample) {
  StreamPredictions p = predict(intent_model, sample);
  p.eos_prob = predict(eos_model, sample).eos_prob;
  return p;
}

std::optional<double> early_position(const std::vector<int>& arg, Span span, int gold,
                                     double* first_touch) {
  if (span.length() <= 0 || arg[span.end - 1] != gold) return std::nullopt;
  int t = span.end - 1;
  while (t > span.start && arg[t - 1] == gold) --t;
  const double len = span.length();
  if (first_touch) {
    int f = span.start;
    while (arg[f] != gold) ++f;
    *first_touch = (f - span.start + 1) / len;
  }
  return (t - span.start + 1) / len;
}

EvalReport evaluate_predictions(const StreamSet& streams,
                                const std::vector<StreamPredictions>& predictions,
                                double threshold) {
  if (predictions.size() != streams.samples.size())
    throw std::invalid_argument("evaluate_predictions: one prediction set per sample required");
  EvalReport r;
  r.has_intent = !streams.samples.empty() && !predictions.front().intent_dist.empty();
  r.has_eos = !streams.samples.empty() && !predictions.front().eos_prob.empty();

  long oracle_correct = 0, predicted_correct = 0, matched_correct = 0, fp_correct = 0;
  long token_correct = 0, true_pos = 0;

  for (std::size_t i = 0; i < streams.samples.size(); ++i) {
    const StreamSample& s = streams.samples[i];
    const StreamPredictions& p = predictions[i];
    const int t_len = s.length();
    if ((r.has_intent && static_cast<int>(p.intent_dist.size()) != t_len) ||
        (r.has_eos && static_cast<int>(p.eos_prob.size()) != t_len))
      throw std::invalid_argument("evaluate_predictions: prediction length mismatch");

    std::vector<int> arg;
    if (r.has_intent)
      for (const auto& d : p.intent_dist) arg.push_back(argmax(d));
    std::vector<int> fired(t_len, 0);
    if (r.has_eos)
      for (int t = 0; t < t_len; ++t) fired[t] = p.eos_prob[t] >= threshold ? 1 : 0;

    r.n_tokens += t_len;
    for (int t = 0; t < t_len; ++t) {
      r.n_gold_eos += s.eos_flags[t];
      if (!r.has_eos) continue;
      token_correct += fired[t] == s.eos_flags[t];
      if (!fired[t]) continue;
      ++r.n_predicted_eos;
      if (s.eos_flags[t]) {
        ++true_pos;
        if (r.has_intent) {
          ++r.n_matched;
          matched_correct += arg[t] == s.intent_ids[t];
        }
      } else if (r.has_intent) {
        ++r.n_false_pos;
        fp_correct += arg[t] == s.intent_ids[t];
      }
    }

    for (const Span& span : s.utt_spans) {
      UtteranceRecord rec;
      rec.sample = static_cast<int>(i);
      rec.span = span;
      rec.gold = s.intent_ids[span.start];
      ++r.n_utterances;
      if (r.has_intent) {
        rec.oracle_prediction = arg[span.end - 1];
        oracle_correct += rec.oracle_prediction == rec.gold;
        if (r.has_eos) {
          for (int t = span.start; t < span.end; ++t)
            if (fired[t]) rec.committed.push_back(arg[t]);
          predicted_correct += !rec.committed.empty() && rec.committed.back() == rec.gold;
        }
        double first = 0.0;
        rec.early_stable = early_position(arg, span, rec.gold, &first);
        if (rec.early_stable) rec.early_first = first;
      }
      r.records.push_back(std::move(rec));
    }
  }

  if (r.has_intent) {
    r.intent_acc_oracle = ratio(oracle_correct, r.n_utterances);
    if (r.has_eos) {
      r.intent_acc_predicted = ratio(predicted_correct, r.n_utterances);
      r.intent_acc_matched = ratio(matched_correct, r.n_matched);
      r.intent_acc_false_pos = ratio(fp_correct, r.n_false_pos);
    }
  }
  if (r.has_eos) {
    r.eos_token_acc = ratio(token_correct, r.n_tokens);
    r.eos_precision = ratio(true_pos, r.n_predicted_eos);
    r.eos_recall = ratio(true_pos, r.n_gold_eos);
    const double pr = r.eos_precision + r.eos_recall;
    r.eos_f1 = pr > 0 ? 2.0 * r.eos_precision * r.eos_recall / pr : 0.0;
  }
  return r;
}

EvalReport eval_oracle(const Model& model, const StreamSet& streams) {
  if (!model.params.intent) throw std::invalid_argument("eval_oracle: model has no intent branch");
  std::vector<StreamPredictions> preds;
  for (const auto& s : streams.samples) {
    StreamPredictions p = predict(model, s);
    p.eos_prob.clear();
    preds.push_back(std::move(p));
  }
  return evaluate_predictions(streams, preds);
}

EvalReport eval_predicted(const Model& intent_model, const Model* eos_model,
                          const StreamSet& streams, std::optional<double> threshold) {
  if (!intent_model.params.intent)
    throw std::invalid_argument("eval_predicted: intent model has no intent branch");
  const Model* eos_src = eos_model ? eos_model : &intent_model;
  if (!eos_src->params.eos)
    throw std::invalid_argument("eval_predicted: no EOS source (" +
                                to_string(intent_model.config.variant) +
                                " has no EOS branch and no EOS model was given)");
  if (eos_model && !(eos_model->vocab == intent_model.vocab))
    throw std::invalid_argument("eval_predicted: intent and EOS models use different vocabularies");
  std::vector<StreamPredictions> preds;
  for (const auto& s : streams.samples)
    preds.push_back(eos_model ? predict(intent_model, *eos_model, s) : predict(intent_model, s));
  return evaluate_predictions(streams, preds, threshold.value_or(eos_src->config.eos_threshold));
}

EvalReport eval_eos(const Model& eos_model, const StreamSet& streams) {
  if (!eos_model.params.eos) throw std::invalid_argument("eval_eos: model has no EOS branch");
  std::vector<StreamPredictions> preds;
  for (const auto& s : streams.samples) {
    StreamPredictions p = predict(eos_model, s);
    p.intent_dist.clear();
    preds.push_back(std::move(p));
  }
  return evaluate_predictions(streams, preds, eos_model.config.eos_threshold);
}

EarlyDetectionDist early_detection(const EvalReport& report) {
  EarlyDetectionDist d;
  d.weights.assign(EarlyDetectionDist::kBins, 0.0);
  std::map<int, long> per_class;
  for (const auto& rec : report.records)
    if (rec.early_stable) ++per_class[rec.gold];
  if (per_class.empty()) return d;
  const double k = static_cast<double>(per_class.size());
  for (const auto& rec : report.records) {
    if (!rec.early_stable) continue;
    const double w = 1.0 / (k * static_cast<double>(per_class[rec.gold]));
    const double pos = *rec.early_stable;
    const int bin = std::min(EarlyDetectionDist::kBins - 1,
                             static_cast<int>(std::floor(pos * EarlyDetectionDist::kBins)));
    d.weights[bin] += w;
    d.mean_position += w * pos;
    d.mean_first_touch += w * *rec.early_first;
    ++d.n_utterances;
  }
  return d;
}

EarlyDetectionDist early_detection(const Model& model, const StreamSet& streams) {
  return early_detection(eval_oracle(model, streams));
}

std::pair<std::vector<double>, std::vector<double>> paired_early_positions(const EvalReport& a,
                                                                         const EvalReport& b) {
  if (a.records.size() != b.records.size())
    throw std::invalid_argument("paired_early_positions: reports cover different streams");
  std::pair<std::vector<double>, std::vector<double>> out;
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const auto& ra = a.records[k];
    const auto& rb = b.records[k];
    if (!(ra.span == rb.span) || ra.sample != rb.sample)
      throw std::invalid_argument("paired_early_positions: reports cover different streams");
    if (ra.early_stable && rb.early_stable) {
      out.first.push_back(*ra.early_stable);
      out.second.push_back(*rb.early_stable);
    }
  }
  return out;
}

double permutation_test(const std::vector<double>& a, const std::vector<double>& b, int n_perm,
                        std::uint64_t seed) {
  if (a.size() != b.size()) throw std::invalid_argument("permutation_test: unpaired lengths");
  if (n_perm < 1) throw std::invalid_argument("permutation_test: n_perm must be >= 1");
  const std::size_t n = a.size();
  if (n == 0) return 1.0;
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  double sum = 0.0;
  for (double d : diff) sum += d;
  const double observed = std::abs(sum) / n;
  const double tol = 1e-12 * std::max(1.0, observed);

  Rng rng(seed);
  long extreme = 0;
  for (int p = 0; p < n_perm; ++p) {
    double s = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng();
      s += (bits & 1u) ? diff[i] : -diff[i];
      bits >>= 1;
    }
    if (std::abs(s) / n >= observed - tol) ++extreme;
  }
  return (1.0 + extreme) / (1.0 + n_perm);
}

std::string report_json(const EvalReport& r, const std::vector<std::string>& labels) {
  using nlohmann::ordered_json;
  auto label = [&](int id) -> ordered_json {
    if (id < 0) return nullptr;
    return id < static_cast<int>(labels.size()) ? ordered_json(labels[id]) : ordered_json(id);
  };
  ordered_json j;
  if (r.has_intent) j["intent_acc_oracle"] = r.intent_acc_oracle;
  if (r.has_intent && r.has_eos) {
    j["intent_acc_predicted"] = r.intent_acc_predicted;
    j["intent_acc_matched"] = r.intent_acc_matched;
    j["intent_acc_false_pos"] = r.intent_acc_false_pos;
  }
  if (r.has_eos) {
    j["eos_token_acc"] = r.eos_token_acc;
    j["eos_boundary_precision"] = r.eos_precision;
    j["eos_boundary_recall"] = r.eos_recall;
    j["eos_boundary_f1"] = r.eos_f1;
  }
  j["counts"] = {{"utterances", r.n_utterances}, {"tokens", r.n_tokens},
                 {"gold_eos", r.n_gold_eos},     {"predicted_eos", r.n_predicted_eos},
                 {"matched", r.n_matched},       {"false_pos", r.n_false_pos}};
  if (r.has_intent) {
    const EarlyDetectionDist d = early_detection(r);
    j["early_detection"] = {{"mean_position", d.mean_position},
                            {"mean_first_touch", d.mean_first_touch},
                            {"utterances", d.n_utterances},
                            {"histogram", d.weights}};
  }
  ordered_json recs = ordered_json::array();
  for (const auto& rec : r.records) {
    ordered_json o;
    o["sample"] = rec.sample;
    o["span"] = {rec.span.start, rec.span.end};
    o["gold"] = label(rec.gold);
    if (r.has_intent) o["oracle_prediction"] = label(rec.oracle_prediction);
    if (r.has_intent && r.has_eos) {
      ordered_json c = ordered_json::array();
      for (int id : rec.committed) c.push_back(label(id));
      o["committed"] = c;
    }
    if (rec.early_stable) {
      o["early_stable"] = *rec.early_stable;
      o["early_first"] = *rec.early_first;
    }
    recs.push_back(std::move(o));
  }
  j["utterances"] = std::move(recs);
  return j.dump(2) + "\n";
}

std::string report_csv_header() {
  return "model,max_utts,intent_acc_oracle,intent_acc_predicted,intent_acc_matched,"
         "intent_acc_false_pos,eos_token_acc,eos_precision,eos_recall,eos_f1,"
         "early_mean_position\n";
}

std::string report_csv_row(const std::string& model, int max_utts, const EvalReport& r) {
  std::ostringstream out;
  out.precision(10);
  auto field = [&](bool present, double v) {
    out << ',';
    if (present) out << v;
  };
  out << model << ',' << max_utts;
  field(r.has_intent, r.intent_acc_oracle);
  const bool both = r.has_intent && r.has_eos;
  field(both, r.intent_acc_predicted);
  field(both, r.intent_acc_matched);
  field(both, r.intent_acc_false_pos);
  field(r.has_eos, r.eos_token_acc);
  field(r.has_eos, r.eos_precision);
  field(r.has_eos, r.eos_recall);
  field(r.has_eos, r.eos_f1);
  field(r.has_intent, r.has_intent ? early_detection(r).mean_position : 0.0);
  out << '\n';
  return out.str();
}

std::string histogram_csv(const EarlyDetectionDist& dist) {
  std::ostringstream out;
  out.precision(10);
  out << "bin_low,bin_high,weight\n";
  const int bins = EarlyDetectionDist::kBins;
  for (int b = 0; b < bins; ++b)
    out << static_cast<double>(b) / bins << ',' << static_cast<double>(b + 1) / bins << ','
        << dist.weights[b] << '\n';
  return out.str();
}

}  // namespace islu
