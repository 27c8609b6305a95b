#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace islu {

/// Raised for malformed input files (corpora, configs, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Utterance {
  std::vector<std::string> tokens;
  std::string intent;
};

struct Corpus {
  std::vector<Utterance> utterances;
  // Distinct intents in order of first appearance.
  std::vector<std::string> intent_set;

  std::size_t token_count() const;
  // Index of `intent` in intent_set, or -1.
  int intent_index(const std::string& intent) const;
};

// Builds a Corpus from utterances, deriving intent_set. Validates every
// utterance (non-empty tokens, no whitespace inside tokens, non-empty intent).
Corpus make_corpus(std::vector<Utterance> utterances);

class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary();
  // Words in id order, excluding UNK (which is always id 0).
  explicit Vocabulary(const std::vector<std::string>& words);

  int lookup(const std::string& word) const;
  const std::string& word(int id) const { return words_.at(id); }
  int size() const { return static_cast<int>(words_.size()); }
  // All words in id order, UNK first.
  const std::vector<std::string>& words() const { return words_; }

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

struct Span {
  int start = 0;  // inclusive
  int end = 0;    // exclusive
  int length() const { return end - start; }
  bool operator==(const Span&) const = default;
};

struct StreamSample {
  std::vector<int> token_ids;
  std::vector<int> eos_flags;
  std::vector<int> intent_ids;
  std::vector<Span> utt_spans;

  int length() const { return static_cast<int>(token_ids.size()); }
  int num_utterances() const { return static_cast<int>(utt_spans.size()); }
};

struct StreamSet {
  std::vector<StreamSample> samples;
  int max_utts = 1;
  std::uint64_t seed = 0;
  // Intent labels indexed by StreamSample::intent_ids.
  std::vector<std::string> intent_labels;
};

/// Reads `intent<TAB>tok tok ...` lines. Tokens are lowercased.
Corpus load_corpus(const std::filesystem::path& path);
/// Writes the same format load_corpus reads.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Ids are assigned by descending count, ties broken lexicographically.
/// Words seen fewer than min_count times are left out and map to UNK.
Vocabulary build_vocab(const Corpus& corpus, int min_count = 1);

/// Encodes one utterance sequence as a single stream (no shuffling).
/// `intent_labels` fixes the intent id space; an intent missing from it is
/// a DataError.
StreamSample encode_stream(const std::vector<const Utterance*>& utterances,
                           const Vocabulary& vocab,
                           const std::vector<std::string>& intent_labels);

/// Shuffles the utterances with `seed` and concatenates them into samples of
/// 1..max_utts utterances (count drawn uniformly, clamped by what remains).
/// Every utterance is used exactly once. Intent ids index corpus.intent_set
/// unless `intent_labels` is given.
StreamSet stitch_streams(const Corpus& corpus, const Vocabulary& vocab, int max_utts,
                         std::uint64_t seed,
                         const std::vector<std::string>* intent_labels = nullptr);

/// One line per sample; utterance-final tokens carry a trailing '|'.
std::string dump_streams(const StreamSet& streams, const Vocabulary& vocab);

struct SyntheticOptions {
  int n_intents = 8;
  int n_utts = 100;
  int len_min = 4;
  int len_max = 10;
  std::uint64_t seed = 0;
};

/// Generates a keyword-separable corpus. Each intent owns three keywords
/// (`kw<i>a`, `kw<i>b`, `kw<i>c` for intent index i); the rest of every utterance is drawn from a shared pool
/// of 50 filler words. The pool is split by role: 10 openers that only start
/// utterances, 10 closers that only end them, 30 middle words. Every
/// utterance holds at least one keyword of its intent at an interior slot,
/// so the word stream carries lexical boundary cues.
Corpus gen_synthetic(const SyntheticOptions& options);

/// Keywords owned by intent index `intent` under gen_synthetic's naming.
std::vector<std::string> synthetic_keywords(int intent);
/// The shared 50-word filler pool.
const std::vector<std::string>& synthetic_filler_pool();

}  // namespace islu
