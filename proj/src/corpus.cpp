#include "islu/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace islu {

namespace {

bool has_space(const std::string& s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char ch) { return std::isspace(ch) != 0; });
}

std::string lowercase(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.tokens.size();
  return n;
}

int Corpus::intent_index(const std::string& intent) const {
  auto it = std::find(intent_set.begin(), intent_set.end(), intent);
  return it == intent_set.end() ? -1 : static_cast<int>(it - intent_set.begin());
}

Corpus make_corpus(std::vector<Utterance> utterances) {
  Corpus corpus;
  for (const auto& u : utterances) {
    if (u.intent.empty() || has_space(u.intent))
      throw DataError("utterance has an empty or whitespace-containing intent");
    if (u.tokens.empty()) throw DataError("utterance has no tokens");
    for (const auto& t : u.tokens)
      if (t.empty() || has_space(t)) throw DataError("invalid token '" + t + "'");
    if (corpus.intent_index(u.intent) < 0) corpus.intent_set.push_back(u.intent);
  }
  corpus.utterances = std::move(utterances);
  return corpus;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  words_.reserve(words.size() + 1);
  words_.emplace_back(kUnkToken);
  ids_.emplace(kUnkToken, kUnk);
  for (const auto& w : words) {
    if (w == kUnkToken) continue;
    if (!ids_.emplace(w, static_cast<int>(words_.size())).second)
      throw DataError("duplicate vocabulary word '" + w + "'");
    words_.push_back(w);
  }
}

int Vocabulary::lookup(const std::string& word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnk : it->second;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  std::vector<Utterance> utterances;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": missing TAB");
    Utterance u;
    u.intent = line.substr(0, tab);
    if (u.intent.empty() || has_space(u.intent))
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad intent label");
    for (auto& tok : split_ws(line.substr(tab + 1))) u.tokens.push_back(lowercase(std::move(tok)));
    if (u.tokens.empty())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty tokens");
    utterances.push_back(std::move(u));
  }
  if (utterances.empty()) throw DataError("empty corpus: " + path.string());
  return make_corpus(std::move(utterances));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& u : corpus.utterances) {
    out << u.intent << '\t';
    for (std::size_t i = 0; i < u.tokens.size(); ++i) out << (i ? " " : "") << u.tokens[i];
    out << '\n';
  }
}

Vocabulary build_vocab(const Corpus& corpus, int min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::map<std::string, int> counts;
  for (const auto& u : corpus.utterances)
    for (const auto& t : u.tokens) ++counts[t];
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [w, n] : counts)
    if (n >= min_count && w != Vocabulary::kUnkToken) kept.emplace_back(w, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, n] : kept) words.push_back(w);
  return Vocabulary(words);
}

StreamSample encode_stream(const std::vector<const Utterance*>& utterances,
                           const Vocabulary& vocab,
                           const std::vector<std::string>& intent_labels) {
  StreamSample s;
  for (const Utterance* u : utterances) {
    auto it = std::find(intent_labels.begin(), intent_labels.end(), u->intent);
    if (it == intent_labels.end()) throw DataError("unknown intent '" + u->intent + "'");
    const int intent = static_cast<int>(it - intent_labels.begin());
    const int start = s.length();
    for (std::size_t i = 0; i < u->tokens.size(); ++i) {
      s.token_ids.push_back(vocab.lookup(u->tokens[i]));
      s.eos_flags.push_back(i + 1 == u->tokens.size() ? 1 : 0);
      s.intent_ids.push_back(intent);
    }
    s.utt_spans.push_back({start, s.length()});
  }
  return s;
}

StreamSet stitch_streams(const Corpus& corpus, const Vocabulary& vocab, int max_utts,
                         std::uint64_t seed,
                         const std::vector<std::string>* intent_labels) {
  if (max_utts < 1) throw std::invalid_argument("max_utts must be >= 1");
  if (corpus.utterances.empty()) throw DataError("empty corpus");
  StreamSet set;
  set.max_utts = max_utts;
  set.seed = seed;
  set.intent_labels = intent_labels ? *intent_labels : corpus.intent_set;

  std::vector<std::size_t> order(corpus.utterances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::uniform_int_distribution<int> count_dist(1, max_utts);
  std::size_t next = 0;
  while (next < order.size()) {
    const auto remaining = order.size() - next;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(count_dist(rng)), remaining);
    std::vector<const Utterance*> group;
    for (std::size_t k = 0; k < n; ++k) group.push_back(&corpus.utterances[order[next + k]]);
    next += n;
    set.samples.push_back(encode_stream(group, vocab, set.intent_labels));
  }
  return set;
}

std::string dump_streams(const StreamSet& streams, const Vocabulary& vocab) {
  std::string out;
  for (const auto& s : streams.samples) {
    for (int t = 0; t < s.length(); ++t) {
      if (t) out += ' ';
      out += vocab.word(s.token_ids[t]);
      if (s.eos_flags[t]) out += '|';
    }
    out += '\n';
  }
  return out;
}

std::vector<std::string> synthetic_keywords(int intent) {
  std::vector<std::string> kws;
  for (char suffix : {'a', 'b', 'c'}) kws.push_back("kw" + std::to_string(intent) + suffix);
  return kws;
}

const std::vector<std::string>& synthetic_filler_pool() {
  static const std::vector<std::string> pool = [] {
    std::vector<std::string> p;
    for (int i = 0; i < 10; ++i) p.push_back("open" + std::to_string(i));
    for (int i = 0; i < 30; ++i) p.push_back("word" + std::to_string(i));
    for (int i = 0; i < 10; ++i) p.push_back("close" + std::to_string(i));
    return p;
  }();
  return pool;
}

Corpus gen_synthetic(const SyntheticOptions& opt) {
  if (opt.n_intents < 2) throw std::invalid_argument("n_intents must be >= 2");
  if (opt.n_utts < 1) throw std::invalid_argument("n_utts must be >= 1");
  if (opt.len_min < 2 || opt.len_max < opt.len_min)
    throw std::invalid_argument("invalid length range");

  const auto& pool = synthetic_filler_pool();
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<int> intent_dist(0, opt.n_intents - 1);
  std::uniform_int_distribution<int> len_dist(opt.len_min, opt.len_max);
  std::uniform_int_distribution<int> kw_dist(0, 2);
  std::uniform_int_distribution<int> opener(0, 9), middle(10, 39), closer(40, 49);

  std::vector<Utterance> utts;
  utts.reserve(opt.n_utts);
  for (int n = 0; n < opt.n_utts; ++n) {
    const int intent = intent_dist(rng);
    const int len = len_dist(rng);
    const auto kws = synthetic_keywords(intent);
    Utterance u;
    u.intent = "intent" + std::to_string(intent);
    u.tokens.resize(len);
    int kw_slot = 0;
    if (len == 2) {
      u.tokens[1] = pool[closer(rng)];
    } else {
      u.tokens[0] = pool[opener(rng)];
      u.tokens[len - 1] = pool[closer(rng)];
      for (int i = 1; i < len - 1; ++i) u.tokens[i] = pool[middle(rng)];
      kw_slot = std::uniform_int_distribution<int>(1, len - 2)(rng);
    }
    u.tokens[kw_slot] = kws[kw_dist(rng)];
    utts.push_back(std::move(u));
  }
  return make_corpus(std::move(utts));
}

}  // namespace islu
