#include "s2g/textproc.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

namespace s2g {

const std::vector<std::string>& Vocab::special_tokens() {
  static const std::vector<std::string> specials = {"<pad>", "<unk>", "<s>", "</s>", "<p>", "<e>"};
  return specials;
}

Vocab::Vocab() {
  for (const auto& s : special_tokens()) add(s);
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  frequent_.push_back(0);
  ids_.emplace(token, id);
  return id;
}

Vocab& Vocab::add_corpus(const std::vector<std::string>& texts) {
  for (const auto& text : texts) {
    for (const auto& w : split_words(text)) add(lowercase(w));
  }
  return *this;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocab::mark_frequent(int id) {
  token(id);  // range check
  frequent_[static_cast<std::size_t>(id)] = 1;
}

std::vector<int> Vocab::frequent_ids() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (frequent_[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path);
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing vocabulary file " + path);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  const auto& specials = special_tokens();
  if (tokens.size() < specials.size()) throw ValidationError("vocabulary is missing the special tokens");
  for (std::size_t i = 0; i < specials.size(); ++i) {
    if (tokens[i] != specials[i])
      throw ValidationError("vocabulary line " + std::to_string(i) + " must be " + specials[i] + ", got " + tokens[i]);
  }
  Vocab v;
  for (std::size_t i = specials.size(); i < tokens.size(); ++i) {
    if (v.ids_.count(tokens[i])) throw ValidationError("duplicate vocabulary token: " + tokens[i]);
    v.add(tokens[i]);
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary file " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(tokens);
}

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      words.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      words.emplace_back(1, text[i]);
      ++i;
    }
  }
  return words;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<int> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(lowercase(w)));
  return ids;
}

namespace {

void push(TokenSequence& seq, int id, std::string surface) {
  seq.ids.push_back(id);
  seq.surface.push_back(std::move(surface));
}

void push_special(TokenSequence& seq, int id) { push(seq, id, Vocab::special_tokens()[static_cast<std::size_t>(id)]); }

void push_text(TokenSequence& seq, std::string_view text, const Vocab& vocab, std::size_t limit) {
  for (const auto& w : split_words(text)) {
    if (seq.size() >= limit) return;
    push(seq, vocab.id(lowercase(w)), w);
  }
}

TokenSequence question_prefix(std::string_view question, const Vocab& vocab, int max_len, int reserve) {
  TokenSequence seq;
  push_special(seq, Vocab::kBos);
  push_text(seq, question, vocab, static_cast<std::size_t>(-1));
  push_special(seq, Vocab::kEos);
  if (static_cast<int>(seq.size()) + reserve > max_len)
    throw ValidationError("question alone (" + std::to_string(seq.size() - 2) + " tokens) exceeds max_len " +
                          std::to_string(max_len));
  return seq;
}

}  // namespace

std::optional<int> sigma(const SentenceMap& map, int position) {
  if (position < 0 || position >= static_cast<int>(map.token_to_sentence.size()))
    throw std::out_of_range("sigma: position " + std::to_string(position) + " outside sequence of length " +
                            std::to_string(map.token_to_sentence.size()));
  const int s = map.token_to_sentence[static_cast<std::size_t>(position)];
  if (s == SentenceMap::kNone) return std::nullopt;
  return s;
}

void SentenceMap::validate(int n) const {
  if (static_cast<int>(token_to_sentence.size()) != n)
    throw ValidationError("sentence map covers " + std::to_string(token_to_sentence.size()) +
                          " positions, sequence has " + std::to_string(n));
  if (placeholder_positions.size() != sentence_spans.size())
    throw ValidationError("sentence map: placeholder count differs from sentence count");
  int prev_end = 0;
  for (std::size_t i = 0; i < sentence_spans.size(); ++i) {
    const auto& s = sentence_spans[i];
    if (s.start < prev_end || s.end <= s.start || s.end > n)
      throw ValidationError("sentence map: span " + std::to_string(i) + " is out of order or out of range");
    if (placeholder_positions[i] != s.start)
      throw ValidationError("sentence map: placeholder " + std::to_string(i) + " is not at its span start");
    prev_end = s.end;
  }
  for (int t = 0; t < n; ++t) {
    int expected = kNone;
    for (std::size_t i = 0; i < sentence_spans.size(); ++i) {
      if (t >= sentence_spans[i].start && t < sentence_spans[i].end) expected = static_cast<int>(i);
    }
    if (token_to_sentence[static_cast<std::size_t>(t)] != expected)
      throw ValidationError("sentence map: sigma(" + std::to_string(t) + ") disagrees with the spans");
  }
}

TokenSequence assemble_retriever_input(std::string_view question, std::string_view paragraph, const Vocab& vocab,
                                       int max_len) {
  TokenSequence seq = question_prefix(question, vocab, max_len, 1);
  push_text(seq, paragraph, vocab, static_cast<std::size_t>(max_len - 1));
  push_special(seq, Vocab::kEos);
  return seq;
}

ReaderInput assemble_reader_input(std::string_view question, const std::vector<ParagraphText>& paragraphs,
                                  const Vocab& vocab, int k_max, int max_len) {
  std::size_t total = 0;
  for (const auto& p : paragraphs) total += p.sentences.size();
  if (total == 0) throw ValidationError("reader input needs at least one sentence");

  ReaderInput in;
  in.seq = question_prefix(question, vocab, max_len, 1);
  in.question_length = static_cast<int>(in.seq.size()) - 2;
  in.map.token_to_sentence.assign(in.seq.size(), SentenceMap::kNone);

  bool full = false;
  int ordinal = 0;
  for (std::size_t pi = 0; pi < paragraphs.size() && !full; ++pi) {
    const auto& sentences = paragraphs[pi].sentences;
    for (std::size_t si = 0; si < sentences.size(); ++si, ++ordinal) {
      const auto words = split_words(sentences[si]);
      const bool mapped = ordinal < k_max;
      const std::size_t need = words.size() + (mapped ? 1 : 0);
      if (in.seq.size() + need + 1 > static_cast<std::size_t>(max_len)) {
        full = true;
        break;
      }
      const int start = static_cast<int>(in.seq.size());
      const int label = mapped ? in.map.sentence_count() : SentenceMap::kNone;
      if (mapped) push_special(in.seq, Vocab::kSent);
      for (const auto& w : words) push(in.seq, vocab.id(lowercase(w)), w);
      const int end = static_cast<int>(in.seq.size());
      in.map.token_to_sentence.resize(in.seq.size(), label);
      if (mapped) {
        in.map.sentence_spans.push_back({start, end});
        in.map.placeholder_positions.push_back(start);
        in.origins.push_back({static_cast<int>(pi), static_cast<int>(si)});
      }
    }
  }
  push_special(in.seq, Vocab::kEos);
  in.map.token_to_sentence.push_back(SentenceMap::kNone);
  in.frequent.resize(in.seq.ids.size());
  for (std::size_t t = 0; t < in.seq.ids.size(); ++t) in.frequent[t] = vocab.frequent(in.seq.ids[t]) ? 1 : 0;
  return in;
}

std::vector<int> exact_match_flags(const std::vector<int>& ids) {
  const auto eos = std::find(ids.begin(), ids.end(), Vocab::kEos);
  const std::set<int> question(ids.begin(), eos);
  const std::set<int> passage(eos, ids.end());
  std::vector<int> flags(ids.size(), 0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < Vocab::kNumSpecials) continue;
    const bool in_question = ids.begin() + static_cast<std::ptrdiff_t>(i) < eos;
    flags[i] = (in_question ? passage.count(id) : question.count(id)) > 0 ? 1 : 0;
  }
  return flags;
}

}  // namespace s2g
