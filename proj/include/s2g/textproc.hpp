#pragma once

#include "s2g/errors.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace s2g {

/// Token vocabulary. Special tokens occupy the first ids in a fixed order;
/// the remaining ids follow first appearance in the building corpus.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;   // <s>
  static constexpr int kEos = 3;   // </s>
  static constexpr int kPara = 4;  // <p>
  static constexpr int kSent = 5;  // <e>
  static constexpr int kNumSpecials = 6;
  static const std::vector<std::string>& special_tokens();

  Vocab();
  /// Adds every token of every text (lowercased); returns *this.
  Vocab& add_corpus(const std::vector<std::string>& texts);
  int add(const std::string& token);

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Corpus-frequent (stopword-like) tokens; not part of the token file.
  void mark_frequent(int id);
  bool frequent(int id) const { return id >= 0 && id < size() && frequent_[static_cast<std::size_t>(id)]; }
  std::vector<int> frequent_ids() const;

  /// One token per line, line number = id.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);
  static Vocab from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> tokens_;
  std::vector<char> frequent_;
  std::map<std::string, int, std::less<>> ids_;
};

/// Splits text into surface words: runs of alphanumerics (non-ASCII bytes
/// count as alphanumeric) and single punctuation marks. Case is preserved.
std::vector<std::string> split_words(std::string_view text);
std::string lowercase(std::string_view s);

std::vector<int> tokenize(std::string_view text, const Vocab& vocab);

inline constexpr int kMaxLen = 512;
inline constexpr int kMaxSentences = 14;

/// Token ids plus the surface string of each position (specials spelled out).
struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::string> surface;
  std::size_t size() const { return ids.size(); }
};

/// sigma: token position -> sentence index; -1 stands for NONE.
struct SentenceMap {
  static constexpr int kNone = -1;
  struct Span {
    int start;
    int end;  // half-open
  };
  std::vector<Span> sentence_spans;
  std::vector<int> placeholder_positions;
  std::vector<int> token_to_sentence;

  int sentence_count() const { return static_cast<int>(sentence_spans.size()); }
  /// Throws ValidationError when the invariants do not hold for length n.
  void validate(int n) const;
};

/// sigma(position); std::nullopt for NONE. Throws std::out_of_range.
std::optional<int> sigma(const SentenceMap& map, int position);

/// `<s> question </s> paragraph </s>`, tail-truncated to max_len.
TokenSequence assemble_retriever_input(std::string_view question, std::string_view paragraph, const Vocab& vocab,
                                       int max_len = kMaxLen);

/// 1 where a token also occurs on the other side of the first `</s>`: a
/// question token found in the passage, or a passage token found in the
/// question. Specials and unknown tokens get 0.
std::vector<int> exact_match_flags(const std::vector<int>& ids);

struct ParagraphText {
  std::string title;
  std::vector<std::string> sentences;
};

/// Which (paragraph, local sentence) each mapped sentence came from.
struct SentenceOrigin {
  int paragraph;
  int sentence;
};

struct ReaderInput {
  TokenSequence seq;
  SentenceMap map;
  std::vector<SentenceOrigin> origins;  // one per mapped sentence
  int question_length = 0;              // question tokens (excluding specials)
  std::vector<char> frequent;           // per position, from Vocab::frequent
};

/// `<s> question </s> <e> s1 <e> s2 ... </s>`. Sentences past k_max keep
/// their tokens but get no placeholder and sigma = NONE. Truncation drops
/// trailing sentences whole.
ReaderInput assemble_reader_input(std::string_view question, const std::vector<ParagraphText>& paragraphs,
                                  const Vocab& vocab, int k_max = kMaxSentences, int max_len = kMaxLen);

}  // namespace s2g
