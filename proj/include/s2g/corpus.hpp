#pragma once

#include "s2g/errors.hpp"
#include "s2g/textproc.hpp"

#include "json.hpp"

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace s2g {

enum class AnswerType { Span = 0, Yes = 1, No = 2 };

AnswerType answer_type_of(const std::string& answer);

struct SupportingFact {
  std::string title;
  int sentence = 0;
  auto operator<=>(const SupportingFact&) const = default;
};

/// One distractor-setting question with its candidate paragraphs.
struct MhrcExample {
  std::string id;
  std::string question;
  std::string answer;
  std::vector<ParagraphText> context;
  std::vector<SupportingFact> supporting_facts;
  AnswerType answer_type = AnswerType::Span;
  std::string type;  // "bridge" / "comparison" when known

  /// Supporting-fact titles exist with valid sentence indices; span answers
  /// occur verbatim in a supporting sentence. Throws ValidationError.
  void validate() const;
  int paragraph_index(const std::string& title) const;
};

/// Training labels per candidate paragraph.
struct ParagraphLabels {
  bool has_answer = false;
  bool is_relevant = false;
};

/// Relevant = cited by a supporting fact. Has-answer = relevant and the span
/// answer occurs in it; for yes/no questions every relevant paragraph.
std::vector<ParagraphLabels> paragraph_labels(const MhrcExample& ex);

std::vector<MhrcExample> parse_distractor_dataset(const nlohmann::json& doc);
std::vector<MhrcExample> load_distractor_dataset(const std::string& path);
nlohmann::json to_json(const std::vector<MhrcExample>& examples);
void save_distractor_dataset(const std::string& path, const std::vector<MhrcExample>& examples);

struct SyntheticSpec {
  std::uint64_t seed = 1;
  int n_examples = 100;
  int n_paragraphs_per_example = 10;
  int entity_vocab_size = 240;
  double fraction_comparison = 0.2;
  /// 4-8 sentences per paragraph instead of 1-4; exercises the sentence cap.
  bool long_paragraphs = false;

  void validate() const;
};

/// Bridge questions "Where was the creator of W born ?" over a created-by
/// paragraph and a born-in paragraph, plus yes/no comparison questions.
/// The entity pool depends only on entity_vocab_size, so corpora generated
/// with different seeds share one vocabulary. Pure function of the spec.
std::vector<MhrcExample> generate_synthetic(const SyntheticSpec& spec);

}  // namespace s2g
