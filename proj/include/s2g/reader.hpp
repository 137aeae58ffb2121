#pragma once

#include "s2g/corpus.hpp"
#include "s2g/encoder.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <set>
#include <string>
#include <vector>

namespace s2g {

struct ReaderConfig {
  int t = 2;
  double lambda1 = 2.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  int max_answer_len = 30;
  int k_max = kMaxSentences;
  double sentence_threshold = 0.5;
  /// Ablations: without the Sentence Transformer the sentence head reads
  /// the `<e>` vectors directly; without the Answer Transformer the span and
  /// type heads read the shared encoder output.
  bool use_sentence_transformer = true;
  bool use_answer_transformer = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ReaderConfig from_json(const nlohmann::json& j);
};

struct ReaderParams {
  Encoder encoder;
  std::vector<TransformerLayer> sentence_layers;
  LayerNormParams sentence_norm;
  Linear sentence_head;
  std::vector<TransformerLayer> answer_layers;
  LayerNormParams answer_norm;
  Mlp span_head;  // two outputs per token: start, end
  Mlp type_head;  // {span, yes, no}
  Tensor answer_match;  // [3 x d]; empty unless the encoder uses match features

  ReaderParams() = default;
  ReaderParams(ParameterStore& store, const EncoderConfig& encoder_config, const ReaderConfig& config, Rng& rng);
};

struct ReaderOutput {
  Tensor o_sent;   // [1 x k]
  Tensor o_start;  // [1 x n]
  Tensor o_end;    // [1 x n]
  Tensor o_type;   // [1 x 3]
  EvidenceSelection z;
};

/// Shared encoder under the SaSA mask.
Tensor encode_reader_input(const ReaderInput& input, const ReaderParams& params, const ForwardContext& ctx);

/// Sentence Transformer over the `<e>` vectors followed by the question
/// placeholder, then a linear head on the k sentence positions.
Tensor predict_sentences(const Tensor& hidden, const SentenceMap& map, const ReaderParams& params,
                         const ReaderConfig& config, const ForwardContext& ctx);

/// sigmoid(o_sent) > threshold.
EvidenceSelection select_sentences(const Tensor& o_sent, const ReaderConfig& config);

struct AnswerLogits {
  Tensor o_start;
  Tensor o_end;
  Tensor o_type;
};

/// Answer Transformer under the EGA mask built from z. Start and end logits
/// are -inf outside sentence spans and on placeholders.
AnswerLogits predict_answer(const Tensor& hidden, const SentenceMap& map, const EvidenceSelection& z,
                            const ReaderParams& params, const ReaderConfig& config, const ForwardContext& ctx,
                            std::span<const int> match_flags = {});

/// 1 for a rare non-question word of a selected sentence that also occurs
/// in a selected sentence of another paragraph; position 0 (`<s>`) gets 2
/// when any word is flagged. This is the cue for comparison questions.
std::vector<int> cross_evidence_flags(const ReaderInput& input, const EvidenceSelection& z);

/// Full forward pass. `gold_z` replaces the predicted selection in the EGA
/// mask (teacher forcing).
ReaderOutput run_reader(const ReaderInput& input, const ReaderParams& params, const ReaderConfig& config,
                        const ForwardContext& ctx, const EvidenceSelection* gold_z = nullptr);

struct ReaderLabels {
  std::vector<int> sentence_flags;  // one per mapped sentence
  AnswerType type = AnswerType::Span;
  std::optional<int> start;
  std::optional<int> end;
};

/// Gold labels for `input` built from `paragraphs` (the example's paragraphs
/// in reader order). Span answers are located by token match, preferring a
/// supporting sentence; std::nullopt when the span is not present.
std::optional<ReaderLabels> reader_labels(const MhrcExample& ex, const std::vector<ParagraphText>& paragraphs,
                                          const ReaderInput& input);

/// lambda1 * L_sent + lambda2 * L_span + lambda3 * L_type. L_span is zero
/// for yes/no answers. Throws ValidationError when a label is missing.
Tensor joint_loss(const ReaderOutput& output, const ReaderLabels& gold, const ReaderConfig& config);

struct Prediction {
  std::string answer_text;
  std::set<SupportingFact> supporting_facts;
};

struct SpanChoice {
  int start = -1;
  int end = -1;
  double score = 0.0;
};

/// Best (i, j) with i <= j, j - i < max_len, both in one mapped sentence and
/// both logits finite. std::nullopt when no such pair exists.
std::optional<SpanChoice> best_span(const Matrix& start_logits, const Matrix& end_logits, const SentenceMap& map,
                                    int max_len);

/// Joins surface tokens without a space before closing punctuation.
std::string detokenize(const std::vector<std::string>& words);

Prediction decode_prediction(const ReaderOutput& output, const ReaderInput& input,
                             const std::vector<ParagraphText>& paragraphs, const ReaderConfig& config);

}  // namespace s2g
