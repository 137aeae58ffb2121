#pragma once

#include "s2g/corpus.hpp"
#include "s2g/encoder.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace s2g {

struct RetrieverConfig {
  int top_k_cascade = 3;
  int score_answer = 2;
  int score_relevant = 1;
  int score_irrelevant = 0;
  bool use_refine = true;
  bool use_cascade = true;
  /// false trains every stage with per-paragraph binary cross entropy on the
  /// relevance flags instead of the KL-to-softmax(score) objective.
  bool reformulation = true;

  void validate() const;
  nlohmann::json to_json() const;
  static RetrieverConfig from_json(const nlohmann::json& j);
};

struct ParagraphCandidate {
  std::string title;
  std::vector<std::string> sentences;
  std::optional<bool> has_answer;   // training only
  std::optional<bool> is_relevant;  // training only

  std::string text() const;
};

/// Candidates with labels from `paragraph_labels`.
std::vector<ParagraphCandidate> candidates_of(const MhrcExample& ex);

/// has_answer -> score_answer, relevant -> score_relevant, else
/// score_irrelevant. Throws ValidationError when labels are missing or
/// has_answer holds without is_relevant.
std::vector<int> assign_target_scores(const std::vector<ParagraphCandidate>& paragraphs,
                                      const RetrieverConfig& config = {});

/// softmax(scores) as a constant [1 x n] row.
Tensor target_distribution(const std::vector<int>& scores);

/// KL(softmax(logits) || target_distribution(scores)).
Tensor retriever_loss(const Tensor& stage_logits, const std::vector<int>& target_scores);

/// Indices of the k largest entries of a row, descending; ties go to the
/// lower index.
std::vector<int> top_indices(const Matrix& row, int k);

struct RetrievalState {
  Tensor initial_logits;  // [1 x n_para]
  std::optional<Tensor> refined_logits;
  std::optional<Tensor> cascaded_logits;  // [1 x top_k]
  std::optional<int> first_hop_index;
  std::vector<int> cascade_members;  // original indices, in cascade order
  std::optional<std::pair<int, int>> selected;

  // Per-paragraph encodings reused by the refinement hop.
  std::vector<Tensor> paragraph_hidden;
  std::vector<std::vector<int>> paragraph_ids;
  Tensor summaries;  // [n_para x d]

  /// Logits of the last stage that ran.
  const Tensor& final_logits() const;
};

/// Shared encoder plus the heads of the three stages.
struct RetrieverParams {
  Encoder encoder;
  TransformerLayer cross_paragraph;
  LayerNormParams cross_norm;
  Linear initial_head;
  BiAttentionParams refine_attention;
  std::vector<TransformerLayer> refine_layers;
  LayerNormParams refine_norm;
  Linear refine_head;
  Mlp cascade_head;
  Tensor refine_match;  // [2 x 4d]; empty unless the encoder uses match features

  RetrieverParams() = default;
  RetrieverParams(ParameterStore& store, const EncoderConfig& encoder_config, Rng& rng);
};

/// Encodes each (question, paragraph) pair, mixes the pooled summaries with
/// one full-mask attention layer across paragraphs and scores each one.
RetrievalState score_paragraphs_initial(const std::string& question, const std::vector<ParagraphCandidate>& paragraphs,
                                        const RetrieverParams& params, const Vocab& vocab, const ForwardContext& ctx);

/// Per-token flags of `ids` (passage part, after the first `</s>`): 1 when the
/// token also occurs in the passage of `hop_ids` and in at most two of the
/// candidate passages. Rare shared words are what links the two hops.
std::vector<int> shared_rare_flags(const std::vector<int>& ids, const std::vector<int>& hop_ids,
                                   const std::vector<std::vector<int>>& all_ids);

/// Second hop conditioned on the first-hop paragraph: argmax of the initial
/// stage, or `forced_first_hop` under teacher forcing.
Tensor refine_scores(RetrievalState& state, const RetrieverParams& params, const ForwardContext& ctx,
                     std::optional<int> forced_first_hop = std::nullopt);

/// Token sequence `<s> q </s> <p> Pa <p> Pb ... </s>` together with the `<p>`
/// positions. Trailing sentences are dropped whole to fit max_len; a `<p>`
/// is never dropped.
struct CascadeInput {
  TokenSequence seq;
  std::vector<int> marker_positions;
};
CascadeInput assemble_cascade_input(const std::string& question, const std::vector<ParagraphCandidate>& paragraphs,
                                    const std::vector<int>& members, const Vocab& vocab, int max_len = kMaxLen);

/// Re-ranks `members` (defaults to the top-k of the latest stage,
/// descending) with one joint encoding.
Tensor cascaded_rerank(RetrievalState& state, const std::string& question,
                       const std::vector<ParagraphCandidate>& paragraphs, const RetrieverParams& params,
                       const Vocab& vocab, const RetrieverConfig& config, const ForwardContext& ctx,
                       std::optional<std::vector<int>> members = std::nullopt);

/// Top-2 by the final stage, descending, as original paragraph indices.
std::pair<int, int> select_evidence_paragraphs(const RetrievalState& state);

/// Runs every enabled stage at inference and fills `selected`.
RetrievalState retrieve(const std::string& question, const std::vector<ParagraphCandidate>& paragraphs,
                        const RetrieverParams& params, const Vocab& vocab, const RetrieverConfig& config);

/// Summed stage losses. The first hop is the initial-stage argmax when that
/// paragraph is gold and the answer paragraph otherwise; the cascade set
/// always holds every relevant paragraph.
Tensor retriever_training_loss(const std::string& question, const std::vector<ParagraphCandidate>& paragraphs,
                               const RetrieverParams& params, const Vocab& vocab, const RetrieverConfig& config,
                               const ForwardContext& ctx);

/// One line of the retrieval dump.
nlohmann::json retrieval_record(const std::string& id, const RetrievalState& state);

}  // namespace s2g
