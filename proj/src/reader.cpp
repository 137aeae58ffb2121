#include "s2g/reader.hpp"

#include "s2g/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace s2g {

void ReaderConfig::validate() const {
  if (t < 1) throw ValidationError("reader.t must be at least 1");
  if (!(lambda1 > 0 && lambda2 > 0 && lambda3 > 0)) throw ValidationError("reader lambdas must be positive");
  if (max_answer_len < 1) throw ValidationError("reader.max_answer_len must be at least 1");
  if (k_max < 1) throw ValidationError("reader.k_max must be at least 1");
  if (!(sentence_threshold > 0 && sentence_threshold < 1))
    throw ValidationError("reader.sentence_threshold must lie in (0, 1)");
}

nlohmann::json ReaderConfig::to_json() const {
  return {{"t", t},
          {"lambda1", lambda1},
          {"lambda2", lambda2},
          {"lambda3", lambda3},
          {"max_answer_len", max_answer_len},
          {"k_max", k_max},
          {"sentence_threshold", sentence_threshold},
          {"use_sentence_transformer", use_sentence_transformer},
          {"use_answer_transformer", use_answer_transformer}};
}

ReaderConfig ReaderConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("reader config must be an object");
  ReaderConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "t") c.t = value.get<int>();
      else if (key == "lambda1") c.lambda1 = value.get<double>();
      else if (key == "lambda2") c.lambda2 = value.get<double>();
      else if (key == "lambda3") c.lambda3 = value.get<double>();
      else if (key == "max_answer_len") c.max_answer_len = value.get<int>();
      else if (key == "k_max") c.k_max = value.get<int>();
      else if (key == "sentence_threshold") c.sentence_threshold = value.get<double>();
      else if (key == "use_sentence_transformer") c.use_sentence_transformer = value.get<bool>();
      else if (key == "use_answer_transformer") c.use_answer_transformer = value.get<bool>();
      else throw ValidationError("unknown reader config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("reader config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

ReaderParams::ReaderParams(ParameterStore& store, const EncoderConfig& ec, const ReaderConfig& config, Rng& rng)
    : encoder(store, "encoder", ec, rng),
      sentence_norm(store, "reader.sentence_norm", ec.d_model),
      sentence_head(store, "reader.sentence_head", ec.d_model, 1, rng),
      answer_norm(store, "reader.answer_norm", ec.d_model),
      span_head(store, "reader.span_head", ec.d_model, ec.d_model, 2, rng),
      type_head(store, "reader.type_head", ec.d_model, ec.d_model, 3, rng) {
  if (ec.match_features) answer_match = store.normal("reader.answer_match", 3, ec.d_model, rng, 1.0);
  for (int l = 0; l < config.t; ++l) {
    sentence_layers.emplace_back(store, "reader.sentence" + std::to_string(l), ec.d_model, ec.n_heads, ec.d_ff, rng);
    answer_layers.emplace_back(store, "reader.answer" + std::to_string(l), ec.d_model, ec.n_heads, ec.d_ff, rng);
  }
}

Tensor encode_reader_input(const ReaderInput& input, const ReaderParams& params, const ForwardContext& ctx) {
  const int n = static_cast<int>(input.seq.size());
  const auto mask = build_sasa_mask(input.map, n);
  return params.encoder.encode(input.seq, mask, ctx).hidden;
}

Tensor predict_sentences(const Tensor& hidden, const SentenceMap& map, const ReaderParams& params,
                         const ReaderConfig& config, const ForwardContext& ctx) {
  const int k = map.sentence_count();
  if (k == 0) throw ValidationError("predict_sentences: no mapped sentences");
  std::vector<int> rows = map.placeholder_positions;
  Tensor sentences;
  if (config.use_sentence_transformer) {
    rows.push_back(0);  // question placeholder goes last
    const Tensor mixed = run_stack(params.sentence_layers, params.sentence_norm, gather_rows(hidden, rows), nullptr, ctx);
    sentences = slice_rows(mixed, 0, k);
  } else {
    sentences = gather_rows(hidden, rows);
  }
  return transpose(params.sentence_head(sentences));
}

EvidenceSelection select_sentences(const Tensor& o_sent, const ReaderConfig& config) {
  // sigmoid(x) > p  <=>  x > logit(p)
  const double cut = std::log(config.sentence_threshold / (1.0 - config.sentence_threshold));
  EvidenceSelection z;
  z.z.reserve(static_cast<std::size_t>(o_sent.cols()));
  for (Index i = 0; i < o_sent.cols(); ++i) z.z.push_back(o_sent.value()(0, i) > cut ? 1 : 0);
  return z;
}

AnswerLogits predict_answer(const Tensor& hidden, const SentenceMap& map, const EvidenceSelection& z,
                            const ReaderParams& params, const ReaderConfig& config, const ForwardContext& ctx,
                            std::span<const int> match_flags) {
  const int n = static_cast<int>(hidden.rows());
  Tensor h = hidden;
  if (!match_flags.empty() && params.answer_match.rows() > 0) h = add(h, gather_rows(params.answer_match, match_flags));
  if (config.use_answer_transformer) {
    const auto mask = build_ega_mask(map, z, n);
    h = run_stack(params.answer_layers, params.answer_norm, h, &mask, ctx);
  }
  Matrix outside = Matrix::Constant(n, 1, -std::numeric_limits<Scalar>::infinity());
  for (const auto& span : map.sentence_spans)
    for (int i = span.start; i < span.end; ++i) outside(i, 0) = 0.0;
  for (int p : map.placeholder_positions) outside(p, 0) = -std::numeric_limits<Scalar>::infinity();
  const Tensor spans = params.span_head(h);
  AnswerLogits out;
  out.o_start = transpose(add_constant(slice_cols(spans, 0, 1), outside));
  out.o_end = transpose(add_constant(slice_cols(spans, 1, 1), outside));
  out.o_type = params.type_head(slice_rows(h, 0, 1));
  return out;
}

std::vector<int> cross_evidence_flags(const ReaderInput& input, const EvidenceSelection& z) {
  const auto& ids = input.seq.ids;
  const auto& map = input.map;
  std::vector<int> flags(ids.size(), 0);
  const auto eos = std::find(ids.begin(), ids.end(), Vocab::kEos);
  const std::set<int> question(ids.begin(), eos);
  // word id -> paragraphs whose selected sentences contain it
  std::map<int, std::set<int>> seen;
  for (int s = 0; s < map.sentence_count(); ++s) {
    if (z.z.at(static_cast<std::size_t>(s)) != 1) continue;
    const auto& span = map.sentence_spans[static_cast<std::size_t>(s)];
    for (int i = span.start; i < span.end; ++i) seen[ids[static_cast<std::size_t>(i)]].insert(input.origins[static_cast<std::size_t>(s)].paragraph);
  }
  for (int s = 0; s < map.sentence_count(); ++s) {
    if (z.z.at(static_cast<std::size_t>(s)) != 1) continue;
    const auto& span = map.sentence_spans[static_cast<std::size_t>(s)];
    for (int i = span.start; i < span.end; ++i) {
      const int id = ids[static_cast<std::size_t>(i)];
      const bool common = !input.frequent.empty() && input.frequent[static_cast<std::size_t>(i)];
      if (id >= Vocab::kNumSpecials && !common && !question.count(id) && seen[id].size() > 1)
        flags[static_cast<std::size_t>(i)] = 1;
    }
  }
  if (std::find(flags.begin(), flags.end(), 1) != flags.end()) flags[0] = 2;
  return flags;
}

ReaderOutput run_reader(const ReaderInput& input, const ReaderParams& params, const ReaderConfig& config,
                        const ForwardContext& ctx, const EvidenceSelection* gold_z) {
  const Tensor hidden = encode_reader_input(input, params, ctx);
  ReaderOutput out;
  out.o_sent = predict_sentences(hidden, input.map, params, config, ctx);
  out.z = select_sentences(out.o_sent, config);
  const EvidenceSelection& z = gold_z ? *gold_z : out.z;
  const auto flags = cross_evidence_flags(input, z);
  AnswerLogits answer = predict_answer(hidden, input.map, z, params, config, ctx, flags);
  out.o_start = answer.o_start;
  out.o_end = answer.o_end;
  out.o_type = answer.o_type;
  return out;
}

namespace {

std::vector<std::string> lowered_words(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& w : split_words(text)) out.push_back(lowercase(w));
  return out;
}

std::optional<std::pair<int, int>> find_in_sentence(const TokenSequence& seq, SentenceMap::Span span,
                                                    const std::vector<std::string>& needle) {
  const int first = span.start + 1;  // skip the placeholder
  const int len = static_cast<int>(needle.size());
  for (int i = first; i + len <= span.end; ++i) {
    bool match = true;
    for (int k = 0; k < len && match; ++k)
      match = lowercase(seq.surface[static_cast<std::size_t>(i + k)]) == needle[static_cast<std::size_t>(k)];
    if (match) return std::pair{i, i + len - 1};
  }
  return std::nullopt;
}

}  // namespace

std::optional<ReaderLabels> reader_labels(const MhrcExample& ex, const std::vector<ParagraphText>& paragraphs,
                                          const ReaderInput& input) {
  std::set<SupportingFact> gold(ex.supporting_facts.begin(), ex.supporting_facts.end());
  ReaderLabels labels;
  labels.type = ex.answer_type;
  for (const auto& origin : input.origins) {
    const auto& title = paragraphs[static_cast<std::size_t>(origin.paragraph)].title;
    labels.sentence_flags.push_back(gold.count({title, origin.sentence}) ? 1 : 0);
  }
  if (ex.answer_type != AnswerType::Span) return labels;

  const auto needle = lowered_words(ex.answer);
  if (needle.empty()) return std::nullopt;
  for (int pass = 0; pass < 2; ++pass) {
    for (int s = 0; s < input.map.sentence_count(); ++s) {
      if (pass == 0 && labels.sentence_flags[static_cast<std::size_t>(s)] == 0) continue;
      if (auto hit = find_in_sentence(input.seq, input.map.sentence_spans[static_cast<std::size_t>(s)], needle)) {
        labels.start = hit->first;
        labels.end = hit->second;
        return labels;
      }
    }
  }
  return std::nullopt;
}

Tensor joint_loss(const ReaderOutput& output, const ReaderLabels& gold, const ReaderConfig& config) {
  if (static_cast<Index>(gold.sentence_flags.size()) != output.o_sent.cols())
    throw ValidationError("joint_loss: " + std::to_string(gold.sentence_flags.size()) + " sentence labels for " +
                          std::to_string(output.o_sent.cols()) + " sentences");
  Matrix flags(1, static_cast<Index>(gold.sentence_flags.size()));
  for (std::size_t i = 0; i < gold.sentence_flags.size(); ++i) flags(0, static_cast<Index>(i)) = gold.sentence_flags[i];

  Tensor loss = scale(cross_entropy_loss(output.o_sent, flags), config.lambda1);
  if (gold.type == AnswerType::Span) {
    if (!gold.start || !gold.end) throw ValidationError("joint_loss: span answer without gold start/end");
    const Tensor span = add(cross_entropy_loss(output.o_start, *gold.start), cross_entropy_loss(output.o_end, *gold.end));
    loss = add(loss, scale(span, config.lambda2));
  }
  return add(loss, scale(cross_entropy_loss(output.o_type, static_cast<int>(gold.type)), config.lambda3));
}

std::optional<SpanChoice> best_span(const Matrix& start_logits, const Matrix& end_logits, const SentenceMap& map,
                                    int max_len) {
  std::optional<SpanChoice> best;
  for (const auto& span : map.sentence_spans) {
    for (int i = span.start; i < span.end; ++i) {
      if (!std::isfinite(start_logits(0, i))) continue;
      for (int j = i; j < span.end && j - i < max_len; ++j) {
        if (!std::isfinite(end_logits(0, j))) continue;
        const double score = start_logits(0, i) + end_logits(0, j);
        if (!best || score > best->score) best = SpanChoice{i, j, score};
      }
    }
  }
  return best;
}

std::string detokenize(const std::vector<std::string>& words) {
  static const std::string closing = ".,;:!?)]}%'";
  std::string out;
  for (const auto& w : words) {
    const bool attach = w.size() == 1 && closing.find(w[0]) != std::string::npos;
    if (!out.empty() && !attach && out.back() != '(') out += ' ';
    out += w;
  }
  return out;
}

Prediction decode_prediction(const ReaderOutput& output, const ReaderInput& input,
                             const std::vector<ParagraphText>& paragraphs, const ReaderConfig& config) {
  Prediction pred;
  for (std::size_t s = 0; s < output.z.z.size(); ++s) {
    if (!output.z.z[s]) continue;
    const auto& origin = input.origins.at(s);
    pred.supporting_facts.insert({paragraphs.at(static_cast<std::size_t>(origin.paragraph)).title, origin.sentence});
  }
  const Matrix& type = output.o_type.value();
  const bool yes_over_no = type(0, 1) >= type(0, 2);
  Index kind = 0;
  type.row(0).maxCoeff(&kind);
  if (kind != 0) {
    pred.answer_text = kind == 1 ? "yes" : "no";
    return pred;
  }
  const auto span = best_span(output.o_start.value(), output.o_end.value(), input.map, config.max_answer_len);
  if (!span) {
    pred.answer_text = yes_over_no ? "yes" : "no";
    return pred;
  }
  std::vector<std::string> words(input.seq.surface.begin() + span->start, input.seq.surface.begin() + span->end + 1);
  pred.answer_text = detokenize(words);
  return pred;
}

}  // namespace s2g
