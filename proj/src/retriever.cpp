#include "s2g/retriever.hpp"

#include "s2g/losses.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <numeric>

namespace s2g {

void RetrieverConfig::validate() const {
  if (top_k_cascade < 2) throw ValidationError("retriever.top_k_cascade must be at least 2");
  if (!(score_answer >= score_relevant && score_relevant >= score_irrelevant))
    throw ValidationError("retriever scores must satisfy answer >= relevant >= irrelevant");
}

nlohmann::json RetrieverConfig::to_json() const {
  return {{"top_k_cascade", top_k_cascade}, {"score_answer", score_answer},   {"score_relevant", score_relevant},
          {"score_irrelevant", score_irrelevant}, {"use_refine", use_refine}, {"use_cascade", use_cascade},
          {"reformulation", reformulation}};
}

RetrieverConfig RetrieverConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("retriever config must be an object");
  RetrieverConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "top_k_cascade") c.top_k_cascade = value.get<int>();
      else if (key == "score_answer") c.score_answer = value.get<int>();
      else if (key == "score_relevant") c.score_relevant = value.get<int>();
      else if (key == "score_irrelevant") c.score_irrelevant = value.get<int>();
      else if (key == "use_refine") c.use_refine = value.get<bool>();
      else if (key == "use_cascade") c.use_cascade = value.get<bool>();
      else if (key == "reformulation") c.reformulation = value.get<bool>();
      else throw ValidationError("unknown retriever config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("retriever config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

std::string ParagraphCandidate::text() const {
  std::string out = title;
  for (const auto& s : sentences) {
    out += ' ';
    out += s;
  }
  return out;
}

std::vector<ParagraphCandidate> candidates_of(const MhrcExample& ex) {
  const auto labels = paragraph_labels(ex);
  std::vector<ParagraphCandidate> out;
  out.reserve(ex.context.size());
  for (std::size_t i = 0; i < ex.context.size(); ++i) {
    out.push_back({ex.context[i].title, ex.context[i].sentences, labels[i].has_answer, labels[i].is_relevant});
  }
  return out;
}

std::vector<int> assign_target_scores(const std::vector<ParagraphCandidate>& paragraphs,
                                      const RetrieverConfig& config) {
  std::vector<int> scores;
  scores.reserve(paragraphs.size());
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    const auto& p = paragraphs[i];
    if (!p.has_answer || !p.is_relevant)
      throw ValidationError("paragraph " + std::to_string(i) + " ('" + p.title + "') has no training labels");
    if (*p.has_answer && !*p.is_relevant)
      throw ValidationError("paragraph " + std::to_string(i) + " ('" + p.title + "') has an answer but is not relevant");
    scores.push_back(*p.has_answer ? config.score_answer
                                   : (*p.is_relevant ? config.score_relevant : config.score_irrelevant));
  }
  return scores;
}

Tensor target_distribution(const std::vector<int>& scores) {
  if (scores.empty()) throw ValidationError("target_distribution of an empty score list");
  Matrix row(1, static_cast<Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) row(0, static_cast<Index>(i)) = scores[i];
  NoGradGuard guard;
  return softmax(Tensor::constant(row));
}

Tensor retriever_loss(const Tensor& stage_logits, const std::vector<int>& target_scores) {
  if (stage_logits.rows() != 1 || stage_logits.cols() != static_cast<Index>(target_scores.size()))
    throw ShapeError("retriever_loss: logits " + shape_string(stage_logits.value()) + " against " +
                     std::to_string(target_scores.size()) + " scores");
  return kl_divergence_loss(softmax(stage_logits), target_distribution(target_scores));
}

std::vector<int> top_indices(const Matrix& row, int k) {
  std::vector<int> order(static_cast<std::size_t>(row.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return row(a) > row(b); });
  order.resize(static_cast<std::size_t>(std::min<Index>(k, row.size())));
  return order;
}

const Tensor& RetrievalState::final_logits() const {
  if (cascaded_logits) return *cascaded_logits;
  if (refined_logits) return *refined_logits;
  return initial_logits;
}

RetrieverParams::RetrieverParams(ParameterStore& store, const EncoderConfig& c, Rng& rng)
    : encoder(store, "encoder", c, rng),
      cross_paragraph(store, "retriever.cross", c.d_model, c.n_heads, c.d_ff, rng),
      cross_norm(store, "retriever.cross_norm", c.d_model),
      initial_head(store, "retriever.initial_head", c.d_model, 1, rng),
      refine_attention(store, "retriever.refine_bi", c.d_model, rng),
      refine_norm(store, "retriever.refine_norm", c.d_model),
      refine_head(store, "retriever.refine_head", c.d_model, 1, rng),
      cascade_head(store, "retriever.cascade_head", c.d_model, c.d_model, 1, rng) {
  if (c.match_features) refine_match = store.normal("retriever.refine_match", 2, 4 * c.d_model, rng);
  for (int l = 0; l < 2; ++l) {
    refine_layers.emplace_back(store, "retriever.refine" + std::to_string(l), c.d_model, c.n_heads, c.d_ff, rng);
  }
}

namespace {

void check_count(std::size_t n) {
  if (n < 2 || n > 10) throw ValidationError("retrieval needs 2 to 10 candidate paragraphs, got " + std::to_string(n));
}

// [n x 1] column of head outputs -> [1 x n] row of logits.
Tensor as_row(const Tensor& column) { return transpose(column); }

Tensor stage_loss(const Tensor& logits, const std::vector<int>& scores, const std::vector<ParagraphCandidate>& paras,
                  const std::vector<int>& members, const RetrieverConfig& config) {
  if (config.reformulation) return retriever_loss(logits, scores);
  Matrix flags(1, static_cast<Index>(members.size()));
  for (std::size_t i = 0; i < members.size(); ++i)
    flags(0, static_cast<Index>(i)) = *paras[static_cast<std::size_t>(members[i])].is_relevant ? 1.0 : 0.0;
  return cross_entropy_loss(logits, flags);
}

}  // namespace

RetrievalState score_paragraphs_initial(const std::string& question, const std::vector<ParagraphCandidate>& paragraphs,
                                        const RetrieverParams& params, const Vocab& vocab, const ForwardContext& ctx) {
  check_count(paragraphs.size());
  RetrievalState state;
  std::vector<Tensor> pooled;
  pooled.reserve(paragraphs.size());
  for (const auto& p : paragraphs) {
    const TokenSequence seq = assemble_retriever_input(question, p.text(), vocab, params.encoder.config().max_len);
    const auto mask = build_full_mask(static_cast<int>(seq.size()));
    EncoderOutput out = params.encoder.encode(seq, mask, ctx);
    state.paragraph_hidden.push_back(out.hidden);
    state.paragraph_ids.push_back(seq.ids);
    pooled.push_back(out.pooled);
  }
  state.summaries = vstack(pooled);
  const Tensor mixed = params.cross_norm(params.cross_paragraph.forward(state.summaries, nullptr, ctx));
  state.initial_logits = as_row(params.initial_head(mixed));
  return state;
}

namespace {

std::set<int> passage_words(const std::vector<int>& ids) {
  const auto eos = std::find(ids.begin(), ids.end(), Vocab::kEos);
  std::set<int> out;
  for (auto it = eos; it != ids.end(); ++it)
    if (*it >= Vocab::kNumSpecials) out.insert(*it);
  return out;
}

}  // namespace

std::vector<int> shared_rare_flags(const std::vector<int>& ids, const std::vector<int>& hop_ids,
                                   const std::vector<std::vector<int>>& all_ids) {
  const std::set<int> hop = passage_words(hop_ids);
  std::map<int, int> doc_freq;
  for (const auto& other : all_ids)
    for (int id : passage_words(other)) ++doc_freq[id];
  std::vector<int> flags(ids.size(), 0);
  const auto eos = std::find(ids.begin(), ids.end(), Vocab::kEos);
  for (auto it = eos; it != ids.end(); ++it) {
    const int id = *it;
    if (id < Vocab::kNumSpecials || !hop.count(id)) continue;
    const auto df = doc_freq.find(id);
    if (df != doc_freq.end() && df->second <= 2) flags[static_cast<std::size_t>(it - ids.begin())] = 1;
  }
  return flags;
}

Tensor refine_scores(RetrievalState& state, const RetrieverParams& params, const ForwardContext& ctx,
                     std::optional<int> forced_first_hop) {
  if (state.paragraph_hidden.empty()) throw std::logic_error("refine_scores: the initial stage has not run");
  const int n = static_cast<int>(state.paragraph_hidden.size());
  const int hop = forced_first_hop ? *forced_first_hop : top_indices(state.initial_logits.value(), 1).front();
  if (hop < 0 || hop >= n) throw std::out_of_range("refine_scores: first hop index out of range");
  state.first_hop_index = hop;

  const Tensor& query = state.paragraph_hidden[static_cast<std::size_t>(hop)];
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    // Max-pool the bi-attention features over tokens, then project once.
    Tensor features = bi_attention_features(state.paragraph_hidden[static_cast<std::size_t>(i)], query,
                                            params.refine_attention);
    if (params.refine_match.rows() > 0 && !state.paragraph_ids.empty()) {
      const auto flags = shared_rare_flags(state.paragraph_ids[static_cast<std::size_t>(i)],
                                           state.paragraph_ids[static_cast<std::size_t>(hop)], state.paragraph_ids);
      features = add(features, gather_rows(params.refine_match, flags));
    }
    const Tensor pooled = params.refine_attention.projection(reduce_max(features, Axis::Rows));
    rows.push_back(add(pooled, slice_rows(state.summaries, i, 1)));
  }
  const Tensor refined = run_stack(params.refine_layers, params.refine_norm, vstack(rows), nullptr, ctx);
  state.refined_logits = as_row(params.refine_head(refined));
  return *state.refined_logits;
}

CascadeInput assemble_cascade_input(const std::string& question, const std::vector<ParagraphCandidate>& paragraphs,
                                    const std::vector<int>& members, const Vocab& vocab, int max_len) {
  std::vector<std::vector<std::vector<std::string>>> words(members.size());
  std::size_t body = 0;
  for (std::size_t m = 0; m < members.size(); ++m) {
    const auto& p = paragraphs.at(static_cast<std::size_t>(members[m]));
    words[m].push_back(split_words(p.title));
    for (const auto& s : p.sentences) words[m].push_back(split_words(s));
    for (const auto& w : words[m]) body += w.size();
  }
  const auto q_words = split_words(question);
  const std::size_t fixed = q_words.size() + 3 + members.size();
  if (fixed > static_cast<std::size_t>(max_len))
    throw ValidationError("cascade input: question and markers alone exceed max_len");
  // Drop trailing sentences whole, last paragraph first.
  for (std::size_t m = members.size(); m-- > 0 && fixed + body > static_cast<std::size_t>(max_len);) {
    while (!words[m].empty() && fixed + body > static_cast<std::size_t>(max_len)) {
      body -= words[m].back().size();
      words[m].pop_back();
    }
  }

  CascadeInput in;
  auto push = [&](int id, const std::string& surface) {
    in.seq.ids.push_back(id);
    in.seq.surface.push_back(surface);
  };
  const auto& specials = Vocab::special_tokens();
  push(Vocab::kBos, specials[Vocab::kBos]);
  for (const auto& w : q_words) push(vocab.id(lowercase(w)), w);
  push(Vocab::kEos, specials[Vocab::kEos]);
  for (const auto& paragraph : words) {
    in.marker_positions.push_back(static_cast<int>(in.seq.size()));
    push(Vocab::kPara, specials[Vocab::kPara]);
    for (const auto& sentence : paragraph)
      for (const auto& w : sentence) push(vocab.id(lowercase(w)), w);
  }
  push(Vocab::kEos, specials[Vocab::kEos]);
  return in;
}

Tensor cascaded_rerank(RetrievalState& state, const std::string& question,
                       const std::vector<ParagraphCandidate>& paragraphs, const RetrieverParams& params,
                       const Vocab& vocab, const RetrieverConfig& config, const ForwardContext& ctx,
                       std::optional<std::vector<int>> members) {
  const Tensor& ranking = state.refined_logits ? *state.refined_logits : state.initial_logits;
  if (!members) members = top_indices(ranking.value(), config.top_k_cascade);
  if (members->size() < 2) throw ValidationError("cascaded_rerank needs at least 2 paragraphs");
  state.cascade_members = *members;
  const CascadeInput in = assemble_cascade_input(question, paragraphs, *members, vocab, params.encoder.config().max_len);
  const auto mask = build_full_mask(static_cast<int>(in.seq.size()));
  const EncoderOutput out = params.encoder.encode(in.seq, mask, ctx);
  state.cascaded_logits = as_row(params.cascade_head(gather_rows(out.hidden, in.marker_positions)));
  return *state.cascaded_logits;
}

std::pair<int, int> select_evidence_paragraphs(const RetrievalState& state) {
  const Matrix& logits = state.final_logits().value();
  if (logits.size() < 2) throw ValidationError("select_evidence_paragraphs needs at least 2 candidates");
  std::vector<int> original(static_cast<std::size_t>(logits.size()));
  if (state.cascaded_logits) {
    original = state.cascade_members;
  } else {
    std::iota(original.begin(), original.end(), 0);
  }
  // Order by score; ties go to the lower original index.
  std::vector<int> order(original.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (logits(a) != logits(b)) return logits(a) > logits(b);
    return original[static_cast<std::size_t>(a)] < original[static_cast<std::size_t>(b)];
  });
  return {original[static_cast<std::size_t>(order[0])], original[static_cast<std::size_t>(order[1])]};
}

RetrievalState retrieve(const std::string& question, const std::vector<ParagraphCandidate>& paragraphs,
                        const RetrieverParams& params, const Vocab& vocab, const RetrieverConfig& config) {
  NoGradGuard guard;
  const ForwardContext ctx;
  RetrievalState state = score_paragraphs_initial(question, paragraphs, params, vocab, ctx);
  if (config.use_refine) refine_scores(state, params, ctx);
  if (config.use_cascade) cascaded_rerank(state, question, paragraphs, params, vocab, config, ctx);
  state.selected = select_evidence_paragraphs(state);
  state.paragraph_hidden.clear();
  state.paragraph_ids.clear();
  return state;
}

Tensor retriever_training_loss(const std::string& question, const std::vector<ParagraphCandidate>& paragraphs,
                               const RetrieverParams& params, const Vocab& vocab, const RetrieverConfig& config,
                               const ForwardContext& ctx) {
  const std::vector<int> scores = assign_target_scores(paragraphs, config);
  std::vector<int> all(paragraphs.size());
  std::iota(all.begin(), all.end(), 0);

  RetrievalState state = score_paragraphs_initial(question, paragraphs, params, vocab, ctx);
  Tensor loss = stage_loss(state.initial_logits, scores, paragraphs, all, config);

  if (config.use_refine) {
    const Matrix score_row = Eigen::Map<const Eigen::Matrix<int, 1, Eigen::Dynamic>>(scores.data(),
                                                                                    static_cast<Index>(scores.size()))
                                 .cast<Scalar>();
    // The model's own first hop when it is gold, else the answer paragraph.
    const int predicted = top_indices(state.initial_logits.value(), 1).front();
    const bool predicted_gold = *paragraphs[static_cast<std::size_t>(predicted)].is_relevant;
    refine_scores(state, params, ctx, predicted_gold ? predicted : top_indices(score_row, 1).front());
    loss = add(loss, stage_loss(*state.refined_logits, scores, paragraphs, all, config));
  }

  if (config.use_cascade) {
    const Tensor& ranking = state.refined_logits ? *state.refined_logits : state.initial_logits;
    const int k = std::min<int>(config.top_k_cascade, static_cast<int>(paragraphs.size()));
    const std::vector<int> order = top_indices(ranking.value(), static_cast<int>(paragraphs.size()));
    // Every relevant paragraph enters the set; the best-ranked others fill it.
    std::vector<int> members;
    for (int i : order)
      if (*paragraphs[static_cast<std::size_t>(i)].is_relevant && static_cast<int>(members.size()) < k)
        members.push_back(i);
    for (int i : order)
      if (!*paragraphs[static_cast<std::size_t>(i)].is_relevant && static_cast<int>(members.size()) < k)
        members.push_back(i);
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      return std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b);
    });
    cascaded_rerank(state, question, paragraphs, params, vocab, config, ctx, members);
    std::vector<int> member_scores;
    for (int i : members) member_scores.push_back(scores[static_cast<std::size_t>(i)]);
    loss = add(loss, stage_loss(*state.cascaded_logits, member_scores, paragraphs, members, config));
  }
  return loss;
}

nlohmann::json retrieval_record(const std::string& id, const RetrievalState& state) {
  auto row = [](const Tensor& t) {
    std::vector<double> v(t.value().data(), t.value().data() + t.value().size());
    return nlohmann::json(v);
  };
  nlohmann::json j;
  j["id"] = id;
  j["initial_logits"] = row(state.initial_logits);
  j["refined_logits"] = state.refined_logits ? row(*state.refined_logits) : nlohmann::json(nullptr);
  j["cascaded_logits"] = state.cascaded_logits ? row(*state.cascaded_logits) : nlohmann::json(nullptr);
  j["first_hop_index"] = state.first_hop_index ? nlohmann::json(*state.first_hop_index) : nlohmann::json(nullptr);
  j["cascade_members"] = state.cascade_members;
  if (state.selected) j["selected"] = {state.selected->first, state.selected->second};
  return j;
}

}  // namespace s2g
