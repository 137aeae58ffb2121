#include "s2g/encoder.hpp"

#include <cmath>

namespace s2g {

void EncoderConfig::validate() const {
  if (vocab_size <= 0) throw ValidationError("encoder: vocab_size must be positive");
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
    throw ValidationError("encoder: d_model must be a positive multiple of n_heads");
  if (n_layers < 0 || d_ff <= 0) throw ValidationError("encoder: n_layers >= 0 and d_ff > 0 required");
  if (max_len <= 0) throw ValidationError("encoder: max_len must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ValidationError("encoder: dropout_rate must be in [0, 1)");
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng)
    : weight(store.normal(name + ".weight", in, out, rng)), bias(store.zeros(name + ".bias", 1, out)) {}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

Mlp::Mlp(ParameterStore& store, const std::string& name, int in, int width, int out, Rng& rng)
    : hidden(store, name + ".hidden", in, width, rng), output(store, name + ".output", width, out, rng) {}

Tensor Mlp::operator()(const Tensor& x) const { return output(gelu(hidden(x))); }

LayerNormParams::LayerNormParams(ParameterStore& store, const std::string& name, int width)
    : gain(store.ones(name + ".gain", 1, width)), bias(store.zeros(name + ".bias", 1, width)) {}

AttentionParams::AttentionParams(ParameterStore& store, const std::string& name, int d_model, int heads, Rng& rng)
    : query(store, name + ".query", d_model, d_model, rng),
      key(store, name + ".key", d_model, d_model, rng),
      value(store, name + ".value", d_model, d_model, rng),
      output(store, name + ".output", d_model, d_model, rng),
      n_heads(heads) {}

Tensor multi_head_self_attention(const Tensor& hidden, const AttentionMask* mask, const AttentionParams& params,
                                 std::vector<Matrix>* weights_out) {
  const Index n = hidden.rows();
  const Index d = hidden.cols();
  if (mask && mask->size() != n)
    throw ShapeError("attention mask of size " + std::to_string(mask->size()) + " for a sequence of length " +
                     std::to_string(n));
  if (d % params.n_heads != 0) throw ShapeError("hidden width not divisible by the head count");
  const Index head = d / params.n_heads;
  const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(head));

  Tensor q = scale(params.query(hidden), inv_sqrt);
  Tensor k = params.key(hidden);
  Tensor v = params.value(hidden);
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(params.n_heads));
  if (weights_out) weights_out->clear();
  for (int h = 0; h < params.n_heads; ++h) {
    Tensor qh = slice_cols(q, h * head, head);
    Tensor kh = slice_cols(k, h * head, head);
    Tensor vh = slice_cols(v, h * head, head);
    Tensor w = masked_softmax(matmul_nt(qh, kh), mask ? &mask->entries() : nullptr);
    if (weights_out) weights_out->push_back(w.value());
    heads.push_back(matmul(w, vh));
  }
  return params.output(heads.size() == 1 ? heads[0] : hstack(heads));
}

TransformerLayer::TransformerLayer(ParameterStore& store, const std::string& name, int d_model, int n_heads,
                                   int d_ff, Rng& rng)
    : norm_attn_(store, name + ".norm_attn", d_model),
      attn_(store, name + ".attn", d_model, n_heads, rng),
      norm_ff_(store, name + ".norm_ff", d_model),
      ff_in_(store, name + ".ff_in", d_model, d_ff, rng),
      ff_out_(store, name + ".ff_out", d_ff, d_model, rng) {}

Tensor TransformerLayer::forward(const Tensor& x, const AttentionMask* mask, const ForwardContext& ctx) const {
  Tensor h = add(x, ctx.drop(multi_head_self_attention(norm_attn_(x), mask, attn_)));
  return add(h, ctx.drop(ff_out_(gelu(ff_in_(norm_ff_(h))))));
}

Tensor run_stack(const std::vector<TransformerLayer>& layers, const LayerNormParams& final_norm, const Tensor& x,
                 const AttentionMask* mask, const ForwardContext& ctx) {
  Tensor h = x;
  for (const auto& layer : layers) h = layer.forward(h, mask, ctx);
  return final_norm(h);
}

Encoder::Encoder(ParameterStore& store, const std::string& name, const EncoderConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  token_embedding_ = store.normal(name + ".token_embedding", config.vocab_size, config.d_model, rng);
  position_embedding_ = store.normal(name + ".position_embedding", config.max_len, config.d_model, rng);
  if (config.match_features) match_embedding_ = store.normal(name + ".match_embedding", 2, config.d_model, rng);
  for (int l = 0; l < config.n_layers; ++l) {
    layers_.emplace_back(store, name + ".layer" + std::to_string(l), config.d_model, config.n_heads, config.d_ff, rng);
  }
  final_norm_ = LayerNormParams(store, name + ".final_norm", config.d_model);
}

EncoderOutput Encoder::encode(const TokenSequence& seq, const AttentionMask& mask, const ForwardContext& ctx) const {
  return encode(seq.ids, mask, ctx);
}

EncoderOutput Encoder::encode(const std::vector<int>& ids, const AttentionMask& mask,
                              const ForwardContext& ctx) const {
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw ShapeError("encode: empty sequence");
  if (n > config_.max_len)
    throw ShapeError("encode: sequence of length " + std::to_string(n) + " exceeds max_len " +
                     std::to_string(config_.max_len));
  if (mask.size() != n)
    throw ShapeError("encode: mask of size " + std::to_string(mask.size()) + " for sequence of length " +
                     std::to_string(n));
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) throw ShapeError("encode: token id " + std::to_string(id) + " outside vocabulary");
  }
  std::vector<int> positions(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) positions[static_cast<std::size_t>(i)] = i;
  Tensor x = add(gather_rows(token_embedding_, ids), gather_rows(position_embedding_, positions));
  if (config_.match_features) x = add(x, gather_rows(match_embedding_, exact_match_flags(ids)));
  x = ctx.drop(x);
  Tensor hidden = run_stack(layers_, final_norm_, x, &mask, ctx);
  return {hidden, slice_rows(hidden, 0, 1)};
}

BiAttentionParams::BiAttentionParams(ParameterStore& store, const std::string& name, int d, Rng& rng)
    : w_context(store.normal(name + ".w_context", 1, d, rng)),
      w_query(store.normal(name + ".w_query", 1, d, rng)),
      w_product(store.normal(name + ".w_product", 1, d, rng)),
      projection(store, name + ".projection", 4 * d, d, rng) {}

Tensor bi_attention_similarity(const Tensor& context, const Tensor& query, const BiAttentionParams& params) {
  if (context.rows() == 0 || query.rows() == 0) throw ShapeError("bi_attention: empty context or query");
  if (context.cols() != query.cols())
    throw ShapeError("bi_attention: width mismatch " + shape_string(context.value()) + " vs " +
                     shape_string(query.value()));
  Tensor by_context = matmul_nt(context, params.w_context);           // [m x 1]
  Tensor by_query = transpose(matmul_nt(query, params.w_query));      // [1 x n]
  Tensor product = matmul_nt(mul(context, params.w_product), query);  // [m x n]
  return add(add(product, by_context), by_query);
}

Tensor bi_attention_features(const Tensor& context, const Tensor& query, const BiAttentionParams& params) {
  Tensor sim = bi_attention_similarity(context, query, params);
  Tensor attended_query = matmul(softmax(sim), query);                        // [m x d]
  Tensor q2c_weights = softmax(transpose(reduce_max(sim, Axis::Cols)));        // [1 x m]
  Tensor attended_context = matmul(q2c_weights, context);                     // [1 x d]
  const Tensor parts[] = {context, attended_query, mul(context, attended_query), mul(context, attended_context)};
  return hstack(parts);
}

Tensor bi_attention(const Tensor& context, const Tensor& query, const BiAttentionParams& params) {
  return params.projection(bi_attention_features(context, query, params));
}

}  // namespace s2g
