#pragma once

#include "s2g/masks.hpp"
#include "s2g/ops.hpp"
#include "s2g/optim.hpp"
#include "s2g/random.hpp"
#include "s2g/textproc.hpp"

#include <string>
#include <vector>

namespace s2g {

struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 128;
  int max_len = kMaxLen;
  double dropout_rate = 0.1;
  /// Adds a learned embedding of the exact-match flag of each token.
  bool match_features = true;

  void validate() const;
};

/// Training flag plus the dropout stream. Inference uses the default.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
  double dropout_rate = 0.0;

  Tensor drop(const Tensor& x) const { return training ? dropout(x, dropout_rate, rng) : x; }
};

/// x * W + b with W of shape [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

/// Two linear maps with a GELU between them.
struct Mlp {
  Linear hidden;
  Linear output;

  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, int in, int width, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  LayerNormParams() = default;
  LayerNormParams(ParameterStore& store, const std::string& name, int width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

struct AttentionParams {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int n_heads = 1;

  AttentionParams() = default;
  AttentionParams(ParameterStore& store, const std::string& name, int d_model, int n_heads, Rng& rng);
};

/// Scaled dot-product attention per head with the additive mask applied to
/// the logits; heads are concatenated and projected. When `weights_out` is
/// given it receives one [n x n] attention matrix per head.
Tensor multi_head_self_attention(const Tensor& hidden, const AttentionMask* mask, const AttentionParams& params,
                                 std::vector<Matrix>* weights_out = nullptr);

/// Pre-norm transformer block: x + Attn(LN(x)), then h + FFN(LN(h)).
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterStore& store, const std::string& name, int d_model, int n_heads, int d_ff, Rng& rng);

  Tensor forward(const Tensor& x, const AttentionMask* mask, const ForwardContext& ctx) const;

  const AttentionParams& attention() const { return attn_; }

 private:
  LayerNormParams norm_attn_;
  AttentionParams attn_;
  LayerNormParams norm_ff_;
  Linear ff_in_;
  Linear ff_out_;
};

/// Applies a stack of layers followed by a final layer norm.
Tensor run_stack(const std::vector<TransformerLayer>& layers, const LayerNormParams& final_norm, const Tensor& x,
                 const AttentionMask* mask, const ForwardContext& ctx);

struct EncoderOutput {
  Tensor hidden;  // [seq_len x d_model]
  Tensor pooled;  // [1 x d_model], the first-token representation
};

/// Token + learned absolute position embeddings followed by a transformer
/// stack that accepts an arbitrary additive mask.
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterStore& store, const std::string& name, const EncoderConfig& config, Rng& rng);

  EncoderOutput encode(const TokenSequence& seq, const AttentionMask& mask, const ForwardContext& ctx) const;
  EncoderOutput encode(const std::vector<int>& ids, const AttentionMask& mask, const ForwardContext& ctx) const;

  const EncoderConfig& config() const { return config_; }
  const std::vector<TransformerLayer>& layers() const { return layers_; }
  Tensor& position_embeddings() { return position_embedding_; }
  Tensor& token_embeddings() { return token_embedding_; }

 private:
  EncoderConfig config_;
  Tensor token_embedding_;
  Tensor position_embedding_;
  Tensor match_embedding_;
  std::vector<TransformerLayer> layers_;
  LayerNormParams final_norm_;
};

/// BiDAF-style bi-directional attention between a context [m x d] and a
/// query [n x d]. Output rows [c; c~; c*c~; c*q~] are projected to d.
struct BiAttentionParams {
  Tensor w_context;  // [1 x d]
  Tensor w_query;    // [1 x d]
  Tensor w_product;  // [1 x d]
  Linear projection;  // 4d -> d

  BiAttentionParams() = default;
  BiAttentionParams(ParameterStore& store, const std::string& name, int d, Rng& rng);
};

/// Similarity S(i,j) = w . [c_i; q_j; c_i * q_j].
Tensor bi_attention_similarity(const Tensor& context, const Tensor& query, const BiAttentionParams& params);
/// The unprojected rows [c; c~; c*c~; c*q~], [m x 4d].
Tensor bi_attention_features(const Tensor& context, const Tensor& query, const BiAttentionParams& params);
Tensor bi_attention(const Tensor& context, const Tensor& query, const BiAttentionParams& params);

}  // namespace s2g
