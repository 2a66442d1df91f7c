#pragma once

#include <string>
#include <vector>

#include "retgen/tensor.hpp"
#include "retgen/vocab.hpp"

namespace retgen::model {

using retgen::num::Tensor;

struct EncoderConfig {
    int layers = 2;
    int width = 64;
    int heads = 4;
    int ffn_width = 256;
    int max_seq_len = 128;
    double dropout = 0.0;
    void validate() const;
};

struct GeneratorConfig {
    int layers = 2;
    int width = 64;
    int heads = 4;
    int ffn_width = 256;
    int max_seq_len = 160;    // encoder side (assembled contexts)
    int max_target_len = 64;  // decoder side
    double dropout = 0.0;
    void validate() const;
};

template <typename T>
struct LinearParams {
    Tensor<T> weight, bias; // [in x out], [out]
};

template <typename T>
struct NormParams {
    Tensor<T> gain, bias;
};

template <typename T>
struct AttentionParams {
    LinearParams<T> query, key, value, out;
};

template <typename T>
struct EncoderLayerParams {
    NormParams<T> attn_norm;
    AttentionParams<T> attn;
    NormParams<T> ffn_norm;
    LinearParams<T> ffn_in, ffn_out;
};

template <typename T>
struct DecoderLayerParams {
    NormParams<T> self_norm;
    AttentionParams<T> self_attn;
    NormParams<T> cross_norm;
    AttentionParams<T> cross_attn;
    NormParams<T> ffn_norm;
    LinearParams<T> ffn_in, ffn_out;
};

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

// Multi-head attention from queries over keys/values, optionally causal.
template <typename T>
Tensor<T> attention(const Tensor<T>& queries, const Tensor<T>& keys_values,
                    const AttentionParams<T>& p, int heads, bool causal);

// random: gaussian token/position embeddings. lexical: identity token
// embeddings and zero position embeddings, so an untrained encoder scores
// pairs by exact token overlap, standing in for a pretrained lexical
// retriever; requires width == vocab size.
enum class EncoderInit { random, lexical };

// Pre-norm transformer encoder; pooled() mean-pools the final states into a
// fixed-width embedding.
template <typename T>
class TextEncoder {
  public:
    TextEncoder(const EncoderConfig& cfg, int vocab_size, Rng& rng,
                EncoderInit init = EncoderInit::random);

    Tensor<T> states(const std::vector<int>& ids) const;  // [n x width]
    Tensor<T> pooled(const std::vector<int>& ids) const;  // [width]

    void collect_params(const std::string& prefix, NamedParams<T>& out);
    void set_trainable(bool trainable);
    const EncoderConfig& config() const { return cfg_; }

  private:
    EncoderConfig cfg_;
    Tensor<T> tok_emb_, pos_emb_;
    std::vector<EncoderLayerParams<T>> layers_;
    NormParams<T> final_norm_;
    mutable Rng drop_rng_{0}; // consumed only while gradients are recorded
};

// Encoder-decoder generator with tied input/output embeddings.
template <typename T>
class Seq2Seq {
  public:
    Seq2Seq(const GeneratorConfig& cfg, int vocab_size, Rng& rng);

    Tensor<T> encode(const std::vector<int>& src_ids) const;  // [n x width]
    // Teacher-forced decoder logits over the vocabulary, one row per input
    // position.
    Tensor<T> decode_logits(const Tensor<T>& encoder_states, const std::vector<int>& dec_in) const;

    void collect_params(const std::string& prefix, NamedParams<T>& out);
    void set_trainable(bool trainable);
    const GeneratorConfig& config() const { return cfg_; }
    int vocab_size() const { return vocab_size_; }

  private:
    GeneratorConfig cfg_;
    int vocab_size_ = 0;
    Tensor<T> tok_emb_; // shared by encoder input, decoder input, output projection
    Tensor<T> enc_pos_emb_, dec_pos_emb_;
    std::vector<EncoderLayerParams<T>> enc_layers_;
    std::vector<DecoderLayerParams<T>> dec_layers_;
    NormParams<T> enc_final_norm_, dec_final_norm_;
    mutable Rng drop_rng_{0}; // consumed only while gradients are recorded
};

} // namespace retgen::model
