#include "retgen/transformer.hpp"

#include <cmath>

namespace retgen::model {

using namespace retgen::num;

void EncoderConfig::validate() const {
    if (layers <= 0 || width <= 0 || heads <= 0 || ffn_width <= 0 || max_seq_len <= 0)
        throw ContractError("encoder config fields must be positive");
    if (width % heads != 0) throw ContractError("encoder width must be divisible by head count");
    if (dropout < 0.0 || dropout >= 1.0) throw ContractError("encoder dropout must be in [0, 1)");
}

void GeneratorConfig::validate() const {
    if (layers <= 0 || width <= 0 || heads <= 0 || ffn_width <= 0 || max_seq_len <= 0 ||
        max_target_len <= 0)
        throw ContractError("generator config fields must be positive");
    if (width % heads != 0) throw ContractError("generator width must be divisible by head count");
    if (dropout < 0.0 || dropout >= 1.0) throw ContractError("generator dropout must be in [0, 1)");
}

namespace {

template <typename T>
Tensor<T> init_matrix(int64_t rows, int64_t cols, Rng& rng, T sd = T(0.02)) {
    std::vector<T> vals(size_t(rows * cols));
    for (auto& v : vals) v = T(rng.normal()) * sd;
    return Tensor<T>::from({rows, cols}, std::move(vals), true);
}

template <typename T>
LinearParams<T> init_linear(int64_t in, int64_t out, Rng& rng) {
    return {init_matrix<T>(in, out, rng), Tensor<T>::zeros({out}, true)};
}

template <typename T>
NormParams<T> init_norm(int64_t width) {
    return {Tensor<T>::full({width}, T(1), true), Tensor<T>::zeros({width}, true)};
}

template <typename T>
LinearParams<T> init_linear_zero(int64_t in, int64_t out) {
    return {Tensor<T>::zeros({in, out}, true), Tensor<T>::zeros({out}, true)};
}

// residual branches start as identities: attention and ffn output
// projections are zero at init, so an untrained encoder pools a positional
// bag of token embeddings and training ramps the branches in
template <typename T>
AttentionParams<T> init_attention(int64_t width, Rng& rng) {
    return {init_linear<T>(width, width, rng), init_linear<T>(width, width, rng),
            init_linear<T>(width, width, rng), init_linear_zero<T>(width, width)};
}

template <typename T>
EncoderLayerParams<T> init_encoder_layer(int64_t width, int64_t ffn, Rng& rng) {
    return {init_norm<T>(width), init_attention<T>(width, rng), init_norm<T>(width),
            init_linear<T>(width, ffn, rng), init_linear_zero<T>(ffn, width)};
}

template <typename T>
DecoderLayerParams<T> init_decoder_layer(int64_t width, int64_t ffn, Rng& rng) {
    return {init_norm<T>(width),     init_attention<T>(width, rng), init_norm<T>(width),
            init_attention<T>(width, rng), init_norm<T>(width),
            init_linear<T>(width, ffn, rng), init_linear_zero<T>(ffn, width)};
}

template <typename T>
void collect_linear(const std::string& prefix, LinearParams<T>& p, NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", p.weight);
    out.emplace_back(prefix + ".bias", p.bias);
}

template <typename T>
void collect_norm(const std::string& prefix, NormParams<T>& p, NamedParams<T>& out) {
    out.emplace_back(prefix + ".gain", p.gain);
    out.emplace_back(prefix + ".bias", p.bias);
}

template <typename T>
void collect_attention(const std::string& prefix, AttentionParams<T>& p, NamedParams<T>& out) {
    collect_linear(prefix + ".q", p.query, out);
    collect_linear(prefix + ".k", p.key, out);
    collect_linear(prefix + ".v", p.value, out);
    collect_linear(prefix + ".out", p.out, out);
}

template <typename T>
void collect_encoder_layer(const std::string& prefix, EncoderLayerParams<T>& l, NamedParams<T>& out) {
    collect_norm(prefix + ".attn_norm", l.attn_norm, out);
    collect_attention(prefix + ".attn", l.attn, out);
    collect_norm(prefix + ".ffn_norm", l.ffn_norm, out);
    collect_linear(prefix + ".ffn_in", l.ffn_in, out);
    collect_linear(prefix + ".ffn_out", l.ffn_out, out);
}

template <typename T>
void collect_decoder_layer(const std::string& prefix, DecoderLayerParams<T>& l, NamedParams<T>& out) {
    collect_norm(prefix + ".self_norm", l.self_norm, out);
    collect_attention(prefix + ".self_attn", l.self_attn, out);
    collect_norm(prefix + ".cross_norm", l.cross_norm, out);
    collect_attention(prefix + ".cross_attn", l.cross_attn, out);
    collect_norm(prefix + ".ffn_norm", l.ffn_norm, out);
    collect_linear(prefix + ".ffn_in", l.ffn_in, out);
    collect_linear(prefix + ".ffn_out", l.ffn_out, out);
}

template <typename T>
Tensor<T> ffn_block(const Tensor<T>& x, const LinearParams<T>& in, const LinearParams<T>& out) {
    return apply_linear(gelu(apply_linear(x, in.weight, in.bias)), out.weight, out.bias);
}

// residual-branch dropout, active only while the tape is recording
template <typename T>
Tensor<T> maybe_drop(const Tensor<T>& x, double rate, Rng& rng) {
    if (rate <= 0.0 || !grad_enabled()) return x;
    return dropout(x, T(rate), rng);
}

template <typename T>
Tensor<T> encoder_layer_forward(const Tensor<T>& x, const EncoderLayerParams<T>& l, int heads,
                                double drop, Rng& rng) {
    Tensor<T> h = layer_norm_rows(x, l.attn_norm.gain, l.attn_norm.bias);
    Tensor<T> a = add(x, maybe_drop(attention(h, h, l.attn, heads, /*causal=*/false), drop, rng));
    Tensor<T> f = layer_norm_rows(a, l.ffn_norm.gain, l.ffn_norm.bias);
    return add(a, maybe_drop(ffn_block(f, l.ffn_in, l.ffn_out), drop, rng));
}

template <typename T>
Tensor<T> decoder_layer_forward(const Tensor<T>& x, const Tensor<T>& enc_states,
                                const DecoderLayerParams<T>& l, int heads, double drop, Rng& rng) {
    Tensor<T> h = layer_norm_rows(x, l.self_norm.gain, l.self_norm.bias);
    Tensor<T> a =
        add(x, maybe_drop(attention(h, h, l.self_attn, heads, /*causal=*/true), drop, rng));
    Tensor<T> c = layer_norm_rows(a, l.cross_norm.gain, l.cross_norm.bias);
    Tensor<T> b = add(
        a, maybe_drop(attention(c, enc_states, l.cross_attn, heads, /*causal=*/false), drop, rng));
    Tensor<T> f = layer_norm_rows(b, l.ffn_norm.gain, l.ffn_norm.bias);
    return add(b, maybe_drop(ffn_block(f, l.ffn_in, l.ffn_out), drop, rng));
}

template <typename T>
Tensor<T> embed(const Tensor<T>& tok_emb, const Tensor<T>& pos_emb, const std::vector<int>& ids,
                int max_seq_len) {
    if (ids.empty()) throw ContractError("cannot encode an empty sequence");
    if (int(ids.size()) > max_seq_len)
        throw ContractError("sequence of " + std::to_string(ids.size()) +
                            " tokens exceeds the configured maximum of " + std::to_string(max_seq_len));
    std::vector<int> positions(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) positions[i] = int(i);
    return add(embedding_rows(tok_emb, ids), embedding_rows(pos_emb, positions));
}

} // namespace

template <typename T>
Tensor<T> attention(const Tensor<T>& queries, const Tensor<T>& keys_values,
                    const AttentionParams<T>& p, int heads, bool causal) {
    const int64_t n = queries.rows();
    const int64_t m = keys_values.rows();
    const int64_t width = queries.cols();
    if (width % heads != 0) throw DimensionError("attention width not divisible by head count");
    const int64_t dh = width / heads;
    Tensor<T> q = apply_linear(queries, p.query.weight, p.query.bias);
    Tensor<T> k = apply_linear(keys_values, p.key.weight, p.key.bias);
    Tensor<T> v = apply_linear(keys_values, p.value.weight, p.value.bias);
    std::vector<T> mask;
    if (causal) {
        mask.assign(size_t(n * m), T(0));
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < m; ++j) mask[size_t(i * m + j)] = T(-1e30);
    }
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    std::vector<Tensor<T>> head_outs;
    head_outs.reserve(size_t(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor<T> qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor<T> kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor<T> vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        if (causal) scores = add_const(scores, mask);
        head_outs.push_back(matmul(softmax_rows(scores), vh));
    }
    Tensor<T> merged = concat_cols(std::span<const Tensor<T>>(head_outs));
    return apply_linear(merged, p.out.weight, p.out.bias);
}

template <typename T>
TextEncoder<T>::TextEncoder(const EncoderConfig& cfg, int vocab_size, Rng& rng, EncoderInit init)
    : cfg_(cfg) {
    cfg_.validate();
    if (vocab_size <= 0) throw ContractError("vocab size must be positive");
    if (init == EncoderInit::lexical) {
        if (cfg_.width != vocab_size)
            throw ContractError("lexical encoder init requires width == vocab size");
        std::vector<T> eye(size_t(vocab_size) * size_t(vocab_size), T(0));
        for (int i = 0; i < vocab_size; ++i) eye[size_t(i) * size_t(vocab_size) + size_t(i)] = T(1);
        tok_emb_ = Tensor<T>::from({vocab_size, vocab_size}, std::move(eye), true);
        pos_emb_ = Tensor<T>::zeros({cfg_.max_seq_len, cfg_.width}, true);
    } else {
        tok_emb_ = init_matrix<T>(vocab_size, cfg_.width, rng);
        pos_emb_ = init_matrix<T>(cfg_.max_seq_len, cfg_.width, rng);
    }
    for (int i = 0; i < cfg_.layers; ++i)
        layers_.push_back(init_encoder_layer<T>(cfg_.width, cfg_.ffn_width, rng));
    final_norm_ = init_norm<T>(cfg_.width);
    drop_rng_ = Rng(rng.next());
}

template <typename T>
Tensor<T> TextEncoder<T>::states(const std::vector<int>& ids) const {
    Tensor<T> x = embed(tok_emb_, pos_emb_, ids, cfg_.max_seq_len);
    for (const auto& l : layers_)
        x = encoder_layer_forward(x, l, cfg_.heads, cfg_.dropout, drop_rng_);
    return layer_norm_rows(x, final_norm_.gain, final_norm_.bias);
}

template <typename T>
Tensor<T> TextEncoder<T>::pooled(const std::vector<int>& ids) const {
    return mean_rows(states(ids));
}

template <typename T>
void TextEncoder<T>::collect_params(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".tok_emb", tok_emb_);
    out.emplace_back(prefix + ".pos_emb", pos_emb_);
    for (size_t i = 0; i < layers_.size(); ++i)
        collect_encoder_layer(prefix + ".layer" + std::to_string(i), layers_[i], out);
    collect_norm(prefix + ".final_norm", final_norm_, out);
}

template <typename T>
void TextEncoder<T>::set_trainable(bool trainable) {
    NamedParams<T> all;
    collect_params("", all);
    for (auto& [name, p] : all) p.set_requires_grad(trainable);
}

template <typename T>
Seq2Seq<T>::Seq2Seq(const GeneratorConfig& cfg, int vocab_size, Rng& rng)
    : cfg_(cfg), vocab_size_(vocab_size) {
    cfg_.validate();
    if (vocab_size <= 0) throw ContractError("vocab size must be positive");
    tok_emb_ = init_matrix<T>(vocab_size, cfg_.width, rng);
    enc_pos_emb_ = init_matrix<T>(cfg_.max_seq_len, cfg_.width, rng);
    dec_pos_emb_ = init_matrix<T>(cfg_.max_target_len, cfg_.width, rng);
    for (int i = 0; i < cfg_.layers; ++i) {
        enc_layers_.push_back(init_encoder_layer<T>(cfg_.width, cfg_.ffn_width, rng));
        dec_layers_.push_back(init_decoder_layer<T>(cfg_.width, cfg_.ffn_width, rng));
    }
    enc_final_norm_ = init_norm<T>(cfg_.width);
    dec_final_norm_ = init_norm<T>(cfg_.width);
    drop_rng_ = Rng(rng.next());
}

template <typename T>
Tensor<T> Seq2Seq<T>::encode(const std::vector<int>& src_ids) const {
    Tensor<T> x = embed(tok_emb_, enc_pos_emb_, src_ids, cfg_.max_seq_len);
    for (const auto& l : enc_layers_)
        x = encoder_layer_forward(x, l, cfg_.heads, cfg_.dropout, drop_rng_);
    return layer_norm_rows(x, enc_final_norm_.gain, enc_final_norm_.bias);
}

template <typename T>
Tensor<T> Seq2Seq<T>::decode_logits(const Tensor<T>& encoder_states,
                                    const std::vector<int>& dec_in) const {
    Tensor<T> x = embed(tok_emb_, dec_pos_emb_, dec_in, cfg_.max_target_len);
    for (const auto& l : dec_layers_)
        x = decoder_layer_forward(x, encoder_states, l, cfg_.heads, cfg_.dropout, drop_rng_);
    x = layer_norm_rows(x, dec_final_norm_.gain, dec_final_norm_.bias);
    return matmul(x, transpose(tok_emb_)); // tied output projection
}

template <typename T>
void Seq2Seq<T>::collect_params(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".tok_emb", tok_emb_);
    out.emplace_back(prefix + ".enc_pos_emb", enc_pos_emb_);
    out.emplace_back(prefix + ".dec_pos_emb", dec_pos_emb_);
    for (size_t i = 0; i < enc_layers_.size(); ++i)
        collect_encoder_layer(prefix + ".enc_layer" + std::to_string(i), enc_layers_[i], out);
    for (size_t i = 0; i < dec_layers_.size(); ++i)
        collect_decoder_layer(prefix + ".dec_layer" + std::to_string(i), dec_layers_[i], out);
    collect_norm(prefix + ".enc_final_norm", enc_final_norm_, out);
    collect_norm(prefix + ".dec_final_norm", dec_final_norm_, out);
}

template <typename T>
void Seq2Seq<T>::set_trainable(bool trainable) {
    NamedParams<T> all;
    collect_params("", all);
    for (auto& [name, p] : all) p.set_requires_grad(trainable);
}

template Tensor<float> attention<float>(const Tensor<float>&, const Tensor<float>&,
                                        const AttentionParams<float>&, int, bool);
template Tensor<double> attention<double>(const Tensor<double>&, const Tensor<double>&,
                                          const AttentionParams<double>&, int, bool);
template class TextEncoder<float>;
template class TextEncoder<double>;
template class Seq2Seq<float>;
template class Seq2Seq<double>;

} // namespace retgen::model
