#pragma once

#include <memory>
#include <string>

#include "retgen/marginal.hpp"
#include "retgen/optim.hpp"
#include "retgen/transformer.hpp"
#include "retgen/vocab.hpp"

namespace retgen::model {

struct ModelConfig {
    EncoderConfig retriever;   // shared dims for the input and demo encoders
    GeneratorConfig generator;
    WeightNorm weight_norm = WeightNorm::softmax;
    // lexical init widens the retrieval encoders to the vocabulary size and
    // scores by token overlap until trained
    EncoderInit retriever_init = EncoderInit::lexical;
    int vocab_cap = 2048;

    static ModelConfig load(const std::string& path);
    void save(const std::string& path) const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

// Dual-encoder retriever plus the marginalizing generator. The two retrieval
// encoders start from identical weights (a shared pre-trained starting point
// at full scale) and diverge only if trained.
template <typename T>
struct RagModel {
    ModelConfig cfg;
    Vocabulary vocab;
    std::unique_ptr<TextEncoder<T>> input_encoder;
    std::unique_ptr<TextEncoder<T>> demo_encoder;
    std::unique_ptr<Seq2Seq<T>> generator;

    static RagModel init(const ModelConfig& cfg, Vocabulary vocab, uint64_t seed);

    NamedParams<T> named_params();
    // generator always trains; input encoder only when train_retriever is set
    void configure_trainable(bool train_retriever);

    // retrieval-side embeddings; the plain-vector forms never record a tape
    num::Tensor<T> input_embedding(const std::vector<int>& ids) const;
    std::vector<T> input_embedding_values(const std::vector<int>& ids) const;
    std::vector<T> demo_embedding_values(const std::vector<int>& ids) const;

    void save(const std::string& path, const num::Adam<T>* opt = nullptr);
    void load(const std::string& path, num::Adam<T>* opt = nullptr);
};

} // namespace retgen::model
