#include "retgen/ragmodel.hpp"

#include <json.hpp>

namespace retgen::model {

using nlohmann::json;
using namespace retgen::num;

namespace {

json encoder_to_json(const EncoderConfig& c) {
    return json{{"layers", c.layers},       {"width", c.width},
                {"heads", c.heads},         {"ffn_width", c.ffn_width},
                {"max_seq_len", c.max_seq_len}, {"dropout", c.dropout}};
}

EncoderConfig encoder_from_json(const json& j) {
    EncoderConfig c;
    c.layers = j.value("layers", c.layers);
    c.width = j.value("width", c.width);
    c.heads = j.value("heads", c.heads);
    c.ffn_width = j.value("ffn_width", c.ffn_width);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.dropout = j.value("dropout", c.dropout);
    return c;
}

} // namespace

std::string ModelConfig::to_json() const {
    json j;
    j["retriever"] = encoder_to_json(retriever);
    j["generator"] = {{"layers", generator.layers},
                      {"width", generator.width},
                      {"heads", generator.heads},
                      {"ffn_width", generator.ffn_width},
                      {"max_seq_len", generator.max_seq_len},
                      {"max_target_len", generator.max_target_len},
                      {"dropout", generator.dropout}};
    j["weight_norm"] = weight_norm_name(weight_norm);
    j["retriever_init"] = retriever_init == EncoderInit::lexical ? "lexical" : "random";
    j["vocab_cap"] = vocab_cap;
    return j.dump(2) + "\n";
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad model config: ") + e.what());
    }
    ModelConfig c;
    if (j.contains("retriever")) c.retriever = encoder_from_json(j["retriever"]);
    if (j.contains("generator")) {
        const auto& g = j["generator"];
        c.generator.layers = g.value("layers", c.generator.layers);
        c.generator.width = g.value("width", c.generator.width);
        c.generator.heads = g.value("heads", c.generator.heads);
        c.generator.ffn_width = g.value("ffn_width", c.generator.ffn_width);
        c.generator.max_seq_len = g.value("max_seq_len", c.generator.max_seq_len);
        c.generator.max_target_len = g.value("max_target_len", c.generator.max_target_len);
        c.generator.dropout = g.value("dropout", c.generator.dropout);
    }
    c.weight_norm = parse_weight_norm(j.value("weight_norm", "softmax"));
    std::string init = j.value("retriever_init", "lexical");
    if (init == "lexical")
        c.retriever_init = EncoderInit::lexical;
    else if (init == "random")
        c.retriever_init = EncoderInit::random;
    else
        throw FormatError("unknown retriever_init: " + init);
    c.vocab_cap = j.value("vocab_cap", c.vocab_cap);
    c.retriever.validate();
    c.generator.validate();
    return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
    return from_json(read_text_file(path));
}

void ModelConfig::save(const std::string& path) const { write_text_file(path, to_json()); }

template <typename T>
RagModel<T> RagModel<T>::init(const ModelConfig& cfg, Vocabulary vocab, uint64_t seed) {
    RagModel<T> m;
    m.cfg = cfg;
    m.vocab = std::move(vocab);
    const int vs = int(m.vocab.size());
    if (m.cfg.retriever_init == EncoderInit::lexical) {
        m.cfg.retriever.width = vs;
        m.cfg.retriever.heads = 1; // head split is moot behind zero output projections
    }
    // identical init for both retrieval encoders
    Rng enc_rng_a(mix_seed(seed, "retriever"));
    Rng enc_rng_b(mix_seed(seed, "retriever"));
    Rng gen_rng(mix_seed(seed, "generator"));
    m.input_encoder =
        std::make_unique<TextEncoder<T>>(m.cfg.retriever, vs, enc_rng_a, m.cfg.retriever_init);
    m.demo_encoder =
        std::make_unique<TextEncoder<T>>(m.cfg.retriever, vs, enc_rng_b, m.cfg.retriever_init);
    m.generator = std::make_unique<Seq2Seq<T>>(m.cfg.generator, vs, gen_rng);
    m.configure_trainable(false);
    return m;
}

template <typename T>
NamedParams<T> RagModel<T>::named_params() {
    NamedParams<T> out;
    input_encoder->collect_params("input_encoder", out);
    demo_encoder->collect_params("demo_encoder", out);
    generator->collect_params("generator", out);
    return out;
}

template <typename T>
void RagModel<T>::configure_trainable(bool train_retriever) {
    input_encoder->set_trainable(train_retriever);
    demo_encoder->set_trainable(false);
    generator->set_trainable(true);
}

template <typename T>
Tensor<T> RagModel<T>::input_embedding(const std::vector<int>& ids) const {
    return input_encoder->pooled(ids);
}

template <typename T>
std::vector<T> RagModel<T>::input_embedding_values(const std::vector<int>& ids) const {
    NoGradGuard no_grad;
    auto t = input_encoder->pooled(ids);
    return std::vector<T>(t.values().begin(), t.values().end());
}

template <typename T>
std::vector<T> RagModel<T>::demo_embedding_values(const std::vector<int>& ids) const {
    NoGradGuard no_grad;
    auto t = demo_encoder->pooled(ids);
    return std::vector<T>(t.values().begin(), t.values().end());
}

template <typename T>
void RagModel<T>::save(const std::string& path, const Adam<T>* opt) {
    auto params = named_params();
    save_checkpoint(path, params, opt);
}

template <typename T>
void RagModel<T>::load(const std::string& path, Adam<T>* opt) {
    auto params = named_params();
    load_checkpoint(path, params, opt);
}

template struct RagModel<float>;
template struct RagModel<double>;

} // namespace retgen::model
