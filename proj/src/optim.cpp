#include "retgen/optim.hpp"

#include <cmath>
#include <fstream>

namespace retgen::num {

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig<T> cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.learning_rate > T(0)) || !(cfg_.beta1 > T(0)) || !(cfg_.beta2 > T(0)) ||
        !(cfg_.epsilon > T(0)))
        throw ContractError("Adam: hyperparameters must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(size_t(p.size()), T(0));
        v_.emplace_back(size_t(p.size()), T(0));
    }
}

template <typename T>
void Adam<T>::step() {
    ++step_count_;
    const T b1 = cfg_.beta1, b2 = cfg_.beta2;
    const T bc1 = T(1) - std::pow(b1, T(step_count_));
    const T bc2 = T(1) - std::pow(b2, T(step_count_));
    T clip_scale = T(1);
    if (cfg_.grad_clip > T(0)) {
        T sq = 0;
        for (auto& p : params_)
            if (p.has_grad())
                for (T g : p.grad()) sq += g * g;
        T norm = std::sqrt(sq);
        if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
    }
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        if (m_[pi].size() != size_t(p.size()))
            throw DimensionError("Adam: moment array does not match parameter shape");
        auto vals = p.values();
        const bool has_grad = p.has_grad();
        std::span<const T> grads = has_grad ? std::span<const T>(p.grad()) : std::span<const T>();
        for (size_t i = 0; i < vals.size(); ++i) {
            const T g = (has_grad ? grads[i] : T(0)) * clip_scale;
            m_[pi][i] = b1 * m_[pi][i] + (T(1) - b1) * g;
            v_[pi][i] = b2 * v_[pi][i] + (T(1) - b2) * g * g;
            const T mhat = m_[pi][i] / bc1;
            const T vhat = v_[pi][i] / bc2;
            vals[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
        require_finite<T>(vals, "adam step");
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template <typename T>
void Adam<T>::save_state(std::ostream& os) const {
    io::write_u64(os, uint64_t(step_count_));
    io::write_f64(os, double(cfg_.learning_rate));
    io::write_f64(os, double(cfg_.beta1));
    io::write_f64(os, double(cfg_.beta2));
    io::write_f64(os, double(cfg_.epsilon));
    io::write_f64(os, double(cfg_.grad_clip));
    io::write_u32(os, uint32_t(params_.size()));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        io::write_u64(os, uint64_t(m_[pi].size()));
        for (T x : m_[pi]) io::write_f64(os, double(x));
        for (T x : v_[pi]) io::write_f64(os, double(x));
    }
}

template <typename T>
void Adam<T>::load_state(std::istream& is) {
    step_count_ = int64_t(io::read_u64(is));
    cfg_.learning_rate = T(io::read_f64(is));
    cfg_.beta1 = T(io::read_f64(is));
    cfg_.beta2 = T(io::read_f64(is));
    cfg_.epsilon = T(io::read_f64(is));
    cfg_.grad_clip = T(io::read_f64(is));
    uint32_t n = io::read_u32(is);
    if (n != params_.size()) throw FormatError("optimizer state does not match parameter list");
    for (size_t pi = 0; pi < n; ++pi) {
        uint64_t len = io::read_u64(is);
        if (len != m_[pi].size()) throw FormatError("optimizer moment length mismatch");
        for (auto& x : m_[pi]) x = T(io::read_f64(is));
        for (auto& x : v_[pi]) x = T(io::read_f64(is));
    }
}

namespace {
constexpr char kCkptMagic[4] = {'R', 'G', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;
} // namespace

template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<T>>>& params,
                     const Adam<T>* optimizer) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write(kCkptMagic, 4);
    io::write_u32(os, kCkptVersion);
    io::write_u8(os, uint8_t(sizeof(T)));
    io::write_u32(os, uint32_t(params.size()));
    for (const auto& [name, p] : params) {
        io::write_string(os, name);
        io::write_u32(os, uint32_t(p.shape().size()));
        for (int64_t d : p.shape()) io::write_i64(os, d);
        if constexpr (sizeof(T) == 4) {
            for (T x : p.values()) io::write_f32(os, float(x));
        } else {
            for (T x : p.values()) io::write_f64(os, double(x));
        }
    }
    io::write_u8(os, optimizer ? 1 : 0);
    if (optimizer) optimizer->save_state(os);
    if (!os) throw IoError("short write: " + path);
}

template <typename T>
void load_checkpoint(const std::string& path,
                     std::vector<std::pair<std::string, Tensor<T>>>& params, Adam<T>* optimizer) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string_view(magic, 4) != std::string_view(kCkptMagic, 4))
        throw FormatError("not a checkpoint file: " + path);
    if (io::read_u32(is) != kCkptVersion) throw FormatError("unsupported checkpoint version");
    if (io::read_u8(is) != sizeof(T)) throw FormatError("checkpoint precision does not match model");
    uint32_t n = io::read_u32(is);
    if (n != params.size()) throw FormatError("checkpoint parameter count mismatch");
    for (auto& [name, p] : params) {
        std::string got = io::read_string(is);
        if (got != name) throw FormatError("checkpoint parameter order mismatch: " + got + " vs " + name);
        uint32_t rank = io::read_u32(is);
        Shape shape(rank);
        for (auto& d : shape) d = io::read_i64(is);
        if (shape != p.shape()) throw FormatError("checkpoint shape mismatch for " + name);
        auto vals = p.values();
        if constexpr (sizeof(T) == 4) {
            for (auto& x : vals) x = io::read_f32(is);
        } else {
            for (auto& x : vals) x = io::read_f64(is);
        }
    }
    bool has_opt = io::read_u8(is) != 0;
    if (has_opt && optimizer) optimizer->load_state(is);
}

template class Adam<float>;
template class Adam<double>;
template void save_checkpoint<float>(const std::string&, const NamedParams32&, const Adam<float>*);
template void load_checkpoint<float>(const std::string&, NamedParams32&, Adam<float>*);
template void save_checkpoint<double>(const std::string&,
                                      const std::vector<std::pair<std::string, Tensor<double>>>&,
                                      const Adam<double>*);
template void load_checkpoint<double>(const std::string&,
                                      std::vector<std::pair<std::string, Tensor<double>>>&,
                                      Adam<double>*);

} // namespace retgen::num
