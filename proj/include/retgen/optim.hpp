#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "retgen/tensor.hpp"

namespace retgen::num {

template <typename T>
struct AdamConfig {
    T learning_rate = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);
    T grad_clip = T(0); // 0 disables global-norm clipping
};

// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
template <typename T>
class Adam {
  public:
    Adam() = default;
    Adam(std::vector<Tensor<T>> params, AdamConfig<T> cfg);

    void step();
    void zero_grad();
    int64_t step_count() const { return step_count_; }
    const AdamConfig<T>& config() const { return cfg_; }
    void set_learning_rate(T lr) { cfg_.learning_rate = lr; }

    std::span<const T> first_moment(size_t param_idx) const { return m_[param_idx]; }
    std::span<const T> second_moment(size_t param_idx) const { return v_[param_idx]; }
    size_t param_count() const { return params_.size(); }

    void save_state(std::ostream& os) const;
    void load_state(std::istream& is);

  private:
    std::vector<Tensor<T>> params_;
    AdamConfig<T> cfg_;
    int64_t step_count_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

using NamedParams32 = std::vector<std::pair<std::string, Tensor<float>>>;

// Versioned binary container: parameter names -> shape + values, plus the
// optional optimizer state. Round-trips are bit-exact.
template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<T>>>& params,
                     const Adam<T>* optimizer = nullptr);

template <typename T>
void load_checkpoint(const std::string& path,
                     std::vector<std::pair<std::string, Tensor<T>>>& params,
                     Adam<T>* optimizer = nullptr);

} // namespace retgen::num
