#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "omoq/tensor.hpp"

namespace omoq {

template <typename T>
struct NamedParam {
    std::string name;
    Var<T> var;
};

// Named non-parameter state (batch-norm running stats) that checkpoints carry.
template <typename T>
struct NamedState {
    std::string name;
    Array<T>* array;
};

namespace nn {

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual fan-in uniform init.
template <typename T>
Array<T> uniform_init(Rng& rng, std::vector<size_t> shape, size_t fan_in) {
    Array<T> a(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : a.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return a;
}

template <typename T>
struct Linear {
    Var<T> w, b;
    size_t in = 0, out = 0;

    Linear() = default;
    Linear(Rng& rng, size_t in_dim, size_t out_dim) : in(in_dim), out(out_dim) {
        w = Var<T>(uniform_init<T>(rng, {out_dim, in_dim}, in_dim), true);
        b = Var<T>(uniform_init<T>(rng, {out_dim}, in_dim), true);
    }
    Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return linear(g, x, w, b); }
    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out_params) {
        out_params.push_back({prefix + ".w", w});
        out_params.push_back({prefix + ".b", b});
    }
};

template <typename T>
struct Conv2d {
    Var<T> w, b;
    size_t stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(Rng& rng, size_t c_in, size_t c_out, size_t kernel, size_t stride_ = 1, size_t pad_ = 0)
        : stride(stride_), pad(pad_) {
        const size_t fan_in = c_in * kernel * kernel;
        w = Var<T>(uniform_init<T>(rng, {c_out, c_in, kernel, kernel}, fan_in), true);
        b = Var<T>(uniform_init<T>(rng, {c_out}, fan_in), true);
    }
    Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return conv2d(g, x, w, b, stride, pad); }
    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out_params) {
        out_params.push_back({prefix + ".w", w});
        out_params.push_back({prefix + ".b", b});
    }
};

template <typename T>
struct BatchNorm2d {
    Var<T> gamma, beta;
    Array<T> run_mean, run_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    BatchNorm2d() = default;
    explicit BatchNorm2d(size_t channels) {
        gamma = Var<T>(Array<T>({channels}, T(1)), true);
        beta = Var<T>(Array<T>({channels}, T(0)), true);
        run_mean = Array<T>({channels}, T(0));
        run_var = Array<T>({channels}, T(1));
    }
    Var<T> operator()(Graph<T>& g, const Var<T>& x) {
        return batch_norm2d(g, x, gamma, beta, run_mean, run_var, momentum, eps);
    }
    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out_params,
                 std::vector<NamedState<T>>& out_state) {
        out_params.push_back({prefix + ".gamma", gamma});
        out_params.push_back({prefix + ".beta", beta});
        out_state.push_back({prefix + ".run_mean", &run_mean});
        out_state.push_back({prefix + ".run_var", &run_var});
    }
};

template <typename T>
struct LayerNorm {
    Var<T> gamma, beta;
    T eps = T(1e-5);

    LayerNorm() = default;
    explicit LayerNorm(size_t dim) {
        gamma = Var<T>(Array<T>({dim}, T(1)), true);
        beta = Var<T>(Array<T>({dim}, T(0)), true);
    }
    Var<T> operator()(Graph<T>& g, const Var<T>& x) const {
        return layer_norm(g, x, gamma, beta, eps);
    }
    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out_params) {
        out_params.push_back({prefix + ".gamma", gamma});
        out_params.push_back({prefix + ".beta", beta});
    }
};

} // namespace nn

// AdamW with decoupled weight decay. Moment buffers follow parameter order;
// step() consumes whatever gradients have accumulated (absent ones count as
// zero, so decay still applies).
template <typename T>
class AdamW {
public:
    struct Config {
        T lr = T(1e-4);
        T beta1 = T(0.9);
        T beta2 = T(0.999);
        T eps = T(1e-8);
        T weight_decay = T(0.01);
    };

    AdamW(std::vector<Var<T>> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
        require(cfg_.lr > T(0), "adamw: lr must be positive");
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (auto& p : params_) {
            m_.emplace_back(p.value().shape, T(0));
            v_.emplace_back(p.value().shape, T(0));
        }
    }

    void step() {
        ++step_;
        const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta1), step_));
        const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta2), step_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& node = *params_[i].node();
            node.ensure_grad();
            kernels::adamw_update(node.value.numel(), node.value.ptr(), node.grad.ptr(),
                                  m_[i].ptr(), v_[i].ptr(), cfg_.lr, cfg_.beta1, cfg_.beta2,
                                  cfg_.eps, cfg_.weight_decay, bc1, bc2);
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void set_lr(T lr) {
        require(lr > T(0), "adamw: lr must be positive");
        cfg_.lr = lr;
    }
    T lr() const { return cfg_.lr; }
    uint64_t step_count() const { return step_; }

private:
    std::vector<Var<T>> params_;
    Config cfg_;
    std::vector<Array<T>> m_, v_;
    uint64_t step_ = 0;
};

} // namespace omoq
