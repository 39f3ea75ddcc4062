#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "reid/error.hpp"
#include "reid/model.hpp"
#include "reid/tensor.hpp"

namespace reid {

/// Adam with bias correction. State is aligned with a fixed parameter list;
/// the trainer owns one instance per training stage.
template <typename S>
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(double beta1, double beta2, double epsilon)
        : beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

    void init(const std::vector<ParamRef<S>>& params) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.push_back(Tensor<S>::zeros(p.tensor->dims));
            v_.push_back(Tensor<S>::zeros(p.tensor->dims));
        }
        t_ = 0;
    }

    bool initialized() const { return !m_.empty(); }
    std::int64_t step_count() const { return t_; }

    void step(const std::vector<ParamRef<S>>& params, const std::vector<Tensor<S>>& grads,
              S lr) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw Error("AdamOptimizer: parameter/state count mismatch");
        ++t_;
        const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
        const S bc1 = S(1) - static_cast<S>(std::pow(beta1_, static_cast<double>(t_)));
        const S bc2 = S(1) - static_cast<S>(std::pow(beta2_, static_cast<double>(t_)));
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto& w = params[p].tensor->data;
            const auto& g = grads[p].data;
            auto& m = m_[p].data;
            auto& v = v_[p].data;
            if (g.size() != w.size()) throw Error("AdamOptimizer: gradient shape mismatch");
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = b1 * m[i] + (S(1) - b1) * g[i];
                v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
                const S mhat = m[i] / bc1;
                const S vhat = v[i] / bc2;
                w[i] -= lr * mhat / (std::sqrt(vhat) + static_cast<S>(eps_));
            }
        }
    }

    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double epsilon() const { return eps_; }

    std::vector<Tensor<S>>& first_moments() { return m_; }
    std::vector<Tensor<S>>& second_moments() { return v_; }
    const std::vector<Tensor<S>>& first_moments() const { return m_; }
    const std::vector<Tensor<S>>& second_moments() const { return v_; }
    void restore(std::vector<Tensor<S>> m, std::vector<Tensor<S>> v, std::int64_t t) {
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

private:
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::int64_t t_ = 0;
    std::vector<Tensor<S>> m_, v_;
};

} // namespace reid
