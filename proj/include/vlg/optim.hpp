#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vlg/common.hpp"

namespace vlg {

// Adam with bias correction over a list of parameter blocks.
template <typename S>
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<std::vector<S>*> params, const std::vector<std::vector<S>>& grads,
              double lr) {
        if (m_.empty()) {
            for (const auto* p : params) {
                m_.emplace_back(p->size(), S(0));
                v_.emplace_back(p->size(), S(0));
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t b = 0; b < params.size(); ++b) {
            auto& p = *params[b];
            const auto& g = grads[b];
            auto& m = m_[b];
            auto& v = v_[b];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = static_cast<S>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
                v[i] = static_cast<S>(beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i]);
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] = static_cast<S>(p[i] - lr * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<S>> m_, v_;
};

// Step decay: lr0 * factor^floor(epoch / every).
inline double step_decay_lr(double lr0, double factor, int every, int epoch) {
    return lr0 * std::pow(factor, static_cast<double>(epoch / every));
}

// Poly policy: lr0 * (1 - iter/max_iter)^power.
inline double poly_lr(double lr0, std::int64_t iter, std::int64_t max_iter, double power) {
    const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
    return lr0 * std::pow(frac > 0 ? frac : 0.0, power);
}

}  // namespace vlg
