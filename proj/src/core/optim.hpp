#pragma once

#include <vector>

#include "tensor.hpp"

namespace chorus {

// Adam with bias correction. beta defaults follow the published optimizer.
template <class S>
struct AdamState {
    long step = 0;
    std::vector<std::vector<S>> m, v;

    static AdamState init(const std::vector<TensorPtr<S>>& params) {
        AdamState st;
        st.m.reserve(params.size());
        st.v.reserve(params.size());
        for (const auto& p : params) {
            st.m.emplace_back(p->data.size(), S(0));
            st.v.emplace_back(p->data.size(), S(0));
        }
        return st;
    }
};

template <class S>
void adam_step(const std::vector<TensorPtr<S>>& params, AdamState<S>& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw UsageError("adam_step: state does not match parameter list");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        if (m.size() != p.data.size())
            throw UsageError("adam_step: moment size mismatch for param " +
                             std::to_string(pi));
        const bool has_grad = !p.grad.empty();
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double g = has_grad ? static_cast<double>(p.grad[i]) : 0.0;
            double md = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
            double vd = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
            m[i] = static_cast<S>(md);
            v[i] = static_cast<S>(vd);
            const double mhat = md / bc1;
            const double vhat = vd / bc2;
            p.data[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

} // namespace chorus
