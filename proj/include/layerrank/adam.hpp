#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "layerrank/graph.hpp"
#include "layerrank/tensor.hpp"

namespace layerrank {

// Standard ADAM with bias correction. Moment tensors mirror the parameter
// shapes; update math runs in double and rounds back to the float32 storage.
struct AdamState {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;

    static AdamState init(const std::vector<Tensor>& params, double lr = 0.01) {
        AdamState s;
        s.lr = lr;
        for (const auto& p : params) {
            s.m.emplace_back(p.data.size(), 0.0f);
            s.v.emplace_back(p.data.size(), 0.0f);
        }
        return s;
    }

    static AdamState init(const std::vector<Parameter>& params, double lr = 0.01) {
        AdamState s;
        s.lr = lr;
        for (const auto& p : params) {
            s.m.emplace_back(p.value.data.size(), 0.0f);
            s.v.emplace_back(p.value.data.size(), 0.0f);
        }
        return s;
    }
};

namespace detail {

inline void adam_update_tensor(AdamState& st, size_t p, Tensor& w_t,
                               const std::vector<float>& g, double bc1, double bc2) {
    auto& w = w_t.data;
    if (w.size() != g.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
    auto& m = st.m.at(p);
    auto& v = st.v.at(p);
    for (size_t i = 0; i < w.size(); ++i) {
        const double gi = double(g[i]);
        const double mi = st.beta1 * double(m[i]) + (1.0 - st.beta1) * gi;
        const double vi = st.beta2 * double(v[i]) + (1.0 - st.beta2) * gi * gi;
        m[i] = float(mi);
        v[i] = float(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        w[i] = float(double(w[i]) - st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
}

}  // namespace detail

inline void adam_step(AdamState& st, std::vector<Tensor>& params,
                      const std::vector<std::vector<float>>& grads) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
    for (size_t p = 0; p < params.size(); ++p)
        detail::adam_update_tensor(st, p, params[p], grads[p], bc1, bc2);
}

inline void adam_step(AdamState& st, std::vector<Parameter>& params,
                      const std::vector<std::vector<float>>& grads) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
    for (size_t p = 0; p < params.size(); ++p)
        detail::adam_update_tensor(st, p, params[p].value, grads[p], bc1, bc2);
}

}  // namespace layerrank
