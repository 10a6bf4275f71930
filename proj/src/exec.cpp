#include "layerrank/exec.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace layerrank {

namespace {

constexpr double kLnEps = 1e-5;  // layer norm variance epsilon
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// C[R,N] = A[R,K] * B[K,N], row-major, j-innermost so the stores stream.
template <typename T>
void mm(const T* a, const T* b, T* c, size_t r, size_t k, size_t n) {
    for (size_t i = 0; i < r; ++i) {
        T* ci = c + i * n;
        for (size_t j = 0; j < n; ++j) ci[j] = T(0);
        const T* ai = a + i * k;
        for (size_t t = 0; t < k; ++t) {
            const T av = ai[t];
            const T* bt = b + t * n;
            for (size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

// dA[R,K] += dC[R,N] * B^T
template <typename T>
void mm_grad_a(const T* dc, const T* b, T* da, size_t r, size_t k, size_t n) {
    for (size_t i = 0; i < r; ++i) {
        const T* dci = dc + i * n;
        T* dai = da + i * k;
        for (size_t t = 0; t < k; ++t) {
            const T* bt = b + t * n;
            T s = T(0);
            for (size_t j = 0; j < n; ++j) s += dci[j] * bt[j];
            dai[t] += s;
        }
    }
}

// dB[K,N] += A^T * dC
template <typename T>
void mm_grad_b(const T* a, const T* dc, T* db, size_t r, size_t k, size_t n) {
    for (size_t i = 0; i < r; ++i) {
        const T* ai = a + i * k;
        const T* dci = dc + i * n;
        for (size_t t = 0; t < k; ++t) {
            const T av = ai[t];
            T* dbt = db + t * n;
            for (size_t j = 0; j < n; ++j) dbt[j] += av * dci[j];
        }
    }
}

// C[M,N] = A[M,K] * B[N,K]^T
template <typename T>
void mm_nt(const T* a, const T* b, T* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const T* bj = b + j * k;
            T s = T(0);
            for (size_t t = 0; t < k; ++t) s += ai[t] * bj[t];
            ci[j] = s;
        }
    }
}

template <typename T>
bool span_finite(const T* p, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(double(p[i]))) return false;
    return true;
}

}  // namespace

int argmax_row(const float* row, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

int argmax_row(const double* row, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

template <typename T>
size_t Executor<T>::node_len(int i) const {
    const Node& n = g_->node(i);
    const size_t per = size_t(Tensor::numel_of(n.dims));
    return n.per_sample ? per * size_t(batch_) : per;
}

template <typename T>
void Executor<T>::ensure_own(int i) {
    Buf& b = vals_[size_t(i)];
    b.len = node_len(i);
    b.own.resize(b.len);
    b.ptr = b.own.data();
}

template <typename T>
void Executor<T>::set_gate(int slot, float m) {
    if (gate_mult_.empty()) {
        gate_mult_.resize(size_t(g_->n_gates()));
        for (const Node& n : g_->nodes())
            if (n.op == Op::Gate) gate_mult_[size_t(n.gate)] = n.coeff;
    }
    gate_mult_.at(size_t(slot)) = m;
}

template <typename T>
void Executor<T>::reset_gates() {
    gate_mult_.clear();
}

template <typename T>
void Executor<T>::bind_param(int i) {
    const Node& n = g_->node(i);
    const Tensor& src = override_ ? override_->at(size_t(n.param)) : g_->param_at(n.param).value;
    Buf& b = vals_[size_t(i)];
    b.len = src.data.size();
    if constexpr (std::is_same_v<T, float>) {
        b.ptr = src.data.data();
        b.own.clear();
    } else {
        b.own.resize(b.len);
        for (size_t j = 0; j < b.len; ++j) b.own[j] = T(src.data[j]);
        b.ptr = b.own.data();
    }
}

template <typename T>
void Executor<T>::forward(std::span<const float> input, int batch, const Hooks* hooks) {
    if (g_->output_node() == -1) throw std::logic_error("graph has no output node");
    if (batch <= 0) throw std::invalid_argument("forward: batch must be positive");
    if (input.size() != size_t(batch) * size_t(g_->input_dim()))
        throw std::invalid_argument("forward: input size does not match graph input shape");
    batch_ = batch;
    vals_.resize(g_->nodes().size());
    for (int i = 0; i < int(g_->nodes().size()); ++i) {
        const Node& n = g_->node(i);
        if (n.op == Op::Param) {
            bind_param(i);
            continue;
        }
        if (n.op == Op::Input) {
            ensure_own(i);
            T* dst = vals_[size_t(i)].own.data();
            for (size_t j = 0; j < input.size(); ++j) dst[j] = T(input[j]);
        } else {
            compute_node(i, hooks);
        }
        if (hooks) {
            auto it = hooks->at.find(i);
            if (it != hooks->at.end()) it->second(std::span<T>(vals_[size_t(i)].own));
        }
        if (check_finite_ && !span_finite(vals_[size_t(i)].ptr, vals_[size_t(i)].len))
            throw std::runtime_error("forward: non-finite value at node " + std::to_string(i) +
                                     (n.tag.empty() ? "" : " (" + n.tag + ")"));
    }
    has_values_ = true;
    grads_.clear();
}

template <typename T>
void Executor<T>::forward_from(const Executor& clean, int dirty_node,
                               const std::function<void(std::span<T>)>& hook) {
    if (!clean.has_values_) throw std::logic_error("forward_from: clean executor has no values");
    batch_ = clean.batch_;
    vals_.resize(g_->nodes().size());
    const auto& mask = g_->downstream_mask(dirty_node);
    for (int i = 0; i < int(g_->nodes().size()); ++i) {
        const Node& n = g_->node(i);
        if (!mask[size_t(i)]) {
            vals_[size_t(i)].ptr = clean.vals_[size_t(i)].ptr;
            vals_[size_t(i)].len = clean.vals_[size_t(i)].len;
            vals_[size_t(i)].own.clear();
            continue;
        }
        if (i == dirty_node) {
            if (n.op == Op::Param) {
                bind_param(i);
            } else {
                ensure_own(i);
                std::memcpy(vals_[size_t(i)].own.data(), clean.vals_[size_t(i)].ptr,
                            vals_[size_t(i)].len * sizeof(T));
                if (hook) hook(std::span<T>(vals_[size_t(i)].own));
            }
        } else if (n.op == Op::Param) {
            bind_param(i);
        } else {
            compute_node(i, nullptr);
        }
        if (check_finite_ && !span_finite(vals_[size_t(i)].ptr, vals_[size_t(i)].len))
            throw std::runtime_error("forward: non-finite value at node " + std::to_string(i));
    }
    has_values_ = true;
    grads_.clear();
}

template <typename T>
std::span<const T> Executor<T>::values(int node) const {
    if (!has_values_) throw std::logic_error("executor: values requested before forward");
    const Buf& b = vals_.at(size_t(node));
    return {b.ptr, b.len};
}

template <typename T>
std::span<const T> Executor<T>::output() const {
    return values(g_->output_node());
}

template <typename T>
void Executor<T>::compute_node(int i, const Hooks*) {
    const Node& n = g_->node(i);
    ensure_own(i);
    T* out = vals_[size_t(i)].own.data();
    const size_t len = vals_[size_t(i)].len;
    const T* a = n.a >= 0 ? vals_[size_t(n.a)].ptr : nullptr;
    const T* b = n.b >= 0 ? vals_[size_t(n.b)].ptr : nullptr;

    switch (n.op) {
        case Op::MatMul: {
            const auto& ad = g_->node(n.a).dims;
            const size_t k = size_t(ad.back());
            const size_t cols = size_t(n.dims.back());
            const size_t rows = len / cols;
            mm(a, b, out, rows, k, cols);
            break;
        }
        case Op::Bmm: {
            const auto& ad = g_->node(n.a).dims;
            const auto& bd = g_->node(n.b).dims;
            const size_t m = size_t(ad[0]), k = size_t(ad[1]), c = size_t(bd[1]);
            for (int s = 0; s < batch_; ++s)
                mm(a + size_t(s) * m * k, b + size_t(s) * k * c, out + size_t(s) * m * c, m, k, c);
            break;
        }
        case Op::BmmNT: {
            const auto& ad = g_->node(n.a).dims;
            const auto& bd = g_->node(n.b).dims;
            const size_t m = size_t(ad[0]), k = size_t(ad[1]), c = size_t(bd[0]);
            for (int s = 0; s < batch_; ++s)
                mm_nt(a + size_t(s) * m * k, b + size_t(s) * c * k, out + size_t(s) * m * c, m, k, c);
            break;
        }
        case Op::Add:
            for (size_t j = 0; j < len; ++j) out[j] = a[j] + b[j];
            break;
        case Op::AddBias: {
            const size_t cols = size_t(n.dims.back());
            const size_t rows = len / cols;
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < cols; ++j) out[r * cols + j] = a[r * cols + j] + b[j];
            break;
        }
        case Op::AddTable: {
            const size_t per = len / size_t(batch_);
            for (int s = 0; s < batch_; ++s)
                for (size_t j = 0; j < per; ++j) out[size_t(s) * per + j] = a[size_t(s) * per + j] + b[j];
            break;
        }
        case Op::Scale:
            for (size_t j = 0; j < len; ++j) out[j] = T(n.coeff) * a[j];
            break;
        case Op::Gate: {
            const T m = T(gate_mult_.empty() ? n.coeff : gate_mult_[size_t(n.gate)]);
            for (size_t j = 0; j < len; ++j) out[j] = m * a[j];
            break;
        }
        case Op::Relu:
            for (size_t j = 0; j < len; ++j) out[j] = a[j] > T(0) ? a[j] : T(0);
            break;
        case Op::Gelu:
            for (size_t j = 0; j < len; ++j) {
                const T x = a[j];
                out[j] = T(0.5) * x * (T(1) + T(std::erf(double(x) * kInvSqrt2)));
            }
            break;
        case Op::Softmax: {
            const size_t cols = size_t(n.dims.back());
            const size_t rows = len / cols;
            for (size_t r = 0; r < rows; ++r) {
                const T* xr = a + r * cols;
                T* yr = out + r * cols;
                T mx = xr[0];
                for (size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
                T sum = T(0);
                for (size_t j = 0; j < cols; ++j) {
                    yr[j] = T(std::exp(double(xr[j] - mx)));
                    sum += yr[j];
                }
                const T inv = T(1) / sum;
                for (size_t j = 0; j < cols; ++j) yr[j] *= inv;
            }
            break;
        }
        case Op::LayerNorm: {
            const size_t cols = size_t(n.dims.back());
            const size_t rows = len / cols;
            for (size_t r = 0; r < rows; ++r) {
                const T* xr = a + r * cols;
                T* yr = out + r * cols;
                T mean = T(0);
                for (size_t j = 0; j < cols; ++j) mean += xr[j];
                mean /= T(cols);
                T var = T(0);
                for (size_t j = 0; j < cols; ++j) {
                    const T d = xr[j] - mean;
                    var += d * d;
                }
                var /= T(cols);
                const T inv = T(1) / T(std::sqrt(double(var) + kLnEps));
                for (size_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mean) * inv;
            }
            break;
        }
        case Op::MeanTokens: {
            const auto& ad = g_->node(n.a).dims;
            const size_t t = size_t(ad[0]), d = size_t(ad[1]);
            const T inv = T(1) / T(t);
            for (int s = 0; s < batch_; ++s) {
                const T* as = a + size_t(s) * t * d;
                T* os = out + size_t(s) * d;
                for (size_t j = 0; j < d; ++j) os[j] = T(0);
                for (size_t tt = 0; tt < t; ++tt)
                    for (size_t j = 0; j < d; ++j) os[j] += as[tt * d + j] * inv;
            }
            break;
        }
        case Op::Reshape:
            std::memcpy(out, a, len * sizeof(T));
            break;
        case Op::Input:
        case Op::Param:
            break;
    }
}

template <typename T>
void Executor<T>::seed_output_grad(const OutputSelector& sel, std::vector<T>& seed) const {
    const int out_node = g_->output_node();
    const size_t len = vals_[size_t(out_node)].len;
    const T* out = vals_[size_t(out_node)].ptr;
    const int cols = int(len) / batch_;
    seed.assign(len, T(0));
    switch (sel.kind) {
        case OutputSelector::Kind::PredictedLogit: {
            if (!sel.fixed_classes.empty() && int(sel.fixed_classes.size()) != batch_)
                throw std::invalid_argument("selector: fixed_classes size mismatch");
            const T w = T(1) / T(batch_);
            for (int s = 0; s < batch_; ++s) {
                int c = sel.fixed_classes.empty() ? argmax_row(out + size_t(s) * size_t(cols), cols)
                                                  : sel.fixed_classes[size_t(s)];
                if (c < 0 || c >= cols) throw std::invalid_argument("selector index out of range");
                seed[size_t(s) * size_t(cols) + size_t(c)] = w;
            }
            break;
        }
        case OutputSelector::Kind::ClassLogit: {
            if (sel.class_index < 0 || sel.class_index >= cols)
                throw std::invalid_argument("selector index out of range");
            const T w = T(1) / T(batch_);
            for (int s = 0; s < batch_; ++s) seed[size_t(s) * size_t(cols) + size_t(sel.class_index)] = w;
            break;
        }
        case OutputSelector::Kind::CrossEntropy: {
            if (int(sel.labels.size()) != batch_)
                throw std::invalid_argument("selector: labels size mismatch");
            const T w = T(1) / T(batch_);
            for (int s = 0; s < batch_; ++s) {
                const int y = sel.labels[size_t(s)];
                if (y < 0 || y >= cols) throw std::invalid_argument("selector index out of range");
                const T* row = out + size_t(s) * size_t(cols);
                T mx = row[0];
                for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
                T sum = T(0);
                for (int j = 0; j < cols; ++j) sum += T(std::exp(double(row[j] - mx)));
                for (int j = 0; j < cols; ++j) {
                    T p = T(std::exp(double(row[j] - mx))) / sum;
                    seed[size_t(s) * size_t(cols) + size_t(j)] = w * (p - T(j == y ? 1 : 0));
                }
            }
            break;
        }
        case OutputSelector::Kind::Mse: {
            if (sel.targets.size() != len) throw std::invalid_argument("selector: targets size mismatch");
            const T w = T(2) / T(batch_);
            for (size_t j = 0; j < len; ++j) seed[j] = w * (out[j] - T(sel.targets[j]));
            break;
        }
        case OutputSelector::Kind::SumOutput:
            for (size_t j = 0; j < len; ++j) seed[j] = T(1);
            break;
        case OutputSelector::Kind::Custom:
            if (sel.seed.size() != len) throw std::invalid_argument("selector: custom seed size mismatch");
            for (size_t j = 0; j < len; ++j) seed[j] = T(sel.seed[j]);
            break;
    }
}

template <typename T>
double Executor<T>::selector_value(const OutputSelector& sel) const {
    if (!has_values_) throw std::logic_error("executor: selector before forward");
    const int out_node = g_->output_node();
    const size_t len = vals_[size_t(out_node)].len;
    const T* out = vals_[size_t(out_node)].ptr;
    const int cols = int(len) / batch_;
    switch (sel.kind) {
        case OutputSelector::Kind::PredictedLogit: {
            double v = 0;
            for (int s = 0; s < batch_; ++s) {
                int c = sel.fixed_classes.empty() ? argmax_row(out + size_t(s) * size_t(cols), cols)
                                                  : sel.fixed_classes.at(size_t(s));
                if (c < 0 || c >= cols) throw std::invalid_argument("selector index out of range");
                v += double(out[size_t(s) * size_t(cols) + size_t(c)]);
            }
            return v / batch_;
        }
        case OutputSelector::Kind::ClassLogit: {
            if (sel.class_index < 0 || sel.class_index >= cols)
                throw std::invalid_argument("selector index out of range");
            double v = 0;
            for (int s = 0; s < batch_; ++s) v += double(out[size_t(s) * size_t(cols) + size_t(sel.class_index)]);
            return v / batch_;
        }
        case OutputSelector::Kind::CrossEntropy: {
            double v = 0;
            for (int s = 0; s < batch_; ++s) {
                const int y = sel.labels.at(size_t(s));
                const T* row = out + size_t(s) * size_t(cols);
                double mx = double(row[0]);
                for (int j = 1; j < cols; ++j) mx = std::max(mx, double(row[j]));
                double sum = 0;
                for (int j = 0; j < cols; ++j) sum += std::exp(double(row[j]) - mx);
                v += std::log(sum) + mx - double(row[y]);
            }
            return v / batch_;
        }
        case OutputSelector::Kind::Mse: {
            double v = 0;
            for (size_t j = 0; j < len; ++j) {
                const double d = double(out[j]) - double(sel.targets.at(j));
                v += d * d;
            }
            return v / batch_;
        }
        case OutputSelector::Kind::SumOutput: {
            double v = 0;
            for (size_t j = 0; j < len; ++j) v += double(out[j]);
            return v;
        }
        case OutputSelector::Kind::Custom: {
            double v = 0;
            for (size_t j = 0; j < len; ++j) v += double(out[j]) * double(sel.seed.at(j));
            return v;
        }
    }
    return 0;
}

template <typename T>
void Executor<T>::backward(const OutputSelector& sel) {
    if (!has_values_) throw std::logic_error("backward called before forward");
    const int n_nodes = int(g_->nodes().size());
    const int out_node = g_->output_node();

    // ancestors of the output: the only nodes that need gradient work
    std::vector<uint8_t> need(size_t(n_nodes), 0);
    need[size_t(out_node)] = 1;
    for (int i = out_node; i >= 0; --i) {
        if (!need[size_t(i)]) continue;
        const Node& n = g_->node(i);
        if (n.a >= 0) need[size_t(n.a)] = 1;
        if (n.b >= 0) need[size_t(n.b)] = 1;
    }

    grads_.assign(size_t(n_nodes), {});
    for (int i = 0; i < n_nodes; ++i)
        if (need[size_t(i)]) grads_[size_t(i)].assign(node_len(i), T(0));

    seed_output_grad(sel, grads_[size_t(out_node)]);

    for (int i = out_node; i >= 0; --i) {
        if (!need[size_t(i)]) continue;
        backward_node(i);
    }
}

template <typename T>
void Executor<T>::backward_node(int i) {
    const Node& n = g_->node(i);
    if (n.op == Op::Input || n.op == Op::Param) return;
    const T* gy = grads_[size_t(i)].data();
    const size_t len = grads_[size_t(i)].size();
    const T* a = vals_[size_t(n.a)].ptr;
    const T* b = n.b >= 0 ? vals_[size_t(n.b)].ptr : nullptr;
    T* ga = grads_[size_t(n.a)].data();
    T* gb = n.b >= 0 ? grads_[size_t(n.b)].data() : nullptr;

    switch (n.op) {
        case Op::MatMul: {
            const auto& ad = g_->node(n.a).dims;
            const size_t k = size_t(ad.back());
            const size_t cols = size_t(n.dims.back());
            const size_t rows = len / cols;
            mm_grad_a(gy, b, ga, rows, k, cols);
            mm_grad_b(a, gy, gb, rows, k, cols);
            break;
        }
        case Op::Bmm: {
            const auto& ad = g_->node(n.a).dims;
            const auto& bd = g_->node(n.b).dims;
            const size_t m = size_t(ad[0]), k = size_t(ad[1]), c = size_t(bd[1]);
            // dA[m,k] += dC[m,c] * B[k,c]^T ; dB[k,c] += A[m,k]^T * dC[m,c]
            for (int s = 0; s < batch_; ++s) {
                const T* as = a + size_t(s) * m * k;
                const T* bs = b + size_t(s) * k * c;
                const T* gys = gy + size_t(s) * m * c;
                T* gas = ga + size_t(s) * m * k;
                T* gbs = gb + size_t(s) * k * c;
                for (size_t i2 = 0; i2 < m; ++i2)
                    for (size_t t = 0; t < k; ++t) {
                        T s2 = T(0);
                        for (size_t j = 0; j < c; ++j) s2 += gys[i2 * c + j] * bs[t * c + j];
                        gas[i2 * k + t] += s2;
                    }
                for (size_t i2 = 0; i2 < m; ++i2)
                    for (size_t t = 0; t < k; ++t) {
                        const T av = as[i2 * k + t];
                        for (size_t j = 0; j < c; ++j) gbs[t * c + j] += av * gys[i2 * c + j];
                    }
            }
            break;
        }
        case Op::BmmNT: {
            const auto& ad = g_->node(n.a).dims;
            const auto& bd = g_->node(n.b).dims;
            const size_t m = size_t(ad[0]), k = size_t(ad[1]), c = size_t(bd[0]);
            // C[m,c] = A[m,k] * B[c,k]^T ; dA = dC * B ; dB = dC^T * A
            for (int s = 0; s < batch_; ++s) {
                const T* as = a + size_t(s) * m * k;
                const T* bs = b + size_t(s) * c * k;
                const T* gys = gy + size_t(s) * m * c;
                T* gas = ga + size_t(s) * m * k;
                T* gbs = gb + size_t(s) * c * k;
                for (size_t i2 = 0; i2 < m; ++i2)
                    for (size_t j = 0; j < c; ++j) {
                        const T g = gys[i2 * c + j];
                        for (size_t t = 0; t < k; ++t) {
                            gas[i2 * k + t] += g * bs[j * k + t];
                            gbs[j * k + t] += g * as[i2 * k + t];
                        }
                    }
            }
            break;
        }
        case Op::Add:
            for (size_t j = 0; j < len; ++j) {
                ga[j] += gy[j];
                gb[j] += gy[j];
            }
            break;
        case Op::AddBias: {
            const size_t cols = size_t(n.dims.back());
            const size_t rows = len / cols;
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < cols; ++j) {
                    ga[r * cols + j] += gy[r * cols + j];
                    gb[j] += gy[r * cols + j];
                }
            break;
        }
        case Op::AddTable: {
            const size_t per = len / size_t(batch_);
            for (int s = 0; s < batch_; ++s)
                for (size_t j = 0; j < per; ++j) {
                    ga[size_t(s) * per + j] += gy[size_t(s) * per + j];
                    gb[j] += gy[size_t(s) * per + j];
                }
            break;
        }
        case Op::Scale:
            for (size_t j = 0; j < len; ++j) ga[j] += T(n.coeff) * gy[j];
            break;
        case Op::Gate: {
            const T m = T(gate_mult_.empty() ? n.coeff : gate_mult_[size_t(n.gate)]);
            for (size_t j = 0; j < len; ++j) ga[j] += m * gy[j];
            break;
        }
        case Op::Relu:
            for (size_t j = 0; j < len; ++j)
                if (a[j] > T(0)) ga[j] += gy[j];
            break;
        case Op::Gelu:
            for (size_t j = 0; j < len; ++j) {
                const double x = double(a[j]);
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                ga[j] += gy[j] * T(cdf + x * pdf);
            }
            break;
        case Op::Softmax: {
            const size_t cols = size_t(n.dims.back());
            const size_t rows = len / cols;
            const T* y = vals_[size_t(i)].ptr;
            for (size_t r = 0; r < rows; ++r) {
                const T* yr = y + r * cols;
                const T* gr = gy + r * cols;
                T dot = T(0);
                for (size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
                for (size_t j = 0; j < cols; ++j) ga[r * cols + j] += yr[j] * (gr[j] - dot);
            }
            break;
        }
        case Op::LayerNorm: {
            const size_t cols = size_t(n.dims.back());
            const size_t rows = len / cols;
            const T* y = vals_[size_t(i)].ptr;
            for (size_t r = 0; r < rows; ++r) {
                const T* xr = a + r * cols;
                const T* yr = y + r * cols;
                const T* gr = gy + r * cols;
                T mean = T(0);
                for (size_t j = 0; j < cols; ++j) mean += xr[j];
                mean /= T(cols);
                T var = T(0);
                for (size_t j = 0; j < cols; ++j) {
                    const T d = xr[j] - mean;
                    var += d * d;
                }
                var /= T(cols);
                const T inv = T(1) / T(std::sqrt(double(var) + kLnEps));
                T gmean = T(0), gydot = T(0);
                for (size_t j = 0; j < cols; ++j) {
                    gmean += gr[j];
                    gydot += gr[j] * yr[j];
                }
                gmean /= T(cols);
                gydot /= T(cols);
                for (size_t j = 0; j < cols; ++j)
                    ga[r * cols + j] += inv * (gr[j] - gmean - yr[j] * gydot);
            }
            break;
        }
        case Op::MeanTokens: {
            const auto& ad = g_->node(n.a).dims;
            const size_t t = size_t(ad[0]), d = size_t(ad[1]);
            const T inv = T(1) / T(t);
            for (int s = 0; s < batch_; ++s)
                for (size_t tt = 0; tt < t; ++tt)
                    for (size_t j = 0; j < d; ++j)
                        ga[(size_t(s) * t + tt) * d + j] += gy[size_t(s) * d + j] * inv;
            break;
        }
        case Op::Reshape:
            for (size_t j = 0; j < len; ++j) ga[j] += gy[j];
            break;
        case Op::Input:
        case Op::Param:
            break;
    }
}

template <typename T>
std::span<const T> Executor<T>::grad(int node) const {
    if (grads_.empty()) throw std::logic_error("executor: gradients requested before backward");
    return {grads_.at(size_t(node)).data(), grads_.at(size_t(node)).size()};
}

template <typename T>
std::span<const T> Executor<T>::param_grad(int param_index) const {
    return grad(g_->param_at(param_index).node);
}

double cross_entropy_loss(std::span<const float> logits, std::span<const int> labels, int classes) {
    const int batch = int(labels.size());
    double v = 0;
    for (int s = 0; s < batch; ++s) {
        const float* row = logits.data() + size_t(s) * size_t(classes);
        double mx = double(row[0]);
        for (int j = 1; j < classes; ++j) mx = std::max(mx, double(row[j]));
        double sum = 0;
        for (int j = 0; j < classes; ++j) sum += std::exp(double(row[j]) - mx);
        v += std::log(sum) + mx - double(row[labels[size_t(s)]]);
    }
    return v / batch;
}

double accuracy(std::span<const float> logits, std::span<const int> labels, int classes) {
    const int batch = int(labels.size());
    int hit = 0;
    for (int s = 0; s < batch; ++s)
        if (argmax_row(logits.data() + size_t(s) * size_t(classes), classes) == labels[size_t(s)]) ++hit;
    return double(hit) / batch;
}

template class Executor<float>;
template class Executor<double>;

}  // namespace layerrank
