#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "layerrank/graph.hpp"

namespace layerrank {

// Reduces the output tensor to the scalar that gets differentiated.
// PredictedLogit (batch mean of each sample's chosen-class logit) is the
// default throughout the criteria pipeline; when `fixed_classes` is set the
// chosen class is pinned there instead of re-running argmax, which keeps the
// scalar smooth along perturbation paths.
struct OutputSelector {
    enum class Kind { PredictedLogit, ClassLogit, CrossEntropy, Mse, SumOutput, Custom };
    Kind kind = Kind::PredictedLogit;
    int class_index = -1;             // ClassLogit
    std::vector<int> labels;          // CrossEntropy: one label per sample
    std::vector<float> targets;       // Mse: batch x out_dim
    std::vector<float> seed;          // Custom: dScalar/dOutput, batch x out_dim
    std::vector<int> fixed_classes;   // PredictedLogit: pinned class per sample

    static OutputSelector predicted() { return {}; }
    static OutputSelector predicted(std::vector<int> classes) {
        OutputSelector s;
        s.fixed_classes = std::move(classes);
        return s;
    }
    static OutputSelector class_logit(int c) {
        OutputSelector s;
        s.kind = Kind::ClassLogit;
        s.class_index = c;
        return s;
    }
    static OutputSelector cross_entropy(std::vector<int> labels) {
        OutputSelector s;
        s.kind = Kind::CrossEntropy;
        s.labels = std::move(labels);
        return s;
    }
    static OutputSelector mse(std::vector<float> targets) {
        OutputSelector s;
        s.kind = Kind::Mse;
        s.targets = std::move(targets);
        return s;
    }
    static OutputSelector sum() {
        OutputSelector s;
        s.kind = Kind::SumOutput;
        return s;
    }
    static OutputSelector custom(std::vector<float> seed) {
        OutputSelector s;
        s.kind = Kind::Custom;
        s.seed = std::move(seed);
        return s;
    }
};

// Argmax with NaN-tolerant comparison semantics: an element wins only by
// strictly comparing greater, so non-finite logits never take over index 0.
int argmax_row(const float* row, int n);
int argmax_row(const double* row, int n);

// Evaluates a graph for a batch. Owns per-node value/grad buffers; values of
// nodes untouched by a perturbation can be borrowed from a clean executor so
// only the downstream slice is recomputed. Instantiated for float (the
// engine's native width) and double (the finite-difference oracle path).
template <typename T>
class Executor {
public:
    struct Hooks {
        // node id -> mutation applied right after that node's values are set
        std::unordered_map<int, std::function<void(std::span<T>)>> at;
    };

    explicit Executor(const Graph& g) : g_(&g) {}

    // nullptr restores the graph's own parameters.
    void set_param_override(const std::vector<Tensor>* params) { override_ = params; }
    void set_gate(int slot, float m);
    void reset_gates();
    void set_check_finite(bool on) { check_finite_ = on; }

    void forward(std::span<const float> input, int batch, const Hooks* hooks = nullptr);

    // Recomputes only nodes downstream of dirty_node, borrowing everything
    // else from `clean` (which must outlive this executor's results). For a
    // Param dirty node the override supplies the perturbed tensor; for a
    // per-sample node `hook` mutates a copy of the clean values first.
    void forward_from(const Executor& clean, int dirty_node,
                      const std::function<void(std::span<T>)>& hook = nullptr);

    std::span<const T> values(int node) const;
    std::span<const T> output() const;
    int batch() const { return batch_; }

    double selector_value(const OutputSelector& sel) const;
    void backward(const OutputSelector& sel);
    std::span<const T> grad(int node) const;
    std::span<const T> param_grad(int param_index) const;

    const Graph& graph() const { return *g_; }

private:
    struct Buf {
        std::vector<T> own;
        const T* ptr = nullptr;
        size_t len = 0;
    };

    size_t node_len(int i) const;
    void ensure_own(int i);
    void compute_node(int i, const Hooks* hooks);
    void backward_node(int i);
    void seed_output_grad(const OutputSelector& sel, std::vector<T>& seed) const;
    void bind_param(int i);

    const Graph* g_;
    const std::vector<Tensor>* override_ = nullptr;
    bool check_finite_ = true;
    int batch_ = 0;
    bool has_values_ = false;
    std::vector<Buf> vals_;
    std::vector<std::vector<T>> grads_;
    std::vector<float> gate_mult_;        // per gate slot; empty -> graph defaults
    std::vector<T> param_cast_;           // double path: upcast parameter storage
    std::vector<size_t> param_cast_off_;
};

// Training losses on raw logit arrays (row-major batch x classes).
double cross_entropy_loss(std::span<const float> logits, std::span<const int> labels, int classes);
double accuracy(std::span<const float> logits, std::span<const int> labels, int classes);

extern template class Executor<float>;
extern template class Executor<double>;

}  // namespace layerrank
