#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "layerrank/tensor.hpp"

namespace layerrank {

// Op set: the minimal closure over the four architecture families. Attention
// is composed from matmul/bmm/softmax rather than being a fused op.
enum class Op {
    Input,
    Param,
    MatMul,     // per-sample [..,k] x shared [k,n] -> [..,n]
    Bmm,        // per-sample [m,k] x per-sample [k,n] -> [m,n]
    BmmNT,      // per-sample [m,k] x per-sample [n,k] -> [m,n]
    Add,        // elementwise, same dims
    AddBias,    // [..,n] + shared [n]
    AddTable,   // [t,d] + shared [t,d]
    Scale,      // x * coeff
    Gate,       // x * runtime multiplier (stochastic depth)
    Relu,
    Gelu,
    Softmax,    // last dim
    LayerNorm,  // last dim, non-affine, eps 1e-5
    MeanTokens, // [t,d] -> [d]
    Reshape,
};

struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int param = -1;          // Param nodes
    int gate = -1;           // Gate nodes: slot index
    float coeff = 1.0f;      // Scale factor / Gate evaluation multiplier
    std::vector<int> dims;   // per-sample dims; batch axis implicit
    bool per_sample = true;  // false only for Param nodes
    std::string tag;
};

struct Parameter {
    std::string name;
    Tensor value;
    int node = -1;
};

// One parameterized linear operator plus its activation site. The unit of
// perturbation, ranking, and budgeting.
struct RankableLayer {
    std::string name;
    int weight_param = -1;              // exactly one weight tensor
    std::vector<int> aux_params;        // bias / positional table owned here
    int linear_node = -1;               // output of the linear op
    int activation_node = -1;           // post-nonlinearity site
};

class Graph {
public:
    // ---- builders (shape-checked; nodes are appended in topological order)
    int input(std::vector<int> dims);
    int param(const std::string& name, Tensor init);
    int matmul(int a, int w);
    int bmm(int a, int b);
    int bmm_nt(int a, int b);
    int add(int a, int b);
    int add_bias(int a, int bias);
    int add_table(int a, int table);
    int scale(int a, float c);
    int gate(int a, float eval_mult);
    int relu(int a);
    int gelu(int a);
    int softmax(int a);
    int layer_norm(int a);
    int mean_tokens(int a);
    int reshape(int a, std::vector<int> dims);
    void set_output(int node);

    int add_rankable_layer(RankableLayer l) {
        layers_.push_back(std::move(l));
        return int(layers_.size()) - 1;
    }

    // ---- accessors
    const std::vector<Node>& nodes() const { return nodes_; }
    const Node& node(int i) const { return nodes_.at(size_t(i)); }
    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }
    const Parameter& param_at(int i) const { return params_.at(size_t(i)); }
    int input_node() const { return input_; }
    int output_node() const { return output_; }
    int n_gates() const { return n_gates_; }
    const std::vector<RankableLayer>& layers() const { return layers_; }
    const RankableLayer& layer(int i) const { return layers_.at(size_t(i)); }
    int n_layers() const { return int(layers_.size()); }
    int input_dim() const;
    int output_dim() const;
    int find_param(const std::string& name) const;  // -1 if absent

    int64_t per_sample_numel(int node) const { return Tensor::numel_of(nodes_[size_t(node)].dims); }

    // Nodes whose value depends on `node` (inclusive). Cached; a Graph is
    // single-writer so the cache needs no locking.
    const std::vector<uint8_t>& downstream_mask(int node) const;

    // Sum of weight-tensor sizes over rankable layers.
    int64_t total_weight_count() const;

private:
    int add_node(Node n);
    void check_node(int i) const;
    void check_per_sample(int i, const char* what) const;
    void check_param_node(int i, const char* what) const;

    std::vector<Node> nodes_;
    std::vector<Parameter> params_;
    std::vector<RankableLayer> layers_;
    int input_ = -1;
    int output_ = -1;
    int n_gates_ = 0;
    mutable std::unordered_map<int, std::vector<uint8_t>> downstream_cache_;
};

}  // namespace layerrank
