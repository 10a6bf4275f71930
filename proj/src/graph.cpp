#include "layerrank/graph.hpp"

#include <stdexcept>

namespace layerrank {

int Graph::add_node(Node n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

void Graph::check_node(int i) const {
    if (i < 0 || i >= int(nodes_.size())) throw std::invalid_argument("graph: bad node id");
}

void Graph::check_per_sample(int i, const char* what) const {
    check_node(i);
    if (!nodes_[size_t(i)].per_sample)
        throw std::invalid_argument(std::string("graph: ") + what + " expects a per-sample operand");
}

void Graph::check_param_node(int i, const char* what) const {
    check_node(i);
    if (nodes_[size_t(i)].op != Op::Param)
        throw std::invalid_argument(std::string("graph: ") + what + " expects a parameter operand");
}

int Graph::input(std::vector<int> dims) {
    if (input_ != -1) throw std::logic_error("graph: input already declared");
    Node n;
    n.op = Op::Input;
    n.dims = std::move(dims);
    input_ = add_node(std::move(n));
    return input_;
}

int Graph::param(const std::string& name, Tensor init) {
    if (find_param(name) != -1) throw std::invalid_argument("graph: duplicate parameter " + name);
    Node n;
    n.op = Op::Param;
    n.dims = init.shape;
    n.per_sample = false;
    n.param = int(params_.size());
    n.tag = name;
    int node = add_node(std::move(n));
    params_.push_back(Parameter{name, std::move(init), node});
    return node;
}

int Graph::matmul(int a, int w) {
    check_per_sample(a, "matmul");
    check_param_node(w, "matmul");
    const auto& da = nodes_[size_t(a)].dims;
    const auto& dw = nodes_[size_t(w)].dims;
    if (da.empty() || dw.size() != 2 || da.back() != dw[0])
        throw std::invalid_argument("graph: matmul shape mismatch " + shape_str(da) + " x " + shape_str(dw));
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = w;
    n.dims = da;
    n.dims.back() = dw[1];
    return add_node(std::move(n));
}

int Graph::bmm(int a, int b) {
    check_per_sample(a, "bmm");
    check_per_sample(b, "bmm");
    const auto& da = nodes_[size_t(a)].dims;
    const auto& db = nodes_[size_t(b)].dims;
    if (da.size() != 2 || db.size() != 2 || da[1] != db[0])
        throw std::invalid_argument("graph: bmm shape mismatch");
    Node n;
    n.op = Op::Bmm;
    n.a = a;
    n.b = b;
    n.dims = {da[0], db[1]};
    return add_node(std::move(n));
}

int Graph::bmm_nt(int a, int b) {
    check_per_sample(a, "bmm_nt");
    check_per_sample(b, "bmm_nt");
    const auto& da = nodes_[size_t(a)].dims;
    const auto& db = nodes_[size_t(b)].dims;
    if (da.size() != 2 || db.size() != 2 || da[1] != db[1])
        throw std::invalid_argument("graph: bmm_nt shape mismatch");
    Node n;
    n.op = Op::BmmNT;
    n.a = a;
    n.b = b;
    n.dims = {da[0], db[0]};
    return add_node(std::move(n));
}

int Graph::add(int a, int b) {
    check_per_sample(a, "add");
    check_per_sample(b, "add");
    if (nodes_[size_t(a)].dims != nodes_[size_t(b)].dims)
        throw std::invalid_argument("graph: add shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.dims = nodes_[size_t(a)].dims;
    return add_node(std::move(n));
}

int Graph::add_bias(int a, int bias) {
    check_per_sample(a, "add_bias");
    check_param_node(bias, "add_bias");
    const auto& da = nodes_[size_t(a)].dims;
    const auto& db = nodes_[size_t(bias)].dims;
    if (da.empty() || db.size() != 1 || da.back() != db[0])
        throw std::invalid_argument("graph: add_bias shape mismatch");
    Node n;
    n.op = Op::AddBias;
    n.a = a;
    n.b = bias;
    n.dims = da;
    return add_node(std::move(n));
}

int Graph::add_table(int a, int table) {
    check_per_sample(a, "add_table");
    check_param_node(table, "add_table");
    if (nodes_[size_t(a)].dims != nodes_[size_t(table)].dims)
        throw std::invalid_argument("graph: add_table shape mismatch");
    Node n;
    n.op = Op::AddTable;
    n.a = a;
    n.b = table;
    n.dims = nodes_[size_t(a)].dims;
    return add_node(std::move(n));
}

int Graph::scale(int a, float c) {
    check_per_sample(a, "scale");
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.coeff = c;
    n.dims = nodes_[size_t(a)].dims;
    return add_node(std::move(n));
}

int Graph::gate(int a, float eval_mult) {
    check_per_sample(a, "gate");
    Node n;
    n.op = Op::Gate;
    n.a = a;
    n.coeff = eval_mult;
    n.gate = n_gates_++;
    n.dims = nodes_[size_t(a)].dims;
    return add_node(std::move(n));
}

int Graph::relu(int a) {
    check_per_sample(a, "relu");
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.dims = nodes_[size_t(a)].dims;
    return add_node(std::move(n));
}

int Graph::gelu(int a) {
    check_per_sample(a, "gelu");
    Node n;
    n.op = Op::Gelu;
    n.a = a;
    n.dims = nodes_[size_t(a)].dims;
    return add_node(std::move(n));
}

int Graph::softmax(int a) {
    check_per_sample(a, "softmax");
    if (nodes_[size_t(a)].dims.empty()) throw std::invalid_argument("graph: softmax needs a last dim");
    Node n;
    n.op = Op::Softmax;
    n.a = a;
    n.dims = nodes_[size_t(a)].dims;
    return add_node(std::move(n));
}

int Graph::layer_norm(int a) {
    check_per_sample(a, "layer_norm");
    if (nodes_[size_t(a)].dims.empty()) throw std::invalid_argument("graph: layer_norm needs a last dim");
    Node n;
    n.op = Op::LayerNorm;
    n.a = a;
    n.dims = nodes_[size_t(a)].dims;
    return add_node(std::move(n));
}

int Graph::mean_tokens(int a) {
    check_per_sample(a, "mean_tokens");
    const auto& da = nodes_[size_t(a)].dims;
    if (da.size() != 2) throw std::invalid_argument("graph: mean_tokens expects [t,d]");
    Node n;
    n.op = Op::MeanTokens;
    n.a = a;
    n.dims = {da[1]};
    return add_node(std::move(n));
}

int Graph::reshape(int a, std::vector<int> dims) {
    check_per_sample(a, "reshape");
    if (Tensor::numel_of(dims) != per_sample_numel(a))
        throw std::invalid_argument("graph: reshape element count mismatch");
    Node n;
    n.op = Op::Reshape;
    n.a = a;
    n.dims = std::move(dims);
    return add_node(std::move(n));
}

void Graph::set_output(int node) {
    check_per_sample(node, "output");
    output_ = node;
}

int Graph::input_dim() const {
    if (input_ == -1) throw std::logic_error("graph has no input node");
    return int(per_sample_numel(input_));
}

int Graph::output_dim() const {
    if (output_ == -1) throw std::logic_error("graph has no output node");
    return int(per_sample_numel(output_));
}

int Graph::find_param(const std::string& name) const {
    for (size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return int(i);
    return -1;
}

const std::vector<uint8_t>& Graph::downstream_mask(int node) const {
    auto it = downstream_cache_.find(node);
    if (it != downstream_cache_.end()) return it->second;
    std::vector<uint8_t> mask(nodes_.size(), 0);
    if (node >= 0 && node < int(nodes_.size())) {
        mask[size_t(node)] = 1;
        for (size_t i = size_t(node) + 1; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            if ((n.a >= 0 && mask[size_t(n.a)]) || (n.b >= 0 && mask[size_t(n.b)])) mask[i] = 1;
        }
    }
    return downstream_cache_.emplace(node, std::move(mask)).first->second;
}

int64_t Graph::total_weight_count() const {
    int64_t n = 0;
    for (const auto& l : layers_) n += params_[size_t(l.weight_param)].value.numel();
    return n;
}

}  // namespace layerrank
