#include "layerrank/modelzoo.hpp"

#include <cmath>
#include <stdexcept>

#include "layerrank/adam.hpp"

namespace layerrank {

namespace {

constexpr uint64_t kInitTag = 0x696e6974;    // derive the init stream
constexpr uint64_t kTrainTag = 0x747261696e;  // derive the batch/gate stream

Tensor randn(std::vector<int> shape, Rng& rng, double std_dev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = float(rng.normal(0.0, std_dev));
    return t;
}

int nonlinearity(Graph& g, int node, Activation act) {
    return act == Activation::Gelu ? g.gelu(node) : g.relu(node);
}

void build_mlp_like(Graph& g, const ModelSpec& spec, Rng& rng, bool residual, bool stochastic) {
    int x = g.input({2});
    int prev = 2;
    for (int i = 0; i < spec.depth; ++i) {
        const int width = spec.layer_sizes.at(size_t(i));
        const std::string base = (residual ? "block" : "hidden") + std::to_string(i);
        int w = g.param(base + ".w", randn({prev, width}, rng, std::sqrt(2.0 / prev)));
        int b = g.param(base + ".b", Tensor::zeros({width}));
        int lin = g.add_bias(g.matmul(x, w), b);
        int act = nonlinearity(g, lin, spec.activation);
        g.add_rankable_layer({base, g.node(w).param, {g.node(b).param}, lin, act});
        if (residual) {
            int shortcut = x;
            if (prev != width) {
                int p = g.param(base + ".proj.w", randn({prev, width}, rng, std::sqrt(1.0 / prev)));
                shortcut = g.matmul(x, p);
                g.add_rankable_layer({base + ".proj", g.node(p).param, {}, shortcut, shortcut});
            }
            int branch = stochastic ? g.gate(act, float(spec.survival_prob)) : act;
            x = g.add(shortcut, branch);
        } else {
            x = act;
        }
        prev = width;
    }
    int w = g.param("head.w", randn({prev, 2}, rng, std::sqrt(1.0 / prev)));
    int b = g.param("head.b", Tensor::zeros({2}));
    int logits = g.add_bias(g.matmul(x, w), b);
    g.add_rankable_layer({"head", g.node(w).param, {g.node(b).param}, logits, logits});
    g.set_output(logits);
}

void build_transfo(Graph& g, const ModelSpec& spec, Rng& rng, const BuildOptions& opts) {
    const int d = spec.model_dim();
    const int h = 2 * d;
    int x = g.input({2});
    int we = g.param("embed.w", randn({1, d}, rng, 1.0));
    int be = g.param("embed.b", Tensor::zeros({d}));
    int emb = g.add_bias(g.matmul(g.reshape(x, {2, 1}), we), be);
    int tok = emb;
    std::vector<int> embed_aux = {g.node(be).param};
    if (opts.positional) {
        int pos = g.param("embed.pos", randn({2, d}, rng, 1.0));
        tok = g.add_table(emb, pos);
        embed_aux.push_back(g.node(pos).param);
    }
    g.add_rankable_layer({"embed", g.node(we).param, embed_aux, emb, tok});

    const double proj_std = std::sqrt(0.5 / d);
    const double out_std = proj_std;
    // residual branches are damped so ADAM's fixed per-coordinate step does
    // not orbit the optimum on wide blocks
    const float branch_scale = float(1.0 / std::sqrt(4.0 * spec.depth));
    for (int i = 0; i < spec.depth; ++i) {
        const std::string base = "block" + std::to_string(i);
        int ln1 = g.layer_norm(tok);
        int wq = g.param(base + ".wq", randn({d, d}, rng, proj_std));
        int wk = g.param(base + ".wk", randn({d, d}, rng, proj_std));
        int wv = g.param(base + ".wv", randn({d, d}, rng, proj_std));
        int q = g.matmul(ln1, wq);
        int k = g.matmul(ln1, wk);
        int v = g.matmul(ln1, wv);
        g.add_rankable_layer({base + ".wq", g.node(wq).param, {}, q, q});
        g.add_rankable_layer({base + ".wk", g.node(wk).param, {}, k, k});
        g.add_rankable_layer({base + ".wv", g.node(wv).param, {}, v, v});
        int att = g.softmax(g.scale(g.bmm_nt(q, k), float(1.0 / std::sqrt(double(d)))));
        int ctx = g.bmm(att, v);
        int wo = g.param(base + ".wo", randn({d, d}, rng, out_std));
        int o = g.matmul(ctx, wo);
        g.add_rankable_layer({base + ".wo", g.node(wo).param, {}, o, o});
        tok = g.add(tok, g.scale(o, branch_scale));

        int ln2 = g.layer_norm(tok);
        int w1 = g.param(base + ".mlp1.w", randn({d, h}, rng, std::sqrt(2.0 / d)));
        int b1 = g.param(base + ".mlp1.b", Tensor::zeros({h}));
        int lin1 = g.add_bias(g.matmul(ln2, w1), b1);
        int act1 = g.gelu(lin1);
        g.add_rankable_layer({base + ".mlp1", g.node(w1).param, {g.node(b1).param}, lin1, act1});
        int w2 = g.param(base + ".mlp2.w", randn({h, d}, rng, std::sqrt(1.0 / h)));
        int b2 = g.param(base + ".mlp2.b", Tensor::zeros({d}));
        int lin2 = g.add_bias(g.matmul(act1, w2), b2);
        g.add_rankable_layer({base + ".mlp2", g.node(w2).param, {g.node(b2).param}, lin2, lin2});
        tok = g.add(tok, g.scale(lin2, branch_scale));
    }
    int pooled = g.mean_tokens(tok);
    int hw = g.param("head.w", randn({d, 2}, rng, std::sqrt(1.0 / d)));
    int hb = g.param("head.b", Tensor::zeros({2}));
    int logits = g.add_bias(g.matmul(pooled, hw), hb);
    g.add_rankable_layer({"head", g.node(hw).param, {g.node(hb).param}, logits, logits});
    g.set_output(logits);
}

}  // namespace

const char* family_name(Family f) {
    switch (f) {
        case Family::Vanilla: return "vanilla";
        case Family::Skip: return "skip";
        case Family::SkipSD: return "skip_sd";
        case Family::Transfo: return "transfo";
    }
    return "?";
}

Family family_from_name(const std::string& name) {
    if (name == "vanilla") return Family::Vanilla;
    if (name == "skip") return Family::Skip;
    if (name == "skip_sd") return Family::SkipSD;
    if (name == "transfo") return Family::Transfo;
    throw std::invalid_argument("unknown architecture family: " + name);
}

ModelSpec sample_spec(Family family, Rng& rng) {
    ModelSpec spec;
    spec.family = family;
    spec.depth = int(rng.range(2, 6));
    if (family == Family::Transfo) {
        spec.layer_sizes = {int(rng.range(8, 128))};
        spec.activation = Activation::Gelu;
    } else {
        spec.layer_sizes.resize(size_t(spec.depth));
        for (auto& w : spec.layer_sizes) w = int(rng.range(8, 128));
    }
    spec.seed = rng.next_u64();
    return spec;
}

Graph build(const ModelSpec& spec, const BuildOptions& opts) {
    if (spec.depth < 1) throw std::invalid_argument("build: depth must be positive");
    Graph g;
    Rng rng(mix_seed({spec.seed, kInitTag}));
    switch (spec.family) {
        case Family::Vanilla:
            build_mlp_like(g, spec, rng, false, false);
            break;
        case Family::Skip:
            build_mlp_like(g, spec, rng, true, false);
            break;
        case Family::SkipSD:
            build_mlp_like(g, spec, rng, true, true);
            break;
        case Family::Transfo:
            build_transfo(g, spec, rng, opts);
            break;
        default:
            throw std::invalid_argument("build: unknown family");
    }
    return g;
}

TrainedModel train(Graph graph, const ModelSpec& spec, const MoonsDataset& data,
                   const TrainConfig& cfg) {
    if (data.n_train() == 0) throw std::invalid_argument("train: empty dataset");
    Rng rng(mix_seed({spec.seed, kTrainTag}));
    Executor<float> ex(graph);
    auto& params = graph.params();
    AdamState opt = AdamState::init(params, cfg.lr);

    const int n = data.n_train();
    std::vector<size_t> order(size_t(n), 0);
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int b = std::min(cfg.batch_size, n - start);
            std::vector<float> bx(size_t(b) * 2, 0.0f);
            std::vector<int> by(size_t(b), 0);
            for (int i = 0; i < b; ++i) {
                const size_t src = order[size_t(start + i)];
                bx[size_t(2 * i)] = data.train_x[2 * src];
                bx[size_t(2 * i + 1)] = data.train_x[2 * src + 1];
                by[size_t(i)] = data.train_y[src];
            }
            if (spec.family == Family::SkipSD) {
                for (int slot = 0; slot < graph.n_gates(); ++slot)
                    ex.set_gate(slot, rng.bernoulli(spec.survival_prob) ? 1.0f : 0.0f);
            }
            ex.forward(bx, b);
            const double loss = cross_entropy_loss(
                std::span<const float>(ex.output().data(), ex.output().size()), by, 2);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                         std::to_string(epoch));
            ex.backward(OutputSelector::cross_entropy(by));
            std::vector<std::vector<float>> grads(params.size());
            for (size_t p = 0; p < params.size(); ++p) {
                auto gp = ex.param_grad(int(p));
                grads[p].assign(gp.begin(), gp.end());
            }
            adam_step(opt, params, grads);
        }
    }
    ex.reset_gates();

    TrainedModel m;
    m.spec = spec;
    m.graph = std::move(graph);
    m.train_accuracy = model_accuracy(m.graph, data.train_x, data.train_y);
    m.test_accuracy = model_accuracy(m.graph, data.test_x, data.test_y);
    return m;
}

std::vector<float> model_logits(const Graph& g, std::span<const float> x, int batch) {
    Executor<float> ex(g);
    ex.forward(x, batch);
    return std::vector<float>(ex.output().begin(), ex.output().end());
}

double model_accuracy(const Graph& g, std::span<const float> x, std::span<const int> y) {
    auto logits = model_logits(g, x, int(y.size()));
    return accuracy(logits, y, g.output_dim());
}

}  // namespace layerrank
