#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "layerrank/adam.hpp"
#include "layerrank/exec.hpp"
#include "layerrank/graph.hpp"
#include "layerrank/rng.hpp"

using namespace layerrank;

namespace {

Tensor randn_tensor(std::vector<int> shape, Rng& rng, double std_dev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = float(rng.normal(0.0, std_dev));
    return t;
}

// Plain MLP builder used across the suite: widths = hidden widths, relu after
// each hidden linear, linear head to 2 logits.
struct Mlp {
    Graph g;
    std::vector<int> hidden_acts;
    Mlp(const std::vector<int>& widths, uint64_t seed, bool use_gelu = false) {
        Rng rng(seed);
        int x = g.input({2});
        int prev = 2;
        for (size_t i = 0; i < widths.size(); ++i) {
            int w = g.param("l" + std::to_string(i) + ".w",
                            randn_tensor({prev, widths[i]}, rng, std::sqrt(2.0 / prev)));
            int b = g.param("l" + std::to_string(i) + ".b", Tensor::zeros({widths[i]}));
            x = g.add_bias(g.matmul(x, w), b);
            x = use_gelu ? g.gelu(x) : g.relu(x);
            hidden_acts.push_back(x);
            prev = widths[i];
        }
        int w = g.param("head.w", randn_tensor({prev, 2}, rng, std::sqrt(1.0 / prev)));
        int b = g.param("head.b", Tensor::zeros({2}));
        x = g.add_bias(g.matmul(x, w), b);
        g.set_output(x);
    }
};

// Reference forward written as plain nested loops over raw weight arrays.
std::vector<double> mlp_oracle_forward(const Mlp& m, const std::vector<float>& input, bool use_gelu) {
    std::vector<double> act(input.begin(), input.end());
    const auto& params = m.g.params();
    const size_t n_layers = params.size() / 2;
    for (size_t l = 0; l < n_layers; ++l) {
        const Tensor& w = params[2 * l].value;
        const Tensor& b = params[2 * l + 1].value;
        const int in = w.shape[0], out = w.shape[1];
        std::vector<double> next(size_t(out), 0.0);
        for (int j = 0; j < out; ++j) {
            double s = double(b.data[size_t(j)]);
            for (int i = 0; i < in; ++i) s += act[size_t(i)] * double(w.data[size_t(i * out + j)]);
            next[size_t(j)] = s;
        }
        if (l + 1 < n_layers) {
            for (auto& v : next) {
                if (use_gelu)
                    v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
                else
                    v = v > 0 ? v : 0;
            }
        }
        act = std::move(next);
    }
    return act;
}

}  // namespace

TEST_CASE("forward: identity linear layer maps input to itself") {
    Graph g;
    int x = g.input({2});
    Tensor eye = Tensor::zeros({2, 2});
    eye.data[0] = 1.0f;
    eye.data[3] = 1.0f;
    int w = g.param("w", eye);
    g.set_output(g.matmul(x, w));

    Executor<float> ex(g);
    std::vector<float> in = {1.0f, 2.0f};
    ex.forward(in, 1);
    auto out = ex.output();
    CHECK(out[0] == doctest::Approx(1.0f));
    CHECK(out[1] == doctest::Approx(2.0f));
}

TEST_CASE("forward: graph without output node is an error") {
    Graph g;
    g.input({2});
    Executor<float> ex(g);
    std::vector<float> in = {0.0f, 0.0f};
    CHECK_THROWS_WITH_AS(ex.forward(in, 1), "graph has no output node", std::logic_error);
}

TEST_CASE("forward: input shape mismatch is an error") {
    Mlp m({4}, 7);
    Executor<float> ex(m.g);
    std::vector<float> in = {1.0f, 2.0f, 3.0f};
    CHECK_THROWS_AS(ex.forward(in, 1), std::invalid_argument);
}

TEST_CASE("forward: 2-layer MLP matches nested-loop oracle") {
    for (bool gelu : {false, true}) {
        Mlp m({16, 8}, 0, gelu);
        Executor<float> ex(m.g);
        Rng rng(99);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<float> in = {float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2))};
            ex.forward(in, 1);
            auto got = ex.output();
            auto want = mlp_oracle_forward(m, in, gelu);
            for (int j = 0; j < 2; ++j) {
                double denom = std::max(1.0, std::fabs(want[size_t(j)]));
                CHECK(std::fabs(double(got[size_t(j)]) - want[size_t(j)]) / denom < 1e-6);
            }
        }
    }
}

TEST_CASE("forward: batched evaluation equals per-sample evaluation") {
    Mlp m({12, 9}, 3);
    Executor<float> batched(m.g), single(m.g);
    Rng rng(5);
    std::vector<float> in(2 * 8);
    for (auto& v : in) v = float(rng.uniform(-2, 2));
    batched.forward(in, 8);
    for (int s = 0; s < 8; ++s) {
        std::vector<float> one(in.begin() + 2 * s, in.begin() + 2 * s + 2);
        single.forward(one, 1);
        CHECK(single.output()[0] == batched.output()[size_t(2 * s)]);
        CHECK(single.output()[1] == batched.output()[size_t(2 * s + 1)]);
    }
}

TEST_CASE("backward: f(w) = w*x with x=2 gives df/dw = 2") {
    Graph g;
    int x = g.input({1});
    int w = g.param("w", Tensor({1, 1}, {3.0f}));
    g.set_output(g.matmul(x, w));
    Executor<float> ex(g);
    std::vector<float> in = {2.0f};
    ex.forward(in, 1);
    ex.backward(OutputSelector::sum());
    CHECK(ex.param_grad(0)[0] == doctest::Approx(2.0f));
}

TEST_CASE("backward: inactive relu has zero gradient") {
    Graph g;
    int x = g.input({1});
    int w = g.param("w", Tensor({1, 1}, {-1.0f}));
    g.set_output(g.relu(g.matmul(x, w)));
    Executor<float> ex(g);
    std::vector<float> in = {1.0f};
    ex.forward(in, 1);
    ex.backward(OutputSelector::sum());
    CHECK(ex.param_grad(0)[0] == 0.0f);
}

TEST_CASE("backward before forward is an error") {
    Mlp m({4}, 1);
    Executor<float> ex(m.g);
    CHECK_THROWS_AS(ex.backward(OutputSelector::sum()), std::logic_error);
}

TEST_CASE("backward: selector class index out of range") {
    Mlp m({4}, 1);
    Executor<float> ex(m.g);
    std::vector<float> in = {0.5f, -0.5f};
    ex.forward(in, 1);
    CHECK_THROWS_AS(ex.backward(OutputSelector::class_logit(5)), std::invalid_argument);
}

TEST_CASE("backward: gradients match central finite differences on a 3-layer net") {
    Mlp m({10, 7, 5}, 42, /*gelu=*/true);
    Executor<float> ex(m.g);
    std::vector<float> in = {0.7f, -1.2f, 0.1f, 0.9f};
    ex.forward(in, 2);
    std::vector<int> cls(2);
    for (int s = 0; s < 2; ++s) cls[size_t(s)] = argmax_row(ex.output().data() + 2 * s, 2);
    auto sel = OutputSelector::predicted(cls);
    ex.backward(sel);

    // finite differences evaluated on the double-precision path
    Executor<double> fd(m.g);
    const double h = 1e-3;
    double max_rel = 0;
    auto& params = m.g.params();
    for (size_t p = 0; p < params.size(); ++p) {
        for (size_t i = 0; i < params[p].value.data.size(); ++i) {
            const float keep = params[p].value.data[i];
            params[p].value.data[i] = float(double(keep) + h);
            fd.forward(in, 2);
            const double f_plus = fd.selector_value(sel);
            params[p].value.data[i] = float(double(keep) - h);
            fd.forward(in, 2);
            const double f_minus = fd.selector_value(sel);
            params[p].value.data[i] = keep;
            const double g_fd = (f_plus - f_minus) / (2 * h);
            const double g_ad = double(ex.param_grad(int(p))[i]);
            const double rel = std::fabs(g_ad - g_fd) / std::max({std::fabs(g_ad), std::fabs(g_fd), 1e-3});
            max_rel = std::max(max_rel, rel);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("backward: linear in the output seed") {
    Mlp m({8, 6}, 11);
    Executor<float> ex(m.g);
    std::vector<float> in = {0.4f, -0.8f};
    ex.forward(in, 1);

    const float a = 2.5f, b = -1.25f;
    ex.backward(OutputSelector::custom({1.0f, 0.0f}));
    std::vector<float> g0(ex.param_grad(0).begin(), ex.param_grad(0).end());
    ex.backward(OutputSelector::custom({0.0f, 1.0f}));
    std::vector<float> g1(ex.param_grad(0).begin(), ex.param_grad(0).end());
    ex.backward(OutputSelector::custom({a, b}));
    auto gc = ex.param_grad(0);
    for (size_t i = 0; i < gc.size(); ++i)
        CHECK(std::fabs(double(gc[i]) - (double(a) * g0[i] + double(b) * g1[i])) < 1e-6);
}

TEST_CASE("determinism: identical seeds give bit-identical outputs and gradients") {
    for (int rep = 0; rep < 2; ++rep) {
        static std::vector<float> out_ref, grad_ref;
        Mlp m({14, 14}, 123);
        Executor<float> ex(m.g);
        std::vector<float> in = {0.3f, 0.6f};
        ex.forward(in, 1);
        ex.backward(OutputSelector::class_logit(0));
        std::vector<float> out(ex.output().begin(), ex.output().end());
        std::vector<float> gr(ex.param_grad(0).begin(), ex.param_grad(0).end());
        if (rep == 0) {
            out_ref = out;
            grad_ref = gr;
        } else {
            CHECK(out == out_ref);
            CHECK(gr == grad_ref);
        }
    }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    std::vector<Tensor> params = {Tensor({2}, {1.5f, -0.5f})};
    auto st = AdamState::init(params);
    std::vector<std::vector<float>> grads = {{0.0f, 0.0f}};
    for (int i = 0; i < 10; ++i) adam_step(st, params, grads);
    CHECK(params[0].data[0] == 1.5f);
    CHECK(params[0].data[1] == -0.5f);
    CHECK(st.step == 10);
}

TEST_CASE("adam: first bias-corrected step moves by about lr") {
    std::vector<Tensor> params = {Tensor({1}, {0.0f})};
    auto st = AdamState::init(params, 0.01);
    std::vector<std::vector<float>> grads = {{1.0f}};
    adam_step(st, params, grads);
    // mhat = vhat = 1 after correction, so the step is -lr/(1+eps)
    CHECK(std::fabs(double(params[0].data[0]) + 0.01) < 1e-8);
}

TEST_CASE("adam: converges monotonically on (w-3)^2") {
    std::vector<Tensor> params = {Tensor({1}, {0.0f})};
    auto st = AdamState::init(params, 0.01);

    // independent double-precision scalar simulation of the same recurrence
    double w_ref = 0.0, m_ref = 0.0, v_ref = 0.0;
    double prev_dist = 3.0;
    for (int step = 1; step <= 100; ++step) {
        const float w = params[0].data[0];
        std::vector<std::vector<float>> grads = {{2.0f * (w - 3.0f)}};
        adam_step(st, params, grads);

        const double g = 2.0 * (w_ref - 3.0);
        m_ref = 0.9 * m_ref + 0.1 * g;
        v_ref = 0.999 * v_ref + 0.001 * g * g;
        const double mhat = m_ref / (1.0 - std::pow(0.9, step));
        const double vhat = v_ref / (1.0 - std::pow(0.999, step));
        w_ref -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);

        CHECK(std::fabs(double(params[0].data[0]) - w_ref) < 1e-4);
        const double dist = std::fabs(double(params[0].data[0]) - 3.0);
        CHECK(dist <= prev_dist + 1e-7);
        prev_dist = dist;
    }
    CHECK(prev_dist < 3.0);
}

TEST_CASE("executor: attention block gradients match finite differences") {
    // single-head attention over 2 tokens, the transformer building block
    Graph g;
    const int d = 6;
    Rng rng(77);
    int x = g.input({2});
    int we = g.param("embed.w", randn_tensor({1, d}, rng, 0.8));
    int be = g.param("embed.b", Tensor::zeros({d}));
    int pos = g.param("pos", randn_tensor({2, d}, rng, 0.3));
    int tok = g.add_table(g.add_bias(g.matmul(g.reshape(x, {2, 1}), we), be), pos);
    int ln = g.layer_norm(tok);
    int q = g.matmul(ln, g.param("wq", randn_tensor({d, d}, rng, 0.4)));
    int k = g.matmul(ln, g.param("wk", randn_tensor({d, d}, rng, 0.4)));
    int v = g.matmul(ln, g.param("wv", randn_tensor({d, d}, rng, 0.4)));
    int att = g.softmax(g.scale(g.bmm_nt(q, k), float(1.0 / std::sqrt(double(d)))));
    int ctx = g.matmul(g.bmm(att, v), g.param("wo", randn_tensor({d, d}, rng, 0.4)));
    int blk = g.add(tok, ctx);
    int pooled = g.mean_tokens(blk);
    int head = g.add_bias(g.matmul(pooled, g.param("head.w", randn_tensor({d, 2}, rng, 0.4))),
                          g.param("head.b", Tensor::zeros({2})));
    g.set_output(head);

    Executor<float> ex(g);
    std::vector<float> in = {0.9f, -0.4f, 0.3f, 1.1f};
    ex.forward(in, 2);
    auto sel = OutputSelector::class_logit(1);
    ex.backward(sel);

    Executor<double> fd(g);
    const double h = 1e-3;
    double max_rel = 0;
    auto& params = g.params();
    for (size_t p = 0; p < params.size(); ++p) {
        for (size_t i = 0; i < params[p].value.data.size(); ++i) {
            const float keep = params[p].value.data[i];
            params[p].value.data[i] = float(double(keep) + h);
            fd.forward(in, 2);
            const double fp = fd.selector_value(sel);
            params[p].value.data[i] = float(double(keep) - h);
            fd.forward(in, 2);
            const double fm = fd.selector_value(sel);
            params[p].value.data[i] = keep;
            const double g_fd = (fp - fm) / (2 * h);
            const double g_ad = double(ex.param_grad(int(p))[i]);
            max_rel = std::max(max_rel, std::fabs(g_ad - g_fd) /
                                            std::max({std::fabs(g_ad), std::fabs(g_fd), 1e-3}));
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("executor: forward_from recomputes only the perturbed slice consistently") {
    Mlp m({10, 10}, 21);
    Executor<float> clean(m.g);
    std::vector<float> in = {0.2f, 0.5f, -1.0f, 0.8f};
    clean.forward(in, 2);

    // zero one weight through an override and compare against a full forward
    std::vector<Tensor> scratch;
    for (const auto& p : m.g.params()) scratch.push_back(p.value);
    scratch[2].data[5] = 0.0f;

    Executor<float> full(m.g);
    full.set_param_override(&scratch);
    full.forward(in, 2);

    Executor<float> partial(m.g);
    partial.set_param_override(&scratch);
    partial.forward_from(clean, m.g.param_at(2).node);

    auto a = full.output();
    auto b = partial.output();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
