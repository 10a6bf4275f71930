#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "layerrank/exec.hpp"
#include "layerrank/graph.hpp"
#include "layerrank/moons.hpp"
#include "layerrank/rng.hpp"

namespace layerrank {

enum class Family { Vanilla, Skip, SkipSD, Transfo };

const char* family_name(Family f);
Family family_from_name(const std::string& name);

enum class Activation { Relu, Gelu };

struct ModelSpec {
    Family family = Family::Vanilla;
    std::vector<int> layer_sizes;  // hidden widths; transfo carries {model_dim}
    int depth = 2;                 // hidden layer or block count
    uint64_t seed = 0;             // drives init and training batch order
    double survival_prob = 0.8;    // skip_sd only
    Activation activation = Activation::Relu;

    int model_dim() const { return layer_sizes.at(0); }
};

struct BuildOptions {
    bool positional = true;  // test hook: transformer positional embeddings
};

struct TrainedModel {
    ModelSpec spec;
    Graph graph;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

// depth ~ U{2..6}, widths ~ U{8..128}; transformer blocks use gelu MLPs.
ModelSpec sample_spec(Family family, Rng& rng);

Graph build(const ModelSpec& spec, const BuildOptions& opts = {});

struct TrainConfig {
    int epochs = 6;
    double lr = 0.01;
    int batch_size = 32;
};

// Cross-entropy training with ADAM; throws on a non-finite loss.
TrainedModel train(Graph graph, const ModelSpec& spec, const MoonsDataset& data,
                   const TrainConfig& cfg = {});

// Batched evaluation helpers (gates at their evaluation multipliers).
std::vector<float> model_logits(const Graph& g, std::span<const float> x, int batch);
double model_accuracy(const Graph& g, std::span<const float> x, std::span<const int> y);

}  // namespace layerrank
