#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "layerrank/exec.hpp"
#include "layerrank/modelzoo.hpp"
#include "layerrank/rng.hpp"

namespace layerrank {

enum class NoiseKind { Pepper, Gaussian, Dirac };
enum class Target { Weights, Activations };

const char* noise_name(NoiseKind k);
NoiseKind noise_from_name(const std::string& s);
const char* target_name(Target t);
Target target_from_name(const std::string& s);

struct PerturbationSpec {
    NoiseKind kind = NoiseKind::Pepper;
    Target target = Target::Weights;
    double proportion = 0.0;      // pepper, dirac: fraction of elements hit
    double sigma_fraction = 0.0;  // gaussian, dirac: fraction of max|w| in the layer
    int n_draws = 32;
    uint64_t seed = 0;

    void validate() const;
};

// SNR sweep for one (noise, target) pair. Pepper levels are proportions;
// gaussian and dirac levels are sigma fractions, dirac pairing each magnitude
// with a fixed proportion.
struct NoiseGrid {
    NoiseKind kind = NoiseKind::Pepper;
    Target target = Target::Weights;
    std::vector<double> levels;
    double dirac_proportion = 0.05;

    static NoiseGrid defaults(NoiseKind k, Target t);
};

struct LayerImportance {
    double accuracy_drop = 0.0;    // clean acc minus perturbed acc, >= 0 up to noise
    double output_distance = 0.0;  // mean L2 logit distance
    std::vector<double> drop_per_level;
    std::vector<double> dist_per_level;
};

struct GroundTruthRecord {
    std::string model_id;
    NoiseKind kind = NoiseKind::Pepper;
    Target target = Target::Weights;
    std::vector<double> levels;
    double dirac_proportion = 0.05;
    int n_draws = 0;
    double tie_epsilon = 0.002;
    double clean_accuracy = 0.0;
    std::vector<LayerImportance> per_layer;
    std::vector<int> ranking;                  // layer indices, largest drop first
    std::vector<std::vector<int>> tie_groups;  // partition of `ranking`, in order
};

// ---- perturbation primitives -------------------------------------------

// Exactly max(1, floor(p * n)) elements are hit, sampled without replacement.
size_t subset_size(double proportion, size_t n);

// Mutates a weight tensor in place. `max_abs` is the clean layer's max |w|.
void perturb_weight_tensor(Tensor& w, NoiseKind kind, double level, double dirac_proportion,
                           float max_abs, Rng& rng);

// Mutation for an activation buffer of `channels`-wide rows. Pepper and dirac
// act on whole channels (structured); gaussian is i.i.d. per element.
struct ActivationNoise {
    NoiseKind kind;
    double level;
    float max_abs_w;
    std::vector<size_t> channels_hit;  // pepper/dirac
    std::vector<float> signs;          // dirac
    uint64_t element_seed = 0;         // gaussian

    static ActivationNoise draw(NoiseKind kind, double level, double dirac_proportion,
                                float max_abs_w, size_t channels, Rng& rng);
    void apply(std::span<float> values, size_t channels) const;
};

// ---- measurement --------------------------------------------------------

// Per-model context: clean pass over the evaluation set plus a scratch
// parameter copy, so each perturbed evaluation only recomputes the nodes
// downstream of the touched layer. The stored model is never modified.
class EvalContext {
public:
    EvalContext(const Graph& g, std::span<const float> x, std::span<const int> y);

    const Graph& graph() const { return *g_; }
    double clean_accuracy() const { return clean_acc_; }
    std::span<const float> clean_logits() const { return clean_logits_; }
    int n_samples() const { return int(y_.size()); }

    // Perturbed logits for one draw; see PerturbationSpec for semantics.
    std::span<const float> perturbed_logits(int layer, NoiseKind kind, Target target,
                                            double level, double dirac_proportion,
                                            uint64_t draw_seed);

    // (accuracy drop, mean L2 logit distance) of perturbed logits vs clean.
    std::pair<double, double> drop_and_distance(std::span<const float> logits) const;

private:
    const Graph* g_;
    std::span<const float> x_;
    std::span<const int> y_;
    Executor<float> clean_;
    Executor<float> scratch_exec_;
    std::vector<Tensor> scratch_params_;
    std::vector<float> clean_logits_;
    std::vector<float> layer_max_abs_;
    double clean_acc_ = 0.0;
};

struct GtParams {
    int n_draws = 32;
    double tie_epsilon = 0.002;
    uint64_t seed = 0;
};

LayerImportance measure_importance(EvalContext& ctx, int layer, const NoiseGrid& grid,
                                   int n_draws, uint64_t seed);

GroundTruthRecord ground_truth(EvalContext& ctx, const std::string& model_id,
                               const NoiseGrid& grid, const GtParams& params);

// Ranking comparison up to tie groups: the prediction must list every member
// of an earlier group before any member of a later one.
bool ranking_matches(const std::vector<int>& predicted, const GroundTruthRecord& gt);

// Probability that a uniformly random ordering matches up to ties.
double random_match_probability(const GroundTruthRecord& gt);

// ---- diversity audit ----------------------------------------------------

struct DiversityBucket {
    std::string family;
    NoiseKind kind = NoiseKind::Pepper;
    Target target = Target::Weights;
    int n_layers = 0;
    int count = 0;
    double normalized_entropy = 0.0;  // H over rankings / log(L!)
    double top_mass = 0.0;            // share of the most common ranking
    bool flagged = false;             // one permutation above 60% mass
};

struct DiversityReport {
    std::vector<DiversityBucket> buckets;
};

DiversityReport audit_diversity(const std::vector<std::pair<std::string, const GroundTruthRecord*>>& records);

}  // namespace layerrank
