#include "layerrank/moons.hpp"

#include <cmath>
#include <stdexcept>

#include "layerrank/rng.hpp"

namespace layerrank {

namespace {

constexpr double kPi = 3.14159265358979323846;

void make_split(int n, double noise_std, uint64_t seed, std::vector<float>& xs, std::vector<int>& ys) {
    const int n0 = (n + 1) / 2;
    const int n1 = n - n0;
    xs.clear();
    ys.clear();
    xs.reserve(size_t(n) * 2);
    ys.reserve(size_t(n));
    Rng rng(seed);
    for (int i = 0; i < n0; ++i) {
        const double t = n0 > 1 ? kPi * double(i) / double(n0 - 1) : 0.0;
        xs.push_back(float(std::cos(t) + rng.normal(0.0, noise_std)));
        xs.push_back(float(std::sin(t) + rng.normal(0.0, noise_std)));
        ys.push_back(0);
    }
    for (int i = 0; i < n1; ++i) {
        const double t = n1 > 1 ? kPi * double(i) / double(n1 - 1) : 0.0;
        xs.push_back(float(1.0 - std::cos(t) + rng.normal(0.0, noise_std)));
        xs.push_back(float(0.5 - std::sin(t) + rng.normal(0.0, noise_std)));
        ys.push_back(1);
    }
    // mix the classes so sequential batches are balanced
    std::vector<size_t> order(size_t(n), 0);
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<float> xs2(xs.size());
    std::vector<int> ys2(ys.size());
    for (size_t i = 0; i < order.size(); ++i) {
        xs2[2 * i] = xs[2 * order[i]];
        xs2[2 * i + 1] = xs[2 * order[i] + 1];
        ys2[i] = ys[order[i]];
    }
    xs = std::move(xs2);
    ys = std::move(ys2);
}

}  // namespace

MoonsDataset generate_moons(int n_points, double noise_std, uint64_t seed, int n_calib) {
    if (n_points < 2) throw std::invalid_argument("generate_moons: n_points must be at least 2");
    if (noise_std < 0) throw std::invalid_argument("generate_moons: noise_std must be nonnegative");
    MoonsDataset d;
    d.noise_std = noise_std;
    d.seed = seed;
    make_split(n_points, noise_std, mix_seed({seed, 1}), d.train_x, d.train_y);
    make_split(n_points, noise_std, mix_seed({seed, 2}), d.test_x, d.test_y);
    make_split(n_calib, noise_std, mix_seed({seed, 3}), d.calib_x, d.calib_y);
    return d;
}

}  // namespace layerrank
