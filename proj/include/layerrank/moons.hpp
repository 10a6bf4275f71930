#pragma once

#include <cstdint>
#include <vector>

namespace layerrank {

// Two interleaving half-circles: class 0 on (cos t, sin t), class 1 on
// (1 - cos t, 0.5 - sin t), t in [0, pi], plus isotropic Gaussian noise.
// Splits are built from disjoint seeded draw streams.
struct MoonsDataset {
    std::vector<float> train_x;  // row-major, 2 columns
    std::vector<int> train_y;
    std::vector<float> test_x;
    std::vector<int> test_y;
    std::vector<float> calib_x;  // n = 256 by default
    std::vector<int> calib_y;
    double noise_std = 0.1;
    uint64_t seed = 0;

    int n_train() const { return int(train_y.size()); }
    int n_test() const { return int(test_y.size()); }
    int n_calib() const { return int(calib_y.size()); }
};

MoonsDataset generate_moons(int n_points, double noise_std, uint64_t seed, int n_calib = 256);

}  // namespace layerrank
