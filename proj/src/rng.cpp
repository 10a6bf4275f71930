#include "layerrank/rng.hpp"

#include <unordered_set>

namespace layerrank {

std::vector<size_t> Rng::sample_indices(size_t n, size_t k) {
    if (k >= n) {
        std::vector<size_t> all(n);
        for (size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    std::unordered_set<size_t> chosen;
    chosen.reserve(k * 2);
    for (size_t j = n - k; j < n; ++j) {
        size_t t = size_t(below(j + 1));
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<size_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace layerrank
