#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace layerrank {

// Dense row-major float32 tensor. Shapes are small (a handful of dims), data
// lives in one contiguous vector. Everything in the engine is binary32 so the
// bit-flip simulator and the on-disk format share one representation.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != int64_t(data.size()))
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> shape) {
        auto n = numel_of(shape);
        return Tensor(std::move(shape), std::vector<float>(size_t(n), 0.0f));
    }

    static Tensor full(std::vector<int> shape, float v) {
        auto n = numel_of(shape);
        return Tensor(std::move(shape), std::vector<float>(size_t(n), v));
    }

    int64_t numel() const { return int64_t(data.size()); }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    float max_abs() const {
        float m = 0.0f;
        for (float v : data) m = std::max(m, std::fabs(v));
        return m;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace layerrank
