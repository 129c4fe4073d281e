#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "wla/common.hpp"

namespace wla {

// Dense row-major tensor. Scalar type is a template parameter: float is the
// storage type everywhere in the artifact; double instantiations exist for
// the 64-bit shadow evaluations used by the gradient-check oracles.
template <typename T>
struct TensorT {
    std::vector<int64_t> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<int64_t> s) : shape(std::move(s)), data(count(shape), T(0)) {}
    TensorT(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (count(shape) != static_cast<int64_t>(data.size())) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str());
        }
    }

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t e : s) n *= e;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    size_t ndim() const { return shape.size(); }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    T& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    const T& at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    static TensorT zeros(std::vector<int64_t> s) { return TensorT(std::move(s)); }

    static TensorT full(std::vector<int64_t> s, T v) {
        TensorT t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static TensorT identity(int64_t n) {
        TensorT t({n, n});
        for (int64_t i = 0; i < n; ++i) t.at2(i, i) = T(1);
        return t;
    }

    static TensorT randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0) {
        TensorT t(std::move(s));
        for (auto& v : t.data) v = static_cast<T>(rng.normal() * stddev);
        return t;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace wla
