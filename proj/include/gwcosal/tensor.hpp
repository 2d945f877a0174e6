#ifndef GWCOSAL_TENSOR_HPP
#define GWCOSAL_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "gwcosal/error.hpp"

namespace gwcosal {

// Dense 4-D shape (batch, channels, height, width).
struct Shape4 {
    long n = 0;
    long c = 0;
    long h = 0;
    long w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
               static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }

    bool operator==(const Shape4&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
        return os.str();
    }
};

// Dense row-major 4-D tensor. The scalar type doubles as the precision
// switch: float for training and inference, double for gradient checking.
template <typename T>
struct Tensor {
    Shape4 shape{};
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(Shape4 s, T fill = T(0)) : shape(s), data(s.numel(), fill) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
            throw ShapeError("tensor shape must be non-negative, got " + s.str());
        }
    }

    Tensor(Shape4 s, std::vector<T> values) : shape(s), data(std::move(values)) {
        if (data.size() != s.numel()) {
            std::ostringstream os;
            os << "tensor data length " << data.size() << " does not match shape "
               << s.str() << " (numel " << s.numel() << ")";
            throw ShapeError(os.str());
        }
    }

    static Tensor zeros(Shape4 s) { return Tensor(s, T(0)); }
    static Tensor full(Shape4 s, T v) { return Tensor(s, v); }

    std::size_t numel() const { return data.size(); }

    std::size_t index(long n, long c, long h, long w) const {
        return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w;
    }

    T& at(long n, long c, long h, long w) { return data[index(n, c, h, w)]; }
    const T& at(long n, long c, long h, long w) const { return data[index(n, c, h, w)]; }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& x) {
    Tensor<U> y(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = static_cast<U>(x.data[i]);
    return y;
}

} // namespace gwcosal

#endif
