#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ricanet/errors.hpp"

namespace ricanet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

// Dense row-major array of doubles with an explicit shape.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) { check_extents(); }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (shape_product(shape_) != data_.size()) {
            throw ShapeError("tensor shape " + shape_string(shape_) + " holds " +
                             std::to_string(shape_product(shape_)) + " values, got " + std::to_string(data_.size()));
        }
    }

    // Construction from data that came from outside the library (files, user
    // buffers): additionally rejects NaN/Inf.
    static Tensor from_external(Shape shape, std::vector<double> data) {
        Tensor t(std::move(shape), std::move(data));
        for (std::size_t i = 0; i < t.data_.size(); ++i) {
            if (!std::isfinite(t.data_[i])) throw NumericError("non-finite value in external tensor data", i);
        }
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D access.
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    // Contiguous slice along the leading axis.
    std::span<double> row(std::size_t i) {
        const std::size_t stride = data_.size() / shape_[0];
        return std::span<double>(data_).subspan(i * stride, stride);
    }
    std::span<const double> row(std::size_t i) const {
        const std::size_t stride = data_.size() / shape_[0];
        return std::span<const double>(data_).subspan(i * stride, stride);
    }

    Tensor reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }
    Tensor reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

    bool operator==(const Tensor&) const = default;

private:
    void check_extents() const {
        for (std::size_t e : shape_) {
            if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
        }
    }

    Shape shape_;
    std::vector<double> data_;
};

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

// c[i][j] = sum_t a[i][t] * b[t][j], accumulated left to right over t.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a.at(i, t) * b.at(t, j);
            c.at(i, j) = acc;
        }
    }
    return c;
}

inline Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    Tensor t({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

// Central-difference gradient of a scalar function of a flat parameter vector,
// one coordinate at a time.
template <typename F>
Tensor finite_diff_grad(F&& f, const Tensor& p, double h) {
    if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step must be positive");
    std::vector<double> x(p.data().begin(), p.data().end());
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(std::span<const double>(x));
        x[i] = orig - h;
        const double fm = f(std::span<const double>(x));
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("finite_diff_grad: non-finite evaluation", i);
        g[i] = (fp - fm) / (2.0 * h);
    }
    return Tensor(p.shape(), std::move(g));
}

} // namespace ricanet
