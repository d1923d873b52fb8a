#pragma once

// Dense row-major tensor of 64-bit floats. Everything in this project is
// rank 1 or 2; the shape vector keeps the door open for scalars (rank 0 is
// stored as shape {1}).

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "srdc/errors.hpp"

namespace srdc {

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), values_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != count(shape_))
            throw NumericError("tensor: value count does not match shape");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor zeros(std::size_t rows, std::size_t cols) {
        return Tensor({rows, cols});
    }

    static Tensor row_major(std::size_t rows, std::size_t cols,
                            std::initializer_list<double> vals) {
        return Tensor({rows, cols}, std::vector<double>(vals));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }
    std::size_t rank() const { return shape_.size(); }

    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { values_.assign(values_.size(), v); }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

inline Tensor row_vector(std::vector<double> vals) {
    std::size_t n = vals.size();
    return Tensor({1, n}, std::move(vals));
}

}  // namespace srdc
