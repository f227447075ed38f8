#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dipnet {

/// Dense row-major array of doubles with an explicit shape.
/// Rank 0 is a scalar (size 1), rank 1 a vector, rank 2 a matrix.
class Tensor {
public:
    Tensor() : shape_{}, data_(1, 0.0) {}

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor scalar(double v)
    {
        Tensor t;
        t.data_[0] = v;
        return t;
    }

    static Tensor from_vector(std::vector<double> v)
    {
        Tensor t;
        t.shape_ = {v.size()};
        t.data_ = std::move(v);
        return t;
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v)
    {
        if (v.size() != rows * cols)
            throw std::invalid_argument("Tensor::matrix: data size " + std::to_string(v.size()) +
                                        " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
        Tensor t;
        t.shape_ = {rows, cols};
        t.data_ = std::move(v);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const { return rank() >= 1 ? shape_[0] : 1; }
    std::size_t cols() const { return rank() >= 2 ? shape_[1] : 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool is_scalar() const { return data_.size() == 1 && rank() <= 1; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0); }

    /// Reinterpret the buffer under a new shape of identical element count.
    void reshape(std::vector<std::size_t> shape)
    {
        if (count(shape) != data_.size())
            throw std::invalid_argument("Tensor::reshape: element count mismatch, have " +
                                        std::to_string(data_.size()));
        shape_ = std::move(shape);
    }

    std::string shape_str() const
    {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < shape_.size(); ++i)
            os << shape_[i] << (i + 1 < shape_.size() ? ", " : "");
        os << ')';
        return os.str();
    }

    bool operator==(const Tensor& other) const
    {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape)
    {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Mean of a collection of same-shape tensors via pairwise reduction, so the
/// result does not depend on traversal order and doubling sums stay exact.
inline Tensor pairwise_mean(std::vector<Tensor> items)
{
    if (items.empty()) throw std::invalid_argument("pairwise_mean: empty input");
    const std::size_t k = items.size();
    std::size_t n = k;
    while (n > 1) {
        const std::size_t half = n / 2;
        for (std::size_t i = 0; i < half; ++i) {
            Tensor& dst = items[2 * i];
            const Tensor& src = items[2 * i + 1];
            for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
        }
        for (std::size_t i = 1; i < half; ++i) items[i] = std::move(items[2 * i]);
        if (n % 2 == 1) items[half] = std::move(items[n - 1]);
        n = half + n % 2;
    }
    Tensor& out = items[0];
    const double inv = 1.0 / static_cast<double>(k);
    for (std::size_t e = 0; e < out.size(); ++e) out[e] *= inv;
    return std::move(out);
}

} // namespace dipnet
