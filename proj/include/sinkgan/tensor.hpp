#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "sinkgan/common.hpp"

namespace sinkgan {

/// Dense row-major tensor of 64-bit reals. The universal value type of the
/// library; shapes are immutable after construction except through reshape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<size_t> shape);
    Tensor(std::vector<size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<size_t> shape, double value);
    static Tensor identity(size_t n);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    /// 2-D convenience for tests and small fixtures.
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_[i]; }
    size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
    double at(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(size_t i, size_t j, size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(size_t i, size_t j, size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& at(size_t i, size_t j, size_t k, size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double at(size_t i, size_t j, size_t k, size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;
    Tensor reshaped(std::vector<size_t> shape) const;

    bool all_finite() const;
    double frobenius_norm() const;
    double max_abs() const;
    double sum() const;

    void fill(double v);

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

size_t shape_numel(const std::vector<size_t>& shape);
std::string shape_to_string(const std::vector<size_t>& shape);

// Elementwise helpers (allocate the result; shapes must match exactly).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// C = A(m x k) * B(k x n). Throws DimensionError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);

// Accumulating GEMM kernels; C is not cleared. All feed the multiply counter.
void gemm_nn(size_t m, size_t n, size_t k, const double* a, const double* b, double* c);
void gemm_nt(size_t m, size_t n, size_t k, const double* a, const double* b, double* c);
void gemm_tn(size_t m, size_t n, size_t k, const double* a, const double* b, double* c);

Tensor random_uniform(std::vector<size_t> shape, Rng& rng, double lo = 0.0, double hi = 1.0);
Tensor random_gaussian(std::vector<size_t> shape, Rng& rng, double stddev = 1.0);

}  // namespace sinkgan
