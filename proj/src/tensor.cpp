#include "sinkgan/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace sinkgan {

namespace opcount {
namespace {
uint64_t counter = 0;
}
uint64_t get() { return counter; }
void reset() { counter = 0; }
void add(uint64_t n) { counter += n; }
}  // namespace opcount

size_t shape_numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

std::string shape_to_string(const std::vector<size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
    for (size_t d : shape_) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str());
    }
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("tensor data size " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str());
    }
}

Tensor Tensor::full(std::vector<size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::identity(size_t n) {
    Tensor t({n, n});
    for (size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    size_t r = rows.size();
    size_t c = rows.begin()->size();
    Tensor t({r, c});
    size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged rows in from_rows");
        size_t j = 0;
        for (double v : row) t.at(i, j++) = v;
        ++i;
    }
    return t;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

Tensor Tensor::reshaped(std::vector<size_t> shape) const {
    if (shape_numel(shape) != numel()) {
        throw DimensionError("cannot reshape " + shape_str() + " to " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor r(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) r[i] = a[i] + b[i];
    return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor r(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) r[i] = a[i] - b[i];
    return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor r(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) r[i] = a[i] * b[i];
    return r;
}

Tensor scale(const Tensor& a, double s) {
    Tensor r(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) r[i] = a[i] * s;
    return r;
}

namespace {

// 4-row blocks: each loaded B row feeds four accumulator rows.
void gemm_nn_kernel(size_t m, size_t n, size_t k, const double* a, const double* b, double* c) {
    size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        double* c0 = c + i * n;
        double* c1 = c0 + n;
        double* c2 = c1 + n;
        double* c3 = c2 + n;
        for (size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
            for (size_t j = 0; j < n; ++j) {
                const double bv = brow[j];
                c0[j] += v0 * bv;
                c1[j] += v1 * bv;
                c2[j] += v2 * bv;
                c3[j] += v3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

void gemm_nn(size_t m, size_t n, size_t k, const double* a, const double* b, double* c) {
    opcount::add(static_cast<uint64_t>(m) * n * k);
    gemm_nn_kernel(m, n, k, a, b, c);
}

// C(m x n) += A(m x k) * B(n x k)^T. B is transposed into scratch first so
// the hot loop vectorizes without floating-point reassociation.
void gemm_nt(size_t m, size_t n, size_t k, const double* a, const double* b, double* c) {
    opcount::add(static_cast<uint64_t>(m) * n * k);
    std::vector<double> bt(k * n);
    for (size_t j = 0; j < n; ++j)
        for (size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_nn_kernel(m, n, k, a, bt.data(), c);
}

// C(m x n) += A(k x m)^T * B(k x n)
void gemm_tn(size_t m, size_t n, size_t k, const double* a, const double* b, double* c) {
    opcount::add(static_cast<uint64_t>(m) * n * k);
    size_t p = 0;
    for (; p + 4 <= k; p += 4) {
        const double* ar0 = a + p * m;
        const double* ar1 = ar0 + m;
        const double* ar2 = ar1 + m;
        const double* ar3 = ar2 + m;
        const double* br0 = b + p * n;
        const double* br1 = br0 + n;
        const double* br2 = br1 + n;
        const double* br3 = br2 + n;
        for (size_t i = 0; i < m; ++i) {
            const double v0 = ar0[i], v1 = ar1[i], v2 = ar2[i], v3 = ar3[i];
            double* crow = c + i * n;
            for (size_t j = 0; j < n; ++j) {
                crow[j] += v0 * br0[j] + v1 * br1[j] + v2 * br2[j] + v3 * br3[j];
            }
        }
    }
    for (; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + i * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + a.shape_str() + " and " +
                             b.shape_str());
    }
    Tensor c({a.dim(0), b.dim(1)});
    gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.data(), b.data(), c.data());
    return c;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose expects 2-D, got " + a.shape_str());
    Tensor t({a.dim(1), a.dim(0)});
    for (size_t i = 0; i < a.dim(0); ++i)
        for (size_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Tensor random_uniform(std::vector<size_t> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

Tensor random_gaussian(std::vector<size_t> shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.gaussian() * stddev;
    return t;
}

}  // namespace sinkgan
