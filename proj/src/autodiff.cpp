#include "sinkgan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace sinkgan {

const Tensor& Var::value() const { return tape->val(id); }

Tensor Var::grad() const {
    if (tape->has_grad(id)) return tape->grad_acc(id);
    return Tensor::zeros(value().shape());
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::vector<int> parents, BackwardFn backward) {
    bool req = false;
    for (int p : parents) {
        if (p < 0 || p >= static_cast<int>(nodes_.size())) {
            throw ContractError("tape parent out of range (graph must be acyclic)");
        }
        req = req || nodes_[p].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = req;
    n.parents = std::move(parents);
    if (req) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_acc(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

void Tape::backward(const Var& loss) {
    if (loss.tape != this) throw ContractError("backward: loss lives on a different tape");
    if (val(loss.id).numel() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " +
                            val(loss.id).shape_str());
    }
    grad_acc(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.grad.empty() && n.backward) n.backward(*this);
    }
}

namespace {

void check_same_tape(const Var& a, const Var& b) {
    if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                             " vs " + b.value().shape_str());
    }
}

void check_scalar(const Var& s, const char* op) {
    if (s.value().numel() != 1) {
        throw DimensionError(std::string(op) + ": expected scalar, got " + s.value().shape_str());
    }
}

void axpy(Tensor& dst, const Tensor& src, double s = 1.0) {
    for (size_t i = 0; i < dst.numel(); ++i) dst[i] += s * src[i];
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "add");
    Tape& t = *a.tape;
    const int ia = a.id, ib = b.id, out = static_cast<int>(t.size());
    return t.record(sinkgan::add(a.value(), b.value()), {ia, ib}, [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        if (t.needs_grad(ia)) axpy(t.grad_acc(ia), g);
        if (t.needs_grad(ib)) axpy(t.grad_acc(ib), g);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "sub");
    Tape& t = *a.tape;
    const int ia = a.id, ib = b.id, out = static_cast<int>(t.size());
    return t.record(sinkgan::sub(a.value(), b.value()), {ia, ib}, [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        if (t.needs_grad(ia)) axpy(t.grad_acc(ia), g);
        if (t.needs_grad(ib)) axpy(t.grad_acc(ib), g, -1.0);
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "mul");
    Tape& t = *a.tape;
    const int ia = a.id, ib = b.id, out = static_cast<int>(t.size());
    return t.record(sinkgan::mul(a.value(), b.value()), {ia, ib}, [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad_acc(ia);
            const Tensor& bv = t.val(ib);
            for (size_t i = 0; i < ga.numel(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_acc(ib);
            const Tensor& av = t.val(ia);
            for (size_t i = 0; i < gb.numel(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "div");
    Tape& t = *a.tape;
    const int ia = a.id, ib = b.id, out = static_cast<int>(t.size());
    Tensor v(a.value().shape());
    for (size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] / b.value()[i];
    return t.record(std::move(v), {ia, ib}, [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        const Tensor& av = t.val(ia);
        const Tensor& bv = t.val(ib);
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad_acc(ia);
            for (size_t i = 0; i < ga.numel(); ++i) ga[i] += g[i] / bv[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_acc(ib);
            for (size_t i = 0; i < gb.numel(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Var add_scalar(const Var& a, double s) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    Tensor v(a.value().shape());
    for (size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] + s;
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (t.needs_grad(ia)) axpy(t.grad_acc(ia), t.grad_acc(out));
    });
}

Var mul_scalar(const Var& a, double s) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    return t.record(scale(a.value(), s), {ia}, [=](Tape& t) {
        if (t.needs_grad(ia)) axpy(t.grad_acc(ia), t.grad_acc(out), s);
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar_var(const Var& a, const Var& s) {
    check_same_tape(a, s);
    check_scalar(s, "add_scalar_var");
    Tape& t = *a.tape;
    const int ia = a.id, is = s.id, out = static_cast<int>(t.size());
    Tensor v(a.value().shape());
    const double sv = s.value()[0];
    for (size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] + sv;
    return t.record(std::move(v), {ia, is}, [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        if (t.needs_grad(ia)) axpy(t.grad_acc(ia), g);
        if (t.needs_grad(is)) {
            double acc = 0.0;
            for (size_t i = 0; i < g.numel(); ++i) acc += g[i];
            t.grad_acc(is)[0] += acc;
        }
    });
}

Var mul_scalar_var(const Var& a, const Var& s) {
    check_same_tape(a, s);
    check_scalar(s, "mul_scalar_var");
    Tape& t = *a.tape;
    const int ia = a.id, is = s.id, out = static_cast<int>(t.size());
    return t.record(scale(a.value(), s.value()[0]), {ia, is}, [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        const double sv = t.val(is)[0];
        if (t.needs_grad(ia)) axpy(t.grad_acc(ia), g, sv);
        if (t.needs_grad(is)) {
            const Tensor& av = t.val(ia);
            double acc = 0.0;
            for (size_t i = 0; i < g.numel(); ++i) acc += g[i] * av[i];
            t.grad_acc(is)[0] += acc;
        }
    });
}

Var div_scalar_var(const Var& a, const Var& s) {
    check_same_tape(a, s);
    check_scalar(s, "div_scalar_var");
    Tape& t = *a.tape;
    const int ia = a.id, is = s.id, out = static_cast<int>(t.size());
    return t.record(scale(a.value(), 1.0 / s.value()[0]), {ia, is}, [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        const double sv = t.val(is)[0];
        if (t.needs_grad(ia)) axpy(t.grad_acc(ia), g, 1.0 / sv);
        if (t.needs_grad(is)) {
            const Tensor& av = t.val(ia);
            double acc = 0.0;
            for (size_t i = 0; i < g.numel(); ++i) acc += g[i] * av[i];
            t.grad_acc(is)[0] -= acc / (sv * sv);
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    const int ia = a.id, ib = b.id, out = static_cast<int>(t.size());
    Tensor v = sinkgan::matmul(a.value(), b.value());
    return t.record(std::move(v), {ia, ib}, [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        const Tensor& av = t.val(ia);
        const Tensor& bv = t.val(ib);
        const size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
        if (t.needs_grad(ia)) gemm_nt(m, k, n, g.data(), bv.data(), t.grad_acc(ia).data());
        if (t.needs_grad(ib)) gemm_tn(k, n, m, av.data(), g.data(), t.grad_acc(ib).data());
    });
}

Var matmul_const(const Tensor& a, const Var& x) {
    Tape& t = *x.tape;
    const int ix = x.id, out = static_cast<int>(t.size());
    Tensor v = sinkgan::matmul(a, x.value());
    auto saved = std::make_shared<Tensor>(a);
    return t.record(std::move(v), {ix}, [=](Tape& t) {
        if (!t.needs_grad(ix)) return;
        const Tensor& g = t.grad_acc(out);
        gemm_tn(saved->dim(1), g.dim(1), saved->dim(0), saved->data(), g.data(),
                t.grad_acc(ix).data());
    });
}

Var transpose(const Var& a) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    return t.record(transpose2d(a.value()), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < g.dim(0); ++i)
            for (size_t j = 0; j < g.dim(1); ++j) ga.at(j, i) += g.at(i, j);
    });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvDims {
    size_t b, h, w, ci, kh, kw, co, ph, pw, rows, cols;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w) {
    if (x.rank() != 4) throw DimensionError("conv2d expects [B,H,W,C] input, got " + x.shape_str());
    if (w.rank() != 4) {
        throw DimensionError("conv2d expects [kh,kw,Cin,Cout] weights, got " + w.shape_str());
    }
    ConvDims d;
    d.b = x.dim(0);
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.ci = x.dim(3);
    d.kh = w.dim(0);
    d.kw = w.dim(1);
    d.co = w.dim(3);
    if (w.dim(2) != d.ci) {
        throw DimensionError("conv2d channel mismatch: input " + x.shape_str() + ", weights " +
                             w.shape_str());
    }
    if (d.kh % 2 == 0 || d.kw % 2 == 0) throw ContractError("conv2d requires odd kernel dims");
    d.ph = (d.kh - 1) / 2;
    d.pw = (d.kw - 1) / 2;
    d.rows = d.b * d.h * d.w;
    d.cols = d.kh * d.kw * d.ci;
    return d;
}

std::shared_ptr<double[]> im2col(const Tensor& x, const ConvDims& d) {
    std::shared_ptr<double[]> col(new double[d.rows * d.cols]);
    size_t r = 0;
    for (size_t b = 0; b < d.b; ++b) {
        for (size_t i = 0; i < d.h; ++i) {
            for (size_t j = 0; j < d.w; ++j, ++r) {
                double* crow = col.get() + r * d.cols;
                size_t c = 0;
                for (size_t ki = 0; ki < d.kh; ++ki) {
                    const long i2 = static_cast<long>(i + ki) - static_cast<long>(d.ph);
                    for (size_t kj = 0; kj < d.kw; ++kj) {
                        const long j2 = static_cast<long>(j + kj) - static_cast<long>(d.pw);
                        if (i2 < 0 || i2 >= static_cast<long>(d.h) || j2 < 0 ||
                            j2 >= static_cast<long>(d.w)) {
                            for (size_t ci = 0; ci < d.ci; ++ci) crow[c++] = 0.0;
                        } else {
                            const double* src = x.data() + ((b * d.h + i2) * d.w + j2) * d.ci;
                            for (size_t ci = 0; ci < d.ci; ++ci) crow[c++] = src[ci];
                        }
                    }
                }
            }
        }
    }
    return col;
}

void col2im_add(const double* gcol, const ConvDims& d, Tensor& gx) {
    size_t r = 0;
    for (size_t b = 0; b < d.b; ++b) {
        for (size_t i = 0; i < d.h; ++i) {
            for (size_t j = 0; j < d.w; ++j, ++r) {
                const double* crow = gcol + r * d.cols;
                size_t c = 0;
                for (size_t ki = 0; ki < d.kh; ++ki) {
                    const long i2 = static_cast<long>(i + ki) - static_cast<long>(d.ph);
                    for (size_t kj = 0; kj < d.kw; ++kj) {
                        const long j2 = static_cast<long>(j + kj) - static_cast<long>(d.pw);
                        if (i2 < 0 || i2 >= static_cast<long>(d.h) || j2 < 0 ||
                            j2 >= static_cast<long>(d.w)) {
                            c += d.ci;
                        } else {
                            double* dst = gx.data() + ((b * d.h + i2) * d.w + j2) * d.ci;
                            for (size_t ci = 0; ci < d.ci; ++ci) dst[ci] += crow[c++];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

static Var conv2d_impl(const Var& x, const Var& w, const Var* bias) {
    check_same_tape(x, w);
    Tape& t = *x.tape;
    const ConvDims d = conv_dims(x.value(), w.value());
    if (bias != nullptr && (bias->value().rank() != 1 || bias->value().dim(0) != d.co)) {
        throw DimensionError("conv2d bias must be [Cout], got " + bias->value().shape_str());
    }

    std::shared_ptr<double[]> col = im2col(x.value(), d);
    Tensor out({d.rows, d.co});
    gemm_nn(d.rows, d.co, d.cols, col.get(), w.value().data(), out.data());
    if (bias != nullptr) {
        const Tensor& bv = bias->value();
        for (size_t r = 0; r < d.rows; ++r) {
            double* orow = out.data() + r * d.co;
            for (size_t c = 0; c < d.co; ++c) orow[c] += bv[c];
        }
    }

    const int ix = x.id, iw = w.id, out_id = static_cast<int>(t.size());
    const int ib = bias != nullptr ? bias->id : -1;
    std::vector<int> parents = {ix, iw};
    if (ib >= 0) parents.push_back(ib);
    return t.record(out.reshaped({d.b, d.h, d.w, d.co}), std::move(parents), [=](Tape& t) {
        const Tensor g = t.grad_acc(out_id).reshaped({d.rows, d.co});
        if (t.needs_grad(iw)) {
            gemm_tn(d.cols, d.co, d.rows, col.get(), g.data(), t.grad_acc(iw).data());
        }
        if (ib >= 0 && t.needs_grad(ib)) {
            Tensor& gb = t.grad_acc(ib);
            for (size_t r = 0; r < d.rows; ++r) {
                const double* grow = g.data() + r * d.co;
                for (size_t c = 0; c < d.co; ++c) gb[c] += grow[c];
            }
        }
        if (t.needs_grad(ix)) {
            std::vector<double> gcol(d.rows * d.cols, 0.0);
            gemm_nt(d.rows, d.cols, d.co, g.data(), t.val(iw).data(), gcol.data());
            col2im_add(gcol.data(), d, t.grad_acc(ix));
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& bias) { return conv2d_impl(x, w, &bias); }
Var conv2d(const Var& x, const Var& w) { return conv2d_impl(x, w, nullptr); }

namespace {

Tensor box_apply(const Tensor& x, size_t k) {
    const size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const long p = static_cast<long>((k - 1) / 2);
    const double inv = 1.0 / static_cast<double>(k * k);
    Tensor out(x.shape());
    for (size_t bi = 0; bi < b; ++bi) {
        for (size_t i = 0; i < h; ++i) {
            for (size_t j = 0; j < w; ++j) {
                for (size_t ci = 0; ci < c; ++ci) {
                    double s = 0.0;
                    for (long di = -p; di <= p; ++di) {
                        const long i2 = static_cast<long>(i) + di;
                        if (i2 < 0 || i2 >= static_cast<long>(h)) continue;
                        for (long dj = -p; dj <= p; ++dj) {
                            const long j2 = static_cast<long>(j) + dj;
                            if (j2 < 0 || j2 >= static_cast<long>(w)) continue;
                            s += x.at(bi, i2, j2, ci);
                        }
                    }
                    out.at(bi, i, j, ci) = s * inv;
                }
            }
        }
    }
    return out;
}

}  // namespace

Var box_filter(const Var& x, size_t k) {
    if (x.value().rank() != 4) {
        throw DimensionError("box_filter expects [B,H,W,C], got " + x.value().shape_str());
    }
    if (k % 2 == 0) throw ContractError("box_filter requires odd k");
    Tape& t = *x.tape;
    const int ix = x.id, out = static_cast<int>(t.size());
    return t.record(box_apply(x.value(), k), {ix}, [=](Tape& t) {
        if (!t.needs_grad(ix)) return;
        axpy(t.grad_acc(ix), box_apply(t.grad_acc(out), k));
    });
}

Var add_rowvec(const Var& x, const Var& b) {
    check_same_tape(x, b);
    const Tensor& xv = x.value();
    const Tensor& bv = b.value();
    if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
        throw DimensionError("add_rowvec: shapes " + xv.shape_str() + " and " + bv.shape_str());
    }
    Tape& t = *x.tape;
    const int ix = x.id, ib = b.id, out = static_cast<int>(t.size());
    Tensor v = xv;
    for (size_t i = 0; i < xv.dim(0); ++i)
        for (size_t j = 0; j < xv.dim(1); ++j) v.at(i, j) += bv[j];
    return t.record(std::move(v), {ix, ib}, [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        if (t.needs_grad(ix)) axpy(t.grad_acc(ix), g);
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_acc(ib);
            for (size_t i = 0; i < g.dim(0); ++i)
                for (size_t j = 0; j < g.dim(1); ++j) gb[j] += g.at(i, j);
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
    return add_rowvec(matmul(x, w), bias);
}

Var leaky_relu(const Var& a, double negative_slope) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    const double s = negative_slope;
    Tensor v(a.value().shape());
    for (size_t i = 0; i < v.numel(); ++i) {
        const double x = a.value()[i];
        v[i] = x > 0.0 ? x : s * x;
    }
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        const Tensor& av = t.val(ia);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (av[i] > 0.0 ? 1.0 : s);
    });
}

Var sigmoid(const Var& a) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    Tensor v(a.value().shape());
    for (size_t i = 0; i < v.numel(); ++i) {
        const double x = a.value()[i];
        v[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        const Tensor& y = t.val(out);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Var log(const Var& a) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    Tensor v(a.value().shape());
    for (size_t i = 0; i < v.numel(); ++i) v[i] = std::log(a.value()[i]);
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        const Tensor& av = t.val(ia);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / av[i];
    });
}

Var abs(const Var& a) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    Tensor v(a.value().shape());
    for (size_t i = 0; i < v.numel(); ++i) v[i] = std::fabs(a.value()[i]);
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        const Tensor& av = t.val(ia);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] * (av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0));
        }
    });
}

Var clamp(const Var& a, double lo, double hi) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    Tensor v(a.value().shape());
    for (size_t i = 0; i < v.numel(); ++i) v[i] = std::min(hi, std::max(lo, a.value()[i]));
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        const Tensor& av = t.val(ia);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < g.numel(); ++i) {
            if (av[i] >= lo && av[i] <= hi) ga[i] += g[i];
        }
    });
}

Var softmax_rows(const Var& a) {
    if (a.value().rank() != 2) {
        throw DimensionError("softmax_rows expects 2-D, got " + a.value().shape_str());
    }
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    const size_t r = a.value().dim(0), c = a.value().dim(1);
    Tensor v({r, c});
    for (size_t i = 0; i < r; ++i) {
        double m = a.value().at(i, 0);
        for (size_t j = 1; j < c; ++j) m = std::max(m, a.value().at(i, j));
        double s = 0.0;
        for (size_t j = 0; j < c; ++j) {
            v.at(i, j) = std::exp(a.value().at(i, j) - m);
            s += v.at(i, j);
        }
        for (size_t j = 0; j < c; ++j) v.at(i, j) /= s;
    }
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        const Tensor& y = t.val(out);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (size_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
            for (size_t j = 0; j < c; ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var mean(const Var& a) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    const size_t n = a.value().numel();
    return t.record(Tensor::scalar(a.value().sum() / static_cast<double>(n)), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const double g = t.grad_acc(out)[0] / static_cast<double>(n);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

Var sum(const Var& a) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    return t.record(Tensor::scalar(a.value().sum()), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const double g = t.grad_acc(out)[0];
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

Var sum_axis(const Var& a, size_t axis) {
    const Tensor& av = a.value();
    if (axis >= av.rank()) throw DimensionError("sum_axis: axis out of range");
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    size_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= av.dim(i);
    for (size_t i = axis + 1; i < av.rank(); ++i) inner *= av.dim(i);
    const size_t mid = av.dim(axis);
    std::vector<size_t> oshape;
    for (size_t i = 0; i < av.rank(); ++i)
        if (i != axis) oshape.push_back(av.dim(i));
    if (oshape.empty()) oshape.push_back(1);
    Tensor v(oshape);
    for (size_t o = 0; o < outer; ++o)
        for (size_t m = 0; m < mid; ++m)
            for (size_t in = 0; in < inner; ++in)
                v[o * inner + in] += av[(o * mid + m) * inner + in];
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        Tensor& ga = t.grad_acc(ia);
        for (size_t o = 0; o < outer; ++o)
            for (size_t m = 0; m < mid; ++m)
                for (size_t in = 0; in < inner; ++in)
                    ga[(o * mid + m) * inner + in] += g[o * inner + in];
    });
}

static Var reduce_extreme(const Var& a, bool take_max) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    const Tensor& av = a.value();
    size_t arg = 0;
    for (size_t i = 1; i < av.numel(); ++i) {
        if (take_max ? av[i] > av[arg] : av[i] < av[arg]) arg = i;
    }
    return t.record(Tensor::scalar(av[arg]), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        t.grad_acc(ia)[arg] += t.grad_acc(out)[0];
    });
}

Var reduce_min(const Var& a) { return reduce_extreme(a, false); }
Var reduce_max(const Var& a) { return reduce_extreme(a, true); }

Var concat(const std::vector<Var>& parts, size_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    Tape& t = *parts[0].tape;
    const size_t rank = parts[0].value().rank();
    if (axis >= rank) throw DimensionError("concat: axis out of range");
    size_t axis_total = 0;
    for (const Var& p : parts) {
        check_same_tape(parts[0], p);
        if (p.value().rank() != rank) throw DimensionError("concat: rank mismatch");
        for (size_t i = 0; i < rank; ++i) {
            if (i != axis && p.value().dim(i) != parts[0].value().dim(i)) {
                throw DimensionError("concat: shape mismatch " + p.value().shape_str() + " vs " +
                                     parts[0].value().shape_str());
            }
        }
        axis_total += p.value().dim(axis);
    }
    std::vector<size_t> oshape = parts[0].value().shape();
    oshape[axis] = axis_total;
    size_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= oshape[i];
    for (size_t i = axis + 1; i < rank; ++i) inner *= oshape[i];

    Tensor v(oshape);
    std::vector<int> ids;
    std::vector<size_t> sizes;
    size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        const size_t pa = pv.dim(axis);
        for (size_t o = 0; o < outer; ++o) {
            const double* src = pv.data() + o * pa * inner;
            double* dst = v.data() + (o * axis_total + off) * inner;
            std::copy(src, src + pa * inner, dst);
        }
        ids.push_back(p.id);
        sizes.push_back(pa);
        off += pa;
    }
    const int out = static_cast<int>(t.size());
    std::vector<int> parents = ids;
    return t.record(std::move(v), std::move(parents), [=](Tape& t) {
        const Tensor& g = t.grad_acc(out);
        size_t start = 0;
        for (size_t pi = 0; pi < ids.size(); ++pi) {
            const size_t pa = sizes[pi];
            if (t.needs_grad(ids[pi])) {
                Tensor& gp = t.grad_acc(ids[pi]);
                for (size_t o = 0; o < outer; ++o) {
                    const double* src = g.data() + (o * axis_total + start) * inner;
                    double* dst = gp.data() + o * pa * inner;
                    for (size_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
                }
            }
            start += pa;
        }
    });
}

Var slice(const Var& a, const std::vector<size_t>& offsets, const std::vector<size_t>& sizes) {
    const Tensor& av = a.value();
    const size_t rank = av.rank();
    if (offsets.size() != rank || sizes.size() != rank) {
        throw DimensionError("slice: offsets/sizes rank mismatch with " + av.shape_str());
    }
    for (size_t i = 0; i < rank; ++i) {
        if (sizes[i] == 0 || offsets[i] + sizes[i] > av.dim(i)) {
            throw DimensionError("slice: region out of bounds for " + av.shape_str());
        }
    }
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());

    std::vector<size_t> istrides(rank, 1);
    for (size_t i = rank; i-- > 1;) istrides[i - 1] = istrides[i] * av.dim(i);

    Tensor v(sizes);
    const size_t n = v.numel();
    std::vector<size_t> idx(rank, 0);
    auto src_flat = [&](const std::vector<size_t>& id) {
        size_t f = 0;
        for (size_t i = 0; i < rank; ++i) f += (offsets[i] + id[i]) * istrides[i];
        return f;
    };
    for (size_t f = 0; f < n; ++f) {
        v[f] = av[src_flat(idx)];
        for (size_t i = rank; i-- > 0;) {
            if (++idx[i] < sizes[i]) break;
            idx[i] = 0;
        }
    }
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        Tensor& ga = t.grad_acc(ia);
        std::vector<size_t> id(rank, 0);
        for (size_t f = 0; f < n; ++f) {
            size_t sf = 0;
            for (size_t i = 0; i < rank; ++i) sf += (offsets[i] + id[i]) * istrides[i];
            ga[sf] += g[f];
            for (size_t i = rank; i-- > 0;) {
                if (++id[i] < sizes[i]) break;
                id[i] = 0;
            }
        }
    });
}

Var reshape(const Var& a, std::vector<size_t> shape) {
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    return t.record(a.value().reshaped(std::move(shape)), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

Var bilinear_resize(const Var& a, size_t out_h, size_t out_w) {
    const Tensor& av = a.value();
    if (av.rank() != 2) throw DimensionError("bilinear_resize expects 2-D, got " + av.shape_str());
    const size_t h = av.dim(0), w = av.dim(1);
    Tape& t = *a.tape;
    const int ia = a.id, out = static_cast<int>(t.size());
    auto src_coord = [](size_t i, size_t n_out, size_t n_in) {
        if (n_out <= 1) return 0.0;
        return static_cast<double>(i) * static_cast<double>(n_in - 1) /
               static_cast<double>(n_out - 1);
    };
    Tensor v({out_h, out_w});
    for (size_t i = 0; i < out_h; ++i) {
        const double y = src_coord(i, out_h, h);
        const size_t i0 = static_cast<size_t>(y);
        const size_t i1 = std::min(i0 + 1, h - 1);
        const double fy = y - static_cast<double>(i0);
        for (size_t j = 0; j < out_w; ++j) {
            const double x = src_coord(j, out_w, w);
            const size_t j0 = static_cast<size_t>(x);
            const size_t j1 = std::min(j0 + 1, w - 1);
            const double fx = x - static_cast<double>(j0);
            v.at(i, j) = (1 - fy) * (1 - fx) * av.at(i0, j0) + (1 - fy) * fx * av.at(i0, j1) +
                         fy * (1 - fx) * av.at(i1, j0) + fy * fx * av.at(i1, j1);
        }
    }
    return t.record(std::move(v), {ia}, [=](Tape& t) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad_acc(out);
        Tensor& ga = t.grad_acc(ia);
        for (size_t i = 0; i < out_h; ++i) {
            const double y = src_coord(i, out_h, h);
            const size_t i0 = static_cast<size_t>(y);
            const size_t i1 = std::min(i0 + 1, h - 1);
            const double fy = y - static_cast<double>(i0);
            for (size_t j = 0; j < out_w; ++j) {
                const double x = src_coord(j, out_w, w);
                const size_t j0 = static_cast<size_t>(x);
                const size_t j1 = std::min(j0 + 1, w - 1);
                const double fx = x - static_cast<double>(j0);
                const double gv = g.at(i, j);
                ga.at(i0, j0) += (1 - fy) * (1 - fx) * gv;
                ga.at(i0, j1) += (1 - fy) * fx * gv;
                ga.at(i1, j0) += fy * (1 - fx) * gv;
                ga.at(i1, j1) += fy * fx * gv;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Patch partition / merge (W-MSA windowing)

namespace {

struct PatchDims {
    size_t h, w, c, ph, pw, gh, gw, n, f;
};

PatchDims patch_dims(size_t H, size_t W, size_t C, size_t ph, size_t pw) {
    if (ph == 0 || pw == 0) throw ContractError("patch dims must be positive");
    PatchDims d;
    d.h = H;
    d.w = W;
    d.c = C;
    d.ph = ph;
    d.pw = pw;
    d.gh = (H + ph - 1) / ph;
    d.gw = (W + pw - 1) / pw;
    d.n = d.gh * d.gw;
    d.f = ph * pw * C;
    return d;
}

// flat index into [H,W,C] for node row n, feature f; -1 when in the zero pad.
long patch_src_index(const PatchDims& d, size_t n, size_t f) {
    const size_t wi = n / d.gw, wj = n % d.gw;
    const size_t pi = f / (d.pw * d.c);
    const size_t rest = f % (d.pw * d.c);
    const size_t pj = rest / d.c;
    const size_t c = rest % d.c;
    const size_t i = wi * d.ph + pi;
    const size_t j = wj * d.pw + pj;
    if (i >= d.h || j >= d.w) return -1;
    return static_cast<long>((i * d.w + j) * d.c + c);
}

}  // namespace

Tensor patch_partition_value(const Tensor& x, size_t h, size_t w) {
    if (x.rank() != 3) {
        throw DimensionError("patch_partition expects [H,W,C], got " + x.shape_str());
    }
    const PatchDims d = patch_dims(x.dim(0), x.dim(1), x.dim(2), h, w);
    Tensor nodes({d.n, d.f});
    for (size_t n = 0; n < d.n; ++n) {
        for (size_t f = 0; f < d.f; ++f) {
            const long s = patch_src_index(d, n, f);
            nodes.at(n, f) = s < 0 ? 0.0 : x[static_cast<size_t>(s)];
        }
    }
    return nodes;
}

Tensor patch_merge_value(const Tensor& nodes, size_t h, size_t w, size_t out_h, size_t out_w,
                         size_t channels) {
    if (nodes.rank() != 2) {
        throw DimensionError("patch_merge expects [N,F] nodes, got " + nodes.shape_str());
    }
    const PatchDims d = patch_dims(out_h, out_w, channels, h, w);
    if (nodes.dim(0) != d.n || nodes.dim(1) != d.f) {
        throw DimensionError("patch_merge: nodes " + nodes.shape_str() + " inconsistent with " +
                             std::to_string(d.n) + "x" + std::to_string(d.f) + " grid");
    }
    Tensor x({out_h, out_w, channels});
    for (size_t n = 0; n < d.n; ++n) {
        for (size_t f = 0; f < d.f; ++f) {
            const long s = patch_src_index(d, n, f);
            if (s >= 0) x[static_cast<size_t>(s)] = nodes.at(n, f);
        }
    }
    return x;
}

Var patch_partition(const Var& x, size_t h, size_t w) {
    Tape& t = *x.tape;
    const Tensor& xv = x.value();
    Tensor nodes = patch_partition_value(xv, h, w);
    const PatchDims d = patch_dims(xv.dim(0), xv.dim(1), xv.dim(2), h, w);
    const int ix = x.id, out = static_cast<int>(t.size());
    return t.record(std::move(nodes), {ix}, [=](Tape& t) {
        if (!t.needs_grad(ix)) return;
        const Tensor& g = t.grad_acc(out);
        Tensor& gx = t.grad_acc(ix);
        for (size_t n = 0; n < d.n; ++n) {
            for (size_t f = 0; f < d.f; ++f) {
                const long s = patch_src_index(d, n, f);
                if (s >= 0) gx[static_cast<size_t>(s)] += g.at(n, f);
            }
        }
    });
}

Var patch_merge(const Var& nodes, size_t h, size_t w, size_t out_h, size_t out_w,
                size_t channels) {
    Tape& t = *nodes.tape;
    Tensor x = patch_merge_value(nodes.value(), h, w, out_h, out_w, channels);
    const PatchDims d = patch_dims(out_h, out_w, channels, h, w);
    const int in = nodes.id, out = static_cast<int>(t.size());
    return t.record(std::move(x), {in}, [=](Tape& t) {
        if (!t.needs_grad(in)) return;
        const Tensor& g = t.grad_acc(out);
        Tensor& gn = t.grad_acc(in);
        for (size_t n = 0; n < d.n; ++n) {
            for (size_t f = 0; f < d.f; ++f) {
                const long s = patch_src_index(d, n, f);
                if (s >= 0) gn.at(n, f) += g[static_cast<size_t>(s)];
            }
        }
    });
}

}  // namespace sinkgan
