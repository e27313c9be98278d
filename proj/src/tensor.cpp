#include "gpf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gpf/kernels.hpp"

namespace gpf {

namespace {

thread_local Tape* g_active_tape = nullptr;

using ImplPtr = std::shared_ptr<TensorImpl>;

bool wants_grad(const ImplPtr& impl) { return impl->requires_grad || impl->tracked; }

// Marks the output tracked and records the node when any input is tracked
// and a tape is active. Returns true when the node was recorded.
bool maybe_record(const Tensor& out, std::initializer_list<const Tensor*> inputs,
                  std::function<void()> backward_fn) {
    Tape* tape = Tape::active();
    if (!tape) return false;
    bool any = false;
    for (const Tensor* t : inputs) any = any || t->tracked();
    if (!any) return false;
    out.impl()->tracked = true;
    tape->record(std::move(backward_fn));
    return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

bool is_scalar(const Tensor& t) { return t.numel() == 1; }

// Elementwise binary op with scalar broadcast on either side.
template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, BwdA dfa,
                 BwdB dfb) {
    const bool sa = is_scalar(a) && !is_scalar(b);
    const bool sb = is_scalar(b) && !is_scalar(a);
    if (!sa && !sb) check_same_shape(a, b, name);

    const Tensor& big = sa ? b : a;
    Tensor out = Tensor::zeros(big.shape());
    const std::size_t n = out.numel();
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data_mut();
    for (std::size_t i = 0; i < n; ++i) od[i] = fwd(ad[sa ? 0 : i], bd[sb ? 0 : i]);

    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    maybe_record(out, {&a, &b}, [ai, bi, oi, sa, sb, n, dfa, dfb] {
        if (oi->grad.empty()) return;
        if (wants_grad(ai)) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                ai->grad[sa ? 0 : i] +=
                    oi->grad[i] * dfa(ai->data[sa ? 0 : i], bi->data[sb ? 0 : i], oi->data[i]);
        }
        if (wants_grad(bi)) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                bi->grad[sb ? 0 : i] +=
                    oi->grad[i] * dfb(ai->data[sa ? 0 : i], bi->data[sb ? 0 : i], oi->data[i]);
        }
    });
    return out;
}

// Elementwise unary op; derivative receives (x, y).
template <typename Fwd, typename Dfn>
Tensor unary_op(const Tensor& a, Fwd fwd, Dfn dfn) {
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = out.numel();
    const auto& ad = a.data();
    auto& od = out.data_mut();
    for (std::size_t i = 0; i < n; ++i) od[i] = fwd(ad[i]);

    auto ai = a.impl(), oi = out.impl();
    maybe_record(out, {&a}, [ai, oi, n, dfn] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            ai->grad[i] += oi->grad[i] * dfn(ai->data[i], oi->data[i]);
    });
    return out;
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw DimensionError(std::string(op) + ": expected rank-2 tensor, got shape " +
                             shape_str(t.shape()));
}

}  // namespace

bool& corrupt_sigmoid_backward() {
    static bool flag = false;
    return flag;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    Tensor t;
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("zero dimension in shape " + shape_str(shape));
        n *= d;
    }
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
}

Tensor Tensor::from(std::vector<double> values, std::vector<std::size_t> shape) {
    Tensor t = zeros(shape);
    if (values.size() != t.numel())
        throw DimensionError("data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    t.impl_->data = std::move(values);
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = rows.begin()->size();
    std::vector<double> flat;
    flat.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        flat.insert(flat.end(), row.begin(), row.end());
    }
    return from(std::move(flat), {r, c});
}

Tensor Tensor::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return from(std::move(values), {1, n});
}

Tensor Tensor::scalar(double value) { return from({value}, {1, 1}); }

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows(): tensor is not rank-2");
    return impl_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols(): tensor is not rank-2");
    return impl_->shape[1];
}

double Tensor::operator()(std::size_t i, std::size_t j) const {
    return impl_->data.at(i * cols() + j);
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item(): tensor is not scalar");
    return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.empty()) throw ContractError("grad(): no gradient present");
    return impl_->grad;
}

Tensor Tensor::detach() const {
    Tensor t;
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
}

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::run_backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ContractError("backward: loss must be scalar");
    if (!loss.tracked()) throw ContractError("backward: loss is not part of this graph");
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
}

NoGrad::NoGrad() : saved_(g_active_tape) { g_active_tape = nullptr; }

NoGrad::~NoGrad() { g_active_tape = saved_; }

void backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (!tape) throw ContractError("backward: no active tape");
    tape->run_backward(loss);
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y, double) { return 1.0 / y; },
        [](double x, double y, double) { return -x / (y * y); });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    require_rank2(a, "add_bias");
    require_rank2(bias, "add_bias");
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                             " does not match matrix " + shape_str(a.shape()));
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({m, n});
    auto& od = out.data_mut();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) od[i * n + j] = a(i, j) + bias(0, j);

    auto ai = a.impl(), bi = bias.impl(), oi = out.impl();
    maybe_record(out, {&a, &bias}, [ai, bi, oi, m, n] {
        if (oi->grad.empty()) return;
        if (wants_grad(ai)) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < m * n; ++i) ai->grad[i] += oi->grad[i];
        }
        if (wants_grad(bi)) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) bi->grad[j] += oi->grad[i * n + j];
        }
    });
    return out;
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary_op(
        a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
    return unary_op(
        a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    kernels::mm_nn(a.data().data(), b.data().data(), out.data_mut().data(), m, k, n);

    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    maybe_record(out, {&a, &b}, [ai, bi, oi, m, k, n] {
        if (oi->grad.empty()) return;
        if (wants_grad(ai)) {
            ai->ensure_grad();
            // dA += dC * B^T
            kernels::mm_nt(oi->grad.data(), bi->data.data(), ai->grad.data(), m, n, k, true);
        }
        if (wants_grad(bi)) {
            bi->ensure_grad();
            // dB += A^T * dC
            kernels::mm_tn(ai->data.data(), oi->grad.data(), bi->grad.data(), k, m, n, true);
        }
    });
    return out;
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({n, m});
    auto& od = out.data_mut();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) od[j * m + i] = a(i, j);

    auto ai = a.impl(), oi = out.impl();
    maybe_record(out, {&a}, [ai, oi, m, n] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ai->grad[i * n + j] += oi->grad[j * m + i];
    });
    return out;
}

Tensor sigmoid(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    kernels::sigmoid(a.data().data(), out.data_mut().data(), a.numel());

    auto ai = a.impl(), oi = out.impl();
    const std::size_t n = a.numel();
    maybe_record(out, {&a}, [ai, oi, n] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        const double fudge = corrupt_sigmoid_backward() ? 1.01 : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = oi->data[i];
            ai->grad[i] += oi->grad[i] * y * (1.0 - y) * fudge;
        }
    });
    return out;
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

namespace {

// Stable softmax over contiguous rows of length n.
void softmax_rows_values(const double* x, double* y, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x + i * n;
        double* yi = y + i * n;
        double mx = xi[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            s += yi[j];
        }
        for (std::size_t j = 0; j < n; ++j) yi[j] /= s;
    }
}

Tensor softmax_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({m, n});
    softmax_rows_values(a.data().data(), out.data_mut().data(), m, n);

    auto ai = a.impl(), oi = out.impl();
    maybe_record(out, {&a}, [ai, oi, m, n] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = oi->data.data() + i * n;
            const double* dy = oi->grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
            double* dx = ai->grad.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
    });
    return out;
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
    if (a.rank() == 1) {
        if (axis != 0) throw DimensionError("softmax: rank-1 tensor only has axis 0");
        const std::size_t n = a.numel();
        Tensor wide = softmax_rows(Tensor::from(a.data(), {1, n}));
        return Tensor::from(wide.data(), {n});
    }
    require_rank2(a, "softmax");
    if (axis == 1) return softmax_rows(a);
    if (axis == 0) return transpose(softmax_rows(transpose(a)));
    throw DimensionError("softmax: axis must be 0 or 1");
}

Tensor log_softmax_rows(const Tensor& a) {
    require_rank2(a, "log_softmax_rows");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({m, n});
    auto& od = out.data_mut();
    std::vector<double> probs(m * n);
    softmax_rows_values(a.data().data(), probs.data(), m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = a.data().data() + i * n;
        double mx = xi[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(xi[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < n; ++j) od[i * n + j] = xi[j] - lse;
    }

    auto ai = a.impl(), oi = out.impl();
    maybe_record(out, {&a}, [ai, oi, m, n, probs = std::move(probs)] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* dy = oi->grad.data() + i * n;
            double tot = 0.0;
            for (std::size_t j = 0; j < n; ++j) tot += dy[j];
            double* dx = ai->grad.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) dx[j] += dy[j] - probs[i * n + j] * tot;
        }
    });
    return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank2(x, "layer_norm_rows");
    const std::size_t m = x.rows(), n = x.cols();
    if (n < 2) throw DimensionError("layer_norm_rows: row width must be >= 2");
    if (gamma.numel() != n || beta.numel() != n)
        throw DimensionError("layer_norm_rows: gamma/beta length must equal row width " +
                             std::to_string(n));

    Tensor out = Tensor::zeros({m, n});
    auto& od = out.data_mut();
    std::vector<double> xhat(m * n);
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.data().data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xi[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (xi[j] - mean) * inv_std[i];
            od[i * n + j] = xhat[i * n + j] * gamma.data()[j] + beta.data()[j];
        }
    }

    auto xi_ = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
    maybe_record(out, {&x, &gamma, &beta},
                 [xi_, gi, bi, oi, m, n, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)] {
        if (oi->grad.empty()) return;
        const double nd = static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
            const double* dy = oi->grad.data() + i * n;
            const double* xh = xhat.data() + i * n;
            if (wants_grad(gi)) {
                gi->ensure_grad();
                for (std::size_t j = 0; j < n; ++j) gi->grad[j] += dy[j] * xh[j];
            }
            if (wants_grad(bi)) {
                bi->ensure_grad();
                for (std::size_t j = 0; j < n; ++j) bi->grad[j] += dy[j];
            }
            if (wants_grad(xi_)) {
                xi_->ensure_grad();
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = dy[j] * gi->data[j];
                    s1 += g;
                    s2 += g * xh[j];
                }
                double* dx = xi_->grad.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = dy[j] * gi->data[j];
                    dx[j] += inv_std[i] * (g - s1 / nd - xh[j] * s2 / nd);
                }
            }
        }
    });
    return out;
}

Tensor sum(const Tensor& a) {
    const std::size_t n = a.numel();
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tensor out = Tensor::scalar(s);

    auto ai = a.impl(), oi = out.impl();
    maybe_record(out, {&a}, [ai, oi, n] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[0];
    });
    return out;
}

Tensor mean_rows(const Tensor& a) {
    require_rank2(a, "mean_rows");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({1, n});
    auto& od = out.data_mut();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) od[j] += a(i, j);
    for (std::size_t j = 0; j < n; ++j) od[j] /= static_cast<double>(m);

    auto ai = a.impl(), oi = out.impl();
    maybe_record(out, {&a}, [ai, oi, m, n] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ai->grad[i * n + j] += oi->grad[j] * inv;
    });
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: empty input");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.cols() != n) throw DimensionError("concat_rows: column count mismatch");
        m += p.rows();
    }
    Tensor out = Tensor::zeros({m, n});
    auto& od = out.data_mut();
    std::size_t r = 0;
    for (const Tensor& p : parts) {
        std::copy(p.data().begin(), p.data().end(), od.begin() + r * n);
        r += p.rows();
    }

    std::vector<ImplPtr> impls;
    bool any = false;
    for (const Tensor& p : parts) {
        impls.push_back(p.impl());
        any = any || p.tracked();
    }
    Tape* tape = Tape::active();
    if (tape && any) {
        out.impl()->tracked = true;
        auto oi = out.impl();
        tape->record([impls = std::move(impls), oi, n] {
            if (oi->grad.empty()) return;
            std::size_t r = 0;
            for (const auto& pi : impls) {
                const std::size_t pr = pi->shape[0];
                if (wants_grad(pi)) {
                    pi->ensure_grad();
                    for (std::size_t i = 0; i < pr * n; ++i)
                        pi->grad[i] += oi->grad[r * n + i];
                }
                r += pr;
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: empty input");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.rows() != m) throw DimensionError("concat_cols: row count mismatch");
        n += p.cols();
    }
    Tensor out = Tensor::zeros({m, n});
    auto& od = out.data_mut();
    std::size_t c = 0;
    for (const Tensor& p : parts) {
        const std::size_t pc = p.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pc; ++j) od[i * n + c + j] = p(i, j);
        c += pc;
    }

    std::vector<ImplPtr> impls;
    bool any = false;
    for (const Tensor& p : parts) {
        impls.push_back(p.impl());
        any = any || p.tracked();
    }
    Tape* tape = Tape::active();
    if (tape && any) {
        out.impl()->tracked = true;
        auto oi = out.impl();
        tape->record([impls = std::move(impls), oi, m, n] {
            if (oi->grad.empty()) return;
            std::size_t c = 0;
            for (const auto& pi : impls) {
                const std::size_t pc = pi->shape[1];
                if (wants_grad(pi)) {
                    pi->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < pc; ++j)
                            pi->grad[i * pc + j] += oi->grad[i * n + c + j];
                }
                c += pc;
            }
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    require_rank2(a, "slice_rows");
    const std::size_t m = a.rows(), n = a.cols();
    if (r0 >= r1 || r1 > m)
        throw DimensionError("slice_rows: range [" + std::to_string(r0) + "," +
                             std::to_string(r1) + ") out of " + std::to_string(m) + " rows");
    Tensor out = Tensor::zeros({r1 - r0, n});
    std::copy(a.data().begin() + r0 * n, a.data().begin() + r1 * n, out.data_mut().begin());

    auto ai = a.impl(), oi = out.impl();
    maybe_record(out, {&a}, [ai, oi, r0, r1, n] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < (r1 - r0) * n; ++i) ai->grad[r0 * n + i] += oi->grad[i];
    });
    return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    require_rank2(a, "slice_cols");
    const std::size_t m = a.rows(), n = a.cols();
    if (c0 >= c1 || c1 > n)
        throw DimensionError("slice_cols: range [" + std::to_string(c0) + "," +
                             std::to_string(c1) + ") out of " + std::to_string(n) + " cols");
    const std::size_t w = c1 - c0;
    Tensor out = Tensor::zeros({m, w});
    auto& od = out.data_mut();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) od[i * w + j] = a(i, c0 + j);

    auto ai = a.impl(), oi = out.impl();
    maybe_record(out, {&a}, [ai, oi, m, n, c0, w] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j)
                ai->grad[i * n + c0 + j] += oi->grad[i * w + j];
    });
    return out;
}

Tensor pick(const Tensor& a, std::size_t i, std::size_t j) {
    require_rank2(a, "pick");
    const std::size_t n = a.cols();
    if (i >= a.rows() || j >= n)
        throw DimensionError("pick: index (" + std::to_string(i) + "," + std::to_string(j) +
                             ") out of shape " + shape_str(a.shape()));
    Tensor out = Tensor::scalar(a(i, j));

    auto ai = a.impl(), oi = out.impl();
    maybe_record(out, {&a}, [ai, oi, i, j, n] {
        if (oi->grad.empty() || !wants_grad(ai)) return;
        ai->ensure_grad();
        ai->grad[i * n + j] += oi->grad[0];
    });
    return out;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
    x.set_requires_grad(true);
    x.zero_grad();
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor y = f(x);
        tape.run_backward(y);
        analytic = x.impl()->grad;
    }
    if (analytic.empty()) analytic.assign(x.numel(), 0.0);

    NoGrad ng;
    double max_err = 0.0;
    auto& xd = x.data_mut();
    for (std::size_t i = 0; i < xd.size(); ++i) {
        const double orig = xd[i];
        xd[i] = orig + eps;
        const double fp = f(x).item();
        xd[i] = orig - eps;
        const double fm = f(x).item();
        xd[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[i];
        const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace gpf
