#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

// Minimal dense-tensor engine with reverse-mode automatic differentiation.
// Operations executed while a Tape is active record backward closures; the
// tape is replayed in reverse by backward() and freed afterwards. A tape and
// its tensors belong to one thread; distinct tapes may run concurrently.
namespace gpf {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;  // leaf wants gradients
    bool tracked = false;        // participates in the active tape
    std::vector<double> grad;    // lazily allocated, same length as data

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

class Tensor {
  public:
    Tensor() : impl_(std::make_shared<TensorImpl>()) {}

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from(std::vector<double> values, std::vector<std::size_t> shape);
    // Row-major matrix literal, e.g. Tensor::matrix({{1,2},{3,4}}).
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor row(std::vector<double> values);  // 1 x n
    static Tensor scalar(double value);             // 1 x 1

    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    const std::vector<double>& data() const { return impl_->data; }
    std::vector<double>& data_mut() { return impl_->data; }
    double operator()(std::size_t i) const { return impl_->data.at(i); }
    double operator()(std::size_t i, std::size_t j) const;
    double item() const;

    Tensor& set_requires_grad(bool on);
    bool requires_grad() const { return impl_->requires_grad; }
    bool tracked() const { return impl_->requires_grad || impl_->tracked; }
    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad() { impl_->grad.clear(); }

    // Value copy that does not participate in any graph.
    Tensor detach() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

  private:
    std::shared_ptr<TensorImpl> impl_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
    std::size_t size() const { return nodes_.size(); }

    // Seeds loss with d(loss)/d(loss) = 1, replays nodes in reverse and
    // frees them. loss must be scalar and recorded on this tape.
    void run_backward(const Tensor& loss);

    static Tape* active();

  private:
    std::vector<std::function<void()>> nodes_;
    Tape* prev_;
};

// Suspends taping for its lifetime (used by finite-difference probes and
// frozen-parameter inference).
class NoGrad {
  public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

  private:
    Tape* saved_;
};

// Backward through the active tape. Contract error if loss is not scalar or
// no tape recorded it.
void backward(const Tensor& loss);

// Test-harness hook: when set, the sigmoid backward rule is deliberately
// perturbed so gradient checks must fail.
bool& corrupt_sigmoid_backward();

// Elementwise binary ops. Shapes must match, or one operand may be a
// 1-element scalar tensor (broadcast both ways).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Adds a 1 x n bias row to every row of an m x n matrix.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);

// Numerically stable softmax. Rank-1: over the whole vector (axis 0).
// Rank-2: axis 1 normalizes rows, axis 0 normalizes columns.
Tensor softmax(const Tensor& a, int axis);
Tensor log_softmax_rows(const Tensor& a);

// Per-row layer normalization of an m x n matrix with rank-1 gamma/beta of
// length n.
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

Tensor sum(const Tensor& a);        // 1 x 1
Tensor mean_rows(const Tensor& a);  // m x n -> 1 x n

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor pick(const Tensor& a, std::size_t i, std::size_t j);  // 1 x 1

// Central-difference gradient check of a scalar-valued function of x.
// Returns the max over coordinates of |a - n| / max(1e-8, |a| + |n|).
// f is evaluated under an active tape once for the analytic gradient and
// with taping suspended for the numeric probes; x's data is perturbed in
// place and restored.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps = 1e-5);

}  // namespace gpf
