#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mmfusion/rng.hpp"

namespace mmfusion {

/// Dense row-major 64-bit float array with an explicit shape.
/// A rank-0 tensor is a scalar with size 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value) { return Tensor({}, {value}); }
  /// Entries uniform in [-bound, bound] from the given stream.
  static Tensor uniform(std::vector<std::size_t> shape, double bound, Rng& rng);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }
  double& at(std::initializer_list<std::size_t> index) { return data_[flat_index(index)]; }
  double at(std::initializer_list<std::size_t> index) const { return data_[flat_index(index)]; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  std::span<const double> span() const { return data_; }

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> index) const;

  std::vector<std::size_t> shape_;
  std::vector<double> data_{0.0};
};

/// Serialize to the fixture format {"shape":[...],"data":[...]}.
std::string tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const std::string& text);

enum class Activation { Identity, Relu, Tanh, Sigmoid };

double apply_activation(Activation kind, double pre);
/// Derivative expressed through the activation output (valid for all four kinds).
double activation_grad_from_output(Activation kind, double out);

enum class Padding { Valid, Same };

/// Convolution layer description. Two kernel layouts are accepted:
///   [K1..Kk]             single-channel, input is [D1..Dk]
///   [Cout, Cin, K1..Kk]  multi-channel, input is [Cin, D1..Dk]
/// with spatial rank k in 1..3. `bias` holds one entry per output channel,
/// `stride` one entry per spatial dim (or a single broadcast entry).
struct ConvSpec {
  Tensor kernel;
  Tensor bias;  // rank-1, one entry per output channel
  std::vector<std::size_t> stride{1};
  Padding padding = Padding::Valid;
  Activation activation = Activation::Identity;
};

/// Cross-correlation over the full kernel support, then bias and activation.
Tensor conv_forward(const Tensor& input, const ConvSpec& spec);

struct ConvGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

/// Gradients of a conv_forward call. `output` is the forward result (used to
/// evaluate the activation derivative without recomputing pre-activations).
ConvGrads conv_backward(const Tensor& input, const ConvSpec& spec, const Tensor& output,
                        const Tensor& grad_output);

/// Non-negative class scores that sum to 1.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> probs);
  static ProbVector uniform(std::size_t n);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& values() const { return probs_; }

  friend bool operator==(const ProbVector& a, const ProbVector& b) {
    return a.probs_ == b.probs_;
  }

 private:
  std::vector<double> probs_;
};

/// Max-subtracted exponential normalization of a rank-1 tensor.
ProbVector softmax(const Tensor& logits);

/// Smallest index attaining the maximum probability.
std::size_t argmax_decision(const ProbVector& probs);

/// Squared L2 norm of all entries.
double l2_penalty(const Tensor& weights);

/// Gate weights packed as 4 row blocks in the order input, forget, output,
/// candidate: w_input is [4H x I], w_hidden [4H x H], bias [4H].
struct LstmParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Tensor w_input;
  Tensor w_hidden;
  Tensor bias;

  /// Weights uniform in +-1/sqrt(hidden); forget-gate bias 1.0, others 0.
  static LstmParams seeded(std::size_t input_size, std::size_t hidden_size, Rng& rng);
  static LstmParams zeros(std::size_t input_size, std::size_t hidden_size);
};

struct LstmState {
  Tensor h;
  Tensor c;
};

/// Intermediate values of one step, kept for backpropagation through time.
struct LstmStepCache {
  Tensor x, h_prev, c_prev;
  Tensor gate_i, gate_f, gate_o, gate_g;
  Tensor c, tanh_c;
};

LstmState lstm_step(const LstmParams& params, const Tensor& x, const Tensor& h_prev,
                    const Tensor& c_prev, LstmStepCache* cache = nullptr);

struct LstmParamGrads {
  Tensor w_input;
  Tensor w_hidden;
  Tensor bias;

  static LstmParamGrads zeros(const LstmParams& params);
};

struct LstmInputGrads {
  Tensor x;
  Tensor h_prev;
  Tensor c_prev;
};

/// Backward through one cached step: dh/dc are the incoming gradients w.r.t.
/// this step's h and c. Parameter gradients accumulate into `acc`.
LstmInputGrads lstm_step_backward(const LstmParams& params, const LstmStepCache& cache,
                                  const Tensor& dh, const Tensor& dc, LstmParamGrads& acc);

/// y = activation(W x + b) with W of shape [out, in].
Tensor dense_forward(const Tensor& weights, const Tensor& bias, const Tensor& x,
                     Activation activation);

struct DenseGrads {
  Tensor weights;
  Tensor bias;
  Tensor input;
};

DenseGrads dense_backward(const Tensor& weights, const Tensor& bias, const Tensor& x,
                          Activation activation, const Tensor& output,
                          const Tensor& grad_output);

struct SgdConfig {
  double learning_rate = 0.01;
  double l2_lambda = 0.0;
  std::uint64_t seed = 0;
};

/// In-place update p <- p - lr * (g + 2 * lambda * p) for each param/grad pair.
void sgd_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              const SgdConfig& cfg);

/// Max relative error between `analytic_grad` and central finite differences
/// of `loss` around `params`. epsilon must lie in [1e-8, 1e-3].
double grad_check(const std::function<double(const Tensor&)>& loss, const Tensor& params,
                  const Tensor& analytic_grad, double epsilon);

/// Numerically stable -log softmax(logits)[target].
double softmax_cross_entropy(const Tensor& logits, std::size_t target);
/// d loss / d logits = softmax(logits) - onehot(target).
Tensor softmax_cross_entropy_grad(const Tensor& logits, std::size_t target);

}  // namespace mmfusion
