#include "mmfusion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace mmfusion {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;  // zero-extent dims give an empty tensor
  return n;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw std::invalid_argument(std::string(what) + " contains a non-finite entry");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape product " +
                                std::to_string(shape_product(shape_)));
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data_) v = rng.uniform(-bound, bound);
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw std::invalid_argument("index rank " + std::to_string(index.size()) +
                                " does not match tensor rank " + std::to_string(shape_.size()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) {
      throw std::out_of_range("index " + std::to_string(i) + " out of bounds for dimension " +
                              std::to_string(axis) + " of extent " + std::to_string(shape_[axis]));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

std::string tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["shape"] = t.shape();
  j["data"] = t.values();
  return j.dump();
}

Tensor tensor_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                j.at("data").get<std::vector<double>>());
}

double apply_activation(Activation kind, double pre) {
  switch (kind) {
    case Activation::Identity: return pre;
    case Activation::Relu: return pre > 0.0 ? pre : 0.0;
    case Activation::Tanh: return std::tanh(pre);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-pre));
  }
  throw std::invalid_argument("unknown activation kind");
}

double activation_grad_from_output(Activation kind, double out) {
  switch (kind) {
    case Activation::Identity: return 1.0;
    case Activation::Relu: return out > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - out * out;
    case Activation::Sigmoid: return out * (1.0 - out);
  }
  throw std::invalid_argument("unknown activation kind");
}

namespace {

// Resolved geometry shared by conv_forward and conv_backward.
struct ConvPlan {
  std::size_t spatial_rank = 0;
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t in_dim[3] = {1, 1, 1};
  std::size_t k_dim[3] = {1, 1, 1};
  std::size_t out_dim[3] = {1, 1, 1};
  std::size_t stride[3] = {1, 1, 1};
  std::ptrdiff_t pad_before[3] = {0, 0, 0};
  std::size_t in_spatial_size = 1;
  std::size_t out_spatial_size = 1;
  std::size_t k_spatial_size = 1;
};

ConvPlan make_conv_plan(const Tensor& input, const ConvSpec& spec) {
  const std::size_t ir = input.rank();
  const std::size_t kr = spec.kernel.rank();

  ConvPlan p;
  std::size_t spatial_offset_in = 0;   // index of first spatial dim in the input shape
  std::size_t spatial_offset_k = 0;
  if (ir == kr) {
    p.spatial_rank = kr;
  } else if (ir + 1 == kr) {
    require(kr >= 3, "multi-channel kernel must have rank spatial+2");
    p.spatial_rank = kr - 2;
    p.c_out = spec.kernel.dim(0);
    p.c_in = spec.kernel.dim(1);
    spatial_offset_in = 1;
    spatial_offset_k = 2;
    require(input.dim(0) == p.c_in,
            "input channel dimension " + std::to_string(input.dim(0)) +
                " does not match kernel input channels " + std::to_string(p.c_in));
  } else {
    throw std::invalid_argument("kernel rank " + std::to_string(kr) +
                                " incompatible with input rank " + std::to_string(ir));
  }
  require(p.spatial_rank >= 1 && p.spatial_rank <= 3,
          "conv supports spatial rank 1..3, got " + std::to_string(p.spatial_rank));
  require(spec.bias.size() == p.c_out,
          "bias length " + std::to_string(spec.bias.size()) + " does not match output channels " +
              std::to_string(p.c_out));
  require(spec.stride.size() == 1 || spec.stride.size() == p.spatial_rank,
          "stride must have 1 or spatial-rank entries");

  for (std::size_t d = 0; d < p.spatial_rank; ++d) {
    p.in_dim[d] = input.dim(spatial_offset_in + d);
    p.k_dim[d] = spec.kernel.dim(spatial_offset_k + d);
    p.stride[d] = spec.stride.size() == 1 ? spec.stride[0] : spec.stride[d];
    require(p.stride[d] >= 1, "stride must be >= 1 in dimension " + std::to_string(d));
    if (spec.padding == Padding::Valid) {
      if (p.in_dim[d] < p.k_dim[d]) {
        throw std::invalid_argument("input extent " + std::to_string(p.in_dim[d]) +
                                    " smaller than kernel extent " + std::to_string(p.k_dim[d]) +
                                    " in spatial dimension " + std::to_string(d));
      }
      p.out_dim[d] = (p.in_dim[d] - p.k_dim[d]) / p.stride[d] + 1;
      p.pad_before[d] = 0;
    } else {
      p.out_dim[d] = (p.in_dim[d] + p.stride[d] - 1) / p.stride[d];
      const std::ptrdiff_t total =
          std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>((p.out_dim[d] - 1) * p.stride[d] +
                                                                  p.k_dim[d]) -
                                          static_cast<std::ptrdiff_t>(p.in_dim[d]));
      p.pad_before[d] = total / 2;
    }
    p.in_spatial_size *= p.in_dim[d];
    p.out_spatial_size *= p.out_dim[d];
    p.k_spatial_size *= p.k_dim[d];
  }
  return p;
}

std::vector<std::size_t> conv_output_shape(bool channelled, const ConvPlan& p) {
  std::vector<std::size_t> shape;
  if (channelled) shape.push_back(p.c_out);
  for (std::size_t d = 0; d < p.spatial_rank; ++d) shape.push_back(p.out_dim[d]);
  return shape;
}

}  // namespace

Tensor conv_forward(const Tensor& input, const ConvSpec& spec) {
  require_finite(input, "conv input");
  require_finite(spec.kernel, "conv kernel");
  require_finite(spec.bias, "conv bias");

  const ConvPlan p = make_conv_plan(input, spec);
  const bool channelled = input.rank() != p.spatial_rank;
  Tensor out(conv_output_shape(channelled, p));

  const double* in = input.values().data();
  const double* k = spec.kernel.values().data();
  double* o = out.values().data();

  // Spatial strides (row-major) for input, kernel and output.
  std::size_t is[3] = {1, 1, 1}, ks[3] = {1, 1, 1}, os[3] = {1, 1, 1};
  for (std::size_t d = p.spatial_rank; d-- > 1;) {
    is[d - 1] = is[d] * p.in_dim[d];
    ks[d - 1] = ks[d] * p.k_dim[d];
    os[d - 1] = os[d] * p.out_dim[d];
  }

  for (std::size_t co = 0; co < p.c_out; ++co) {
    double* o_ch = o + co * p.out_spatial_size;
    for (std::size_t oz = 0; oz < p.out_dim[0]; ++oz) {
      for (std::size_t oy = 0; oy < (p.spatial_rank > 1 ? p.out_dim[1] : 1); ++oy) {
        for (std::size_t ox = 0; ox < (p.spatial_rank > 2 ? p.out_dim[2] : 1); ++ox) {
          const std::ptrdiff_t base[3] = {
              static_cast<std::ptrdiff_t>(oz * p.stride[0]) - p.pad_before[0],
              static_cast<std::ptrdiff_t>(oy * p.stride[1]) - p.pad_before[1],
              static_cast<std::ptrdiff_t>(ox * p.stride[2]) - p.pad_before[2]};
          double acc = spec.bias[co];
          for (std::size_t ci = 0; ci < p.c_in; ++ci) {
            const double* in_ch = in + (channelled ? ci * p.in_spatial_size : 0);
            const double* k_ch = k + (co * p.c_in + ci) * p.k_spatial_size;
            for (std::size_t kz = 0; kz < p.k_dim[0]; ++kz) {
              const std::ptrdiff_t iz = base[0] + static_cast<std::ptrdiff_t>(kz);
              if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(p.in_dim[0])) continue;
              for (std::size_t ky = 0; ky < (p.spatial_rank > 1 ? p.k_dim[1] : 1); ++ky) {
                const std::ptrdiff_t iy = base[1] + static_cast<std::ptrdiff_t>(ky);
                if (p.spatial_rank > 1 && (iy < 0 || iy >= static_cast<std::ptrdiff_t>(p.in_dim[1])))
                  continue;
                for (std::size_t kx = 0; kx < (p.spatial_rank > 2 ? p.k_dim[2] : 1); ++kx) {
                  const std::ptrdiff_t ix = base[2] + static_cast<std::ptrdiff_t>(kx);
                  if (p.spatial_rank > 2 && (ix < 0 || ix >= static_cast<std::ptrdiff_t>(p.in_dim[2])))
                    continue;
                  acc += in_ch[static_cast<std::size_t>(iz) * is[0] +
                               static_cast<std::size_t>(iy) * is[1] +
                               static_cast<std::size_t>(ix) * is[2]] *
                         k_ch[kz * ks[0] + ky * ks[1] + kx * ks[2]];
                }
              }
            }
          }
          o_ch[oz * os[0] + oy * os[1] + ox * os[2]] = apply_activation(spec.activation, acc);
        }
      }
    }
  }
  return out;
}

ConvGrads conv_backward(const Tensor& input, const ConvSpec& spec, const Tensor& output,
                        const Tensor& grad_output) {
  const ConvPlan p = make_conv_plan(input, spec);
  const bool channelled = input.rank() != p.spatial_rank;
  require(output.shape() == conv_output_shape(channelled, p),
          "output shape mismatch in conv_backward");
  require(grad_output.same_shape(output), "grad_output shape mismatch in conv_backward");

  ConvGrads g{Tensor(input.shape()), Tensor(spec.kernel.shape()), Tensor({p.c_out})};

  const double* in = input.values().data();
  const double* k = spec.kernel.values().data();
  const double* y = output.values().data();
  const double* gy = grad_output.values().data();
  double* gin = g.input.values().data();
  double* gk = g.kernel.values().data();

  std::size_t is[3] = {1, 1, 1}, ks[3] = {1, 1, 1}, os[3] = {1, 1, 1};
  for (std::size_t d = p.spatial_rank; d-- > 1;) {
    is[d - 1] = is[d] * p.in_dim[d];
    ks[d - 1] = ks[d] * p.k_dim[d];
    os[d - 1] = os[d] * p.out_dim[d];
  }

  for (std::size_t co = 0; co < p.c_out; ++co) {
    const std::size_t ob = co * p.out_spatial_size;
    for (std::size_t oz = 0; oz < p.out_dim[0]; ++oz) {
      for (std::size_t oy = 0; oy < (p.spatial_rank > 1 ? p.out_dim[1] : 1); ++oy) {
        for (std::size_t ox = 0; ox < (p.spatial_rank > 2 ? p.out_dim[2] : 1); ++ox) {
          const std::size_t oi = ob + oz * os[0] + oy * os[1] + ox * os[2];
          const double dpre = gy[oi] * activation_grad_from_output(spec.activation, y[oi]);
          if (dpre == 0.0) continue;
          g.bias[co] += dpre;
          const std::ptrdiff_t base[3] = {
              static_cast<std::ptrdiff_t>(oz * p.stride[0]) - p.pad_before[0],
              static_cast<std::ptrdiff_t>(oy * p.stride[1]) - p.pad_before[1],
              static_cast<std::ptrdiff_t>(ox * p.stride[2]) - p.pad_before[2]};
          for (std::size_t ci = 0; ci < p.c_in; ++ci) {
            const std::size_t in_base = channelled ? ci * p.in_spatial_size : 0;
            const std::size_t k_base = (co * p.c_in + ci) * p.k_spatial_size;
            for (std::size_t kz = 0; kz < p.k_dim[0]; ++kz) {
              const std::ptrdiff_t iz = base[0] + static_cast<std::ptrdiff_t>(kz);
              if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(p.in_dim[0])) continue;
              for (std::size_t ky = 0; ky < (p.spatial_rank > 1 ? p.k_dim[1] : 1); ++ky) {
                const std::ptrdiff_t iy = base[1] + static_cast<std::ptrdiff_t>(ky);
                if (p.spatial_rank > 1 && (iy < 0 || iy >= static_cast<std::ptrdiff_t>(p.in_dim[1])))
                  continue;
                for (std::size_t kx = 0; kx < (p.spatial_rank > 2 ? p.k_dim[2] : 1); ++kx) {
                  const std::ptrdiff_t ix = base[2] + static_cast<std::ptrdiff_t>(kx);
                  if (p.spatial_rank > 2 && (ix < 0 || ix >= static_cast<std::ptrdiff_t>(p.in_dim[2])))
                    continue;
                  const std::size_t ii = in_base + static_cast<std::size_t>(iz) * is[0] +
                                         static_cast<std::size_t>(iy) * is[1] +
                                         static_cast<std::size_t>(ix) * is[2];
                  const std::size_t ki = k_base + kz * ks[0] + ky * ks[1] + kx * ks[2];
                  gin[ii] += k[ki] * dpre;
                  gk[ki] += in[ii] * dpre;
                }
              }
            }
          }
        }
      }
    }
  }
  return g;
}

ProbVector::ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("probability vector must be non-empty");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("probability entries must be finite and non-negative");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
}

ProbVector ProbVector::uniform(std::size_t n) {
  if (n == 0) throw std::invalid_argument("probability vector must be non-empty");
  return ProbVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ProbVector softmax(const Tensor& logits) {
  require(logits.rank() == 1, "softmax expects a rank-1 tensor");
  require(logits.size() >= 1, "softmax input must be non-empty");
  require_finite(logits, "softmax input");

  const auto& z = logits.values();
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(z[i] - m);
    sum += e[i];
  }
  for (double& v : e) v /= sum;
  return ProbVector(std::move(e));
}

std::size_t argmax_decision(const ProbVector& probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

double l2_penalty(const Tensor& weights) {
  require_finite(weights, "l2_penalty input");
  double sum = 0.0;
  for (double w : weights.values()) sum += w * w;
  return sum;
}

LstmParams LstmParams::seeded(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  require(input_size >= 1 && hidden_size >= 1, "LSTM sizes must be positive");
  // Fan-in scaling on the input block keeps wide inputs out of gate
  // saturation; the recurrent block uses the hidden fan-in.
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(input_size));
  const double hid_bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.w_input = Tensor::uniform({4 * hidden_size, input_size}, in_bound, rng);
  p.w_hidden = Tensor::uniform({4 * hidden_size, hidden_size}, hid_bound, rng);
  p.bias = Tensor({4 * hidden_size});
  for (std::size_t i = 0; i < hidden_size; ++i) p.bias[hidden_size + i] = 1.0;  // forget gate
  return p;
}

LstmParams LstmParams::zeros(std::size_t input_size, std::size_t hidden_size) {
  require(input_size >= 1 && hidden_size >= 1, "LSTM sizes must be positive");
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.w_input = Tensor({4 * hidden_size, input_size});
  p.w_hidden = Tensor({4 * hidden_size, hidden_size});
  p.bias = Tensor({4 * hidden_size});
  return p;
}

LstmState lstm_step(const LstmParams& params, const Tensor& x, const Tensor& h_prev,
                    const Tensor& c_prev, LstmStepCache* cache) {
  const std::size_t I = params.input_size;
  const std::size_t H = params.hidden_size;
  require(x.size() == I, "lstm input length " + std::to_string(x.size()) + " != input_size " +
                             std::to_string(I));
  require(h_prev.size() == H, "lstm h_prev length mismatch");
  require(c_prev.size() == H, "lstm c_prev length mismatch");

  const double* wx = params.w_input.values().data();
  const double* wh = params.w_hidden.values().data();
  const double* b = params.bias.values().data();

  // z = w_input x + w_hidden h_prev + bias, gate blocks i,f,o,g.
  std::vector<double> z(4 * H);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    double acc = b[r];
    const double* wxr = wx + r * I;
    for (std::size_t i = 0; i < I; ++i) acc += wxr[i] * x[i];
    const double* whr = wh + r * H;
    for (std::size_t i = 0; i < H; ++i) acc += whr[i] * h_prev[i];
    z[r] = acc;
  }

  Tensor gi({H}), gf({H}), go({H}), gg({H});
  Tensor c({H}), h({H}), tc({H});
  for (std::size_t i = 0; i < H; ++i) {
    gi[i] = apply_activation(Activation::Sigmoid, z[i]);
    gf[i] = apply_activation(Activation::Sigmoid, z[H + i]);
    go[i] = apply_activation(Activation::Sigmoid, z[2 * H + i]);
    gg[i] = std::tanh(z[3 * H + i]);
    c[i] = gf[i] * c_prev[i] + gi[i] * gg[i];
    tc[i] = std::tanh(c[i]);
    h[i] = go[i] * tc[i];
  }

  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->gate_i = gi;
    cache->gate_f = gf;
    cache->gate_o = go;
    cache->gate_g = gg;
    cache->c = c;
    cache->tanh_c = tc;
  }
  return LstmState{std::move(h), std::move(c)};
}

LstmParamGrads LstmParamGrads::zeros(const LstmParams& params) {
  return LstmParamGrads{Tensor(params.w_input.shape()), Tensor(params.w_hidden.shape()),
                        Tensor(params.bias.shape())};
}

LstmInputGrads lstm_step_backward(const LstmParams& params, const LstmStepCache& cache,
                                  const Tensor& dh, const Tensor& dc, LstmParamGrads& acc) {
  const std::size_t I = params.input_size;
  const std::size_t H = params.hidden_size;
  require(dh.size() == H && dc.size() == H, "lstm gradient length mismatch");

  LstmInputGrads g{Tensor({I}), Tensor({H}), Tensor({H})};
  std::vector<double> dz(4 * H);
  for (std::size_t i = 0; i < H; ++i) {
    const double go = cache.gate_o[i];
    const double tc = cache.tanh_c[i];
    const double dct = dc[i] + dh[i] * go * (1.0 - tc * tc);
    const double di = dct * cache.gate_g[i];
    const double df = dct * cache.c_prev[i];
    const double dg = dct * cache.gate_i[i];
    const double do_ = dh[i] * tc;
    dz[i] = di * cache.gate_i[i] * (1.0 - cache.gate_i[i]);
    dz[H + i] = df * cache.gate_f[i] * (1.0 - cache.gate_f[i]);
    dz[2 * H + i] = do_ * go * (1.0 - go);
    dz[3 * H + i] = dg * (1.0 - cache.gate_g[i] * cache.gate_g[i]);
    g.c_prev[i] = dct * cache.gate_f[i];
  }

  double* gwx = acc.w_input.values().data();
  double* gwh = acc.w_hidden.values().data();
  double* gb = acc.bias.values().data();
  const double* wx = params.w_input.values().data();
  const double* wh = params.w_hidden.values().data();
  for (std::size_t r = 0; r < 4 * H; ++r) {
    const double d = dz[r];
    if (d == 0.0) continue;
    gb[r] += d;
    double* gwxr = gwx + r * I;
    const double* wxr = wx + r * I;
    for (std::size_t i = 0; i < I; ++i) {
      gwxr[i] += d * cache.x[i];
      g.x[i] += d * wxr[i];
    }
    double* gwhr = gwh + r * H;
    const double* whr = wh + r * H;
    for (std::size_t i = 0; i < H; ++i) {
      gwhr[i] += d * cache.h_prev[i];
      g.h_prev[i] += d * whr[i];
    }
  }
  return g;
}

Tensor dense_forward(const Tensor& weights, const Tensor& bias, const Tensor& x,
                     Activation activation) {
  require(weights.rank() == 2, "dense weights must be rank-2");
  const std::size_t out = weights.dim(0);
  const std::size_t in = weights.dim(1);
  require(x.size() == in, "dense input length " + std::to_string(x.size()) +
                              " does not match weight columns " + std::to_string(in));
  require(bias.size() == out, "dense bias length mismatch");

  Tensor y({out});
  const double* w = weights.values().data();
  for (std::size_t r = 0; r < out; ++r) {
    double acc = bias[r];
    const double* wr = w + r * in;
    for (std::size_t i = 0; i < in; ++i) acc += wr[i] * x[i];
    y[r] = apply_activation(activation, acc);
  }
  return y;
}

DenseGrads dense_backward(const Tensor& weights, const Tensor& bias, const Tensor& x,
                          Activation activation, const Tensor& output,
                          const Tensor& grad_output) {
  const std::size_t out = weights.dim(0);
  const std::size_t in = weights.dim(1);
  require(output.size() == out && grad_output.size() == out, "dense gradient length mismatch");
  require(bias.size() == out, "dense bias length mismatch");

  DenseGrads g{Tensor(weights.shape()), Tensor({out}), Tensor({in})};
  const double* w = weights.values().data();
  double* gw = g.weights.values().data();
  for (std::size_t r = 0; r < out; ++r) {
    const double dpre = grad_output[r] * activation_grad_from_output(activation, output[r]);
    g.bias[r] = dpre;
    if (dpre == 0.0) continue;
    const double* wr = w + r * in;
    double* gwr = gw + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      gwr[i] += dpre * x[i];
      g.input[i] += dpre * wr[i];
    }
  }
  return g;
}

void sgd_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              const SgdConfig& cfg) {
  require(cfg.learning_rate > 0.0, "learning_rate must be positive");
  require(cfg.l2_lambda >= 0.0, "l2_lambda must be non-negative");
  require(params.size() == grads.size(), "params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (!p.same_shape(g)) {
      throw std::invalid_argument("param/grad shape mismatch at tensor " + std::to_string(i));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= cfg.learning_rate * (g[j] + 2.0 * cfg.l2_lambda * p[j]);
    }
  }
}

double grad_check(const std::function<double(const Tensor&)>& loss, const Tensor& params,
                  const Tensor& analytic_grad, double epsilon) {
  require(epsilon >= 1e-8 && epsilon <= 1e-3, "epsilon must lie in [1e-8, 1e-3]");
  require(params.same_shape(analytic_grad), "analytic gradient shape mismatch");

  double max_rel = 0.0;
  Tensor probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + epsilon;
    const double f_plus = loss(probe);
    probe[i] = saved - epsilon;
    const double f_minus = loss(probe);
    probe[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      throw std::runtime_error("loss returned a non-finite value during grad_check");
    }
    const double fd = (f_plus - f_minus) / (2.0 * epsilon);
    const double a = analytic_grad[i];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-3});
    max_rel = std::max(max_rel, std::abs(a - fd) / denom);
  }
  return max_rel;
}

double softmax_cross_entropy(const Tensor& logits, std::size_t target) {
  require(target < logits.size(), "cross-entropy target out of range");
  const auto& z = logits.values();
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  return -(z[target] - m - std::log(sum));
}

Tensor softmax_cross_entropy_grad(const Tensor& logits, std::size_t target) {
  require(target < logits.size(), "cross-entropy target out of range");
  const ProbVector p = softmax(logits);
  Tensor g({logits.size()});
  for (std::size_t i = 0; i < logits.size(); ++i) g[i] = p[i];
  g[target] -= 1.0;
  return g;
}

}  // namespace mmfusion
