#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mmfusion/rng.hpp"
#include "mmfusion/tensor.hpp"
#include "oracles.hpp"

using namespace mmfusion;

namespace {

ConvSpec random_conv_spec(std::size_t spatial, bool channelled, std::size_t stride,
                          Padding padding, Rng& rng) {
  std::vector<std::size_t> kshape;
  const std::size_t c_out = channelled ? 1 + rng.below(3) : 1;
  const std::size_t c_in = channelled ? 1 + rng.below(3) : 1;
  if (channelled) {
    kshape.push_back(c_out);
    kshape.push_back(c_in);
  }
  for (std::size_t d = 0; d < spatial; ++d) kshape.push_back(1 + rng.below(3));
  ConvSpec spec;
  spec.kernel = Tensor::uniform(kshape, 1.0, rng);
  spec.bias = Tensor({c_out});
  for (std::size_t i = 0; i < c_out; ++i) spec.bias[i] = rng.uniform(-0.5, 0.5);
  spec.stride = {stride};
  spec.padding = padding;
  spec.activation = Activation::Identity;
  return spec;
}

Tensor random_conv_input(std::size_t spatial, bool channelled, const ConvSpec& spec, Rng& rng) {
  std::vector<std::size_t> ishape;
  if (channelled) ishape.push_back(spec.kernel.dim(1));
  for (std::size_t d = 0; d < spatial; ++d) {
    const std::size_t k = spec.kernel.dim((channelled ? 2 : 0) + d);
    ishape.push_back(k + rng.below(6));
  }
  return Tensor::uniform(ishape, 1.0, rng);
}

}  // namespace

TEST_CASE("conv_forward identity 1x1 kernel passes input through") {
  ConvSpec spec;
  spec.kernel = Tensor({1, 1}, {1.0});
  spec.bias = Tensor({1});
  Rng rng(7);
  const Tensor input = Tensor::uniform({4, 5}, 2.0, rng);
  const Tensor out = conv_forward(input, spec);
  CHECK(out == input);
}

TEST_CASE("conv_forward all-ones 3x3 valid over all-ones 3x3 input gives 9") {
  ConvSpec spec;
  spec.kernel = Tensor::full({3, 3}, 1.0);
  spec.bias = Tensor({1});
  const Tensor out = conv_forward(Tensor::full({3, 3}, 1.0), spec);
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 1});
  CHECK(out[0] == doctest::Approx(9.0).epsilon(1e-14));
}

TEST_CASE("conv_forward zero input passes only the bias") {
  Rng rng(3);
  ConvSpec spec;
  spec.kernel = Tensor::uniform({2, 2}, 1.0, rng);
  spec.bias = Tensor({1}, {0.5});
  const Tensor out = conv_forward(Tensor({5, 5}), spec);
  for (double v : out.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("conv_forward matches the naive nested-loop oracle") {
  Rng rng(20240811);
  int cases = 0;
  for (std::size_t spatial = 1; spatial <= 3; ++spatial) {
    for (bool channelled : {false, true}) {
      for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
        for (Padding padding : {Padding::Valid, Padding::Same}) {
          for (int rep = 0; rep < 5; ++rep) {
            const ConvSpec spec = random_conv_spec(spatial, channelled, stride, padding, rng);
            const Tensor input = random_conv_input(spatial, channelled, spec, rng);
            const Tensor got = conv_forward(input, spec);
            const Tensor want = oracle::conv_naive(input, spec);
            REQUIRE(got.shape() == want.shape());
            for (std::size_t i = 0; i < got.size(); ++i) {
              REQUIRE(std::abs(got[i] - want[i]) <= 1e-10);
            }
            ++cases;
          }
        }
      }
    }
  }
  CHECK(cases == 120);
}

TEST_CASE("conv_forward rejects bad shapes with the offending dimension named") {
  ConvSpec spec;
  spec.kernel = Tensor::full({3, 3}, 1.0);
  spec.bias = Tensor({1});
  CHECK_THROWS_WITH_AS(conv_forward(Tensor({5, 2}), spec),
                       doctest::Contains("dimension 1"), std::invalid_argument);

  ConvSpec chan;
  chan.kernel = Tensor::full({2, 3, 2, 2}, 1.0);
  chan.bias = Tensor({2});
  CHECK_THROWS_AS(conv_forward(Tensor({4, 6, 6}), chan), std::invalid_argument);
}

TEST_CASE("conv_forward rejects non-finite input") {
  ConvSpec spec;
  spec.kernel = Tensor({1, 1}, {1.0});
  spec.bias = Tensor({1});
  Tensor input({2, 2});
  input[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(conv_forward(input, spec), std::invalid_argument);
}

TEST_CASE("conv_forward is deterministic") {
  Rng rng(99);
  const ConvSpec spec = random_conv_spec(3, true, 2, Padding::Same, rng);
  const Tensor input = random_conv_input(3, true, spec, rng);
  const Tensor a = conv_forward(input, spec);
  const Tensor b = conv_forward(input, spec);
  CHECK(a == b);
}

TEST_CASE("softmax of zeros is uniform") {
  const ProbVector p = softmax(Tensor({3}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax of [ln 2, 0, 0] is [0.5, 0.25, 0.25]") {
  const ProbVector p = softmax(Tensor({3}, {std::log(2.0), 0.0, 0.0}));
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("softmax sums to one and is shift invariant, including huge logits") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.below(8);
    Tensor z({n});
    for (std::size_t i = 0; i < n; ++i) z[i] = rng.uniform(-3.0, 3.0);
    for (double shift : {0.0, 17.25, -123.5, 1e4, -1e4}) {
      Tensor zs({n});
      for (std::size_t i = 0; i < n; ++i) zs[i] = z[i] + shift;
      const ProbVector p = softmax(z);
      const ProbVector ps = softmax(zs);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += ps[i];
      CHECK(std::abs(sum - 1.0) <= 1e-12);
      CHECK(argmax_decision(ps) == argmax_decision(p));
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ps[i] - p[i]) <= 1e-12);
    }
  }
}

TEST_CASE("softmax rejects empty and non-finite input") {
  CHECK_THROWS_AS(softmax(Tensor({1, 0, 2})), std::invalid_argument);
  Tensor bad({2});
  bad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(softmax(bad), std::invalid_argument);
}

TEST_CASE("argmax_decision picks the highest probability, lowest index on ties") {
  CHECK(argmax_decision(ProbVector({0.1, 0.7, 0.2})) == 1);
  CHECK(argmax_decision(ProbVector({0.5, 0.5})) == 0);
  CHECK(argmax_decision(ProbVector({0.25, 0.25, 0.25, 0.25})) == 0);
}

TEST_CASE("argmax over softmax equals argmax over raw logits") {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.below(7);
    Tensor z({n});
    for (std::size_t i = 0; i < n; ++i) z[i] = rng.uniform(-50.0, 50.0);
    std::size_t raw_best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (z[i] > z[raw_best]) raw_best = i;
    }
    CHECK(argmax_decision(softmax(z)) == raw_best);
  }
}

TEST_CASE("l2_penalty basics") {
  CHECK(l2_penalty(Tensor({4})) == 0.0);
  CHECK(l2_penalty(Tensor({2}, {3.0, 4.0})) == doctest::Approx(25.0).epsilon(1e-15));

  Rng rng(13);
  const Tensor w = Tensor::uniform({7}, 2.0, rng);
  for (double k : {0.5, 2.0, -3.0}) {
    Tensor kw({7});
    for (std::size_t i = 0; i < 7; ++i) kw[i] = k * w[i];
    CHECK(l2_penalty(kw) == doctest::Approx(k * k * l2_penalty(w)).epsilon(1e-12));
  }
  CHECK(l2_penalty(w) > 0.0);
}

TEST_CASE("lstm_step with zero params and state yields zero h and c") {
  const LstmParams p = LstmParams::zeros(3, 4);
  const LstmState s = lstm_step(p, Tensor({3}), Tensor({4}), Tensor({4}));
  for (double v : s.h.values()) CHECK(v == 0.0);
  for (double v : s.c.values()) CHECK(v == 0.0);
}

TEST_CASE("lstm_step matches the hand-evaluated scalar oracle") {
  // One unit, weights fixed; expected values computed once by straight-line
  // evaluation of the gate equations in extended precision.
  LstmParams p = LstmParams::zeros(1, 1);
  p.w_input = Tensor({4, 1}, {0.5, 0.3, -0.4, 0.8});
  p.w_hidden = Tensor({4, 1}, {-0.25, 0.2, 0.35, -0.6});
  p.bias = Tensor({4}, {0.1, 1.0, -0.2, 0.05});
  const LstmState s = lstm_step(p, Tensor({1}, {0.7}), Tensor({1}, {-0.3}), Tensor({1}, {0.4}));
  CHECK(s.c[0] == doctest::Approx(0.7174934225902745).epsilon(1e-12));
  CHECK(s.h[0] == doctest::Approx(0.22016323960315986).epsilon(1e-12));
}

TEST_CASE("lstm_step output shapes follow hidden_size") {
  Rng rng(17);
  const LstmParams p = LstmParams::seeded(3, 5, rng);
  const LstmState s = lstm_step(p, Tensor({3}), Tensor({5}), Tensor({5}));
  CHECK(s.h.size() == 5);
  CHECK(s.c.size() == 5);
  CHECK_THROWS_AS(lstm_step(p, Tensor({4}), Tensor({5}), Tensor({5})), std::invalid_argument);
}

TEST_CASE("dense_forward basics") {
  const Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor x({3}, {1.5, -2.0, 0.25});
  CHECK(dense_forward(eye, Tensor({3}), x, Activation::Identity) == x);

  const Tensor w({1, 2}, {1.0, 1.0});
  const Tensor y = dense_forward(w, Tensor({1}, {1.0}), Tensor({2}, {2.0, 3.0}),
                                 Activation::Identity);
  CHECK(y[0] == doctest::Approx(6.0).epsilon(1e-15));

  const Tensor neg = dense_forward(w, Tensor({1}, {-10.0}), Tensor({2}, {2.0, 3.0}),
                                   Activation::Relu);
  CHECK(neg[0] == 0.0);

  CHECK_THROWS_AS(dense_forward(w, Tensor({1}), Tensor({3}), Activation::Identity),
                  std::invalid_argument);
}

TEST_CASE("sgd_step update rule and determinism") {
  Tensor p({1}, {1.0});
  const Tensor g({1}, {0.0});
  sgd_step({&p}, {&g}, SgdConfig{0.1, 0.0, 0});
  CHECK(p[0] == 1.0);

  p = Tensor({1}, {1.0});
  sgd_step({&p}, {&g}, SgdConfig{0.1, 0.5, 0});
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));

  Rng rng(23);
  Tensor a = Tensor::uniform({10}, 1.0, rng);
  Tensor b = a;
  const Tensor grad = Tensor::uniform({10}, 1.0, rng);
  const SgdConfig cfg{0.05, 0.01, 42};
  sgd_step({&a}, {&grad}, cfg);
  sgd_step({&b}, {&grad}, cfg);
  CHECK(a == b);

  CHECK_THROWS_AS(sgd_step({&a}, {&p}, cfg), std::invalid_argument);
}

TEST_CASE("grad_check accepts the quadratic loss with analytic gradient 2p") {
  Rng rng(31);
  const Tensor p = Tensor::uniform({6}, 2.0, rng);
  Tensor analytic({6});
  for (std::size_t i = 0; i < 6; ++i) analytic[i] = 2.0 * p[i];
  const double err = grad_check([](const Tensor& t) { return l2_penalty(t); }, p, analytic, 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check flags a wrong gradient") {
  const Tensor p({2}, {1.0, -2.0});
  const Tensor wrong({2}, {2.0, 3.0});  // true gradient is (2, -4)
  const double err = grad_check([](const Tensor& t) { return l2_penalty(t); }, p, wrong, 1e-5);
  CHECK(err > 1e-2);
}

TEST_CASE("conv -> softmax -> cross-entropy gradients pass the finite-difference check") {
  Rng rng(37);
  const Tensor input = Tensor::uniform({2, 5, 5}, 1.0, rng);  // [c_in, h, w]
  const std::size_t target = 1;

  // Parameters are the flattened kernel [3,2,3,3] followed by 3 bias entries.
  const std::vector<std::size_t> kshape{3, 2, 3, 3};
  const std::size_t ksize = 3 * 2 * 3 * 3;
  const Tensor flat = Tensor::uniform({ksize + 3}, 0.5, rng);

  auto unpack = [&](const Tensor& params) {
    ConvSpec spec;
    std::vector<double> kdata(params.values().begin(), params.values().begin() + ksize);
    spec.kernel = Tensor(kshape, std::move(kdata));
    spec.bias = Tensor({3}, {params.values().begin() + ksize, params.values().end()});
    spec.activation = Activation::Tanh;
    return spec;
  };
  auto loss = [&](const Tensor& params) {
    const ConvSpec spec = unpack(params);
    const Tensor conv = conv_forward(input, spec);
    // Logits: per-channel means of the conv output.
    const std::size_t per = conv.size() / 3;
    Tensor logits({3});
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < per; ++i) s += conv[c * per + i];
      logits[c] = s / static_cast<double>(per);
    }
    return softmax_cross_entropy(logits, target);
  };

  // Analytic gradient via conv_backward.
  const ConvSpec spec = unpack(flat);
  const Tensor conv = conv_forward(input, spec);
  const std::size_t per = conv.size() / 3;
  Tensor logits({3});
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) s += conv[c * per + i];
    logits[c] = s / static_cast<double>(per);
  }
  const Tensor dlogits = softmax_cross_entropy_grad(logits, target);
  Tensor dconv(conv.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      dconv[c * per + i] = dlogits[c] / static_cast<double>(per);
    }
  }
  const ConvGrads grads = conv_backward(input, spec, conv, dconv);
  Tensor analytic({ksize + 3});
  for (std::size_t i = 0; i < ksize; ++i) analytic[i] = grads.kernel[i];
  for (std::size_t i = 0; i < 3; ++i) analytic[ksize + i] = grads.bias[i];

  CHECK(grad_check(loss, flat, analytic, 1e-5) < 1e-5);
}

TEST_CASE("single LSTM step gradients pass the finite-difference check") {
  Rng rng(41);
  const std::size_t I = 3, H = 4;
  const Tensor x0 = Tensor::uniform({I}, 1.0, rng);
  const Tensor h0 = Tensor::uniform({H}, 0.5, rng);
  const Tensor c0 = Tensor::uniform({H}, 0.5, rng);
  const Tensor read_h = Tensor::uniform({H}, 1.0, rng);
  const Tensor read_c = Tensor::uniform({H}, 1.0, rng);

  const std::size_t wx = 4 * H * I, wh = 4 * H * H, nb = 4 * H;
  const Tensor flat = Tensor::uniform({wx + wh + nb}, 0.4, rng);

  auto unpack = [&](const Tensor& params) {
    LstmParams p = LstmParams::zeros(I, H);
    const auto& v = params.values();
    p.w_input = Tensor({4 * H, I}, {v.begin(), v.begin() + wx});
    p.w_hidden = Tensor({4 * H, H}, {v.begin() + wx, v.begin() + wx + wh});
    p.bias = Tensor({4 * H}, {v.begin() + wx + wh, v.end()});
    return p;
  };
  auto loss = [&](const Tensor& params) {
    const LstmState s = lstm_step(unpack(params), x0, h0, c0);
    double acc = 0.0;
    for (std::size_t i = 0; i < H; ++i) acc += read_h[i] * s.h[i] + read_c[i] * s.c[i];
    return acc;
  };

  const LstmParams p = unpack(flat);
  LstmStepCache cache;
  lstm_step(p, x0, h0, c0, &cache);
  LstmParamGrads acc = LstmParamGrads::zeros(p);
  lstm_step_backward(p, cache, read_h, read_c, acc);
  Tensor analytic({wx + wh + nb});
  std::size_t k = 0;
  for (std::size_t i = 0; i < wx; ++i) analytic[k++] = acc.w_input[i];
  for (std::size_t i = 0; i < wh; ++i) analytic[k++] = acc.w_hidden[i];
  for (std::size_t i = 0; i < nb; ++i) analytic[k++] = acc.bias[i];

  CHECK(grad_check(loss, flat, analytic, 1e-5) < 1e-5);

  // Input-side gradients through the same step.
  auto loss_x = [&](const Tensor& xin) {
    const LstmState s = lstm_step(p, xin, h0, c0);
    double accv = 0.0;
    for (std::size_t i = 0; i < H; ++i) accv += read_h[i] * s.h[i] + read_c[i] * s.c[i];
    return accv;
  };
  LstmParamGrads scratch = LstmParamGrads::zeros(p);
  const LstmInputGrads gin = lstm_step_backward(p, cache, read_h, read_c, scratch);
  CHECK(grad_check(loss_x, x0, gin.x, 1e-5) < 1e-5);
}

TEST_CASE("dense gradients pass the finite-difference check") {
  Rng rng(43);
  const Tensor x = Tensor::uniform({4}, 1.0, rng);
  const std::size_t target = 2;
  const Tensor flat = Tensor::uniform({3 * 4 + 3}, 0.7, rng);

  auto unpack = [&](const Tensor& params) {
    const auto& v = params.values();
    return std::pair<Tensor, Tensor>{Tensor({3, 4}, {v.begin(), v.begin() + 12}),
                                     Tensor({3}, {v.begin() + 12, v.end()})};
  };
  auto loss = [&](const Tensor& params) {
    const auto [w, b] = unpack(params);
    return softmax_cross_entropy(dense_forward(w, b, x, Activation::Identity), target);
  };

  const auto [w, b] = unpack(flat);
  const Tensor logits = dense_forward(w, b, x, Activation::Identity);
  const Tensor dlogits = softmax_cross_entropy_grad(logits, target);
  const DenseGrads g = dense_backward(w, b, x, Activation::Identity, logits, dlogits);
  Tensor analytic({15});
  for (std::size_t i = 0; i < 12; ++i) analytic[i] = g.weights[i];
  for (std::size_t i = 0; i < 3; ++i) analytic[12 + i] = g.bias[i];
  CHECK(grad_check(loss, flat, analytic, 1e-5) < 1e-5);
}

TEST_CASE("tensor json round-trip preserves shape and data") {
  Rng rng(47);
  const Tensor t = Tensor::uniform({2, 3, 4}, 5.0, rng);
  CHECK(tensor_from_json(tensor_to_json(t)) == t);
}

TEST_CASE("tensor rejects mismatched data length") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}
