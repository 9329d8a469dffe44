#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "mmfusion/fusion.hpp"
#include "mmfusion/rng.hpp"

using namespace mmfusion;
using namespace mmfusion::fusion;

namespace {

FeatureVector fv(std::vector<double> values, SourceTag tag = SourceTag::Image) {
  const std::size_t n = values.size();
  return FeatureVector{Tensor({n}, std::move(values)), tag};
}

// Exhaustive search over unit-normal separators on a 2-D set: returns the
// best geometric margin found. Confirms linear separability independently of
// the SVM solver.
double best_linear_margin(const std::vector<FeatureVector>& features,
                          const std::vector<std::size_t>& labels) {
  double best = -1e9;
  for (int deg = 0; deg < 360; ++deg) {
    const double theta = deg * std::numbers::pi / 180.0;
    const double wx = std::cos(theta), wy = std::sin(theta);
    for (double b = -6.0; b <= 6.0; b += 0.05) {
      double worst = 1e9;
      for (std::size_t i = 0; i < features.size(); ++i) {
        const double y = labels[i] == 0 ? 1.0 : -1.0;
        const double m = y * (wx * features[i].values[0] + wy * features[i].values[1] + b);
        worst = std::min(worst, m);
      }
      best = std::max(best, worst);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("concat_features keeps order and length") {
  const FeatureVector out = concat_features(fv({1, 2}), fv({3, 4}, SourceTag::Speech));
  REQUIRE(out.values.size() == 4);
  CHECK(out.values[0] == 1.0);
  CHECK(out.values[1] == 2.0);
  CHECK(out.values[2] == 3.0);
  CHECK(out.values[3] == 4.0);
  CHECK(out.tag == SourceTag::Fused);

  const FeatureVector with_empty = concat_features(fv({1, 2}), fv({}));
  CHECK(with_empty.values.size() == 2);
  CHECK(with_empty.values[0] == 1.0);
  CHECK(with_empty.values[1] == 2.0);
}

TEST_CASE("softmax_classify with zero weights is uniform and ties to class 0") {
  const SoftmaxClassifyResult out = softmax_classify(fv({1.0, -2.0, 0.5}), Tensor({4, 3}));
  for (std::size_t i = 0; i < 4; ++i) CHECK(out.probs[i] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(out.class_index == 0);
}

TEST_CASE("softmax_classify two-class logit gap of ln 3 gives [0.75, 0.25]") {
  // c_1 = (ln 3, 0), c_2 = (0, 0), s = (1, 1): logit gap ln 3.
  const Tensor weights({2, 2}, {std::log(3.0), 0.0, 0.0, 0.0});
  const SoftmaxClassifyResult out = softmax_classify(fv({1.0, 1.0}), weights);
  CHECK(out.probs[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(out.probs[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(out.class_index == 0);
}

TEST_CASE("softmax_classify is invariant to adding one vector to every class weight") {
  Rng rng(301);
  const FeatureVector s = fv({0.3, -1.2, 0.8});
  Tensor weights = Tensor::uniform({5, 3}, 1.0, rng);
  const Tensor shift = Tensor::uniform({3}, 2.0, rng);
  Tensor shifted = weights;
  for (std::size_t d = 0; d < 5; ++d) {
    for (std::size_t i = 0; i < 3; ++i) shifted.at({d, i}) += shift[i];
  }
  const SoftmaxClassifyResult a = softmax_classify(s, weights);
  const SoftmaxClassifyResult b = softmax_classify(s, shifted);
  CHECK(a.class_index == b.class_index);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(a.probs[i] - b.probs[i]) <= 1e-12);
}

TEST_CASE("softmax_classify rejects mismatched weight length") {
  CHECK_THROWS_AS(softmax_classify(fv({1.0, 2.0}), Tensor({3, 4})), std::invalid_argument);
}

TEST_CASE("alpha_fuse boundaries reproduce the inputs bitwise") {
  const ProbVector rgb({0.7, 0.2, 0.1});
  const ProbVector skel({0.1, 0.3, 0.6});
  CHECK(alpha_fuse(rgb, skel, FusionConfig{1.0}) == rgb);
  CHECK(alpha_fuse(rgb, skel, FusionConfig{0.0}) == skel);
}

TEST_CASE("alpha_fuse convex combination") {
  const ProbVector out = alpha_fuse(ProbVector({1.0, 0.0}), ProbVector({0.0, 1.0}),
                                    FusionConfig{0.6});
  CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("alpha_fuse stays a valid ProbVector bounded by its inputs on random pairs") {
  Rng rng(307);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 2 + rng.below(6);
    std::vector<double> a(n), b(n);
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(0.0, 1.0);
      b[i] = rng.uniform(0.0, 1.0);
      sa += a[i];
      sb += b[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      a[i] /= sa;
      b[i] /= sb;
    }
    const ProbVector pa(a), pb(b);
    const double alpha = rng.uniform(0.0, 1.0);
    const ProbVector fused = alpha_fuse(pa, pb, FusionConfig{alpha});
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += fused[i];
      CHECK(fused[i] >= std::min(pa[i], pb[i]) - 1e-15);
      CHECK(fused[i] <= std::max(pa[i], pb[i]) + 1e-15);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("alpha_fuse validates alpha and lengths") {
  const ProbVector p({0.5, 0.5});
  CHECK_THROWS_AS(alpha_fuse(p, ProbVector({1.0}), FusionConfig{0.5}), std::invalid_argument);
  CHECK_THROWS_AS(alpha_fuse(p, p, FusionConfig{1.5}), std::invalid_argument);
  CHECK_THROWS_AS(alpha_fuse(p, p, FusionConfig{-0.1}), std::invalid_argument);
}

TEST_CASE("pairwise classifier count is k(k-1)/2 for k in 2..10") {
  Rng rng(311);
  SvmTrainConfig cfg;
  cfg.epochs = 10;  // count property only
  for (std::size_t k = 2; k <= 10; ++k) {
    std::vector<FeatureVector> features;
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < k; ++c) {
      for (int s = 0; s < 2; ++s) {
        features.push_back(fv({rng.uniform(-1, 1), rng.uniform(-1, 1)}));
        labels.push_back(c);
      }
    }
    const SvmFusionModel model = svm_fuse_train(features, labels, k, cfg);
    CHECK(model.classifiers().size() == k * (k - 1) / 2);
    CHECK(svm_fuse_predict(model, fv({0.0, 0.0})).size() == k);
  }
}

TEST_CASE("svm training reaches perfect accuracy on a separable toy set") {
  // Two clusters straddling the y axis with geometric margin >= 1.
  std::vector<FeatureVector> features{fv({2.0, 0.5}),  fv({2.5, 1.0}),  fv({3.0, 0.0}),
                                      fv({2.2, -0.8}), fv({-2.0, 0.0}), fv({-2.5, -1.0}),
                                      fv({-3.0, 0.5}), fv({-2.2, 0.9})};
  std::vector<std::size_t> labels{0, 0, 0, 0, 1, 1, 1, 1};

  // Independent confirmation that a unit separator with margin >= 1 exists.
  CHECK(best_linear_margin(features, labels) >= 1.0);

  const SvmFusionModel model = svm_fuse_train(features, labels, 2, SvmTrainConfig{});
  for (std::size_t i = 0; i < features.size(); ++i) {
    const ProbVector p = svm_fuse_predict(model, features[i]);
    CHECK(argmax_decision(p) == labels[i]);
  }

  // Two-class coupling is the calibrated sigmoid and its complement.
  const ProbVector p = svm_fuse_predict(model, fv({2.4, 0.1}));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[0] > 0.5);
}

TEST_CASE("uniform pairwise probabilities give a uniform vote") {
  // Zero weights and a symmetric calibration pin every pairwise p at 0.5.
  std::vector<PairwiseSvm> classifiers;
  for (std::size_t pos = 0; pos < 4; ++pos) {
    for (std::size_t neg = pos + 1; neg < 4; ++neg) {
      PairwiseSvm svm;
      svm.pos_class = pos;
      svm.neg_class = neg;
      svm.weights = Tensor({3});
      svm.bias = 0.0;
      svm.cal_a = -1.0;
      svm.cal_b = 0.0;
      classifiers.push_back(svm);
    }
  }
  const SvmFusionModel model(4, 3, 0, "fixture", std::move(classifiers));
  const ProbVector p = svm_fuse_predict(model, fv({0.4, -0.2, 1.0}));
  for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("svm_fuse_train rejects a class with fewer than two samples") {
  std::vector<FeatureVector> features{fv({1.0, 0.0}), fv({1.1, 0.0}), fv({-1.0, 0.0})};
  std::vector<std::size_t> labels{0, 0, 1};
  CHECK_THROWS_AS(svm_fuse_train(features, labels, 2, SvmTrainConfig{}), std::invalid_argument);
}

TEST_CASE("svm_fuse_predict validates the feature length") {
  std::vector<FeatureVector> features{fv({1.0, 0.0}), fv({1.1, 0.2}), fv({-1.0, 0.0}),
                                      fv({-1.1, 0.1})};
  std::vector<std::size_t> labels{0, 0, 1, 1};
  SvmTrainConfig cfg;
  cfg.epochs = 50;
  const SvmFusionModel model = svm_fuse_train(features, labels, 2, cfg);
  CHECK_THROWS_AS(svm_fuse_predict(model, fv({1.0, 2.0, 3.0})), std::invalid_argument);
}

TEST_CASE("seeded svm training is reproducible and survives a json round-trip") {
  Rng rng(313);
  std::vector<FeatureVector> features;
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 3; ++c) {
    for (int s = 0; s < 6; ++s) {
      const double cx = c == 0 ? 2.0 : (c == 1 ? -2.0 : 0.0);
      const double cy = c == 2 ? 2.0 : -1.0;
      features.push_back(fv({cx + rng.uniform(-0.4, 0.4), cy + rng.uniform(-0.4, 0.4)}));
      labels.push_back(c);
    }
  }
  SvmTrainConfig cfg;
  cfg.epochs = 400;
  cfg.seed = 99;
  const SvmFusionModel a = svm_fuse_train(features, labels, 3, cfg);
  const SvmFusionModel b = svm_fuse_train(features, labels, 3, cfg);
  const FeatureVector probe = fv({1.8, -0.9});
  CHECK(svm_fuse_predict(a, probe) == svm_fuse_predict(b, probe));

  const SvmFusionModel loaded = svm_model_from_json(svm_model_to_json(a));
  CHECK(loaded.seed() == a.seed());
  CHECK(loaded.config_hash() == a.config_hash());
  CHECK(svm_fuse_predict(loaded, probe) == svm_fuse_predict(a, probe));

  const ProbVector p = svm_fuse_predict(a, probe);
  const double golden[3] = {0.57173322631124412, 0.18858721344100798, 0.23967956024774797};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p[i] == doctest::Approx(golden[i]).epsilon(1e-12));
  }
}

TEST_CASE("decision_fusion implements the mutual-verification table") {
  CHECK(decision_fusion(true, true).outcome == FusionOutcome::Yield);
  CHECK(decision_fusion(true, false).outcome == FusionOutcome::NoYield);
  CHECK(decision_fusion(false, true).outcome == FusionOutcome::HumanReview);
  CHECK(decision_fusion(false, false).outcome == FusionOutcome::NoPedestrian);
  // Total over all four input pairs, and the verdicts are echoed back.
  for (bool image : {false, true}) {
    for (bool voice : {false, true}) {
      const FusionDecision d = decision_fusion(image, voice);
      CHECK(d.image_detected == image);
      CHECK(d.voice_detected == voice);
      CHECK(!to_string(d.outcome).empty());
    }
  }
}

TEST_CASE("fusion results export as CSV rows") {
  const auto dir = std::filesystem::temp_directory_path() / "mmfusion_fusion_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "results.csv";
  write_results_csv(path, {{"v000", {0.5, 0.25, 0.25}, "yield"},
                           {"v001", {0.1, 0.8, 0.1}, "no-yield"}});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "id,prob_0,prob_1,prob_2,decision");
  std::getline(in, line);
  CHECK(line == "v000,0.5,0.25,0.25,yield");
  std::getline(in, line);
  CHECK(line == "v001,0.1,0.8,0.1,no-yield");
}
