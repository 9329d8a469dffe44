#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mmfusion/tensor.hpp"

namespace mmfusion::fusion {

enum class SourceTag { Image, Speech, Skeleton, Fused };

struct FeatureVector {
  Tensor values;  // rank-1
  SourceTag tag = SourceTag::Fused;
};

/// [q, w]: q's entries first, order preserved. The result is tagged Fused.
FeatureVector concat_features(const FeatureVector& q, const FeatureVector& w);

struct SoftmaxClassifyResult {
  ProbVector probs;
  std::size_t class_index;
};

/// Logits z_d = weights row d dot s, then softmax and the argmax decision.
/// `class_weights` is [n_classes, len(s)].
SoftmaxClassifyResult softmax_classify(const FeatureVector& s, const Tensor& class_weights);

struct FusionConfig {
  double alpha = 0.5;  // weight of the first (RGB) probability vector
};

/// alpha * p_rgb + (1 - alpha) * p_skel. The boundary values 0 and 1
/// reproduce the corresponding input bitwise.
ProbVector alpha_fuse(const ProbVector& p_rgb, const ProbVector& p_skel,
                      const FusionConfig& cfg);

struct SvmTrainConfig {
  std::size_t epochs = 2000;
  double learning_rate = 0.01;
  double lambda = 0.001;
  std::uint64_t seed = 0;
  std::size_t calibration_steps = 100;  // Newton iterations for Platt scaling
};

/// One binary linear SVM for the (pos_class, neg_class) pair with its
/// sigmoid calibration p = 1 / (1 + exp(cal_a * margin + cal_b)), cal_a < 0.
struct PairwiseSvm {
  std::size_t pos_class = 0;
  std::size_t neg_class = 0;
  Tensor weights;
  double bias = 0.0;
  double cal_a = -1.0;
  double cal_b = 0.0;
};

/// k(k-1)/2 pairwise classifiers plus the provenance of their training run.
class SvmFusionModel {
 public:
  SvmFusionModel(std::size_t n_classes, std::size_t dim, std::uint64_t seed,
                 std::string config_hash, std::vector<PairwiseSvm> classifiers);

  std::size_t n_classes() const { return n_classes_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& config_hash() const { return config_hash_; }
  const std::vector<PairwiseSvm>& classifiers() const { return classifiers_; }

 private:
  std::size_t n_classes_;
  std::size_t dim_;
  std::uint64_t seed_;
  std::string config_hash_;
  std::vector<PairwiseSvm> classifiers_;
};

/// Trains the one-vs-one decomposition by seeded subgradient descent on the
/// hinge + L2 objective, then fits per-pair Platt calibration.
SvmFusionModel svm_fuse_train(const std::vector<FeatureVector>& features,
                              const std::vector<std::size_t>& labels, std::size_t n_classes,
                              const SvmTrainConfig& cfg = {});

/// Calibrated pairwise probabilities combined by normalized vote-sum.
ProbVector svm_fuse_predict(const SvmFusionModel& model, const FeatureVector& feature);

enum class FusionOutcome { Yield, NoYield, HumanReview, NoPedestrian };

struct FusionDecision {
  FusionOutcome outcome;
  bool image_detected;
  bool voice_detected;
};

/// The image/voice mutual-verification rule table:
///   (true,  true)  -> Yield
///   (true,  false) -> NoYield
///   (false, true)  -> HumanReview
///   (false, false) -> NoPedestrian
FusionDecision decision_fusion(bool image_detected, bool voice_detected);

std::string_view to_string(FusionOutcome outcome);

std::string svm_model_to_json(const SvmFusionModel& model);
SvmFusionModel svm_model_from_json(const std::string& text);

struct FusionResultRow {
  std::string id;
  std::vector<double> probs;
  std::string decision;
};

/// CSV export: id, one probability column per class, decision.
void write_results_csv(const std::filesystem::path& path,
                       const std::vector<FusionResultRow>& rows);

}  // namespace mmfusion::fusion
