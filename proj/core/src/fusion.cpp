#include "mmfusion/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"
#include "mmfusion/rng.hpp"

namespace mmfusion::fusion {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

FeatureVector concat_features(const FeatureVector& q, const FeatureVector& w) {
  require(q.values.rank() <= 1 && w.values.rank() <= 1, "feature vectors must be rank-1");
  require(q.values.all_finite() && w.values.all_finite(),
          "feature vectors must be finite");
  const std::size_t n = q.values.size() + w.values.size();
  std::vector<double> out;
  out.reserve(n);
  out.insert(out.end(), q.values.values().begin(), q.values.values().end());
  out.insert(out.end(), w.values.values().begin(), w.values.values().end());
  return FeatureVector{Tensor({n}, std::move(out)), SourceTag::Fused};
}

SoftmaxClassifyResult softmax_classify(const FeatureVector& s, const Tensor& class_weights) {
  require(class_weights.rank() == 2, "class weights must be [n_classes, feature_len]");
  const std::size_t n_classes = class_weights.dim(0);
  const std::size_t len = class_weights.dim(1);
  require(s.values.size() == len,
          "feature length " + std::to_string(s.values.size()) +
              " does not match class weight columns " + std::to_string(len));
  Tensor logits({n_classes});
  const double* w = class_weights.values().data();
  for (std::size_t d = 0; d < n_classes; ++d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += w[d * len + i] * s.values[i];
    logits[d] = acc;
  }
  ProbVector probs = softmax(logits);
  const std::size_t cls = argmax_decision(probs);
  return SoftmaxClassifyResult{std::move(probs), cls};
}

ProbVector alpha_fuse(const ProbVector& p_rgb, const ProbVector& p_skel,
                      const FusionConfig& cfg) {
  require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0,
          "alpha must lie in [0, 1], got " + fmt_double(cfg.alpha));
  require(p_rgb.size() == p_skel.size(), "probability vectors differ in length");
  if (cfg.alpha == 1.0) return p_rgb;
  if (cfg.alpha == 0.0) return p_skel;
  std::vector<double> out(p_rgb.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = cfg.alpha * p_rgb[i] + (1.0 - cfg.alpha) * p_skel[i];
  }
  return ProbVector(std::move(out));
}

SvmFusionModel::SvmFusionModel(std::size_t n_classes, std::size_t dim, std::uint64_t seed,
                               std::string config_hash, std::vector<PairwiseSvm> classifiers)
    : n_classes_(n_classes),
      dim_(dim),
      seed_(seed),
      config_hash_(std::move(config_hash)),
      classifiers_(std::move(classifiers)) {
  require(n_classes_ >= 2, "need at least two classes");
  require(classifiers_.size() == n_classes_ * (n_classes_ - 1) / 2,
          "expected k(k-1)/2 pairwise classifiers, got " + std::to_string(classifiers_.size()));
  for (const PairwiseSvm& c : classifiers_) {
    require(c.pos_class < n_classes_ && c.neg_class < n_classes_ && c.pos_class < c.neg_class,
            "pairwise classifier classes out of order");
    require(c.weights.size() == dim_, "pairwise classifier weight length mismatch");
    require(c.cal_a < 0.0, "calibration slope must be negative");
  }
}

namespace {

std::string svm_config_hash(const SvmTrainConfig& cfg) {
  // FNV-1a over the canonical textual form.
  const std::string text = "epochs=" + std::to_string(cfg.epochs) +
                           ";lr=" + fmt_double(cfg.learning_rate) +
                           ";lambda=" + fmt_double(cfg.lambda) +
                           ";seed=" + std::to_string(cfg.seed) +
                           ";newton=" + std::to_string(cfg.calibration_steps);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// Platt scaling by Newton iterations on the two-parameter logistic loss.
// Returns (a, b) with p = 1 / (1 + exp(a * margin + b)).
std::pair<double, double> fit_calibration(const std::vector<double>& margins,
                                          const std::vector<int>& is_positive,
                                          std::size_t newton_steps) {
  std::size_t n_pos = 0, n_neg = 0;
  for (int t : is_positive) (t ? ++n_pos : ++n_neg);
  const double t_pos = (static_cast<double>(n_pos) + 1.0) / (static_cast<double>(n_pos) + 2.0);
  const double t_neg = 1.0 / (static_cast<double>(n_neg) + 2.0);

  double a = 0.0;
  double b = std::log((static_cast<double>(n_neg) + 1.0) / (static_cast<double>(n_pos) + 1.0));
  for (std::size_t step = 0; step < newton_steps; ++step) {
    double g_a = 0.0, g_b = 0.0;
    double h_aa = 1e-12, h_ab = 0.0, h_bb = 1e-12;
    for (std::size_t i = 0; i < margins.size(); ++i) {
      const double m = margins[i];
      const double t = is_positive[i] ? t_pos : t_neg;
      const double f = a * m + b;
      const double p = 1.0 / (1.0 + std::exp(f));
      const double d = t - p;  // dF/df for the cross-entropy in f
      g_a += d * m;
      g_b += d;
      const double w = std::max(p * (1.0 - p), 1e-12);
      h_aa += w * m * m;
      h_ab += w * m;
      h_bb += w;
    }
    const double det = h_aa * h_bb - h_ab * h_ab;
    if (std::abs(det) < 1e-18) break;
    const double da = (h_bb * g_a - h_ab * g_b) / det;
    const double db = (h_aa * g_b - h_ab * g_a) / det;
    a -= da;
    b -= db;
    if (std::abs(da) < 1e-12 && std::abs(db) < 1e-12) break;
  }
  // Orientation convention: a negative slope maps larger margins to higher
  // probabilities. A non-negative fit only happens on degenerate data.
  if (!(a < 0.0)) a = -1e-6;
  return {a, b};
}

}  // namespace

SvmFusionModel svm_fuse_train(const std::vector<FeatureVector>& features,
                              const std::vector<std::size_t>& labels, std::size_t n_classes,
                              const SvmTrainConfig& cfg) {
  require(n_classes >= 2, "need at least two classes");
  require(features.size() == labels.size(), "features/labels count mismatch");
  require(!features.empty(), "training set is empty");
  const std::size_t dim = features[0].values.size();
  std::vector<std::size_t> per_class(n_classes, 0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    require(features[i].values.size() == dim, "feature length mismatch at sample " +
                                                  std::to_string(i));
    require(labels[i] < n_classes, "label out of range at sample " + std::to_string(i));
    ++per_class[labels[i]];
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (per_class[c] < 2) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " +
                                  std::to_string(per_class[c]) + " samples, need at least 2");
    }
  }

  std::vector<PairwiseSvm> classifiers;
  classifiers.reserve(n_classes * (n_classes - 1) / 2);
  Rng root(cfg.seed);

  for (std::size_t pos = 0; pos < n_classes; ++pos) {
    for (std::size_t neg = pos + 1; neg < n_classes; ++neg) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < features.size(); ++i) {
        if (labels[i] == pos || labels[i] == neg) idx.push_back(i);
      }

      PairwiseSvm svm;
      svm.pos_class = pos;
      svm.neg_class = neg;
      svm.weights = Tensor({dim});
      Rng rng = root.fork(pos * n_classes + neg);

      for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(idx);
        for (std::size_t i : idx) {
          const double y = labels[i] == pos ? 1.0 : -1.0;
          const Tensor& x = features[i].values;
          double margin = svm.bias;
          for (std::size_t d = 0; d < dim; ++d) margin += svm.weights[d] * x[d];
          const bool active = y * margin < 1.0;
          for (std::size_t d = 0; d < dim; ++d) {
            double grad = 2.0 * cfg.lambda * svm.weights[d];
            if (active) grad -= y * x[d];
            svm.weights[d] -= cfg.learning_rate * grad;
          }
          if (active) svm.bias += cfg.learning_rate * y;
        }
      }

      std::vector<double> margins;
      std::vector<int> targets;
      margins.reserve(idx.size());
      for (std::size_t i : idx) {
        const Tensor& x = features[i].values;
        double margin = svm.bias;
        for (std::size_t d = 0; d < dim; ++d) margin += svm.weights[d] * x[d];
        margins.push_back(margin);
        targets.push_back(labels[i] == pos ? 1 : 0);
      }
      const auto [a, b] = fit_calibration(margins, targets, cfg.calibration_steps);
      svm.cal_a = a;
      svm.cal_b = b;
      classifiers.push_back(std::move(svm));
    }
  }
  return SvmFusionModel(n_classes, dim, cfg.seed, svm_config_hash(cfg), std::move(classifiers));
}

ProbVector svm_fuse_predict(const SvmFusionModel& model, const FeatureVector& feature) {
  require(feature.values.size() == model.dim(),
          "feature length " + std::to_string(feature.values.size()) +
              " does not match the trained dimension " + std::to_string(model.dim()));
  std::vector<double> score(model.n_classes(), 0.0);
  for (const PairwiseSvm& svm : model.classifiers()) {
    double margin = svm.bias;
    for (std::size_t d = 0; d < model.dim(); ++d) {
      margin += svm.weights[d] * feature.values[d];
    }
    const double p = 1.0 / (1.0 + std::exp(svm.cal_a * margin + svm.cal_b));
    score[svm.pos_class] += p;
    score[svm.neg_class] += 1.0 - p;
  }
  const double total = std::accumulate(score.begin(), score.end(), 0.0);
  for (double& s : score) s /= total;
  return ProbVector(std::move(score));
}

FusionDecision decision_fusion(bool image_detected, bool voice_detected) {
  FusionOutcome outcome;
  if (image_detected && voice_detected) {
    outcome = FusionOutcome::Yield;
  } else if (image_detected) {
    outcome = FusionOutcome::NoYield;
  } else if (voice_detected) {
    outcome = FusionOutcome::HumanReview;
  } else {
    outcome = FusionOutcome::NoPedestrian;
  }
  return FusionDecision{outcome, image_detected, voice_detected};
}

std::string_view to_string(FusionOutcome outcome) {
  switch (outcome) {
    case FusionOutcome::Yield: return "yield";
    case FusionOutcome::NoYield: return "no-yield";
    case FusionOutcome::HumanReview: return "human-review";
    case FusionOutcome::NoPedestrian: return "no-pedestrian";
  }
  throw std::invalid_argument("unknown fusion outcome");
}

std::string svm_model_to_json(const SvmFusionModel& model) {
  nlohmann::json j;
  j["n_classes"] = model.n_classes();
  j["dim"] = model.dim();
  j["seed"] = model.seed();
  j["config_hash"] = model.config_hash();
  nlohmann::json cl = nlohmann::json::array();
  for (const PairwiseSvm& svm : model.classifiers()) {
    cl.push_back({{"pos", svm.pos_class},
                  {"neg", svm.neg_class},
                  {"weights", svm.weights},
                  {"bias", svm.bias},
                  {"cal_a", svm.cal_a},
                  {"cal_b", svm.cal_b}});
  }
  j["classifiers"] = std::move(cl);
  return j.dump();
}

SvmFusionModel svm_model_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  std::vector<PairwiseSvm> classifiers;
  for (const auto& item : j.at("classifiers")) {
    PairwiseSvm svm;
    svm.pos_class = item.at("pos").get<std::size_t>();
    svm.neg_class = item.at("neg").get<std::size_t>();
    svm.weights = item.at("weights").get<Tensor>();
    svm.bias = item.at("bias").get<double>();
    svm.cal_a = item.at("cal_a").get<double>();
    svm.cal_b = item.at("cal_b").get<double>();
    classifiers.push_back(std::move(svm));
  }
  return SvmFusionModel(j.at("n_classes").get<std::size_t>(), j.at("dim").get<std::size_t>(),
                        j.at("seed").get<std::uint64_t>(),
                        j.at("config_hash").get<std::string>(), std::move(classifiers));
}

void write_results_csv(const std::filesystem::path& path,
                       const std::vector<FusionResultRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write results CSV " + path.string());
  const std::size_t n = rows.empty() ? 0 : rows[0].probs.size();
  out << "id";
  for (std::size_t i = 0; i < n; ++i) out << ",prob_" << i;
  out << ",decision\n";
  for (const FusionResultRow& row : rows) {
    out << row.id;
    for (double p : row.probs) out << ',' << fmt_double(p);
    out << ',' << row.decision << '\n';
  }
}

}  // namespace mmfusion::fusion
