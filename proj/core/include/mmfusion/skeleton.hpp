#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mmfusion/tensor.hpp"

namespace mmfusion::skeleton {

/// Kinect-style joint track: frames is [T, J, 3] in meters. The spine joint
/// anchors the relative representation; the head joint sets the length scale.
struct SkeletonSequence {
  std::size_t joints = 20;
  std::size_t spine_index = 1;
  std::size_t head_index = 3;
  Tensor frames;  // [T, J, 3]
};

/// Per-frame feature = spine-relative coordinates of all joints (3J values)
/// followed by all J(J-1)/2 pairwise distances, both divided by `scale`.
struct SkeletonFeatures {
  std::size_t joints = 0;
  double scale = 0.0;  // median spine-to-head distance over the sequence
  Tensor per_frame;    // [T, 3J + J(J-1)/2]
};

std::size_t feature_width(std::size_t joints);

SkeletonFeatures preprocess_skeleton(const SkeletonSequence& seq);

struct WindowingConfig {
  std::size_t window_len = 256;
  std::size_t overlap = 128;
};

/// Number of windows produced for a sequence of `frames` rows: one if the
/// sequence fits, otherwise hop = window_len - overlap and the tail is padded.
std::size_t window_count(std::size_t frames, const WindowingConfig& cfg);

/// Fixed-length windows over the feature rows; short tails repeat the last row.
std::vector<Tensor> window_sequence(const SkeletonFeatures& features, const WindowingConfig& cfg);

struct LstmClassifierConfig {
  std::size_t input_width = 0;
  std::size_t hidden = 32;    // per LSTM level
  std::size_t fc_low = 32;    // lowest fully connected layer
  std::size_t n_classes = 7;
};

/// Two stacked LSTMs over the window, then fc_low (relu) and a softmax head.
/// The fc_low activation doubles as the bone-point representation.
struct LstmClassifier {
  LstmClassifierConfig config;
  LstmParams lstm1;
  LstmParams lstm2;
  Tensor fc_low_w, fc_low_b;
  Tensor fc_out_w, fc_out_b;

  static LstmClassifier seeded(const LstmClassifierConfig& config, Rng& rng);
  static LstmClassifier zeros(const LstmClassifierConfig& config);
};

struct SkeletonClassifyResult {
  ProbVector probs;   // mean over windows
  Tensor lowest_fc;   // mean fc_low activation over windows
};

SkeletonClassifyResult skeleton_classify(const std::vector<Tensor>& windows,
                                         const LstmClassifier& model);

struct LstmClassifierGrads {
  LstmParamGrads lstm1;
  LstmParamGrads lstm2;
  Tensor fc_low_w, fc_low_b;
  Tensor fc_out_w, fc_out_b;

  static LstmClassifierGrads zeros(const LstmClassifier& model);
};

/// Cross-entropy of one window; gradients (full backpropagation through time)
/// accumulate into `acc`. Returns the window loss.
double accumulate_gradients(const LstmClassifier& model, const Tensor& window, std::size_t label,
                            LstmClassifierGrads& acc);

void apply_gradients(LstmClassifier& model, const LstmClassifierGrads& grads, double scale,
                     const SgdConfig& cfg);

std::string model_to_json(const LstmClassifier& model);
LstmClassifier model_from_json(const std::string& text);

// {"joints": J, "spine_index": k, "head_index": m, "frames": [[[x,y,z] x J] x T]}.
SkeletonSequence read_skeleton_json(const std::filesystem::path& path);
void write_skeleton_json(const std::filesystem::path& path, const SkeletonSequence& seq);

// T rows by 3J columns (x,y,z per joint); a `.hdr` sidecar next to the file
// carries joints/spine_index/head_index as key=value lines.
SkeletonSequence read_skeleton_csv(const std::filesystem::path& path);
void write_skeleton_csv(const std::filesystem::path& path, const SkeletonSequence& seq);

}  // namespace mmfusion::skeleton
