#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mmfusion/tensor.hpp"

namespace mmfusion::vision {

inline constexpr std::size_t kClipLength = 16;

/// A 16-frame video clip, [frames, channels, height, width], values in [0, 1].
/// Out-of-range values are clamped on construction.
class RgbClip {
 public:
  explicit RgbClip(Tensor frames);

  const Tensor& frames() const { return frames_; }
  std::size_t channels() const { return frames_.dim(1); }
  std::size_t height() const { return frames_.dim(2); }
  std::size_t width() const { return frames_.dim(3); }

 private:
  Tensor frames_;
};

enum class FactorizedMode { FiveAsTwoThrees, AsymmetricPair };

/// A large 2-D convolution replaced by cheaper stages: either 5x5 as two 3x3,
/// or nxn as a 1xn row pass followed by an nx1 column pass.
class FactorizedBlock {
 public:
  static FactorizedBlock five_as_two_threes(Tensor first_3x3, Tensor second_3x3);
  static FactorizedBlock asymmetric_pair(Tensor row_1xn, Tensor col_nx1);

  FactorizedMode mode() const { return mode_; }
  const std::vector<ConvSpec>& stages() const { return stages_; }
  /// Kernel extent of the single convolution this block replaces.
  std::size_t equivalent_extent() const { return extent_; }

 private:
  FactorizedBlock(FactorizedMode mode, std::size_t extent, std::vector<ConvSpec> stages)
      : mode_(mode), extent_(extent), stages_(std::move(stages)) {}

  FactorizedMode mode_;
  std::size_t extent_;
  std::vector<ConvSpec> stages_;
};

/// Runs the stages in sequence (valid padding). The output spatial size equals
/// that of one equivalent_extent() convolution over the same input.
Tensor factorized_forward(const FactorizedBlock& block, const Tensor& input);

/// Multiplies per output element: h*w plain; 9+9 for 5x5 as two 3x3;
/// 2n for the 1xn + nx1 pair (factorized kernels must be square).
std::size_t multiply_count(std::size_t kernel_h, std::size_t kernel_w, bool factorized);

struct Conv3dNetConfig {
  std::size_t in_channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t conv1_channels = 6;
  std::size_t conv2_channels = 12;
  std::size_t fc6 = 64;
  std::size_t fc7 = 32;
  std::size_t n_classes = 7;
};

/// Two 3x3x3 relu conv blocks over [channels, time, h, w], global mean pool,
/// then fc6/fc7/fc8 and softmax. An auxiliary softmax head hangs off block 1.
struct Conv3dNet {
  Conv3dNetConfig config;
  ConvSpec conv1;
  ConvSpec conv2;
  Tensor fc6_w, fc6_b;
  Tensor fc7_w, fc7_b;
  Tensor fc8_w, fc8_b;
  Tensor aux_w, aux_b;

  static Conv3dNet seeded(const Conv3dNetConfig& config, Rng& rng);
  static Conv3dNet zeros(const Conv3dNetConfig& config);
};

struct ClipFeatures {
  Tensor fc6;
  Tensor fc7;
  Tensor fc8;  // class logits
  ProbVector probs;
};

struct AuxClassifierOutput {
  ProbVector probs;
};

ClipFeatures rgb_clip_features(const RgbClip& clip, const Conv3dNet& net);
AuxClassifierOutput aux_classifier_forward(const RgbClip& clip, const Conv3dNet& net);

/// All clips of a [T, C, H, W] video: window 16, stride 1, T-15 in order.
std::vector<RgbClip> video_to_clips(const Tensor& video);
/// Number of clips video_to_clips would return.
std::size_t clip_count(std::size_t frames);
/// The single clip starting at frame `start`.
RgbClip clip_at(const Tensor& video, std::size_t start);

struct Conv3dNetGrads {
  Tensor conv1_kernel, conv1_bias;
  Tensor conv2_kernel, conv2_bias;
  Tensor fc6_w, fc6_b;
  Tensor fc7_w, fc7_b;
  Tensor fc8_w, fc8_b;
  Tensor aux_w, aux_b;

  static Conv3dNetGrads zeros(const Conv3dNet& net);
};

/// Cross-entropy on the main head plus aux_weight times the auxiliary head's
/// cross-entropy; gradients accumulate into `acc`. Returns the sample loss.
double accumulate_gradients(const Conv3dNet& net, const RgbClip& clip, std::size_t label,
                            double aux_weight, Conv3dNetGrads& acc);

/// One SGD update from accumulated gradients, scaled by `scale` (e.g. 1/batch).
void apply_gradients(Conv3dNet& net, const Conv3dNetGrads& grads, double scale,
                     const SgdConfig& cfg);

// Video files: either a tensor JSON ({"shape":[T,C,H,W],"data":[...]}) or the
// packed float32 binary (16-byte header: magic "MMFV", u32 T, u32 C, u32 with
// height in the high 16 bits and width in the low 16).
Tensor read_video(const std::filesystem::path& path);
Tensor read_video_binary(const std::filesystem::path& path);
Tensor read_video_json(const std::filesystem::path& path);
void write_video_binary(const std::filesystem::path& path, const Tensor& video);
void write_video_json(const std::filesystem::path& path, const Tensor& video);

std::string net_to_json(const Conv3dNet& net);
Conv3dNet net_from_json(const std::string& text);

}  // namespace mmfusion::vision
