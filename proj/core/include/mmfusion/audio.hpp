#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mmfusion/tensor.hpp"

namespace mmfusion::audio {

/// Mono waveform, samples nominally in [-1, 1].
struct AudioSignal {
  std::vector<double> samples;
  double sample_rate = 16000.0;
};

enum class WindowKind { None, Hann };

/// 25 ms frames with a 10 ms hop at 16 kHz.
struct FrameSpec {
  std::size_t frame_len = 400;
  std::size_t hop = 160;
  WindowKind window = WindowKind::Hann;
};

/// mel = 2595 * log10(1 + hz / 700). Rejects negative frequencies.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Energy spectrum |U(r)|^2, r = 0..n-1, of the full-length DFT.
std::vector<double> dft_energy(std::span<const double> frame);

/// Triangular filters over DFT bins, centers equally spaced on the mel scale.
class MelFilterbank {
 public:
  static MelFilterbank make(std::size_t n_filters, double f_min, double f_max,
                            std::size_t n_bins, double sample_rate);

  std::size_t n_filters() const { return n_filters_; }
  std::size_t n_bins() const { return n_bins_; }
  double f_min() const { return f_min_; }
  double f_max() const { return f_max_; }
  /// Weight of filter `f` at DFT bin `bin`.
  double weight(std::size_t f, std::size_t bin) const { return weights_[f * n_bins_ + bin]; }

 private:
  MelFilterbank() = default;
  std::size_t n_filters_ = 0;
  std::size_t n_bins_ = 0;
  double f_min_ = 0.0;
  double f_max_ = 0.0;
  std::vector<double> weights_;
};

inline constexpr double kEnergyFloor = 1e-10;

/// Per-filter log(max(sum_bins weight * energy, floor)).
std::vector<double> mel_energies(std::span<const double> spectrum, const MelFilterbank& bank);

/// Log mel filterbank energies, one row per frame.
struct MelFeatures {
  std::size_t n_filters = 0;
  std::vector<double> values;  // frames x n_filters, row-major
  std::size_t frames() const { return n_filters == 0 ? 0 : values.size() / n_filters; }
};

MelFeatures compute_mel_features(const AudioSignal& signal, const FrameSpec& spec,
                                 const MelFilterbank& bank);

/// Dense + softmax head over mean log-mel features; class 0 is "special".
struct AudioHead {
  Tensor weights;  // [2, n_filters]
  Tensor bias;     // [2]
  double threshold = 0.5;

  static AudioHead zeros(std::size_t n_filters);
  static AudioHead seeded(std::size_t n_filters, Rng& rng);
};

struct AudioDetection {
  ProbVector probs;  // {special, not_special}
  bool detected;     // probs[special] >= threshold
};

AudioDetection audio_recognize(const AudioSignal& signal, const FrameSpec& spec,
                               const MelFilterbank& bank, const AudioHead& head);

/// One SGD step on cross-entropy over the mean feature vector; returns the loss.
double head_train_step(AudioHead& head, const Tensor& mean_features, std::size_t label,
                       const SgdConfig& cfg);
/// Mean over frames of a feature matrix, as a rank-1 tensor.
Tensor mean_features(const MelFeatures& features);

// Canonical 44-byte-header mono 16-bit PCM WAV.
AudioSignal read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioSignal& signal);

// {"sample_rate": <hz>, "samples": [...]}.
AudioSignal read_audio_json(const std::filesystem::path& path);
void write_audio_json(const std::filesystem::path& path, const AudioSignal& signal);

/// One CSV row of filterbank energies per frame.
void write_features_csv(const std::filesystem::path& path, const MelFeatures& features);

}  // namespace mmfusion::audio
