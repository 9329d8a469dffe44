#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmfusion/audio.hpp"
#include "mmfusion/dataset.hpp"
#include "mmfusion/fusion.hpp"
#include "mmfusion/skeleton.hpp"
#include "mmfusion/vision.hpp"

namespace mmfusion::bench {

// Canonical method names, in the report's row order.
inline constexpr const char* kMethodRgb = "3D ConvNets";
inline constexpr const char* kMethodSkeleton = "Skeleton LSTM";
inline constexpr const char* kMethodFused = "3D ConvNets + Skeleton LSTM";
inline constexpr const char* kMethodFusedSvm = "3D ConvNets + Skeleton LSTM + SVM";

struct ExperimentConfig {
  std::uint64_t seed = 0;
  double alpha = 0.5;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::size_t rgb_epochs = 0;       // 0 means "use epochs"
  std::size_t skeleton_epochs = 0;  // 0 means "use epochs"
  std::size_t rgb_clips_per_video = 2;   // clips sampled per video per epoch
  std::size_t eval_clip_stride = 16;     // clip sampling stride at evaluation
  double rgb_learning_rate = 0.08;
  double skeleton_learning_rate = 0.08;
  double l2_lambda = 1e-4;
  double aux_weight = 0.3;
  std::string eval_split = "S4";  // held out; the rest trains
  bool with_audio = false;
  std::size_t lstm_hidden = 32;
  std::size_t fc_low = 32;
  std::size_t conv1_channels = 6;
  std::size_t conv2_channels = 12;
  std::size_t fc6 = 64;
  std::size_t fc7 = 32;
  std::size_t window_len = 256;
  std::size_t overlap = 128;

  std::size_t effective_rgb_epochs() const { return rgb_epochs ? rgb_epochs : epochs; }
  std::size_t effective_skeleton_epochs() const {
    return skeleton_epochs ? skeleton_epochs : epochs;
  }
  skeleton::WindowingConfig windowing() const { return {window_len, overlap}; }

  /// Canonical key=value text, one entry per line, keys sorted.
  std::string canonical_text() const;
  /// FNV-1a hash of canonical_text(), as 16 hex digits.
  std::string config_hash() const;
};

/// Flat key=value file; '#' starts a comment. Unknown keys are rejected.
ExperimentConfig read_config_file(const std::filesystem::path& path);
void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value);

struct TrainedModels {
  ExperimentConfig config;
  vision::Conv3dNet rgb;
  skeleton::LstmClassifier skel;
  std::optional<fusion::SvmFusionModel> svm;
  std::optional<audio::AudioHead> audio_head;
};

TrainedModels train_models(const Manifest& manifest, const std::filesystem::path& data_dir,
                           const ExperimentConfig& cfg);

struct EvalRecord {
  std::string id;
  std::size_t label = 0;
  std::vector<double> p_rgb;
  std::vector<double> p_skel;
  std::vector<double> p_svm;
};

struct EvalCache {
  std::size_t n_classes = 0;
  std::vector<EvalRecord> records;
};

/// Per-video probabilities on the held-out split.
EvalCache evaluate(const TrainedModels& models, const Manifest& manifest,
                   const std::filesystem::path& data_dir);

struct ExperimentResult {
  std::vector<std::pair<std::string, double>> methods;  // accuracy in percent
  std::vector<std::pair<double, double>> alpha_curve;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Accuracy table for the four methods from cached probabilities.
ExperimentResult result_from_cache(const EvalCache& cache, const ExperimentConfig& cfg);

/// train_models + evaluate + result_from_cache.
ExperimentResult run_experiment(const Manifest& manifest,
                                const std::filesystem::path& data_dir,
                                const ExperimentConfig& cfg);

/// Fused accuracy over the grid; reuses cached probabilities, no retraining.
/// The grid endpoints 0 and 1 reproduce the single-modality accuracies.
std::vector<std::pair<double, double>> sweep_alpha(const EvalCache& cache,
                                                   const std::vector<double>& grid);

/// "start:end:step" (inclusive, end snapped exactly) or "a,b,c".
std::vector<double> parse_alpha_grid(const std::string& text);

enum class ReportFormat { Csv, Markdown };

std::string render_table(const ExperimentResult& result, ReportFormat format);
std::string render_curve_csv(const std::vector<std::pair<double, double>>& curve);
/// Inverse of render_table(..., Csv) for the methods block.
std::vector<std::pair<std::string, double>> parse_table_csv(const std::string& text);
std::vector<std::pair<double, double>> parse_curve_csv(const std::string& text);

// Model-directory layout used by the CLI.
void save_models(const std::filesystem::path& dir, const TrainedModels& models);
TrainedModels load_models(const std::filesystem::path& dir);
void save_cache(const std::filesystem::path& file, const EvalCache& cache);
EvalCache load_cache(const std::filesystem::path& file);
void save_result(const std::filesystem::path& file, const ExperimentResult& result);
ExperimentResult load_result(const std::filesystem::path& file);

}  // namespace mmfusion::bench
