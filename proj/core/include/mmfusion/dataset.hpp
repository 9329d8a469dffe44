#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mmfusion::bench {

/// Which classes each modality can actually distinguish. Classes absent from
/// a modality's list look statistically identical through that modality, so
/// fusing the two is provably better than either alone.
struct InformativenessMap {
  std::vector<std::size_t> rgb_classes;
  std::vector<std::size_t> skeleton_classes;
  std::vector<std::size_t> special_classes;  // classes carrying the audio cue

  /// Skeleton resolves the first ceil(n/2)+ classes, RGB the rest; class 0
  /// carries the audio cue. For 7 classes: skeleton {0..3}, RGB {4..6}.
  static InformativenessMap complementary(std::size_t n_classes);
};

struct SyntheticDatasetSpec {
  std::size_t n_classes = 7;
  std::size_t n_videos = 386;
  double frames_mean = 300.0;
  double frames_stddev = 30.0;
  std::size_t frames_min = 64;
  std::size_t frames_max = 400;
  std::size_t n_splits = 4;  // S1..S4
  std::uint64_t seed = 0;
  InformativenessMap informativeness = InformativenessMap::complementary(7);

  // Desk-scale frame geometry.
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;

  // Kinect-style skeleton shape.
  std::size_t joints = 20;
  std::size_t spine_index = 1;
  std::size_t head_index = 3;

  bool with_audio = true;
  double audio_seconds = 0.5;
  double sample_rate = 16000.0;
};

struct VideoEntry {
  std::string id;
  std::size_t label = 0;
  std::string split;
  std::size_t frames = 0;
  bool special = false;
  std::string video_file;     // paths relative to the dataset directory
  std::string skeleton_file;
  std::string audio_file;     // empty when audio is disabled
};

struct Manifest {
  SyntheticDatasetSpec spec;
  std::vector<VideoEntry> videos;
};

std::vector<std::string> split_names(std::size_t n_splits);

/// Writes per-video RGB (packed binary), skeleton (CSV + sidecar) and audio
/// (WAV) files plus manifest.json. Identical spec -> byte-identical output.
Manifest generate_dataset(const SyntheticDatasetSpec& spec,
                          const std::filesystem::path& out_dir);

Manifest read_manifest(const std::filesystem::path& dataset_dir);
void write_manifest(const std::filesystem::path& dataset_dir, const Manifest& manifest);

}  // namespace mmfusion::bench
