#include "mmfusion/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json_util.hpp"
#include "mmfusion/audio.hpp"
#include "mmfusion/rng.hpp"
#include "mmfusion/skeleton.hpp"
#include "mmfusion/vision.hpp"

namespace mmfusion::bench {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void validate_spec(const SyntheticDatasetSpec& spec) {
  require(spec.n_classes >= 2, "need at least two classes");
  require(spec.n_videos >= 1, "need at least one video");
  require(spec.n_splits >= 1, "need at least one split");
  require(spec.frames_min >= vision::kClipLength,
          "frames_min must cover one 16-frame clip");
  require(spec.frames_min <= spec.frames_max, "frames_min must not exceed frames_max");
  require(spec.height >= 5 && spec.width >= 5, "frame geometry must be at least 5x5");
  require(spec.channels >= 1, "need at least one channel");
  require(spec.joints >= 4, "need at least four joints");
  require(spec.spine_index < spec.joints && spec.head_index < spec.joints,
          "spine/head index out of range");
  require(spec.spine_index != spec.head_index, "spine and head must be distinct joints");
  auto check_classes = [&](const std::vector<std::size_t>& classes, const char* what) {
    for (std::size_t c : classes) {
      require(c < spec.n_classes, std::string(what) + " class index out of range");
    }
  };
  check_classes(spec.informativeness.rgb_classes, "rgb");
  check_classes(spec.informativeness.skeleton_classes, "skeleton");
  check_classes(spec.informativeness.special_classes, "special");
  if (spec.with_audio) {
    require(spec.audio_seconds * spec.sample_rate >= 400.0,
            "audio clips must cover at least one 25 ms frame");
  }
}

bool contains(const std::vector<std::size_t>& classes, std::size_t label) {
  return std::find(classes.begin(), classes.end(), label) != classes.end();
}

std::ptrdiff_t index_of(const std::vector<std::size_t>& classes, std::size_t label) {
  const auto it = std::find(classes.begin(), classes.end(), label);
  return it == classes.end() ? -1 : it - classes.begin();
}

std::string video_id(std::size_t v, std::size_t n_videos) {
  std::size_t digits = 3;
  for (std::size_t n = n_videos; n > 1000; n /= 10) ++digits;
  std::string s = std::to_string(v);
  return "v" + std::string(digits - std::min(digits, s.size()), '0') + s;
}

std::size_t draw_frames(const SyntheticDatasetSpec& spec, Rng& rng) {
  const double raw = rng.normal(spec.frames_mean, spec.frames_stddev);
  const double clamped = std::clamp(raw, static_cast<double>(spec.frames_min),
                                    static_cast<double>(spec.frames_max));
  return static_cast<std::size_t>(std::llround(clamped));
}

// --- RGB: one Gaussian blob whose trajectory carries the class signal. ---

Tensor render_video(const SyntheticDatasetSpec& spec, std::size_t label, std::size_t frames,
                    Rng& rng) {
  const double h = static_cast<double>(spec.height);
  const double w = static_cast<double>(spec.width);
  const double margin = 1.0;
  const double mid_x = (w - 1.0) / 2.0;
  const double mid_y = (h - 1.0) / 2.0;

  std::vector<double> amp(spec.channels);
  for (double& a : amp) a = rng.uniform(0.55, 0.95);
  const double sigma = 1.0 + rng.uniform(0.0, 0.4);
  const double period = 18.0 + rng.uniform(0.0, 6.0);
  const double omega = 2.0 * std::numbers::pi / period;
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const std::ptrdiff_t k = index_of(spec.informativeness.rgb_classes, label);
  const double band = k < 0 ? 1.0 : 1.0 + static_cast<double>(k / 3);

  // Blind classes share one generic random-walk motion model.
  double walk_x = rng.uniform(margin, w - 1.0 - margin);
  double walk_y = rng.uniform(margin, h - 1.0 - margin);
  double vel_x = 0.0, vel_y = 0.0;

  Tensor video({frames, spec.channels, spec.height, spec.width});
  for (std::size_t t = 0; t < frames; ++t) {
    double cx, cy;
    if (k < 0) {
      vel_x = 0.85 * vel_x + rng.normal(0.0, 0.35);
      vel_y = 0.85 * vel_y + rng.normal(0.0, 0.35);
      walk_x = std::clamp(walk_x + vel_x, margin, w - 1.0 - margin);
      walk_y = std::clamp(walk_y + vel_y, margin, h - 1.0 - margin);
      cx = walk_x;
      cy = walk_y;
    } else {
      const double arg = band * omega * static_cast<double>(t) + phase;
      switch (k % 3) {
        case 0:  // horizontal sweep
          cx = margin + (w - 1.0 - 2.0 * margin) * (0.5 + 0.5 * std::sin(arg));
          cy = mid_y + 0.5 * std::sin(0.37 * arg);
          break;
        case 1:  // vertical sweep
          cx = mid_x + 0.5 * std::sin(0.37 * arg);
          cy = margin + (h - 1.0 - 2.0 * margin) * (0.5 + 0.5 * std::sin(arg));
          break;
        default: {  // circular orbit
          const double r = 0.3 * std::min(h, w);
          cx = mid_x + r * std::cos(arg);
          cy = mid_y + r * std::sin(arg);
          break;
        }
      }
    }
    for (std::size_t c = 0; c < spec.channels; ++c) {
      for (std::size_t y = 0; y < spec.height; ++y) {
        for (std::size_t x = 0; x < spec.width; ++x) {
          const double dx = static_cast<double>(x) - cx;
          const double dy = static_cast<double>(y) - cy;
          const double blob = amp[c] * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
          video.at({t, c, y, x}) = std::clamp(blob + rng.uniform(-0.02, 0.02), 0.0, 1.0);
        }
      }
    }
  }
  return video;
}

// --- Skeleton: limb oscillation frequency carries the class signal. ---

std::vector<std::array<double, 3>> base_pose(std::size_t joints) {
  if (joints == 20) {
    // Kinect v1 order: hip centre, spine, shoulder centre, head, then
    // left/right arm chains and left/right leg chains.
    return {{0.00, 0.90, 0.00},  {0.00, 1.10, 0.00},  {0.00, 1.40, 0.00},  {0.00, 1.65, 0.00},
            {-0.20, 1.40, 0.00}, {-0.30, 1.15, 0.00}, {-0.33, 0.90, 0.00}, {-0.35, 0.80, 0.00},
            {0.20, 1.40, 0.00},  {0.30, 1.15, 0.00},  {0.33, 0.90, 0.00},  {0.35, 0.80, 0.00},
            {-0.12, 0.85, 0.00}, {-0.15, 0.50, 0.00}, {-0.15, 0.10, 0.00}, {-0.18, 0.02, 0.08},
            {0.12, 0.85, 0.00},  {0.15, 0.50, 0.00},  {0.15, 0.10, 0.00},  {0.18, 0.02, 0.08}};
  }
  std::vector<std::array<double, 3>> pose(joints);
  for (std::size_t j = 0; j < joints; ++j) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(j) /
                         static_cast<double>(joints);
    pose[j] = {0.4 * std::cos(theta), 0.8 + 0.4 * std::sin(theta), 0.1 * std::cos(2.0 * theta)};
  }
  return pose;
}

// The four limb chains; classes are told apart by which chains move.
std::vector<std::vector<std::size_t>> limb_groups(const SyntheticDatasetSpec& spec) {
  if (spec.joints == 20) {
    return {{4, 5, 6, 7}, {8, 9, 10, 11}, {12, 13, 14, 15}, {16, 17, 18, 19}};
  }
  std::vector<std::vector<std::size_t>> groups(4);
  std::size_t next = 0;
  for (std::size_t j = 0; j < spec.joints; ++j) {
    if (j == spec.spine_index || j == spec.head_index) continue;
    groups[next % 4].push_back(j);
    ++next;
  }
  return groups;
}

skeleton::SkeletonSequence render_skeleton(const SyntheticDatasetSpec& spec, std::size_t label,
                                           std::size_t frames, Rng& rng) {
  const auto pose = base_pose(spec.joints);
  const auto groups = limb_groups(spec);
  const std::ptrdiff_t k = index_of(spec.informativeness.skeleton_classes, label);

  // Informative classes swing exactly one limb chain; blind classes swing all
  // four, so which chain moves is the only class cue the skeleton carries.
  std::vector<std::size_t> moving;
  if (k >= 0) {
    moving = groups[static_cast<std::size_t>(k) % groups.size()];
  } else {
    for (const auto& g : groups) moving.insert(moving.end(), g.begin(), g.end());
  }

  // Moving joints swing about a lifted rest position, so the class cue is
  // present in every frame, not only at favourable oscillation phases.
  // Blind classes draw small per-limb lifts from one shared distribution.
  std::vector<std::array<double, 3>> static_off(spec.joints, {0.0, 0.0, 0.0});
  if (k >= 0) {
    for (std::size_t j : moving) static_off[j] = {0.0, 0.45, 0.20};
  } else {
    for (const auto& g : groups) {
      const std::array<double, 3> off = {rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15),
                                         rng.uniform(-0.15, 0.15)};
      for (std::size_t j : g) static_off[j] = off;
    }
  }

  // Per-joint oscillation direction, amplitude jitter and phase; the
  // frequency is drawn per video and carries no class information.
  const double freq_hz = rng.uniform(1.0, 3.0);
  std::vector<std::array<double, 3>> dir(spec.joints, {0.0, 0.0, 0.0});
  std::vector<double> amp(spec.joints, 0.0), phi(spec.joints, 0.0);
  for (std::size_t j : moving) {
    double n[3] = {rng.normal(), rng.normal(), rng.normal()};
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]) + 1e-12;
    dir[j] = {n[0] / len, n[1] / len, n[2] / len};
    amp[j] = 0.15 * rng.uniform(0.8, 1.2);
    phi[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  const double drift0[3] = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                            rng.uniform(-0.5, 0.5)};
  const double vel[3] = {rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01),
                         rng.uniform(-0.01, 0.01)};
  const double fps = 30.0;

  skeleton::SkeletonSequence seq;
  seq.joints = spec.joints;
  seq.spine_index = spec.spine_index;
  seq.head_index = spec.head_index;
  seq.frames = Tensor({frames, spec.joints, 3});
  for (std::size_t t = 0; t < frames; ++t) {
    const double ts = static_cast<double>(t);
    const double swing_arg = 2.0 * std::numbers::pi * freq_hz * ts / fps;
    for (std::size_t j = 0; j < spec.joints; ++j) {
      const double swing = amp[j] == 0.0 ? 0.0 : amp[j] * std::sin(swing_arg + phi[j]);
      for (std::size_t d = 0; d < 3; ++d) {
        seq.frames.at({t, j, d}) = pose[j][d] + static_off[j][d] + drift0[d] + vel[d] * ts +
                                   swing * dir[j][d] + rng.normal(0.0, 0.005);
      }
    }
  }
  return seq;
}

audio::AudioSignal render_audio(const SyntheticDatasetSpec& spec, bool special, Rng& rng) {
  audio::AudioSignal signal;
  signal.sample_rate = spec.sample_rate;
  const auto n = static_cast<std::size_t>(spec.audio_seconds * spec.sample_rate);
  signal.samples.resize(n);
  if (special) {
    for (std::size_t i = 0; i < n; ++i) {
      signal.samples[i] = 0.45 * std::sin(2.0 * std::numbers::pi * 440.0 *
                                          static_cast<double>(i) / spec.sample_rate) +
                          rng.uniform(-0.02, 0.02);
    }
  } else {
    for (double& s : signal.samples) s = rng.uniform(-0.1, 0.1);
  }
  return signal;
}

nlohmann::json spec_to_json(const SyntheticDatasetSpec& spec) {
  return nlohmann::json{
      {"n_classes", spec.n_classes},
      {"n_videos", spec.n_videos},
      {"frames_mean", spec.frames_mean},
      {"frames_stddev", spec.frames_stddev},
      {"frames_min", spec.frames_min},
      {"frames_max", spec.frames_max},
      {"n_splits", spec.n_splits},
      {"seed", spec.seed},
      {"informativeness",
       {{"rgb", spec.informativeness.rgb_classes},
        {"skeleton", spec.informativeness.skeleton_classes},
        {"special", spec.informativeness.special_classes}}},
      {"channels", spec.channels},
      {"height", spec.height},
      {"width", spec.width},
      {"joints", spec.joints},
      {"spine_index", spec.spine_index},
      {"head_index", spec.head_index},
      {"with_audio", spec.with_audio},
      {"audio_seconds", spec.audio_seconds},
      {"sample_rate", spec.sample_rate}};
}

SyntheticDatasetSpec spec_from_json(const nlohmann::json& j) {
  SyntheticDatasetSpec spec;
  spec.n_classes = j.at("n_classes").get<std::size_t>();
  spec.n_videos = j.at("n_videos").get<std::size_t>();
  spec.frames_mean = j.at("frames_mean").get<double>();
  spec.frames_stddev = j.at("frames_stddev").get<double>();
  spec.frames_min = j.at("frames_min").get<std::size_t>();
  spec.frames_max = j.at("frames_max").get<std::size_t>();
  spec.n_splits = j.at("n_splits").get<std::size_t>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.informativeness.rgb_classes =
      j.at("informativeness").at("rgb").get<std::vector<std::size_t>>();
  spec.informativeness.skeleton_classes =
      j.at("informativeness").at("skeleton").get<std::vector<std::size_t>>();
  spec.informativeness.special_classes =
      j.at("informativeness").at("special").get<std::vector<std::size_t>>();
  spec.channels = j.at("channels").get<std::size_t>();
  spec.height = j.at("height").get<std::size_t>();
  spec.width = j.at("width").get<std::size_t>();
  spec.joints = j.at("joints").get<std::size_t>();
  spec.spine_index = j.at("spine_index").get<std::size_t>();
  spec.head_index = j.at("head_index").get<std::size_t>();
  spec.with_audio = j.at("with_audio").get<bool>();
  spec.audio_seconds = j.at("audio_seconds").get<double>();
  spec.sample_rate = j.at("sample_rate").get<double>();
  return spec;
}

}  // namespace

InformativenessMap InformativenessMap::complementary(std::size_t n_classes) {
  InformativenessMap map;
  const std::size_t skeleton_count = (n_classes + 1) / 2;  // 7 -> skeleton {0..3}, rgb {4..6}
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (c < skeleton_count) map.skeleton_classes.push_back(c);
    else map.rgb_classes.push_back(c);
  }
  map.special_classes = {0};
  return map;
}

std::vector<std::string> split_names(std::size_t n_splits) {
  std::vector<std::string> names;
  names.reserve(n_splits);
  for (std::size_t s = 1; s <= n_splits; ++s) names.push_back("S" + std::to_string(s));
  return names;
}

Manifest generate_dataset(const SyntheticDatasetSpec& spec,
                          const std::filesystem::path& out_dir) {
  validate_spec(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create dataset directory " + out_dir.string() + ": " +
                             ec.message());
  }

  const std::vector<std::string> splits = split_names(spec.n_splits);
  const Rng root(spec.seed);

  Manifest manifest;
  manifest.spec = spec;
  manifest.videos.reserve(spec.n_videos);

  for (std::size_t v = 0; v < spec.n_videos; ++v) {
    Rng rng = root.fork(v);
    VideoEntry entry;
    entry.id = video_id(v, spec.n_videos);
    entry.label = v % spec.n_classes;
    entry.split = splits[(v / spec.n_classes) % spec.n_splits];
    entry.frames = draw_frames(spec, rng);
    entry.special = contains(spec.informativeness.special_classes, entry.label);

    const Tensor video = render_video(spec, entry.label, entry.frames, rng);
    entry.video_file = entry.id + ".rgb.bin";
    vision::write_video_binary(out_dir / entry.video_file, video);

    const skeleton::SkeletonSequence seq = render_skeleton(spec, entry.label, entry.frames, rng);
    entry.skeleton_file = entry.id + ".skel.csv";
    skeleton::write_skeleton_csv(out_dir / entry.skeleton_file, seq);

    if (spec.with_audio) {
      const audio::AudioSignal signal = render_audio(spec, entry.special, rng);
      entry.audio_file = entry.id + ".wav";
      audio::write_wav(out_dir / entry.audio_file, signal);
    }
    manifest.videos.push_back(std::move(entry));
  }

  write_manifest(out_dir, manifest);
  return manifest;
}

void write_manifest(const std::filesystem::path& dataset_dir, const Manifest& manifest) {
  nlohmann::json videos = nlohmann::json::array();
  for (const VideoEntry& e : manifest.videos) {
    videos.push_back({{"id", e.id},
                      {"label", e.label},
                      {"split", e.split},
                      {"frames", e.frames},
                      {"special", e.special},
                      {"video_file", e.video_file},
                      {"skeleton_file", e.skeleton_file},
                      {"audio_file", e.audio_file}});
  }
  const nlohmann::json j{{"spec", spec_to_json(manifest.spec)}, {"videos", std::move(videos)}};
  std::ofstream out(dataset_dir / "manifest.json");
  if (!out) {
    throw std::runtime_error("cannot write manifest in " + dataset_dir.string());
  }
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& dataset_dir) {
  std::ifstream in(dataset_dir / "manifest.json");
  if (!in) {
    throw std::runtime_error("no manifest.json in " + dataset_dir.string());
  }
  nlohmann::json j;
  in >> j;

  Manifest manifest;
  manifest.spec = spec_from_json(j.at("spec"));
  for (const auto& item : j.at("videos")) {
    VideoEntry e;
    e.id = item.at("id").get<std::string>();
    e.label = item.at("label").get<std::size_t>();
    e.split = item.at("split").get<std::string>();
    e.frames = item.at("frames").get<std::size_t>();
    e.special = item.at("special").get<bool>();
    e.video_file = item.at("video_file").get<std::string>();
    e.skeleton_file = item.at("skeleton_file").get<std::string>();
    e.audio_file = item.at("audio_file").get<std::string>();
    manifest.videos.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace mmfusion::bench
