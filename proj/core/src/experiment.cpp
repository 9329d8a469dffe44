#include "mmfusion/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json_util.hpp"
#include "mmfusion/rng.hpp"

namespace mmfusion::bench {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad numeric value '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad integer value '" + s + "'");
  }
  return v;
}

}  // namespace

std::string ExperimentConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["alpha"] = fmt_double(alpha);
  kv["aux_weight"] = fmt_double(aux_weight);
  kv["batch_size"] = std::to_string(batch_size);
  kv["conv1_channels"] = std::to_string(conv1_channels);
  kv["conv2_channels"] = std::to_string(conv2_channels);
  kv["epochs"] = std::to_string(epochs);
  kv["eval_clip_stride"] = std::to_string(eval_clip_stride);
  kv["eval_split"] = eval_split;
  kv["fc6"] = std::to_string(fc6);
  kv["fc7"] = std::to_string(fc7);
  kv["fc_low"] = std::to_string(fc_low);
  kv["l2_lambda"] = fmt_double(l2_lambda);
  kv["lstm_hidden"] = std::to_string(lstm_hidden);
  kv["overlap"] = std::to_string(overlap);
  kv["rgb_clips_per_video"] = std::to_string(rgb_clips_per_video);
  kv["rgb_epochs"] = std::to_string(rgb_epochs);
  kv["rgb_learning_rate"] = fmt_double(rgb_learning_rate);
  kv["seed"] = std::to_string(seed);
  kv["skeleton_epochs"] = std::to_string(skeleton_epochs);
  kv["skeleton_learning_rate"] = fmt_double(skeleton_learning_rate);
  kv["window_len"] = std::to_string(window_len);
  kv["with_audio"] = with_audio ? "true" : "false";
  std::string text;
  for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
  return text;
}

std::string ExperimentConfig::config_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value) {
  if (key == "seed") cfg.seed = parse_u64(value);
  else if (key == "alpha") cfg.alpha = parse_double(value);
  else if (key == "epochs") cfg.epochs = parse_u64(value);
  else if (key == "batch_size") cfg.batch_size = parse_u64(value);
  else if (key == "rgb_epochs") cfg.rgb_epochs = parse_u64(value);
  else if (key == "skeleton_epochs") cfg.skeleton_epochs = parse_u64(value);
  else if (key == "rgb_clips_per_video") cfg.rgb_clips_per_video = parse_u64(value);
  else if (key == "eval_clip_stride") cfg.eval_clip_stride = parse_u64(value);
  else if (key == "rgb_learning_rate") cfg.rgb_learning_rate = parse_double(value);
  else if (key == "skeleton_learning_rate") cfg.skeleton_learning_rate = parse_double(value);
  else if (key == "l2_lambda") cfg.l2_lambda = parse_double(value);
  else if (key == "aux_weight") cfg.aux_weight = parse_double(value);
  else if (key == "eval_split") cfg.eval_split = value;
  else if (key == "with_audio") cfg.with_audio = value == "true" || value == "1";
  else if (key == "lstm_hidden") cfg.lstm_hidden = parse_u64(value);
  else if (key == "fc_low") cfg.fc_low = parse_u64(value);
  else if (key == "conv1_channels") cfg.conv1_channels = parse_u64(value);
  else if (key == "conv2_channels") cfg.conv2_channels = parse_u64(value);
  else if (key == "fc6") cfg.fc6 = parse_u64(value);
  else if (key == "fc7") cfg.fc7 = parse_u64(value);
  else if (key == "window_len") cfg.window_len = parse_u64(value);
  else if (key == "overlap") cfg.overlap = parse_u64(value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

ExperimentConfig read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
    std::size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  " is not key=value: '" + line + "'");
    }
    apply_config_entry(cfg, line.substr(start, eq - start), line.substr(eq + 1));
  }
  return cfg;
}

namespace {

struct LoadedVideo {
  Tensor rgb;  // [T, C, H, W]
  skeleton::SkeletonFeatures features;
};

Tensor load_rgb(const std::filesystem::path& data_dir, const VideoEntry& entry) {
  if (entry.video_file.empty()) {
    throw std::runtime_error("video entry " + entry.id + " has no RGB file");
  }
  return vision::read_video(data_dir / entry.video_file);
}

skeleton::SkeletonFeatures load_features(const std::filesystem::path& data_dir,
                                         const VideoEntry& entry) {
  if (entry.skeleton_file.empty()) {
    throw std::runtime_error("video entry " + entry.id + " has no skeleton file");
  }
  const auto path = data_dir / entry.skeleton_file;
  const skeleton::SkeletonSequence seq = path.extension() == ".json"
                                             ? skeleton::read_skeleton_json(path)
                                             : skeleton::read_skeleton_csv(path);
  return skeleton::preprocess_skeleton(seq);
}

std::vector<std::size_t> eval_clip_starts(std::size_t frames, std::size_t stride) {
  const std::size_t last = frames - vision::kClipLength;
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s <= last; s += stride) starts.push_back(s);
  return starts;
}

struct VideoScores {
  std::vector<double> p_rgb;
  Tensor fc7_mean;
  std::vector<double> p_skel;
  Tensor lowest_fc;
};

VideoScores score_video(const TrainedModels& models, const std::filesystem::path& data_dir,
                        const VideoEntry& entry) {
  const ExperimentConfig& cfg = models.config;
  VideoScores scores;

  const Tensor video = load_rgb(data_dir, entry);
  const auto starts = eval_clip_starts(video.dim(0), cfg.eval_clip_stride);
  const std::size_t n_classes = models.rgb.config.n_classes;
  scores.p_rgb.assign(n_classes, 0.0);
  scores.fc7_mean = Tensor({cfg.fc7});
  for (std::size_t start : starts) {
    const vision::ClipFeatures f =
        vision::rgb_clip_features(vision::clip_at(video, start), models.rgb);
    for (std::size_t i = 0; i < n_classes; ++i) scores.p_rgb[i] += f.probs[i];
    for (std::size_t i = 0; i < cfg.fc7; ++i) scores.fc7_mean[i] += f.fc7[i];
  }
  const double inv = 1.0 / static_cast<double>(starts.size());
  for (double& v : scores.p_rgb) v *= inv;
  for (double& v : scores.fc7_mean.values()) v *= inv;

  const skeleton::SkeletonFeatures features = load_features(data_dir, entry);
  const auto windows = skeleton::window_sequence(features, cfg.windowing());
  const skeleton::SkeletonClassifyResult r = skeleton_classify(windows, models.skel);
  scores.p_skel = r.probs.values();
  scores.lowest_fc = r.lowest_fc;
  return scores;
}

fusion::FeatureVector fused_feature(const VideoScores& scores) {
  return fusion::concat_features(
      fusion::FeatureVector{scores.fc7_mean, fusion::SourceTag::Image},
      fusion::FeatureVector{scores.lowest_fc, fusion::SourceTag::Skeleton});
}

}  // namespace

TrainedModels train_models(const Manifest& manifest, const std::filesystem::path& data_dir,
                           const ExperimentConfig& cfg) {
  const auto splits = split_names(manifest.spec.n_splits);
  require(std::find(splits.begin(), splits.end(), cfg.eval_split) != splits.end(),
          "eval_split '" + cfg.eval_split + "' is not one of the dataset splits");
  std::vector<const VideoEntry*> train;
  for (const VideoEntry& e : manifest.videos) {
    if (e.split != cfg.eval_split) train.push_back(&e);
  }
  require(!train.empty(), "no training videos outside split " + cfg.eval_split);

  const Rng root(cfg.seed);
  TrainedModels models;
  models.config = cfg;

  // --- RGB net ---
  {
    vision::Conv3dNetConfig net_cfg;
    net_cfg.in_channels = manifest.spec.channels;
    net_cfg.height = manifest.spec.height;
    net_cfg.width = manifest.spec.width;
    net_cfg.conv1_channels = cfg.conv1_channels;
    net_cfg.conv2_channels = cfg.conv2_channels;
    net_cfg.fc6 = cfg.fc6;
    net_cfg.fc7 = cfg.fc7;
    net_cfg.n_classes = manifest.spec.n_classes;
    Rng init = root.fork(1);
    models.rgb = vision::Conv3dNet::seeded(net_cfg, init);

    Rng order = root.fork(3);
    const SgdConfig sgd{cfg.rgb_learning_rate, cfg.l2_lambda, cfg.seed};
    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.effective_rgb_epochs(); ++epoch) {
      order.shuffle(idx);
      vision::Conv3dNetGrads grads = vision::Conv3dNetGrads::zeros(models.rgb);
      std::size_t in_batch = 0;
      for (std::size_t i : idx) {
        const VideoEntry& entry = *train[i];
        const Tensor video = load_rgb(data_dir, entry);
        const std::size_t max_start = video.dim(0) - vision::kClipLength;
        for (std::size_t c = 0; c < cfg.rgb_clips_per_video; ++c) {
          const std::size_t start = static_cast<std::size_t>(order.below(max_start + 1));
          vision::accumulate_gradients(models.rgb, vision::clip_at(video, start), entry.label,
                                       cfg.aux_weight, grads);
          if (++in_batch == cfg.batch_size) {
            vision::apply_gradients(models.rgb, grads, 1.0 / static_cast<double>(in_batch), sgd);
            grads = vision::Conv3dNetGrads::zeros(models.rgb);
            in_batch = 0;
          }
        }
      }
      if (in_batch > 0) {
        vision::apply_gradients(models.rgb, grads, 1.0 / static_cast<double>(in_batch), sgd);
      }
    }
  }

  // --- Skeleton net ---
  {
    skeleton::LstmClassifierConfig net_cfg;
    net_cfg.input_width = skeleton::feature_width(manifest.spec.joints);
    net_cfg.hidden = cfg.lstm_hidden;
    net_cfg.fc_low = cfg.fc_low;
    net_cfg.n_classes = manifest.spec.n_classes;
    Rng init = root.fork(2);
    models.skel = skeleton::LstmClassifier::seeded(net_cfg, init);

    Rng order = root.fork(4);
    const SgdConfig sgd{cfg.skeleton_learning_rate, cfg.l2_lambda, cfg.seed};
    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.effective_skeleton_epochs(); ++epoch) {
      order.shuffle(idx);
      skeleton::LstmClassifierGrads grads = skeleton::LstmClassifierGrads::zeros(models.skel);
      std::size_t in_batch = 0;
      for (std::size_t i : idx) {
        const VideoEntry& entry = *train[i];
        const skeleton::SkeletonFeatures features = load_features(data_dir, entry);
        const auto windows = skeleton::window_sequence(features, cfg.windowing());
        const std::size_t pick = static_cast<std::size_t>(order.below(windows.size()));
        skeleton::accumulate_gradients(models.skel, windows[pick], entry.label, grads);
        if (++in_batch == cfg.batch_size) {
          skeleton::apply_gradients(models.skel, grads, 1.0 / static_cast<double>(in_batch), sgd);
          grads = skeleton::LstmClassifierGrads::zeros(models.skel);
          in_batch = 0;
        }
      }
      if (in_batch > 0) {
        skeleton::apply_gradients(models.skel, grads, 1.0 / static_cast<double>(in_batch), sgd);
      }
    }
  }

  // --- SVM re-fusion over concatenated per-video features ---
  {
    std::vector<fusion::FeatureVector> features;
    std::vector<std::size_t> labels;
    features.reserve(train.size());
    for (const VideoEntry* entry : train) {
      const VideoScores scores = score_video(models, data_dir, *entry);
      features.push_back(fused_feature(scores));
      labels.push_back(entry->label);
    }
    fusion::SvmTrainConfig svm_cfg;
    svm_cfg.seed = root.fork(6).next_u64();
    models.svm = fusion::svm_fuse_train(features, labels, manifest.spec.n_classes, svm_cfg);
  }

  // --- Optional audio head ---
  if (cfg.with_audio && manifest.spec.with_audio) {
    const audio::MelFilterbank bank =
        audio::MelFilterbank::make(26, 0.0, manifest.spec.sample_rate / 2.0, 400,
                                   manifest.spec.sample_rate);
    const audio::FrameSpec frame_spec;
    std::vector<Tensor> feats;
    std::vector<std::size_t> labels;
    for (const VideoEntry* entry : train) {
      if (entry->audio_file.empty()) continue;
      const audio::AudioSignal sig = audio::read_wav(data_dir / entry->audio_file);
      feats.push_back(audio::mean_features(audio::compute_mel_features(sig, frame_spec, bank)));
      labels.push_back(entry->special ? 0 : 1);
    }
    require(!feats.empty(), "with_audio is set but the dataset has no audio files");
    Rng init = root.fork(5);
    audio::AudioHead head = audio::AudioHead::seeded(26, init);
    const SgdConfig sgd{0.05, cfg.l2_lambda, cfg.seed};
    for (std::size_t epoch = 0; epoch < 30; ++epoch) {
      for (std::size_t i = 0; i < feats.size(); ++i) {
        audio::head_train_step(head, feats[i], labels[i], sgd);
      }
    }
    models.audio_head = std::move(head);
  }

  return models;
}

EvalCache evaluate(const TrainedModels& models, const Manifest& manifest,
                   const std::filesystem::path& data_dir) {
  require(models.svm.has_value(), "models are missing the SVM fusion stage");
  EvalCache cache;
  cache.n_classes = manifest.spec.n_classes;
  for (const VideoEntry& entry : manifest.videos) {
    if (entry.split != models.config.eval_split) continue;
    const VideoScores scores = score_video(models, data_dir, entry);
    EvalRecord record;
    record.id = entry.id;
    record.label = entry.label;
    record.p_rgb = scores.p_rgb;
    record.p_skel = scores.p_skel;
    record.p_svm = fusion::svm_fuse_predict(*models.svm, fused_feature(scores)).values();
    cache.records.push_back(std::move(record));
  }
  require(!cache.records.empty(),
          "no videos in evaluation split " + models.config.eval_split);
  return cache;
}

namespace {

double percent(std::size_t hits, std::size_t total) {
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

ExperimentResult result_from_cache(const EvalCache& cache, const ExperimentConfig& cfg) {
  require(!cache.records.empty(), "evaluation cache is empty");
  std::size_t hit_rgb = 0, hit_skel = 0, hit_fused = 0, hit_svm = 0;
  for (const EvalRecord& r : cache.records) {
    const ProbVector p_rgb{std::vector<double>(r.p_rgb)};
    const ProbVector p_skel{std::vector<double>(r.p_skel)};
    const ProbVector fused = fusion::alpha_fuse(p_rgb, p_skel, fusion::FusionConfig{cfg.alpha});
    const ProbVector refused = fusion::alpha_fuse(fused, ProbVector{std::vector<double>(r.p_svm)},
                                                  fusion::FusionConfig{0.5});
    if (argmax_decision(p_rgb) == r.label) ++hit_rgb;
    if (argmax_decision(p_skel) == r.label) ++hit_skel;
    if (argmax_decision(fused) == r.label) ++hit_fused;
    if (argmax_decision(refused) == r.label) ++hit_svm;
  }
  const std::size_t n = cache.records.size();
  ExperimentResult result;
  result.methods = {{kMethodRgb, percent(hit_rgb, n)},
                    {kMethodSkeleton, percent(hit_skel, n)},
                    {kMethodFused, percent(hit_fused, n)},
                    {kMethodFusedSvm, percent(hit_svm, n)}};
  result.config_hash = cfg.config_hash();
  result.seed = cfg.seed;
  return result;
}

ExperimentResult run_experiment(const Manifest& manifest,
                                const std::filesystem::path& data_dir,
                                const ExperimentConfig& cfg) {
  const TrainedModels models = train_models(manifest, data_dir, cfg);
  const EvalCache cache = evaluate(models, manifest, data_dir);
  return result_from_cache(cache, cfg);
}

std::vector<std::pair<double, double>> sweep_alpha(const EvalCache& cache,
                                                   const std::vector<double>& grid) {
  require(!cache.records.empty(), "evaluation cache is empty");
  std::vector<std::pair<double, double>> curve;
  curve.reserve(grid.size());
  for (double alpha : grid) {
    require(alpha >= 0.0 && alpha <= 1.0,
            "grid value " + fmt_double(alpha) + " outside [0, 1]");
    std::size_t hits = 0;
    for (const EvalRecord& r : cache.records) {
      const ProbVector fused =
          fusion::alpha_fuse(ProbVector{std::vector<double>(r.p_rgb)},
                             ProbVector{std::vector<double>(r.p_skel)},
                             fusion::FusionConfig{alpha});
      if (argmax_decision(fused) == r.label) ++hits;
    }
    curve.emplace_back(alpha, percent(hits, cache.records.size()));
  }
  return curve;
}

std::vector<double> parse_alpha_grid(const std::string& text) {
  require(!text.empty(), "empty alpha grid");
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    std::stringstream ss(text);
    std::string a, b, c;
    if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c)) {
      throw std::invalid_argument("grid must be start:end:step, got '" + text + "'");
    }
    const double start = parse_double(a), end = parse_double(b), step = parse_double(c);
    require(step > 0.0, "grid step must be positive");
    require(start <= end, "grid start must not exceed end");
    for (std::size_t i = 0;; ++i) {
      double v = start + static_cast<double>(i) * step;
      if (v > end + 1e-9) break;
      if (std::abs(v - end) < 1e-9) v = end;  // hit the endpoint exactly
      grid.push_back(v);
      if (v == end) break;
    }
  } else {
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ',')) grid.push_back(parse_double(field));
  }
  for (double v : grid) {
    require(v >= 0.0 && v <= 1.0, "grid value " + fmt_double(v) + " outside [0, 1]");
  }
  require(!grid.empty(), "empty alpha grid");
  return grid;
}

std::string render_table(const ExperimentResult& result, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::Csv) {
    out += "method,accuracy\n";
    for (const auto& [name, acc] : result.methods) {
      out += name + "," + fmt_double(acc) + "\n";
    }
  } else {
    out += "| Method | Result /% |\n| --- | --- |\n";
    for (const auto& [name, acc] : result.methods) {
      out += "| " + name + " | " + fmt_double(acc) + " |\n";
    }
  }
  return out;
}

std::string render_curve_csv(const std::vector<std::pair<double, double>>& curve) {
  std::string out = "alpha,accuracy\n";
  for (const auto& [alpha, acc] : curve) {
    out += fmt_double(alpha) + "," + fmt_double(acc) + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, double>> parse_table_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  require(std::getline(ss, line) && line == "method,accuracy",
          "table CSV must start with 'method,accuracy'");
  std::vector<std::pair<std::string, double>> methods;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    require(comma != std::string::npos, "bad table row '" + line + "'");
    methods.emplace_back(line.substr(0, comma), parse_double(line.substr(comma + 1)));
  }
  return methods;
}

std::vector<std::pair<double, double>> parse_curve_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  require(std::getline(ss, line) && line == "alpha,accuracy",
          "curve CSV must start with 'alpha,accuracy'");
  std::vector<std::pair<double, double>> curve;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, "bad curve row '" + line + "'");
    curve.emplace_back(parse_double(line.substr(0, comma)),
                       parse_double(line.substr(comma + 1)));
  }
  return curve;
}

void save_models(const std::filesystem::path& dir, const TrainedModels& models) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create model directory " + dir.string() + ": " +
                             ec.message());
  }
  auto dump = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  dump("train_config.txt", models.config.canonical_text());
  dump("rgb_net.json", vision::net_to_json(models.rgb));
  dump("skeleton_model.json", skeleton::model_to_json(models.skel));
  if (models.svm) dump("svm_fusion.json", fusion::svm_model_to_json(*models.svm));
  if (models.audio_head) {
    nlohmann::json j{{"weights", models.audio_head->weights},
                     {"bias", models.audio_head->bias},
                     {"threshold", models.audio_head->threshold}};
    dump("audio_head.json", j.dump());
  }
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TrainedModels load_models(const std::filesystem::path& dir) {
  TrainedModels models;
  models.config = read_config_file(dir / "train_config.txt");
  models.rgb = vision::net_from_json(slurp(dir / "rgb_net.json"));
  models.skel = skeleton::model_from_json(slurp(dir / "skeleton_model.json"));
  if (std::filesystem::exists(dir / "svm_fusion.json")) {
    models.svm = fusion::svm_model_from_json(slurp(dir / "svm_fusion.json"));
  }
  if (std::filesystem::exists(dir / "audio_head.json")) {
    const auto j = nlohmann::json::parse(slurp(dir / "audio_head.json"));
    audio::AudioHead head{j.at("weights").get<Tensor>(), j.at("bias").get<Tensor>(),
                          j.at("threshold").get<double>()};
    models.audio_head = std::move(head);
  }
  return models;
}

void save_cache(const std::filesystem::path& file, const EvalCache& cache) {
  nlohmann::json records = nlohmann::json::array();
  for (const EvalRecord& r : cache.records) {
    records.push_back({{"id", r.id},
                       {"label", r.label},
                       {"p_rgb", r.p_rgb},
                       {"p_skel", r.p_skel},
                       {"p_svm", r.p_svm}});
  }
  const nlohmann::json j{{"n_classes", cache.n_classes}, {"records", std::move(records)}};
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump();
}

EvalCache load_cache(const std::filesystem::path& file) {
  const auto j = nlohmann::json::parse(slurp(file));
  EvalCache cache;
  cache.n_classes = j.at("n_classes").get<std::size_t>();
  for (const auto& item : j.at("records")) {
    EvalRecord r;
    r.id = item.at("id").get<std::string>();
    r.label = item.at("label").get<std::size_t>();
    r.p_rgb = item.at("p_rgb").get<std::vector<double>>();
    r.p_skel = item.at("p_skel").get<std::vector<double>>();
    r.p_svm = item.at("p_svm").get<std::vector<double>>();
    cache.records.push_back(std::move(r));
  }
  return cache;
}

void save_result(const std::filesystem::path& file, const ExperimentResult& result) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& [name, acc] : result.methods) methods.push_back({name, acc});
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [alpha, acc] : result.alpha_curve) curve.push_back({alpha, acc});
  const nlohmann::json j{{"methods", std::move(methods)},
                         {"alpha_curve", std::move(curve)},
                         {"config_hash", result.config_hash},
                         {"seed", result.seed}};
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

ExperimentResult load_result(const std::filesystem::path& file) {
  const auto j = nlohmann::json::parse(slurp(file));
  ExperimentResult result;
  for (const auto& item : j.at("methods")) {
    result.methods.emplace_back(item.at(0).get<std::string>(), item.at(1).get<double>());
  }
  for (const auto& item : j.at("alpha_curve")) {
    result.alpha_curve.emplace_back(item.at(0).get<double>(), item.at(1).get<double>());
  }
  result.config_hash = j.at("config_hash").get<std::string>();
  result.seed = j.at("seed").get<std::uint64_t>();
  return result;
}

}  // namespace mmfusion::bench
