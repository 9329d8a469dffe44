#include "mmfusion/skeleton.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json_util.hpp"

namespace mmfusion::skeleton {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void validate_sequence(const SkeletonSequence& seq) {
  require(seq.frames.rank() == 3, "skeleton frames must be [T, J, 3]");
  require(seq.frames.dim(2) == 3, "skeleton coordinates must be 3-D");
  require(seq.frames.dim(1) == seq.joints, "frame joint count does not match joints field");
  require(seq.frames.dim(0) >= 1, "skeleton sequence must have at least one frame");
  require(seq.spine_index < seq.joints, "spine_index out of range");
  require(seq.head_index < seq.joints, "head_index out of range");
  if (!seq.frames.all_finite()) {
    throw std::invalid_argument("skeleton coordinates contain a non-finite value");
  }
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
    throw std::runtime_error("bad numeric field '" + s + "'");
  }
  return v;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  p.replace_extension(".hdr");
  return p;
}

}  // namespace

std::size_t feature_width(std::size_t joints) {
  return 3 * joints + joints * (joints - 1) / 2;
}

SkeletonFeatures preprocess_skeleton(const SkeletonSequence& seq) {
  validate_sequence(seq);
  const std::size_t t_count = seq.frames.dim(0);
  const std::size_t j_count = seq.joints;

  // Sequence scale: median spine-to-head distance.
  std::vector<double> spine_head(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    double sq = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
      const double diff =
          seq.frames.at({t, seq.head_index, d}) - seq.frames.at({t, seq.spine_index, d});
      sq += diff * diff;
    }
    spine_head[t] = std::sqrt(sq);
  }
  std::sort(spine_head.begin(), spine_head.end());
  const double scale = t_count % 2 == 1
                           ? spine_head[t_count / 2]
                           : 0.5 * (spine_head[t_count / 2 - 1] + spine_head[t_count / 2]);
  if (!(scale > 1e-12)) {
    throw std::runtime_error("degenerate skeleton: median spine-to-head distance is zero");
  }

  const std::size_t width = feature_width(j_count);
  SkeletonFeatures features;
  features.joints = j_count;
  features.scale = scale;
  features.per_frame = Tensor({t_count, width});

  for (std::size_t t = 0; t < t_count; ++t) {
    double* row = features.per_frame.values().data() + t * width;
    // Spine-relative coordinates.
    for (std::size_t j = 0; j < j_count; ++j) {
      for (std::size_t d = 0; d < 3; ++d) {
        row[3 * j + d] =
            (seq.frames.at({t, j, d}) - seq.frames.at({t, seq.spine_index, d})) / scale;
      }
    }
    // Pairwise distances, pairs (a, b) with a < b in lexicographic order.
    std::size_t k = 3 * j_count;
    for (std::size_t a = 0; a < j_count; ++a) {
      for (std::size_t b = a + 1; b < j_count; ++b) {
        double sq = 0.0;
        for (std::size_t d = 0; d < 3; ++d) {
          const double diff = seq.frames.at({t, a, d}) - seq.frames.at({t, b, d});
          sq += diff * diff;
        }
        row[k++] = std::sqrt(sq) / scale;
      }
    }
  }
  return features;
}

std::size_t window_count(std::size_t frames, const WindowingConfig& cfg) {
  require(cfg.window_len >= 1, "window_len must be positive");
  require(cfg.overlap < cfg.window_len, "overlap must be smaller than window_len");
  if (frames <= cfg.window_len) return 1;
  const std::size_t hop = cfg.window_len - cfg.overlap;
  return (frames - cfg.window_len + hop - 1) / hop + 1;
}

std::vector<Tensor> window_sequence(const SkeletonFeatures& features, const WindowingConfig& cfg) {
  const std::size_t t_count = features.per_frame.dim(0);
  const std::size_t width = features.per_frame.dim(1);
  const std::size_t n = window_count(t_count, cfg);
  const std::size_t hop = cfg.window_len - cfg.overlap;

  std::vector<Tensor> windows;
  windows.reserve(n);
  const double* rows = features.per_frame.values().data();
  for (std::size_t w = 0; w < n; ++w) {
    const std::size_t start = w * hop;
    Tensor window({cfg.window_len, width});
    for (std::size_t r = 0; r < cfg.window_len; ++r) {
      const std::size_t src = std::min(start + r, t_count - 1);  // repeat the last frame
      std::copy(rows + src * width, rows + (src + 1) * width,
                window.values().data() + r * width);
    }
    windows.push_back(std::move(window));
  }
  return windows;
}

LstmClassifier LstmClassifier::seeded(const LstmClassifierConfig& config, Rng& rng) {
  require(config.input_width >= 1, "input_width must be positive");
  LstmClassifier m;
  m.config = config;
  m.lstm1 = LstmParams::seeded(config.input_width, config.hidden, rng);
  m.lstm2 = LstmParams::seeded(config.hidden, config.hidden, rng);
  const double low_bound = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(config.fc_low));
  m.fc_low_w = Tensor::uniform({config.fc_low, config.hidden}, low_bound, rng);
  m.fc_low_b = Tensor({config.fc_low});
  m.fc_out_w = Tensor::uniform({config.n_classes, config.fc_low}, out_bound, rng);
  m.fc_out_b = Tensor({config.n_classes});
  return m;
}

LstmClassifier LstmClassifier::zeros(const LstmClassifierConfig& config) {
  require(config.input_width >= 1, "input_width must be positive");
  LstmClassifier m;
  m.config = config;
  m.lstm1 = LstmParams::zeros(config.input_width, config.hidden);
  m.lstm2 = LstmParams::zeros(config.hidden, config.hidden);
  m.fc_low_w = Tensor({config.fc_low, config.hidden});
  m.fc_low_b = Tensor({config.fc_low});
  m.fc_out_w = Tensor({config.n_classes, config.fc_low});
  m.fc_out_b = Tensor({config.n_classes});
  return m;
}

namespace {

struct WindowForward {
  std::vector<LstmStepCache> cache1, cache2;
  Tensor h2_final;
  Tensor low, logits;
};

WindowForward window_forward(const LstmClassifier& m, const Tensor& window, bool keep_caches) {
  require(window.rank() == 2, "window must be [frames, width]");
  require(window.dim(1) == m.config.input_width,
          "window width " + std::to_string(window.dim(1)) + " does not match model input " +
              std::to_string(m.config.input_width));
  const std::size_t steps = window.dim(0);
  const std::size_t width = window.dim(1);
  const std::size_t hidden = m.config.hidden;

  WindowForward fwd;
  if (keep_caches) {
    fwd.cache1.resize(steps);
    fwd.cache2.resize(steps);
  }
  Tensor h1({hidden}), c1({hidden}), h2({hidden}), c2({hidden});
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor x({width}, {window.values().begin() + static_cast<std::ptrdiff_t>(t * width),
                       window.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * width)});
    LstmState s1 = lstm_step(m.lstm1, x, h1, c1, keep_caches ? &fwd.cache1[t] : nullptr);
    h1 = std::move(s1.h);
    c1 = std::move(s1.c);
    LstmState s2 = lstm_step(m.lstm2, h1, h2, c2, keep_caches ? &fwd.cache2[t] : nullptr);
    h2 = std::move(s2.h);
    c2 = std::move(s2.c);
  }
  fwd.h2_final = h2;
  fwd.low = dense_forward(m.fc_low_w, m.fc_low_b, fwd.h2_final, Activation::Relu);
  fwd.logits = dense_forward(m.fc_out_w, m.fc_out_b, fwd.low, Activation::Identity);
  return fwd;
}

}  // namespace

SkeletonClassifyResult skeleton_classify(const std::vector<Tensor>& windows,
                                         const LstmClassifier& model) {
  require(!windows.empty(), "skeleton_classify needs at least one window");
  const std::size_t n_classes = model.config.n_classes;
  std::vector<double> probs(n_classes, 0.0);
  Tensor low({model.config.fc_low});
  for (const Tensor& window : windows) {
    const WindowForward fwd = window_forward(model, window, false);
    const ProbVector p = softmax(fwd.logits);
    for (std::size_t i = 0; i < n_classes; ++i) probs[i] += p[i];
    for (std::size_t i = 0; i < low.size(); ++i) low[i] += fwd.low[i];
  }
  const double inv = 1.0 / static_cast<double>(windows.size());
  for (double& v : probs) v *= inv;
  for (double& v : low.values()) v *= inv;
  return SkeletonClassifyResult{ProbVector(std::move(probs)), std::move(low)};
}

LstmClassifierGrads LstmClassifierGrads::zeros(const LstmClassifier& model) {
  return LstmClassifierGrads{LstmParamGrads::zeros(model.lstm1),
                             LstmParamGrads::zeros(model.lstm2), Tensor(model.fc_low_w.shape()),
                             Tensor(model.fc_low_b.shape()), Tensor(model.fc_out_w.shape()),
                             Tensor(model.fc_out_b.shape())};
}

double accumulate_gradients(const LstmClassifier& model, const Tensor& window, std::size_t label,
                            LstmClassifierGrads& acc) {
  require(label < model.config.n_classes, "label out of range");
  const WindowForward fwd = window_forward(model, window, true);
  const double loss = softmax_cross_entropy(fwd.logits, label);

  const Tensor dlogits = softmax_cross_entropy_grad(fwd.logits, label);
  const DenseGrads g_out = dense_backward(model.fc_out_w, model.fc_out_b, fwd.low,
                                          Activation::Identity, fwd.logits, dlogits);
  const DenseGrads g_low = dense_backward(model.fc_low_w, model.fc_low_b, fwd.h2_final,
                                          Activation::Relu, fwd.low, g_out.input);
  auto add = [](Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  add(acc.fc_out_w, g_out.weights);
  add(acc.fc_out_b, g_out.bias);
  add(acc.fc_low_w, g_low.weights);
  add(acc.fc_low_b, g_low.bias);

  const std::size_t steps = window.dim(0);
  const std::size_t hidden = model.config.hidden;

  // Level 2 first: collect per-step gradients w.r.t. its inputs (= h1 at t).
  std::vector<Tensor> dh1_from_l2(steps);
  {
    Tensor dh = g_low.input;
    Tensor dc({hidden});
    for (std::size_t t = steps; t-- > 0;) {
      LstmInputGrads g = lstm_step_backward(model.lstm2, fwd.cache2[t], dh, dc, acc.lstm2);
      dh1_from_l2[t] = std::move(g.x);
      dh = std::move(g.h_prev);
      dc = std::move(g.c_prev);
    }
  }
  // Level 1, carrying recurrent gradients and adding level-2 contributions.
  {
    Tensor dh({hidden});
    Tensor dc({hidden});
    for (std::size_t t = steps; t-- > 0;) {
      for (std::size_t i = 0; i < hidden; ++i) dh[i] += dh1_from_l2[t][i];
      LstmInputGrads g = lstm_step_backward(model.lstm1, fwd.cache1[t], dh, dc, acc.lstm1);
      dh = std::move(g.h_prev);
      dc = std::move(g.c_prev);
    }
  }
  return loss;
}

void apply_gradients(LstmClassifier& model, const LstmClassifierGrads& grads, double scale,
                     const SgdConfig& cfg) {
  // Global-norm clipping keeps long-window BPTT updates stable.
  constexpr double kClipNorm = 5.0;
  double sq = 0.0;
  for (const Tensor* g : {&grads.lstm1.w_input, &grads.lstm1.w_hidden, &grads.lstm1.bias,
                          &grads.lstm2.w_input, &grads.lstm2.w_hidden, &grads.lstm2.bias,
                          &grads.fc_low_w, &grads.fc_low_b, &grads.fc_out_w, &grads.fc_out_b}) {
    for (double v : g->values()) sq += scale * v * scale * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > kClipNorm) scale *= kClipNorm / norm;

  auto scaled = [scale](const Tensor& g) {
    Tensor out = g;
    for (double& v : out.values()) v *= scale;
    return out;
  };
  const Tensor g1x = scaled(grads.lstm1.w_input), g1h = scaled(grads.lstm1.w_hidden),
               g1b = scaled(grads.lstm1.bias);
  const Tensor g2x = scaled(grads.lstm2.w_input), g2h = scaled(grads.lstm2.w_hidden),
               g2b = scaled(grads.lstm2.bias);
  const Tensor glw = scaled(grads.fc_low_w), glb = scaled(grads.fc_low_b);
  const Tensor gow = scaled(grads.fc_out_w), gob = scaled(grads.fc_out_b);
  sgd_step({&model.lstm1.w_input, &model.lstm1.w_hidden, &model.lstm1.bias, &model.lstm2.w_input,
            &model.lstm2.w_hidden, &model.lstm2.bias, &model.fc_low_w, &model.fc_low_b,
            &model.fc_out_w, &model.fc_out_b},
           {&g1x, &g1h, &g1b, &g2x, &g2h, &g2b, &glw, &glb, &gow, &gob}, cfg);
}

std::string model_to_json(const LstmClassifier& model) {
  nlohmann::json j;
  j["config"] = {{"input_width", model.config.input_width},
                 {"hidden", model.config.hidden},
                 {"fc_low", model.config.fc_low},
                 {"n_classes", model.config.n_classes}};
  j["lstm1"] = {{"w_input", model.lstm1.w_input},
                {"w_hidden", model.lstm1.w_hidden},
                {"bias", model.lstm1.bias}};
  j["lstm2"] = {{"w_input", model.lstm2.w_input},
                {"w_hidden", model.lstm2.w_hidden},
                {"bias", model.lstm2.bias}};
  j["fc_low_w"] = model.fc_low_w;
  j["fc_low_b"] = model.fc_low_b;
  j["fc_out_w"] = model.fc_out_w;
  j["fc_out_b"] = model.fc_out_b;
  return j.dump();
}

LstmClassifier model_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  LstmClassifierConfig cfg;
  cfg.input_width = j.at("config").at("input_width").get<std::size_t>();
  cfg.hidden = j.at("config").at("hidden").get<std::size_t>();
  cfg.fc_low = j.at("config").at("fc_low").get<std::size_t>();
  cfg.n_classes = j.at("config").at("n_classes").get<std::size_t>();

  LstmClassifier m = LstmClassifier::zeros(cfg);
  m.lstm1.w_input = j.at("lstm1").at("w_input").get<Tensor>();
  m.lstm1.w_hidden = j.at("lstm1").at("w_hidden").get<Tensor>();
  m.lstm1.bias = j.at("lstm1").at("bias").get<Tensor>();
  m.lstm2.w_input = j.at("lstm2").at("w_input").get<Tensor>();
  m.lstm2.w_hidden = j.at("lstm2").at("w_hidden").get<Tensor>();
  m.lstm2.bias = j.at("lstm2").at("bias").get<Tensor>();
  m.fc_low_w = j.at("fc_low_w").get<Tensor>();
  m.fc_low_b = j.at("fc_low_b").get<Tensor>();
  m.fc_out_w = j.at("fc_out_w").get<Tensor>();
  m.fc_out_b = j.at("fc_out_b").get<Tensor>();
  return m;
}

SkeletonSequence read_skeleton_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open skeleton file " + path.string());
  nlohmann::json j;
  in >> j;

  SkeletonSequence seq;
  seq.joints = j.at("joints").get<std::size_t>();
  seq.spine_index = j.at("spine_index").get<std::size_t>();
  seq.head_index = j.value("head_index", std::size_t{3});
  const auto& frames = j.at("frames");
  const std::size_t t_count = frames.size();
  seq.frames = Tensor({t_count, seq.joints, 3});
  for (std::size_t t = 0; t < t_count; ++t) {
    const auto& frame = frames.at(t);
    if (frame.size() != seq.joints) {
      throw std::runtime_error("frame " + std::to_string(t) + " has " +
                               std::to_string(frame.size()) + " joints, expected " +
                               std::to_string(seq.joints));
    }
    for (std::size_t jnt = 0; jnt < seq.joints; ++jnt) {
      for (std::size_t d = 0; d < 3; ++d) {
        seq.frames.at({t, jnt, d}) = frame.at(jnt).at(d).get<double>();
      }
    }
  }
  validate_sequence(seq);
  return seq;
}

void write_skeleton_json(const std::filesystem::path& path, const SkeletonSequence& seq) {
  validate_sequence(seq);
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t t = 0; t < seq.frames.dim(0); ++t) {
    nlohmann::json frame = nlohmann::json::array();
    for (std::size_t jnt = 0; jnt < seq.joints; ++jnt) {
      frame.push_back({seq.frames.at({t, jnt, 0}), seq.frames.at({t, jnt, 1}),
                       seq.frames.at({t, jnt, 2})});
    }
    frames.push_back(std::move(frame));
  }
  nlohmann::json j{{"joints", seq.joints},
                   {"spine_index", seq.spine_index},
                   {"head_index", seq.head_index},
                   {"frames", std::move(frames)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write skeleton file " + path.string());
  out << j.dump();
}

SkeletonSequence read_skeleton_csv(const std::filesystem::path& path) {
  std::ifstream hdr(sidecar_path(path));
  if (!hdr) {
    throw std::runtime_error("missing skeleton sidecar header " + sidecar_path(path).string());
  }
  SkeletonSequence seq;
  std::string line;
  while (std::getline(hdr, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "joints") seq.joints = static_cast<std::size_t>(std::stoul(value));
    else if (key == "spine_index") seq.spine_index = static_cast<std::size_t>(std::stoul(value));
    else if (key == "head_index") seq.head_index = static_cast<std::size_t>(std::stoul(value));
  }

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open skeleton file " + path.string());
  std::vector<double> data;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t cols = 0;
    while (std::getline(ss, field, ',')) {
      data.push_back(parse_double(field));
      ++cols;
    }
    if (cols != 3 * seq.joints) {
      throw std::runtime_error("row " + std::to_string(rows) + " has " + std::to_string(cols) +
                               " columns, expected " + std::to_string(3 * seq.joints));
    }
    ++rows;
  }
  seq.frames = Tensor({rows, seq.joints, 3}, std::move(data));
  validate_sequence(seq);
  return seq;
}

void write_skeleton_csv(const std::filesystem::path& path, const SkeletonSequence& seq) {
  validate_sequence(seq);
  std::ofstream hdr(sidecar_path(path));
  if (!hdr) {
    throw std::runtime_error("cannot write skeleton sidecar " + sidecar_path(path).string());
  }
  hdr << "joints=" << seq.joints << "\nspine_index=" << seq.spine_index
      << "\nhead_index=" << seq.head_index << "\n";

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write skeleton file " + path.string());
  for (std::size_t t = 0; t < seq.frames.dim(0); ++t) {
    for (std::size_t jnt = 0; jnt < seq.joints; ++jnt) {
      for (std::size_t d = 0; d < 3; ++d) {
        if (jnt != 0 || d != 0) out << ',';
        out << fmt_double(seq.frames.at({t, jnt, d}));
      }
    }
    out << '\n';
  }
}

}  // namespace mmfusion::skeleton
