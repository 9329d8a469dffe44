#include "mmfusion/vision.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json_util.hpp"

namespace mmfusion::vision {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// [T, C, H, W] -> [C, T, H, W], the layout conv_forward expects.
Tensor to_conv_layout(const Tensor& clip) {
  const std::size_t t = clip.dim(0), c = clip.dim(1), h = clip.dim(2), w = clip.dim(3);
  Tensor out({c, t, h, w});
  const std::size_t hw = h * w;
  for (std::size_t ti = 0; ti < t; ++ti) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const double* src = clip.values().data() + (ti * c + ci) * hw;
      double* dst = out.values().data() + (ci * t + ti) * hw;
      std::copy(src, src + hw, dst);
    }
  }
  return out;
}

// Per-channel spatial means of a [C, ...] tensor.
Tensor channel_means(const Tensor& t, std::size_t channels) {
  const std::size_t per = t.size() / channels;
  Tensor out({channels});
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) s += t[c * per + i];
    out[c] = s / static_cast<double>(per);
  }
  return out;
}

ConvSpec conv3x3x3(std::size_t out_ch, std::size_t in_ch) {
  ConvSpec spec;
  spec.kernel = Tensor({out_ch, in_ch, 3, 3, 3});
  spec.bias = Tensor({out_ch});
  spec.activation = Activation::Relu;
  return spec;
}

struct ForwardCache {
  Tensor input;  // conv layout
  Tensor y1, y2;
  Tensor pool, a6, a7, logits;
  Tensor aux_pool, aux_logits;
};

ForwardCache forward(const RgbClip& clip, const Conv3dNet& net) {
  const Conv3dNetConfig& cfg = net.config;
  require(clip.channels() == cfg.in_channels && clip.height() == cfg.height &&
              clip.width() == cfg.width,
          "clip dimensions do not match the network configuration");

  ForwardCache cache;
  cache.input = to_conv_layout(clip.frames());
  cache.y1 = conv_forward(cache.input, net.conv1);
  cache.y2 = conv_forward(cache.y1, net.conv2);
  cache.pool = channel_means(cache.y2, cfg.conv2_channels);
  cache.a6 = dense_forward(net.fc6_w, net.fc6_b, cache.pool, Activation::Relu);
  cache.a7 = dense_forward(net.fc7_w, net.fc7_b, cache.a6, Activation::Relu);
  cache.logits = dense_forward(net.fc8_w, net.fc8_b, cache.a7, Activation::Identity);
  cache.aux_pool = channel_means(cache.y1, cfg.conv1_channels);
  cache.aux_logits = dense_forward(net.aux_w, net.aux_b, cache.aux_pool, Activation::Identity);
  return cache;
}

}  // namespace

RgbClip::RgbClip(Tensor frames) : frames_(std::move(frames)) {
  if (frames_.rank() != 4) {
    throw std::invalid_argument("clip tensor must be [frames, channels, height, width]");
  }
  if (frames_.dim(0) != kClipLength) {
    throw std::invalid_argument("clip must have exactly " + std::to_string(kClipLength) +
                                " frames, got " + std::to_string(frames_.dim(0)));
  }
  if (!frames_.all_finite()) throw std::invalid_argument("clip contains a non-finite value");
  for (double& v : frames_.values()) v = std::clamp(v, 0.0, 1.0);
}

FactorizedBlock FactorizedBlock::five_as_two_threes(Tensor first_3x3, Tensor second_3x3) {
  const std::vector<std::size_t> want{3, 3};
  require(first_3x3.shape() == want && second_3x3.shape() == want,
          "FiveAsTwoThrees takes exactly two 3x3 kernels");
  ConvSpec a, b;
  a.kernel = std::move(first_3x3);
  b.kernel = std::move(second_3x3);
  return FactorizedBlock(FactorizedMode::FiveAsTwoThrees, 5, {std::move(a), std::move(b)});
}

FactorizedBlock FactorizedBlock::asymmetric_pair(Tensor row_1xn, Tensor col_nx1) {
  require(row_1xn.rank() == 2 && row_1xn.dim(0) == 1, "row kernel must be 1xn");
  const std::size_t n = row_1xn.dim(1);
  require(n >= 2, "asymmetric pair needs n >= 2");
  require(col_nx1.rank() == 2 && col_nx1.dim(0) == n && col_nx1.dim(1) == 1,
          "column kernel must be nx1 with matching n");
  ConvSpec a, b;
  a.kernel = std::move(row_1xn);
  b.kernel = std::move(col_nx1);
  return FactorizedBlock(FactorizedMode::AsymmetricPair, n, {std::move(a), std::move(b)});
}

Tensor factorized_forward(const FactorizedBlock& block, const Tensor& input) {
  require(input.rank() == 2, "factorized_forward expects a 2-D input");
  const std::size_t need = block.equivalent_extent();
  for (std::size_t d = 0; d < 2; ++d) {
    if (input.dim(d) < need) {
      throw std::invalid_argument("input extent " + std::to_string(input.dim(d)) +
                                  " in dimension " + std::to_string(d) +
                                  " is below the block's kernel extent " + std::to_string(need));
    }
  }
  Tensor out = input;
  for (const ConvSpec& stage : block.stages()) out = conv_forward(out, stage);
  return out;
}

std::size_t multiply_count(std::size_t kernel_h, std::size_t kernel_w, bool factorized) {
  require(kernel_h >= 1 && kernel_w >= 1, "kernel dims must be >= 1");
  if (!factorized) return kernel_h * kernel_w;
  require(kernel_h == kernel_w, "factorized count is defined for square kernels");
  if (kernel_h == 5) return 9 + 9;  // two stacked 3x3
  return 2 * kernel_h;              // 1xn followed by nx1
}

Conv3dNet Conv3dNet::seeded(const Conv3dNetConfig& config, Rng& rng) {
  require(config.height >= 5 && config.width >= 5,
          "two valid 3x3x3 blocks need height and width >= 5");
  Conv3dNet net = Conv3dNet::zeros(config);
  auto fan_bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  net.conv1.kernel =
      Tensor::uniform(net.conv1.kernel.shape(), fan_bound(config.in_channels * 27), rng);
  net.conv2.kernel =
      Tensor::uniform(net.conv2.kernel.shape(), fan_bound(config.conv1_channels * 27), rng);
  net.fc6_w = Tensor::uniform(net.fc6_w.shape(), fan_bound(config.conv2_channels), rng);
  net.fc7_w = Tensor::uniform(net.fc7_w.shape(), fan_bound(config.fc6), rng);
  net.fc8_w = Tensor::uniform(net.fc8_w.shape(), fan_bound(config.fc7), rng);
  net.aux_w = Tensor::uniform(net.aux_w.shape(), fan_bound(config.conv1_channels), rng);
  return net;
}

Conv3dNet Conv3dNet::zeros(const Conv3dNetConfig& config) {
  require(config.n_classes >= 2, "need at least two classes");
  Conv3dNet net;
  net.config = config;
  net.conv1 = conv3x3x3(config.conv1_channels, config.in_channels);
  net.conv2 = conv3x3x3(config.conv2_channels, config.conv1_channels);
  net.fc6_w = Tensor({config.fc6, config.conv2_channels});
  net.fc6_b = Tensor({config.fc6});
  net.fc7_w = Tensor({config.fc7, config.fc6});
  net.fc7_b = Tensor({config.fc7});
  net.fc8_w = Tensor({config.n_classes, config.fc7});
  net.fc8_b = Tensor({config.n_classes});
  net.aux_w = Tensor({config.n_classes, config.conv1_channels});
  net.aux_b = Tensor({config.n_classes});
  return net;
}

ClipFeatures rgb_clip_features(const RgbClip& clip, const Conv3dNet& net) {
  ForwardCache cache = forward(clip, net);
  ProbVector probs = softmax(cache.logits);
  return ClipFeatures{std::move(cache.a6), std::move(cache.a7), std::move(cache.logits),
                      std::move(probs)};
}

AuxClassifierOutput aux_classifier_forward(const RgbClip& clip, const Conv3dNet& net) {
  const ForwardCache cache = forward(clip, net);
  return AuxClassifierOutput{softmax(cache.aux_logits)};
}

std::size_t clip_count(std::size_t frames) {
  require(frames >= kClipLength, "video of " + std::to_string(frames) +
                                     " frames is shorter than a " +
                                     std::to_string(kClipLength) + "-frame clip");
  return frames - kClipLength + 1;
}

RgbClip clip_at(const Tensor& video, std::size_t start) {
  require(video.rank() == 4, "video tensor must be [frames, channels, height, width]");
  require(start + kClipLength <= video.dim(0), "clip start out of range");
  const std::size_t frame_size = video.dim(1) * video.dim(2) * video.dim(3);
  std::vector<double> data(
      video.values().begin() + static_cast<std::ptrdiff_t>(start * frame_size),
      video.values().begin() + static_cast<std::ptrdiff_t>((start + kClipLength) * frame_size));
  return RgbClip(Tensor({kClipLength, video.dim(1), video.dim(2), video.dim(3)},
                        std::move(data)));
}

std::vector<RgbClip> video_to_clips(const Tensor& video) {
  require(video.rank() == 4, "video tensor must be [frames, channels, height, width]");
  const std::size_t n = clip_count(video.dim(0));
  std::vector<RgbClip> clips;
  clips.reserve(n);
  for (std::size_t start = 0; start < n; ++start) clips.push_back(clip_at(video, start));
  return clips;
}

Conv3dNetGrads Conv3dNetGrads::zeros(const Conv3dNet& net) {
  Conv3dNetGrads g;
  g.conv1_kernel = Tensor(net.conv1.kernel.shape());
  g.conv1_bias = Tensor(net.conv1.bias.shape());
  g.conv2_kernel = Tensor(net.conv2.kernel.shape());
  g.conv2_bias = Tensor(net.conv2.bias.shape());
  g.fc6_w = Tensor(net.fc6_w.shape());
  g.fc6_b = Tensor(net.fc6_b.shape());
  g.fc7_w = Tensor(net.fc7_w.shape());
  g.fc7_b = Tensor(net.fc7_b.shape());
  g.fc8_w = Tensor(net.fc8_w.shape());
  g.fc8_b = Tensor(net.fc8_b.shape());
  g.aux_w = Tensor(net.aux_w.shape());
  g.aux_b = Tensor(net.aux_b.shape());
  return g;
}

double accumulate_gradients(const Conv3dNet& net, const RgbClip& clip, std::size_t label,
                            double aux_weight, Conv3dNetGrads& acc) {
  require(label < net.config.n_classes, "label out of range");
  const ForwardCache cache = forward(clip, net);

  const double loss = softmax_cross_entropy(cache.logits, label) +
                      aux_weight * softmax_cross_entropy(cache.aux_logits, label);

  // Main head.
  const Tensor dlogits = softmax_cross_entropy_grad(cache.logits, label);
  const DenseGrads g8 = dense_backward(net.fc8_w, net.fc8_b, cache.a7, Activation::Identity,
                                       cache.logits, dlogits);
  const DenseGrads g7 =
      dense_backward(net.fc7_w, net.fc7_b, cache.a6, Activation::Relu, cache.a7, g8.input);
  const DenseGrads g6 =
      dense_backward(net.fc6_w, net.fc6_b, cache.pool, Activation::Relu, cache.a6, g7.input);

  // Mean pool spreads each channel gradient uniformly over its positions.
  const std::size_t per2 = cache.y2.size() / net.config.conv2_channels;
  Tensor dy2(cache.y2.shape());
  for (std::size_t c = 0; c < net.config.conv2_channels; ++c) {
    const double d = g6.input[c] / static_cast<double>(per2);
    for (std::size_t i = 0; i < per2; ++i) dy2[c * per2 + i] = d;
  }
  const ConvGrads gc2 = conv_backward(cache.y1, net.conv2, cache.y2, dy2);

  // Auxiliary head joins the block-1 gradient.
  Tensor daux_logits = softmax_cross_entropy_grad(cache.aux_logits, label);
  for (double& v : daux_logits.values()) v *= aux_weight;
  const DenseGrads ga = dense_backward(net.aux_w, net.aux_b, cache.aux_pool, Activation::Identity,
                                       cache.aux_logits, daux_logits);

  const std::size_t per1 = cache.y1.size() / net.config.conv1_channels;
  Tensor dy1 = gc2.input;
  for (std::size_t c = 0; c < net.config.conv1_channels; ++c) {
    const double d = ga.input[c] / static_cast<double>(per1);
    for (std::size_t i = 0; i < per1; ++i) dy1[c * per1 + i] += d;
  }
  const ConvGrads gc1 = conv_backward(cache.input, net.conv1, cache.y1, dy1);

  auto add = [](Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  add(acc.conv1_kernel, gc1.kernel);
  add(acc.conv1_bias, gc1.bias);
  add(acc.conv2_kernel, gc2.kernel);
  add(acc.conv2_bias, gc2.bias);
  add(acc.fc6_w, g6.weights);
  add(acc.fc6_b, g6.bias);
  add(acc.fc7_w, g7.weights);
  add(acc.fc7_b, g7.bias);
  add(acc.fc8_w, g8.weights);
  add(acc.fc8_b, g8.bias);
  add(acc.aux_w, ga.weights);
  add(acc.aux_b, ga.bias);
  return loss;
}

void apply_gradients(Conv3dNet& net, const Conv3dNetGrads& grads, double scale,
                     const SgdConfig& cfg) {
  auto scaled = [scale](const Tensor& g) {
    Tensor out = g;
    for (double& v : out.values()) v *= scale;
    return out;
  };
  const Tensor g1k = scaled(grads.conv1_kernel), g1b = scaled(grads.conv1_bias);
  const Tensor g2k = scaled(grads.conv2_kernel), g2b = scaled(grads.conv2_bias);
  const Tensor g6w = scaled(grads.fc6_w), g6b = scaled(grads.fc6_b);
  const Tensor g7w = scaled(grads.fc7_w), g7b = scaled(grads.fc7_b);
  const Tensor g8w = scaled(grads.fc8_w), g8b = scaled(grads.fc8_b);
  const Tensor gaw = scaled(grads.aux_w), gab = scaled(grads.aux_b);
  sgd_step({&net.conv1.kernel, &net.conv1.bias, &net.conv2.kernel, &net.conv2.bias, &net.fc6_w,
            &net.fc6_b, &net.fc7_w, &net.fc7_b, &net.fc8_w, &net.fc8_b, &net.aux_w, &net.aux_b},
           {&g1k, &g1b, &g2k, &g2b, &g6w, &g6b, &g7w, &g7b, &g8w, &g8b, &gaw, &gab}, cfg);
}

namespace {

constexpr char kVideoMagic[4] = {'M', 'M', 'F', 'V'};

std::uint32_t load_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32(std::ofstream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

}  // namespace

Tensor read_video(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".json") return read_video_json(path);
  if (ext == ".bin") return read_video_binary(path);
  throw std::runtime_error("unknown video file extension: " + path.string());
}

Tensor read_video_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open video file " + path.string());
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), 16);
  if (in.gcount() != 16 || std::memcmp(header, kVideoMagic, 4) != 0) {
    throw std::runtime_error("not a packed video file: " + path.string());
  }
  const std::uint32_t t = load_u32(header + 4);
  const std::uint32_t c = load_u32(header + 8);
  const std::uint32_t dims = load_u32(header + 12);
  const std::uint32_t h = dims >> 16;
  const std::uint32_t w = dims & 0xffff;
  const std::size_t n = static_cast<std::size_t>(t) * c * h * w;

  std::vector<float> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float))) {
    throw std::runtime_error("video data truncated: " + path.string());
  }
  Tensor video({t, c, h, w});
  for (std::size_t i = 0; i < n; ++i) video[i] = static_cast<double>(raw[i]);
  return video;
}

void write_video_binary(const std::filesystem::path& path, const Tensor& video) {
  require(video.rank() == 4, "video tensor must be [frames, channels, height, width]");
  require(video.dim(2) <= 0xffff && video.dim(3) <= 0xffff,
          "height and width must fit in 16 bits each");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write video file " + path.string());
  out.write(kVideoMagic, 4);
  store_u32(out, static_cast<std::uint32_t>(video.dim(0)));
  store_u32(out, static_cast<std::uint32_t>(video.dim(1)));
  store_u32(out, static_cast<std::uint32_t>((video.dim(2) << 16) | video.dim(3)));
  std::vector<float> raw(video.size());
  for (std::size_t i = 0; i < video.size(); ++i) raw[i] = static_cast<float>(video[i]);
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!out) throw std::runtime_error("failed writing video file " + path.string());
}

Tensor read_video_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open video file " + path.string());
  nlohmann::json j;
  in >> j;
  Tensor video = j.get<Tensor>();
  require(video.rank() == 4, "video tensor must be [frames, channels, height, width]");
  return video;
}

void write_video_json(const std::filesystem::path& path, const Tensor& video) {
  require(video.rank() == 4, "video tensor must be [frames, channels, height, width]");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write video file " + path.string());
  out << nlohmann::json(video).dump();
}

std::string net_to_json(const Conv3dNet& net) {
  nlohmann::json j;
  j["config"] = {{"in_channels", net.config.in_channels},
                 {"height", net.config.height},
                 {"width", net.config.width},
                 {"conv1_channels", net.config.conv1_channels},
                 {"conv2_channels", net.config.conv2_channels},
                 {"fc6", net.config.fc6},
                 {"fc7", net.config.fc7},
                 {"n_classes", net.config.n_classes}};
  j["conv1"] = {{"kernel", net.conv1.kernel}, {"bias", net.conv1.bias}};
  j["conv2"] = {{"kernel", net.conv2.kernel}, {"bias", net.conv2.bias}};
  j["fc6_w"] = net.fc6_w;
  j["fc6_b"] = net.fc6_b;
  j["fc7_w"] = net.fc7_w;
  j["fc7_b"] = net.fc7_b;
  j["fc8_w"] = net.fc8_w;
  j["fc8_b"] = net.fc8_b;
  j["aux_w"] = net.aux_w;
  j["aux_b"] = net.aux_b;
  return j.dump();
}

Conv3dNet net_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Conv3dNetConfig cfg;
  const auto& jc = j.at("config");
  cfg.in_channels = jc.at("in_channels").get<std::size_t>();
  cfg.height = jc.at("height").get<std::size_t>();
  cfg.width = jc.at("width").get<std::size_t>();
  cfg.conv1_channels = jc.at("conv1_channels").get<std::size_t>();
  cfg.conv2_channels = jc.at("conv2_channels").get<std::size_t>();
  cfg.fc6 = jc.at("fc6").get<std::size_t>();
  cfg.fc7 = jc.at("fc7").get<std::size_t>();
  cfg.n_classes = jc.at("n_classes").get<std::size_t>();

  Conv3dNet net = Conv3dNet::zeros(cfg);
  net.conv1.kernel = j.at("conv1").at("kernel").get<Tensor>();
  net.conv1.bias = j.at("conv1").at("bias").get<Tensor>();
  net.conv2.kernel = j.at("conv2").at("kernel").get<Tensor>();
  net.conv2.bias = j.at("conv2").at("bias").get<Tensor>();
  net.fc6_w = j.at("fc6_w").get<Tensor>();
  net.fc6_b = j.at("fc6_b").get<Tensor>();
  net.fc7_w = j.at("fc7_w").get<Tensor>();
  net.fc7_b = j.at("fc7_b").get<Tensor>();
  net.fc8_w = j.at("fc8_w").get<Tensor>();
  net.fc8_b = j.at("fc8_b").get<Tensor>();
  net.aux_w = j.at("aux_w").get<Tensor>();
  net.aux_b = j.at("aux_b").get<Tensor>();
  return net;
}

}  // namespace mmfusion::vision
