#include "mmfusion/audio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace mmfusion::audio {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<double> frame_window(const FrameSpec& spec) {
  std::vector<double> w(spec.frame_len, 1.0);
  if (spec.window == WindowKind::Hann && spec.frame_len > 1) {
    for (std::size_t i = 0; i < spec.frame_len; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(spec.frame_len - 1));
    }
  }
  return w;
}

}  // namespace

double hz_to_mel(double hz) {
  require(hz >= 0.0, "frequency must be non-negative, got " + fmt_double(hz));
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
  require(mel >= 0.0, "mel value must be non-negative, got " + fmt_double(mel));
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> dft_energy(std::span<const double> frame) {
  const std::size_t n = frame.size();
  require(n >= 1, "dft_energy requires a non-empty frame");

  // Twiddle table: e^{-j 2 pi k / n} for k = 0..n-1, indexed by (r*i) mod n.
  std::vector<double> cos_tab(n), sin_tab(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    cos_tab[k] = std::cos(angle);
    sin_tab[k] = std::sin(angle);
  }

  std::vector<double> energy(n);
  for (std::size_t r = 0; r < n; ++r) {
    double re = 0.0, im = 0.0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      re += frame[i] * cos_tab[idx];
      im += frame[i] * sin_tab[idx];
      idx += r;
      if (idx >= n) idx -= n;
    }
    energy[r] = re * re + im * im;
  }
  return energy;
}

MelFilterbank MelFilterbank::make(std::size_t n_filters, double f_min, double f_max,
                                  std::size_t n_bins, double sample_rate) {
  require(n_filters >= 1, "filterbank needs at least one filter");
  require(n_bins >= 2, "filterbank needs at least two DFT bins");
  require(sample_rate > 0.0, "sample_rate must be positive");
  require(f_min >= 0.0 && f_min < f_max, "need 0 <= f_min < f_max");
  require(f_max <= sample_rate / 2.0, "f_max must not exceed the Nyquist frequency");

  // n_filters + 2 points equally spaced in mel; triangle j spans points j-1..j+1.
  std::vector<double> hz_points(n_filters + 2);
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  for (std::size_t j = 0; j < hz_points.size(); ++j) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(j) /
                                    static_cast<double>(n_filters + 1);
    hz_points[j] = mel_to_hz(mel);
  }

  MelFilterbank bank;
  bank.n_filters_ = n_filters;
  bank.n_bins_ = n_bins;
  bank.f_min_ = f_min;
  bank.f_max_ = f_max;
  bank.weights_.assign(n_filters * n_bins, 0.0);
  for (std::size_t f = 0; f < n_filters; ++f) {
    const double lo = hz_points[f];
    const double mid = hz_points[f + 1];
    const double hi = hz_points[f + 2];
    double sum = 0.0;
    for (std::size_t bin = 0; bin < n_bins; ++bin) {
      const double freq = sample_rate * static_cast<double>(bin) / static_cast<double>(n_bins);
      double w = 0.0;
      if (freq >= lo && freq <= mid && mid > lo) {
        w = (freq - lo) / (mid - lo);
      } else if (freq > mid && freq <= hi && hi > mid) {
        w = (hi - freq) / (hi - mid);
      }
      bank.weights_[f * n_bins + bin] = w;
      sum += w;
    }
    if (sum <= 0.0) {
      throw std::invalid_argument("mel filter " + std::to_string(f) +
                                  " covers no DFT bin; increase n_bins or widen the band");
    }
  }
  return bank;
}

std::vector<double> mel_energies(std::span<const double> spectrum, const MelFilterbank& bank) {
  require(spectrum.size() == bank.n_bins(),
          "spectrum length " + std::to_string(spectrum.size()) + " does not match bank bins " +
              std::to_string(bank.n_bins()));
  std::vector<double> out(bank.n_filters());
  for (std::size_t f = 0; f < bank.n_filters(); ++f) {
    double acc = 0.0;
    for (std::size_t bin = 0; bin < bank.n_bins(); ++bin) {
      acc += bank.weight(f, bin) * spectrum[bin];
    }
    out[f] = std::log(std::max(acc, kEnergyFloor));
  }
  return out;
}

MelFeatures compute_mel_features(const AudioSignal& signal, const FrameSpec& spec,
                                 const MelFilterbank& bank) {
  require(spec.hop > 0 && spec.hop <= spec.frame_len, "need 0 < hop <= frame_len");
  require(signal.samples.size() >= spec.frame_len,
          "signal of " + std::to_string(signal.samples.size()) +
              " samples is shorter than one frame of " + std::to_string(spec.frame_len));

  const std::size_t n_frames = 1 + (signal.samples.size() - spec.frame_len) / spec.hop;
  const std::vector<double> window = frame_window(spec);

  MelFeatures features;
  features.n_filters = bank.n_filters();
  features.values.reserve(n_frames * bank.n_filters());
  std::vector<double> frame(spec.frame_len);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t start = f * spec.hop;
    for (std::size_t i = 0; i < spec.frame_len; ++i) {
      frame[i] = signal.samples[start + i] * window[i];
    }
    const std::vector<double> energies = mel_energies(dft_energy(frame), bank);
    features.values.insert(features.values.end(), energies.begin(), energies.end());
  }
  return features;
}

AudioHead AudioHead::zeros(std::size_t n_filters) {
  return AudioHead{Tensor({2, n_filters}), Tensor({2}), 0.5};
}

AudioHead AudioHead::seeded(std::size_t n_filters, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(n_filters));
  return AudioHead{Tensor::uniform({2, n_filters}, bound, rng), Tensor({2}), 0.5};
}

Tensor mean_features(const MelFeatures& features) {
  require(features.frames() >= 1, "feature matrix is empty");
  Tensor mean({features.n_filters});
  for (std::size_t f = 0; f < features.frames(); ++f) {
    for (std::size_t j = 0; j < features.n_filters; ++j) {
      mean[j] += features.values[f * features.n_filters + j];
    }
  }
  for (std::size_t j = 0; j < features.n_filters; ++j) {
    mean[j] /= static_cast<double>(features.frames());
  }
  return mean;
}

AudioDetection audio_recognize(const AudioSignal& signal, const FrameSpec& spec,
                               const MelFilterbank& bank, const AudioHead& head) {
  const MelFeatures features = compute_mel_features(signal, spec, bank);
  const Tensor mean = mean_features(features);
  const Tensor logits = dense_forward(head.weights, head.bias, mean, Activation::Identity);
  ProbVector probs = softmax(logits);
  const bool detected = probs[0] >= head.threshold;
  return AudioDetection{std::move(probs), detected};
}

double head_train_step(AudioHead& head, const Tensor& features, std::size_t label,
                       const SgdConfig& cfg) {
  const Tensor logits = dense_forward(head.weights, head.bias, features, Activation::Identity);
  const double loss = softmax_cross_entropy(logits, label) +
                      cfg.l2_lambda * (l2_penalty(head.weights) + l2_penalty(head.bias));
  const Tensor dlogits = softmax_cross_entropy_grad(logits, label);
  const DenseGrads g =
      dense_backward(head.weights, head.bias, features, Activation::Identity, logits, dlogits);
  sgd_step({&head.weights, &head.bias}, {&g.weights, &g.bias}, cfg);
  return loss;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_u16(std::ofstream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

AudioSignal read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open WAV file " + path.string());
  unsigned char header[44];
  in.read(reinterpret_cast<char*>(header), 44);
  if (in.gcount() != 44) throw std::runtime_error("WAV file too short: " + path.string());

  if (std::memcmp(header, "RIFF", 4) != 0 || std::memcmp(header + 8, "WAVE", 4) != 0 ||
      std::memcmp(header + 12, "fmt ", 4) != 0 || std::memcmp(header + 36, "data", 4) != 0) {
    throw std::runtime_error("not a canonical-header WAV file: " + path.string());
  }
  if (get_u16(header + 20) != 1) throw std::runtime_error("WAV is not PCM: " + path.string());
  if (get_u16(header + 22) != 1) throw std::runtime_error("WAV is not mono: " + path.string());
  if (get_u16(header + 34) != 16) throw std::runtime_error("WAV is not 16-bit: " + path.string());

  const std::uint32_t sample_rate = get_u32(header + 24);
  const std::uint32_t data_bytes = get_u32(header + 40);
  std::vector<char> raw(data_bytes);
  in.read(raw.data(), static_cast<std::streamsize>(data_bytes));
  if (in.gcount() != static_cast<std::streamsize>(data_bytes)) {
    throw std::runtime_error("WAV data truncated: " + path.string());
  }

  AudioSignal signal;
  signal.sample_rate = static_cast<double>(sample_rate);
  signal.samples.resize(data_bytes / 2);
  for (std::size_t i = 0; i < signal.samples.size(); ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data()) + 2 * i;
    const auto v = static_cast<std::int16_t>(get_u16(p));
    signal.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return signal;
}

void write_wav(const std::filesystem::path& path, const AudioSignal& signal) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write WAV file " + path.string());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate));

  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, rate);
  put_u32(out, rate * 2);  // byte rate
  put_u16(out, 2);         // block align
  put_u16(out, 16);        // bits per sample
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : signal.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  if (!out) throw std::runtime_error("failed writing WAV file " + path.string());
}

AudioSignal read_audio_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open audio JSON " + path.string());
  nlohmann::json j;
  in >> j;
  AudioSignal signal;
  signal.sample_rate = j.at("sample_rate").get<double>();
  signal.samples = j.at("samples").get<std::vector<double>>();
  require(signal.sample_rate > 0.0, "sample_rate must be positive");
  return signal;
}

void write_audio_json(const std::filesystem::path& path, const AudioSignal& signal) {
  nlohmann::json j;
  j["sample_rate"] = signal.sample_rate;
  j["samples"] = signal.samples;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write audio JSON " + path.string());
  out << j.dump();
}

void write_features_csv(const std::filesystem::path& path, const MelFeatures& features) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write features CSV " + path.string());
  for (std::size_t f = 0; f < features.frames(); ++f) {
    for (std::size_t j = 0; j < features.n_filters; ++j) {
      if (j > 0) out << ',';
      out << fmt_double(features.values[f * features.n_filters + j]);
    }
    out << '\n';
  }
}

}  // namespace mmfusion::audio
