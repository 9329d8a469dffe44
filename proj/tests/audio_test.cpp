#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "mmfusion/audio.hpp"
#include "mmfusion/rng.hpp"
#include "oracles.hpp"

using namespace mmfusion;
using namespace mmfusion::audio;

namespace {

std::filesystem::path temp_file(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / "mmfusion_audio_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

AudioSignal tone(double freq, double seconds, double amplitude, double sample_rate = 16000.0) {
  AudioSignal s;
  s.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq *
                                        static_cast<double>(i) / sample_rate);
  }
  return s;
}

}  // namespace

TEST_CASE("hz_to_mel landmarks") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.1728387480312).epsilon(1e-12));
  CHECK(hz_to_mel(1000.0) == doctest::Approx(999.9855371396244).epsilon(1e-12));
  CHECK(std::abs(hz_to_mel(1000.0) - 999.99) < 0.01);
  CHECK_THROWS_AS(hz_to_mel(-1.0), std::invalid_argument);
}

TEST_CASE("hz_to_mel is strictly monotone and inverts within 1e-6 Hz") {
  double prev = -1.0;
  for (int i = 0; i <= 800; ++i) {
    const double hz = 10.0 * i;
    const double mel = hz_to_mel(hz);
    CHECK(mel > prev);
    prev = mel;
    CHECK(std::abs(mel_to_hz(mel) - hz) <= 1e-6);
  }
}

TEST_CASE("dft_energy of a constant frame concentrates in bin zero") {
  const std::vector<double> x{1.0, 1.0, 1.0, 1.0};
  const std::vector<double> e = dft_energy(x);
  REQUIRE(e.size() == 4);
  CHECK(e[0] == doctest::Approx(16.0).epsilon(1e-12));
  for (std::size_t r = 1; r < 4; ++r) CHECK(std::abs(e[r]) < 1e-24);
}

TEST_CASE("dft_energy of silence is zero") {
  const std::vector<double> e = dft_energy(std::vector<double>(16, 0.0));
  for (double v : e) CHECK(v == 0.0);
}

TEST_CASE("dft_energy rejects an empty frame") {
  CHECK_THROWS_AS(dft_energy(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("dft_energy matches the direct complex-sum oracle for n in 1..64") {
  Rng rng(603);
  for (std::size_t n = 1; n <= 64; ++n) {
    std::vector<double> frame(n);
    for (double& v : frame) v = rng.uniform(-1.0, 1.0);
    const std::vector<double> got = dft_energy(frame);
    const std::vector<double> want = oracle::dft_energy_direct(frame);
    for (std::size_t r = 0; r < n; ++r) {
      CHECK(std::abs(got[r] - want[r]) <= 1e-9 * std::max(1.0, want[r]));
    }
  }
}

TEST_CASE("Parseval's identity holds on random frames") {
  Rng rng(607);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng.below(64);
    std::vector<double> frame(n);
    double sum_sq = 0.0;
    for (double& v : frame) {
      v = rng.uniform(-1.0, 1.0);
      sum_sq += v * v;
    }
    const std::vector<double> e = dft_energy(frame);
    double total = 0.0;
    for (double v : e) total += v;
    const double rhs = static_cast<double>(n) * sum_sq;
    CHECK(std::abs(total - rhs) <= 1e-9 * std::max(1.0, rhs));
  }
}

TEST_CASE("energy spectrum of a real frame is symmetric") {
  Rng rng(611);
  for (std::size_t n : {5, 8, 33, 64}) {
    std::vector<double> frame(n);
    for (double& v : frame) v = rng.uniform(-1.0, 1.0);
    const std::vector<double> e = dft_energy(frame);
    for (std::size_t r = 1; r < n; ++r) {
      CHECK(std::abs(e[r] - e[n - r]) <= 1e-9 * std::max(1.0, e[r]));
    }
  }
}

TEST_CASE("filterbank construction and shape contract") {
  const MelFilterbank bank = MelFilterbank::make(26, 0.0, 8000.0, 512, 16000.0);
  CHECK(bank.n_filters() == 26);
  const std::vector<double> out = mel_energies(std::vector<double>(512, 0.0), bank);
  REQUIRE(out.size() == 26);
  for (double v : out) CHECK(v == doctest::Approx(std::log(1e-10)).epsilon(1e-12));
}

TEST_CASE("mel_energies of a single-bin impulse is the weighted log energy") {
  const MelFilterbank bank = MelFilterbank::make(8, 0.0, 4000.0, 256, 8000.0);
  // Find a bin with positive weight under exactly one known filter.
  std::size_t filter = 3;
  std::size_t bin = 0;
  for (std::size_t b = 1; b < 128; ++b) {
    if (bank.weight(filter, b) > 0.2) {
      bin = b;
      break;
    }
  }
  REQUIRE(bin != 0);
  std::vector<double> spectrum(256, 0.0);
  spectrum[bin] = 3.5;
  const std::vector<double> out = mel_energies(spectrum, bank);
  CHECK(out[filter] ==
        doctest::Approx(std::log(bank.weight(filter, bin) * 3.5)).epsilon(1e-12));
}

TEST_CASE("mel_energies rejects mismatched spectrum length") {
  const MelFilterbank bank = MelFilterbank::make(8, 0.0, 4000.0, 256, 8000.0);
  CHECK_THROWS_AS(mel_energies(std::vector<double>(100, 0.0), bank), std::invalid_argument);
}

TEST_CASE("mel_energies is monotone in the spectrum") {
  const MelFilterbank bank = MelFilterbank::make(10, 50.0, 7000.0, 400, 16000.0);
  Rng rng(613);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> lo(400), hi(400);
    for (std::size_t i = 0; i < 400; ++i) {
      lo[i] = rng.uniform(0.0, 2.0);
      hi[i] = lo[i] + rng.uniform(0.0, 1.0);
    }
    const std::vector<double> out_lo = mel_energies(lo, bank);
    const std::vector<double> out_hi = mel_energies(hi, bank);
    for (std::size_t f = 0; f < 10; ++f) CHECK(out_hi[f] >= out_lo[f]);
  }
}

TEST_CASE("audio_recognize with a zero-weight head is uniform and detects at the boundary") {
  const MelFilterbank bank = MelFilterbank::make(26, 0.0, 8000.0, 400, 16000.0);
  const AudioSignal sig = tone(440.0, 0.2, 0.5);
  const AudioDetection det = audio_recognize(sig, FrameSpec{}, bank, AudioHead::zeros(26));
  CHECK(det.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(det.probs[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(det.detected);  // boundary rule: >= threshold
}

TEST_CASE("audio_recognize rejects a signal shorter than one frame") {
  const MelFilterbank bank = MelFilterbank::make(26, 0.0, 8000.0, 400, 16000.0);
  AudioSignal sig;
  sig.samples.assign(399, 0.0);
  CHECK_THROWS_AS(audio_recognize(sig, FrameSpec{}, bank, AudioHead::zeros(26)),
                  std::invalid_argument);
}

TEST_CASE("a seeded trained head separates a tone from noise deterministically") {
  const MelFilterbank bank = MelFilterbank::make(26, 0.0, 8000.0, 400, 16000.0);
  const FrameSpec spec;
  Rng rng(617);

  auto noise = [&](double amplitude) {
    AudioSignal s;
    s.sample_rate = 16000.0;
    s.samples.resize(3200);
    for (double& v : s.samples) v = rng.uniform(-amplitude, amplitude);
    return s;
  };

  AudioHead head = AudioHead::seeded(26, rng);
  const SgdConfig cfg{0.05, 1e-4, 0};
  for (int epoch = 0; epoch < 40; ++epoch) {
    Rng data_rng(100 + epoch);
    for (int i = 0; i < 4; ++i) {
      const double jitter = data_rng.uniform(-20.0, 20.0);
      const AudioSignal pos = tone(440.0 + jitter, 0.2, 0.5);
      head_train_step(head, mean_features(compute_mel_features(pos, spec, bank)), 0, cfg);
      AudioSignal neg;
      neg.sample_rate = 16000.0;
      neg.samples.resize(3200);
      for (double& v : neg.samples) v = data_rng.uniform(-0.1, 0.1);
      head_train_step(head, mean_features(compute_mel_features(neg, spec, bank)), 1, cfg);
    }
  }

  const AudioDetection on_tone = audio_recognize(tone(440.0, 0.2, 0.5), spec, bank, head);
  CHECK(on_tone.detected);
  CHECK(on_tone.probs[0] > 0.8);
  const AudioDetection on_noise = audio_recognize(noise(0.1), spec, bank, head);
  CHECK_FALSE(on_noise.detected);

  // Same seed, same pipeline: bit-identical probabilities.
  Rng rng2(617);
  AudioHead head2 = AudioHead::seeded(26, rng2);
  for (int epoch = 0; epoch < 40; ++epoch) {
    Rng data_rng(100 + epoch);
    for (int i = 0; i < 4; ++i) {
      const double jitter = data_rng.uniform(-20.0, 20.0);
      const AudioSignal pos = tone(440.0 + jitter, 0.2, 0.5);
      head_train_step(head2, mean_features(compute_mel_features(pos, spec, bank)), 0, cfg);
      AudioSignal neg;
      neg.sample_rate = 16000.0;
      neg.samples.resize(3200);
      for (double& v : neg.samples) v = data_rng.uniform(-0.1, 0.1);
      head_train_step(head2, mean_features(compute_mel_features(neg, spec, bank)), 1, cfg);
    }
  }
  const AudioDetection again = audio_recognize(tone(440.0, 0.2, 0.5), spec, bank, head2);
  CHECK(again.probs[0] == on_tone.probs[0]);
  CHECK(again.probs[1] == on_tone.probs[1]);
}

TEST_CASE("WAV round-trip preserves rate and samples to 16-bit precision") {
  const auto path = temp_file("roundtrip.wav");
  const AudioSignal original = tone(523.25, 0.05, 0.8);
  write_wav(path, original);
  const AudioSignal loaded = read_wav(path);
  CHECK(loaded.sample_rate == original.sample_rate);
  REQUIRE(loaded.samples.size() == original.samples.size());
  // Quantization rounds at 32767 and decodes at 32768: error < 1.5 LSB.
  for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
    CHECK(std::abs(loaded.samples[i] - original.samples[i]) <= 1.5 / 32768.0);
  }
}

TEST_CASE("audio json round-trip") {
  const auto path = temp_file("roundtrip.json");
  AudioSignal original;
  original.sample_rate = 8000.0;
  original.samples = {0.0, 0.25, -0.5, 1.0};
  write_audio_json(path, original);
  const AudioSignal loaded = read_audio_json(path);
  CHECK(loaded.sample_rate == 8000.0);
  CHECK(loaded.samples == original.samples);
}

TEST_CASE("features export one CSV row per frame") {
  const MelFilterbank bank = MelFilterbank::make(6, 0.0, 4000.0, 200, 8000.0);
  AudioSignal sig = tone(300.0, 0.1, 0.4, 8000.0);
  const FrameSpec spec{200, 100, WindowKind::Hann};
  const MelFeatures features = compute_mel_features(sig, spec, bank);
  const auto path = temp_file("features.csv");
  write_features_csv(path, features);

  std::ifstream in(path);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 5);
    ++rows;
  }
  CHECK(rows == features.frames());
}
