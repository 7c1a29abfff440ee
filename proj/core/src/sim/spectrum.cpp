#include "srw/sim/spectrum.hpp"

#include <cmath>
#include <complex>
#include <memory>

#include <fftw3.h>

#include "srw/audio.hpp"

namespace srw::sim {

Expected<double> dominant_frequency_hz(std::span<const double> samples, double sample_rate_hz) {
  const std::size_t n = samples.size();
  if (n < 4) return make_error("bad_audio", "too few samples for a spectrum");
  if (!(sample_rate_hz > 0)) return make_error("bad_audio", "sample rate must be positive");

  std::vector<double> in(samples.begin(), samples.end());
  // Hann window against leakage from the clip edges.
  for (std::size_t i = 0; i < n; ++i) {
    in[i] *= 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  const std::size_t bins = n / 2 + 1;
  std::vector<std::complex<double>> out(bins);
  const auto plan = std::unique_ptr<fftw_plan_s, decltype(&fftw_destroy_plan)>(
      fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                           FFTW_ESTIMATE),
      &fftw_destroy_plan);
  fftw_execute(plan.get());

  std::size_t peak = 1;
  for (std::size_t k = 2; k < bins; ++k) {
    if (std::abs(out[k]) > std::abs(out[peak])) peak = k;
  }
  double offset = 0.0;
  if (peak + 1 < bins) {
    const double a = std::log(std::abs(out[peak - 1]) + 1e-12);
    const double b = std::log(std::abs(out[peak]) + 1e-12);
    const double c = std::log(std::abs(out[peak + 1]) + 1e-12);
    const double denom = a - 2 * b + c;
    if (denom != 0) offset = 0.5 * (a - c) / denom;
  }
  return (static_cast<double>(peak) + offset) * sample_rate_hz / static_cast<double>(n);
}

Expected<double> dominant_frequency_hz(const AudioClip& clip) {
  auto bytes = decode_audio_clip(clip);
  if (!bytes) return bytes.error();
  auto wav = parse_wav(*bytes);
  if (!wav) return wav.error();
  if (wav->format_tag != 1 || wav->bits_per_sample != 16) return make_error("bad_audio", "expected PCM16");
  const auto pcm = pcm16_mono(*wav);
  std::vector<double> samples(pcm.begin(), pcm.end());
  return dominant_frequency_hz(samples, wav->sample_rate_hz);
}

}  // namespace srw::sim
