#pragma once

#include <span>

#include "srw/expected.hpp"
#include "srw/model.hpp"

namespace srw::sim {

/// Frequency of the strongest spectral peak (DC excluded), refined by
/// parabolic interpolation over the neighbouring bins.
Expected<double> dominant_frequency_hz(std::span<const double> samples, double sample_rate_hz);

/// Decodes a WAV clip (PCM16, first channel) and analyses it.
Expected<double> dominant_frequency_hz(const AudioClip& clip);

}  // namespace srw::sim
