#pragma once

#include <complex>
#include <vector>

namespace mcf::dsp {

// Linear-interpolation resampling; output length = round(len * fs_out/fs_in).
std::vector<double> resample(const std::vector<double>& audio, double fs_in, double fs_out);

// Crops longer inputs and tiles shorter ones to exactly round(fs * seconds).
std::vector<double> fill_to_duration(const std::vector<double>& audio, double fs, double seconds);

// Per-clip zero-mean unit-variance scaling applied ahead of the spectrogram.
std::vector<double> normalize_clip(const std::vector<double>& audio);

// In-place radix-2 Cooley-Tukey; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a);

struct MelParams {
  double fs = 16000.0;
  int n_fft = 512;   // frame length and transform size; must be a power of two
  int hop = 160;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // <= 0 means fs/2
  double log_floor = 1e-10;
};

struct LogMelSpectrogram {
  int n_mels = 0;
  int n_frames = 0;
  std::vector<double> data;  // row-major [n_mels, n_frames]
  MelParams params;

  double at(int mel, int frame) const { return data[static_cast<size_t>(mel) * n_frames + frame]; }
};

// Hann-windowed power STFT through an HTK-scale triangular mel filterbank,
// then log(max(v, floor)). Frames = 1 + (len - n_fft)/hop, no padding.
LogMelSpectrogram log_mel(const std::vector<double>& audio, const MelParams& params);

// Peak frequency of each triangular band; useful for calibration checks.
std::vector<double> mel_band_centers_hz(const MelParams& params);

}  // namespace mcf::dsp
