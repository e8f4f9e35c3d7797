#pragma once

// Preprocessing chain: anti-aliased decimation, z-score normalization, and
// fixed-length standardization. Applied in that order so padded tails are
// exactly zero.

#include <cmath>
#include <numbers>
#include <vector>

#include "pcgnet/common.hpp"
#include "pcgnet/signal_io.hpp"

namespace pcgnet {

enum class WindowKind { HAMMING };

struct FilterSpec {
  double cutoff_hz = 360.0;
  int num_taps = 101;  // odd, so group delay is an integer sample count
  WindowKind window = WindowKind::HAMMING;
};

// Windowed-sinc FIR low-pass, normalized to unity DC gain.
inline std::vector<double> design_lowpass(const FilterSpec& spec, double fs_hz) {
  if (!(spec.cutoff_hz > 0.0) || spec.cutoff_hz >= fs_hz / 2.0)
    throw InvalidCutoff("cutoff must lie in (0, fs/2)");
  if (spec.num_taps <= 0 || spec.num_taps % 2 == 0)
    throw InvalidCutoff("num_taps must be odd and positive");

  const int n = spec.num_taps;
  const int mid = (n - 1) / 2;
  const double fc = spec.cutoff_hz / fs_hz;  // cycles per sample
  std::vector<double> h(n);
  for (int i = 0; i < n; ++i) {
    int m = i - mid;
    double sinc = m == 0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
    h[i] = sinc * w;
  }
  double sum = 0.0;
  for (double v : h) sum += v;
  for (double& v : h) v /= sum;
  return h;
}

namespace detail {

// FIR filtering with zero extension beyond the signal ends, delayed so the
// output is time-aligned with the input (taps must be odd).
inline std::vector<double> fir_aligned(const std::vector<double>& x, const std::vector<double>& h) {
  const int n = static_cast<int>(x.size());
  const int taps = static_cast<int>(h.size());
  const int delay = (taps - 1) / 2;
  std::vector<double> y(n, 0.0);
  for (int t = 0; t < n; ++t) {
    double acc = 0.0;
    // y[t] = sum_k h[k] * x[t + delay - k]
    int k_lo = std::max(0, t + delay - (n - 1));
    int k_hi = std::min(taps - 1, t + delay);
    const double* xs = x.data() + t + delay;
    for (int k = k_lo; k <= k_hi; ++k) acc += h[k] * xs[-k];
    y[t] = acc;
  }
  return y;
}

}  // namespace detail

// Integer-factor decimation with an anti-aliasing low-pass at 0.45 times the
// target rate. Output length is ceil(len / factor).
inline Recording decimate(const Recording& rec, int target_hz,
                          int num_taps = 101) {
  if (target_hz <= 0 || rec.sample_rate_hz <= 0 || rec.sample_rate_hz % target_hz != 0)
    throw NonIntegerFactor("sample rate " + std::to_string(rec.sample_rate_hz) +
                           " not an integer multiple of " + std::to_string(target_hz));
  const int factor = rec.sample_rate_hz / target_hz;
  Recording out = rec;
  out.sample_rate_hz = target_hz;
  if (factor == 1) return out;

  FilterSpec spec;
  spec.cutoff_hz = 0.45 * target_hz;
  spec.num_taps = num_taps;
  std::vector<double> h = design_lowpass(spec, rec.sample_rate_hz);
  std::vector<double> filtered = detail::fir_aligned(rec.samples, h);

  std::size_t out_len = (rec.samples.size() + factor - 1) / factor;
  out.samples.resize(out_len);
  for (std::size_t j = 0; j < out_len; ++j) out.samples[j] = filtered[j * factor];
  return out;
}

// Z-score with the population standard deviation. Constant signals map to
// all zeros instead of dividing by zero.
inline std::vector<double> zscore(const std::vector<double>& samples) {
  if (samples.size() < 2) throw EmptySignal("zscore needs at least 2 samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> out(samples.size());
  if (var < 1e-24) return out;
  const double inv_sd = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = (samples[i] - mean) * inv_sd;
  return out;
}

// Truncates from the front-aligned start or zero-pads at the end.
inline std::vector<double> fix_length(const std::vector<double>& samples, std::size_t target_len) {
  if (target_len == 0) throw EmptySignal("target length must be positive");
  std::vector<double> out(target_len, 0.0);
  std::size_t n = std::min(samples.size(), target_len);
  std::copy(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n), out.begin());
  return out;
}

struct PreprocessOptions {
  int target_rate_hz = 800;
  double target_seconds = 15.0;
  int filter_taps = 101;

  std::size_t target_length() const {
    return static_cast<std::size_t>(std::llround(target_seconds * target_rate_hz));
  }
};

// decimate -> zscore -> fix_length
inline std::vector<double> preprocess(const Recording& rec, const PreprocessOptions& opts) {
  Recording low = decimate(rec, opts.target_rate_hz, opts.filter_taps);
  return fix_length(zscore(low.samples), opts.target_length());
}

}  // namespace pcgnet
