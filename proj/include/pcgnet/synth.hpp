#pragma once

// Deterministic synthetic phonocardiogram generator. Not a physiological
// simulator: it exists so the training/evaluation pipeline has a desk-scale
// dataset with known ground truth (murmur presence, timing, site quality).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pcgnet/common.hpp"
#include "pcgnet/signal_io.hpp"

namespace pcgnet::synth {

enum class Murmur { NONE, SYSTOLIC, DIASTOLIC };

struct SynthSpec {
  double heart_rate_bpm = 72.0;
  Murmur murmur = Murmur::NONE;
  double murmur_band_low_hz = 150.0;
  double murmur_band_high_hz = 400.0;
  double snr_db = 20.0;
  double duration_s = 5.0;
  int fs_hz = 4000;
  std::uint64_t seed = 0;
  // Burst center frequencies; defaults sit well inside the 800 Hz Nyquist
  // budget of the downstream decimation.
  double s1_hz = 60.0;
  double s2_hz = 90.0;

  void validate() const {
    if (!(heart_rate_bpm >= 30.0 && heart_rate_bpm <= 220.0))
      throw InvalidSpec("heart rate must lie in [30, 220] bpm");
    if (fs_hz <= 0) throw InvalidSpec("sample rate must be positive");
    if (!(murmur_band_low_hz > 0.0 && murmur_band_low_hz < murmur_band_high_hz &&
          murmur_band_high_hz < fs_hz / 2.0))
      throw InvalidSpec("murmur band must satisfy 0 < low < high < fs/2");
    if (!(duration_s > 0.0)) throw InvalidSpec("duration must be positive");
    if (!(s1_hz > 0.0 && s1_hz < fs_hz / 2.0 && s2_hz > 0.0 && s2_hz < fs_hz / 2.0))
      throw InvalidSpec("burst frequencies must lie in (0, fs/2)");
  }
};

namespace detail_synth {

constexpr double kS1Amp = 1.0;
constexpr double kS2Amp = 0.7;
constexpr double kBurstAttackS = 0.010;  // linear onset
constexpr double kBurstDecayS = 0.070;   // exponential tail
constexpr double kBurstTau = 0.015;
constexpr double kMurmurRms = 0.35;
constexpr double kPhaseMargin = 0.08;  // murmur keeps this fraction of a beat clear of S1/S2 centers
constexpr int kMurmurTones = 60;
constexpr double kPeakTarget = 0.9;

inline void add_burst(std::vector<double>& x, int fs, double center_s, double freq_hz, double amp) {
  const int lo = std::max(0, static_cast<int>(std::ceil((center_s - kBurstAttackS) * fs)));
  const int hi = std::min(static_cast<int>(x.size()) - 1,
                          static_cast<int>(std::floor((center_s + kBurstDecayS) * fs)));
  for (int i = lo; i <= hi; ++i) {
    const double dt = i / static_cast<double>(fs) - center_s;
    const double env = dt < 0.0 ? (dt + kBurstAttackS) / kBurstAttackS : std::exp(-dt / kBurstTau);
    x[static_cast<std::size_t>(i)] += amp * env * std::sin(2.0 * std::numbers::pi * freq_hz * dt);
  }
}

// Raised-cosine gate over [a, b]: ramps over the outer quarter on each side.
inline double gate(double t, double a, double b) {
  if (t <= a || t >= b) return 0.0;
  const double ramp = 0.25 * (b - a);
  if (t < a + ramp) return 0.5 * (1.0 - std::cos(std::numbers::pi * (t - a) / ramp));
  if (t > b - ramp) return 0.5 * (1.0 - std::cos(std::numbers::pi * (b - t) / ramp));
  return 1.0;
}

inline double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace detail_synth

// Beat grid: S1 at (k + 0.05)T, S2 at (k + 0.40)T. The murmur occupies the
// requested cardiac phase with a margin on both ends, so its energy stays
// strictly inside that phase.
inline Recording generate(const SynthSpec& spec) {
  spec.validate();
  namespace d = detail_synth;
  const int fs = spec.fs_hz;
  const std::size_t n = static_cast<std::size_t>(std::llround(spec.duration_s * fs));
  if (n == 0) throw InvalidSpec("duration too short for one sample");
  const double T = 60.0 / spec.heart_rate_bpm;

  std::vector<double> x(n, 0.0);
  std::vector<double> s1_centers, s2_centers;
  for (int k = 0;; ++k) {
    const double c1 = (k + 0.05) * T;
    if (c1 >= spec.duration_s) break;
    s1_centers.push_back(c1);
    const double c2 = (k + 0.40) * T;
    if (c2 < spec.duration_s) s2_centers.push_back(c2);
  }
  for (double c : s1_centers) d::add_burst(x, fs, c, spec.s1_hz, d::kS1Amp);
  for (double c : s2_centers) d::add_burst(x, fs, c, spec.s2_hz, d::kS2Amp);

  std::mt19937_64 rng(spec.seed);

  if (spec.murmur != Murmur::NONE) {
    std::uniform_real_distribution<double> freq_dist(spec.murmur_band_low_hz, spec.murmur_band_high_hz);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    std::vector<double> freqs(d::kMurmurTones), phases(d::kMurmurTones);
    for (int i = 0; i < d::kMurmurTones; ++i) {
      freqs[static_cast<std::size_t>(i)] = freq_dist(rng);
      phases[static_cast<std::size_t>(i)] = phase_dist(rng);
    }

    std::vector<double> murmur(n, 0.0);
    double energy = 0.0;
    std::size_t gated = 0;
    const double margin = d::kPhaseMargin * T;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = i / static_cast<double>(fs);
      const int k = static_cast<int>(std::floor(t / T));
      const double c1 = (k + 0.05) * T, c2 = (k + 0.40) * T;
      double g;
      if (spec.murmur == Murmur::SYSTOLIC) g = d::gate(t, c1 + margin, c2 - margin);
      else g = d::gate(t, c2 + margin, c1 + T - margin);
      if (g == 0.0) continue;
      double v = 0.0;
      for (int j = 0; j < d::kMurmurTones; ++j)
        v += std::sin(2.0 * std::numbers::pi * freqs[static_cast<std::size_t>(j)] * t +
                      phases[static_cast<std::size_t>(j)]);
      murmur[i] = g * v;
      energy += murmur[i] * murmur[i];
      ++gated;
    }
    if (gated > 0 && energy > 0.0) {
      const double scale = d::kMurmurRms / std::sqrt(energy / static_cast<double>(gated));
      for (std::size_t i = 0; i < n; ++i) x[i] += scale * murmur[i];
    }
  }

  // white noise scaled against the clean signal's RMS
  const double clean_rms = d::rms(x);
  if (clean_rms > 0.0) {
    const double noise_rms = clean_rms * std::pow(10.0, -spec.snr_db / 20.0);
    std::normal_distribution<double> noise(0.0, noise_rms);
    for (double& v : x) v += noise(rng);
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : x) v *= d::kPeakTarget / peak;

  Recording rec;
  rec.sample_rate_hz = fs;
  rec.samples = std::move(x);
  rec.quality = Quality::SATISFACTORY;
  return rec;
}

// --- cohorts --------------------------------------------------------------------

struct CohortSpec {
  int n_patients = 100;
  double positive_fraction = 0.63;
  std::vector<Site> sites{Site::AV, Site::MV, Site::PV, Site::TV};
  SynthSpec base;  // murmur field selects what positives receive (NONE -> SYSTOLIC)
  std::uint64_t seed = 1;
  std::string id_prefix = "synp";
  // Fixture knob for ablation/quality studies: re-render every other site of
  // each patient at a much worse SNR and flag it unsatisfactory. The corrupted
  // site set alternates by patient so every site is degraded in half the cohort.
  bool alternate_corruption = false;
  double corrupted_snr_db = -10.0;
};

inline DatasetManifest generate_cohort(const CohortSpec& cohort) {
  if (cohort.n_patients < 2) throw InvalidSpec("cohort needs at least two patients");
  if (!(cohort.positive_fraction > 0.0 && cohort.positive_fraction < 1.0))
    throw InvalidSpec("positive fraction must lie in (0, 1)");
  if (cohort.sites.empty()) throw InvalidSpec("cohort needs at least one site");
  cohort.base.validate();

  const int n_pos = static_cast<int>(std::llround(cohort.n_patients * cohort.positive_fraction));
  if (n_pos < 1 || n_pos >= cohort.n_patients)
    throw InvalidSpec("positive fraction leaves an empty class");

  std::mt19937_64 rng(cohort.seed);
  std::vector<int> is_positive(static_cast<std::size_t>(cohort.n_patients), 0);
  std::fill(is_positive.begin(), is_positive.begin() + n_pos, 1);
  std::shuffle(is_positive.begin(), is_positive.end(), rng);

  const Murmur positive_murmur =
      cohort.base.murmur == Murmur::NONE ? Murmur::SYSTOLIC : cohort.base.murmur;
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);

  DatasetManifest manifest;
  manifest.source = DatasetSource::SYNTHETIC;
  char idbuf[32];
  for (int p = 0; p < cohort.n_patients; ++p) {
    std::snprintf(idbuf, sizeof idbuf, "%s%04d", cohort.id_prefix.c_str(), p);
    PatientRecord patient;
    patient.patient_id = idbuf;
    patient.label = is_positive[static_cast<std::size_t>(p)] ? Label::POSITIVE : Label::NEGATIVE;

    const double hr = std::clamp(cohort.base.heart_rate_bpm * (1.0 + jitter(rng)), 30.0, 220.0);
    for (std::size_t s = 0; s < cohort.sites.size(); ++s) {
      SynthSpec spec = cohort.base;
      spec.heart_rate_bpm = hr;
      spec.murmur = patient.label == Label::POSITIVE ? positive_murmur : Murmur::NONE;
      spec.seed = detail::mix_seed(cohort.seed, static_cast<std::uint64_t>(p),
                                   static_cast<std::uint64_t>(s));
      const bool corrupt = cohort.alternate_corruption &&
                           (static_cast<std::size_t>(p) + s) % 2 == 0;
      if (corrupt) spec.snr_db = cohort.corrupted_snr_db;
      Recording rec = generate(spec);
      rec.patient_id = patient.patient_id;
      rec.site = cohort.sites[s];
      rec.quality = corrupt ? Quality::UNSATISFACTORY : Quality::SATISFACTORY;
      patient.recordings.push_back(std::move(rec));
    }
    manifest.entries.push_back(std::move(patient));
  }
  return manifest;
}

inline DatasetManifest generate_cohort(int n_patients, double positive_fraction,
                                       const std::vector<Site>& sites, const SynthSpec& base,
                                       std::uint64_t seed) {
  CohortSpec cohort;
  cohort.n_patients = n_patients;
  cohort.positive_fraction = positive_fraction;
  cohort.sites = sites;
  cohort.base = base;
  cohort.seed = seed;
  return generate_cohort(cohort);
}

// Writes one WAV per recording plus the manifest CSV; returns the manifest path.
inline std::string write_cohort(DatasetManifest& manifest, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  for (auto& patient : manifest.entries)
    for (auto& rec : patient.recordings) {
      rec.path = patient.patient_id + "_" + to_string(rec.site) + ".wav";
      write_wav((fs::path(out_dir) / rec.path).string(), rec.samples, rec.sample_rate_hz);
    }
  manifest.base_dir = out_dir;
  const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  write_manifest(manifest, manifest_path);
  return manifest_path;
}

}  // namespace pcgnet::synth
