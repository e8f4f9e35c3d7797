#pragma once

// Audio ingestion: WAV files (PCM16 mono only), PhysioNet-2022-style patient
// headers, native manifest CSVs, and patient-wise stratified splits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcgnet/common.hpp"

namespace pcgnet {

enum class Site { AV, MV, PV, TV, UNKNOWN };
enum class Label { POSITIVE, NEGATIVE };
enum class Quality { SATISFACTORY, UNSATISFACTORY, UNRATED };

inline const char* to_string(Site s) {
  switch (s) {
    case Site::AV: return "AV";
    case Site::MV: return "MV";
    case Site::PV: return "PV";
    case Site::TV: return "TV";
    default: return "UNKNOWN";
  }
}

inline const char* to_string(Label l) { return l == Label::POSITIVE ? "positive" : "negative"; }

inline const char* to_string(Quality q) {
  switch (q) {
    case Quality::SATISFACTORY: return "satisfactory";
    case Quality::UNSATISFACTORY: return "unsatisfactory";
    default: return "unrated";
  }
}

inline std::optional<Site> site_from_string(const std::string& s) {
  if (s == "AV") return Site::AV;
  if (s == "MV") return Site::MV;
  if (s == "PV") return Site::PV;
  if (s == "TV") return Site::TV;
  if (s == "UNKNOWN") return Site::UNKNOWN;
  return std::nullopt;
}

inline std::optional<Label> label_from_string(const std::string& s) {
  if (s == "positive") return Label::POSITIVE;
  if (s == "negative") return Label::NEGATIVE;
  return std::nullopt;
}

inline std::optional<Quality> quality_from_string(const std::string& s) {
  if (s == "satisfactory") return Quality::SATISFACTORY;
  if (s == "unsatisfactory") return Quality::UNSATISFACTORY;
  if (s == "unrated") return Quality::UNRATED;
  return std::nullopt;
}

// One auscultation-site signal. `samples` may be empty until loaded from
// `path`; after loading it is non-empty and scaled to [-1, 1].
struct Recording {
  std::string patient_id;
  Site site = Site::UNKNOWN;
  int sample_rate_hz = 0;
  std::vector<double> samples;
  Quality quality = Quality::UNRATED;
  std::string path;  // empty for purely in-memory recordings
};

struct PatientRecord {
  std::string patient_id;
  Label label = Label::NEGATIVE;
  std::vector<Recording> recordings;
  std::map<std::string, std::string> demographics;
};

enum class DatasetSource { BANGLADESH, PHYSIONET2022, PHYSIONET2016, SYNTHETIC };

struct DatasetManifest {
  std::vector<PatientRecord> entries;
  DatasetSource source = DatasetSource::SYNTHETIC;
  std::string base_dir;  // relative recording paths resolve against this

  std::size_t recording_count() const {
    std::size_t n = 0;
    for (const auto& p : entries) n += p.recordings.size();
    return n;
  }
};

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

// --- WAV ------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return std::uint16_t(p[0] | p[1] << 8);
}

}  // namespace detail

// Reads a RIFF/WAVE file. Only PCM signed 16-bit mono is accepted; samples
// are scaled by 1/32768. Site and patient are left for the caller to fill.
inline Recording read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TruncatedFile("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw TruncatedFile("wav file too short: " + path);
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw NotWav("not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data_ptr = nullptr;
  std::uint32_t data_len = 0;
  bool have_data = false;

  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + off;
    std::uint32_t chunk_len = detail::read_u32le(hdr + 4);
    std::size_t body = off + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (body + 16 > bytes.size()) throw TruncatedFile("truncated fmt chunk: " + path);
      format = detail::read_u16le(bytes.data() + body);
      channels = detail::read_u16le(bytes.data() + body + 2);
      rate = detail::read_u32le(bytes.data() + body + 4);
      bits = detail::read_u16le(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (body + chunk_len > bytes.size()) throw TruncatedFile("truncated data chunk: " + path);
      data_ptr = bytes.data() + body;
      data_len = chunk_len;
      have_data = true;
    }
    off = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || !have_data) throw TruncatedFile("missing fmt or data chunk: " + path);
  if (format != 1 || bits != 16) throw UnsupportedEncoding("only PCM16 wav is supported: " + path);
  if (channels != 1) throw UnsupportedEncoding("only mono wav is supported: " + path);
  if (rate == 0) throw UnsupportedEncoding("zero sample rate: " + path);
  if (data_len < 2) throw TruncatedFile("empty data chunk: " + path);

  Recording rec;
  rec.sample_rate_hz = static_cast<int>(rate);
  rec.path = path;
  std::size_t n = data_len / 2;
  rec.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int16_t v = static_cast<std::int16_t>(detail::read_u16le(data_ptr + 2 * i));
    rec.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return rec;
}

// Writes samples as PCM16 mono, rounding and clamping to the int16 range.
inline void write_wav(const std::string& path, const std::vector<double>& samples,
                      int sample_rate_hz) {
  if (samples.empty()) throw EmptySignal("refusing to write empty wav: " + path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path);

  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
  };

  std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  f.write("RIFF", 4);
  put_u32(36 + data_len);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(sample_rate_hz));
  put_u32(static_cast<std::uint32_t>(sample_rate_hz) * 2);
  put_u16(2);
  put_u16(16);
  f.write("data", 4);
  put_u32(data_len);
  for (double x : samples) {
    double scaled = std::round(x * 32768.0);
    scaled = std::min(32767.0, std::max(-32768.0, scaled));
    put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  if (!f) throw Error("write failed: " + path);
}

// Fills rec.samples from rec.path if not already loaded.
inline void load_samples(Recording& rec, const std::string& base_dir = "") {
  if (!rec.samples.empty()) return;
  if (rec.path.empty()) throw MissingAudio("recording has neither samples nor a path");
  std::filesystem::path p(rec.path);
  if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
  Recording loaded = read_wav(p.string());
  rec.samples = std::move(loaded.samples);
  rec.sample_rate_hz = loaded.sample_rate_hz;
}

// --- PhysioNet 2022 patient headers ----------------------------------------

// Maps a wav filename to a full path, or returns empty if the file is absent.
using AudioResolver = std::function<std::string(const std::string&)>;

inline AudioResolver directory_resolver(const std::string& dir) {
  return [dir](const std::string& name) -> std::string {
    std::filesystem::path p = std::filesystem::path(dir) / name;
    return std::filesystem::exists(p) ? p.string() : std::string();
  };
}

namespace detail {

inline std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline std::string strip_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

}  // namespace detail

// Parses one patient header of the form
//   <patient_id> <num_locations> <fs>
//   <location> ... <file>.wav ...
//   ...
//   #Murmur: Present|Absent|Unknown
// Patients labelled Unknown are rejected with UnknownLabel so callers can
// skip them.
inline PatientRecord parse_physionet_patient(const std::string& header_text,
                                             const AudioResolver& resolve) {
  std::istringstream in(header_text);
  std::string line;
  if (!std::getline(in, line)) throw MalformedHeader("empty patient header");
  auto head = detail::tokenize(detail::strip_cr(line));
  if (head.size() < 3) throw MalformedHeader("bad first line: " + line);
  PatientRecord patient;
  patient.patient_id = head[0];
  int num_locations = 0, fs = 0;
  try {
    num_locations = std::stoi(head[1]);
    fs = std::stoi(head[2]);
  } catch (const std::exception&) {
    throw MalformedHeader("non-numeric counts in first line: " + line);
  }
  if (num_locations <= 0 || fs <= 0) throw MalformedHeader("bad counts in first line: " + line);

  std::vector<Recording> recordings;
  for (int i = 0; i < num_locations; ++i) {
    if (!std::getline(in, line)) throw MalformedHeader("fewer recording lines than declared");
    auto toks = detail::tokenize(detail::strip_cr(line));
    if (toks.empty()) throw MalformedHeader("blank recording line");
    std::string wav_name;
    for (const auto& t : toks) {
      if (t.size() > 4 && t.substr(t.size() - 4) == ".wav") {
        wav_name = t;
        break;
      }
    }
    if (wav_name.empty()) throw MalformedHeader("no wav file named on line: " + line);
    Recording rec;
    rec.patient_id = patient.patient_id;
    rec.site = site_from_string(toks[0]).value_or(Site::UNKNOWN);
    rec.sample_rate_hz = fs;
    rec.quality = Quality::UNRATED;
    rec.path = resolve(wav_name);
    if (rec.path.empty()) throw MissingAudio("audio file not found: " + wav_name);
    recordings.push_back(std::move(rec));
  }

  std::optional<Label> label;
  while (std::getline(in, line)) {
    line = detail::strip_cr(line);
    const std::string key = "#Murmur:";
    if (line.rfind(key, 0) == 0) {
      std::string value = line.substr(key.size());
      value.erase(0, value.find_first_not_of(" \t"));
      if (value == "Present") label = Label::POSITIVE;
      else if (value == "Absent") label = Label::NEGATIVE;
      else if (value == "Unknown") throw UnknownLabel("patient " + patient.patient_id + " has unknown murmur label");
      else throw MalformedHeader("unrecognized murmur value: " + value);
    } else if (line.rfind("#Age:", 0) == 0 || line.rfind("#Sex:", 0) == 0 ||
               line.rfind("#Height:", 0) == 0 || line.rfind("#Weight:", 0) == 0) {
      auto colon = line.find(':');
      std::string key_name = line.substr(1, colon - 1);
      std::string value = line.substr(colon + 1);
      value.erase(0, value.find_first_not_of(" \t"));
      patient.demographics[key_name] = value;
    }
  }
  if (!label) throw MalformedHeader("no #Murmur: line for patient " + patient.patient_id);
  patient.label = *label;
  patient.recordings = std::move(recordings);
  return patient;
}

// --- Native manifest CSV ----------------------------------------------------

inline constexpr const char* kManifestHeader = "patient_id,site,label,quality,path";

inline void write_manifest(const DatasetManifest& manifest, const std::string& csv_path) {
  std::ofstream f(csv_path);
  if (!f) throw Error("cannot open for writing: " + csv_path);
  f << kManifestHeader << "\n";
  for (const auto& patient : manifest.entries)
    for (const auto& rec : patient.recordings)
      f << patient.patient_id << ',' << to_string(rec.site) << ',' << to_string(patient.label)
        << ',' << to_string(rec.quality) << ',' << rec.path << "\n";
  if (!f) throw Error("write failed: " + csv_path);
}

inline DatasetManifest read_manifest(const std::string& csv_path,
                                     DatasetSource source = DatasetSource::SYNTHETIC) {
  std::ifstream f(csv_path);
  if (!f) throw Error("cannot open manifest: " + csv_path);
  std::string line;
  if (!std::getline(f, line) || detail::strip_cr(line) != kManifestHeader)
    throw MalformedHeader("manifest must start with header '" + std::string(kManifestHeader) + "'");

  DatasetManifest manifest;
  manifest.source = source;
  manifest.base_dir = std::filesystem::path(csv_path).parent_path().string();
  std::map<std::string, std::size_t> index;  // patient_id -> entries slot

  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 5)
      throw MalformedHeader("manifest line " + std::to_string(line_no) + " has " +
                            std::to_string(cols.size()) + " columns, want 5");
    auto site = site_from_string(cols[1]);
    auto label = label_from_string(cols[2]);
    auto quality = quality_from_string(cols[3]);
    if (!site || !label || !quality)
      throw MalformedHeader("bad enum value on manifest line " + std::to_string(line_no));

    Recording rec;
    rec.patient_id = cols[0];
    rec.site = *site;
    rec.quality = *quality;
    rec.path = cols[4];

    auto it = index.find(cols[0]);
    if (it == index.end()) {
      PatientRecord patient;
      patient.patient_id = cols[0];
      patient.label = *label;
      patient.recordings.push_back(std::move(rec));
      index[cols[0]] = manifest.entries.size();
      manifest.entries.push_back(std::move(patient));
    } else {
      PatientRecord& patient = manifest.entries[it->second];
      if (patient.label != *label)
        throw MalformedHeader("conflicting labels for patient " + cols[0]);
      patient.recordings.push_back(std::move(rec));
    }
  }
  return manifest;
}

// Loads audio for every recording in the manifest that is not yet in memory.
inline void load_all_samples(DatasetManifest& manifest) {
  for (auto& patient : manifest.entries)
    for (auto& rec : patient.recordings) load_samples(rec, manifest.base_dir);
}

// --- Patient-wise stratified split ------------------------------------------

namespace detail {

inline void validate_split_spec(const SplitSpec& spec) {
  double sum = spec.train_fraction + spec.val_fraction + spec.test_fraction;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigInvalid("split fractions must sum to 1, got " + std::to_string(sum));
  if (spec.train_fraction < 0 || spec.val_fraction < 0 || spec.test_fraction < 0)
    throw ConfigInvalid("split fractions must be non-negative");
}

}  // namespace detail

struct SplitResult {
  DatasetManifest train, val, test;
};

// Partitions patients into train/val/test. Patients are shuffled per class,
// then val and test take floor(n_class * fraction) patients each and train
// takes the remainder, so the class ratio of each subset stays within one
// patient of the whole.
inline SplitResult patient_split(const DatasetManifest& manifest, const SplitSpec& spec) {
  detail::validate_split_spec(spec);

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    by_class[manifest.entries[i].label == Label::POSITIVE ? 1 : 0].push_back(i);

  std::mt19937_64 rng(spec.seed);
  SplitResult out;
  for (auto* m : {&out.train, &out.val, &out.test}) {
    m->source = manifest.source;
    m->base_dir = manifest.base_dir;
  }

  // subset membership per patient index: 0 train, 1 val, 2 test
  std::vector<int> assignment(manifest.entries.size(), 0);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    std::size_t n = members.size();
    auto n_val = static_cast<std::size_t>(spec.val_fraction * static_cast<double>(n));
    auto n_test = static_cast<std::size_t>(spec.test_fraction * static_cast<double>(n));
    if (n_val + n_test > n) throw InsufficientPatients("class too small for requested fractions");
    for (std::size_t i = 0; i < n; ++i)
      assignment[members[i]] = i < n_val ? 1 : (i < n_val + n_test ? 2 : 0);

    std::size_t n_train = n - n_val - n_test;
    if ((spec.train_fraction > 0 && n_train == 0) || (spec.val_fraction > 0 && n_val == 0) ||
        (spec.test_fraction > 0 && n_test == 0))
      throw InsufficientPatients("a nonempty subset would receive zero patients of a class");
  }

  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    DatasetManifest& dst = assignment[i] == 0 ? out.train : (assignment[i] == 1 ? out.val : out.test);
    dst.entries.push_back(manifest.entries[i]);
  }
  return out;
}

}  // namespace pcgnet
