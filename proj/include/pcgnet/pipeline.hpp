#pragma once

// Glue between ingestion, preprocessing, training, and evaluation: turns a
// manifest into fixed-length, per-recording training examples (sample-wise
// labels inherited from the patient) and scores cohorts patient-by-patient.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pcgnet/common.hpp"
#include "pcgnet/dsp.hpp"
#include "pcgnet/evaluate.hpp"
#include "pcgnet/model.hpp"
#include "pcgnet/signal_io.hpp"
#include "pcgnet/train.hpp"

namespace pcgnet::pipeline {

// One network-ready recording. The label is the patient's label: labeling is
// patient-wise in the source data and converted to sample-wise here.
struct Example {
  std::string patient_id;
  Site site = Site::UNKNOWN;
  Quality quality = Quality::UNRATED;
  int label = 0;
  std::vector<double> data;  // length fixed by PreprocessOptions
};

// Preprocesses every recording of every listed patient. Output order is the
// manifest order regardless of thread count; threads only split the work.
inline std::vector<Example> preprocess_patients(const std::vector<PatientRecord>& patients,
                                                const std::string& base_dir,
                                                const PreprocessOptions& opts, int threads = 1) {
  struct Slot {
    const PatientRecord* patient;
    const Recording* rec;
  };
  std::vector<Slot> slots;
  for (const auto& p : patients)
    for (const auto& r : p.recordings) slots.push_back({&p, &r});

  std::vector<Example> out(slots.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= slots.size() || failed.load()) break;
      try {
        Recording rec = *slots[i].rec;
        if (rec.samples.empty()) load_samples(rec, base_dir);
        Example& ex = out[i];
        ex.patient_id = slots[i].patient->patient_id;
        ex.site = rec.site;
        ex.quality = rec.quality;
        ex.label = slots[i].patient->label == Label::POSITIVE ? 1 : 0;
        ex.data = preprocess(rec, opts);
      } catch (...) {
        bool expected = false;
        if (failed.compare_exchange_strong(expected, true)) {
          std::lock_guard<std::mutex> lock(error_mutex);
          try {
            throw;
          } catch (const std::exception& e) {
            error_message = e.what();
          }
        }
        break;
      }
    }
  };

  const int n_threads = std::max(1, threads);
  if (n_threads == 1 || slots.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw Error("preprocessing failed: " + error_message);
  return out;
}

inline std::vector<Example> preprocess_manifest(const DatasetManifest& manifest,
                                                const PreprocessOptions& opts, int threads = 1) {
  return preprocess_patients(manifest.entries, manifest.base_dir, opts, threads);
}

inline train::TrainSet to_train_set(const std::vector<Example>& examples,
                                    const PreprocessOptions& opts) {
  if (examples.empty()) throw EmptyDataset("no examples to assemble");
  train::TrainSet set;
  set.channels = 1;
  set.length = static_cast<int>(opts.target_length());
  for (const auto& ex : examples) {
    if (static_cast<int>(ex.data.size()) != set.length)
      throw LengthMismatch("example length does not match preprocessing target");
    set.inputs.push_back(ex.data);
    set.labels.push_back(ex.label);
  }
  return set;
}

// Runs the network in EVAL mode over all examples and returns one positive-class
// probability per recording site.
inline std::vector<eval::SiteScore> score_examples(model::Network& net,
                                                   const std::vector<Example>& examples,
                                                   int batch_size = 32) {
  if (examples.empty()) throw EmptyDataset("no examples to score");
  if (batch_size < 1) throw ConfigInvalid("batch size must be >= 1");
  const int L = static_cast<int>(examples[0].data.size());
  std::vector<eval::SiteScore> scores;
  scores.reserve(examples.size());
  for (std::size_t lo = 0; lo < examples.size(); lo += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(examples.size(), lo + static_cast<std::size_t>(batch_size));
    const int B = static_cast<int>(hi - lo);
    auto x = ad::make_tensor({B, 1, L});
    for (int b = 0; b < B; ++b) {
      const auto& ex = examples[lo + static_cast<std::size_t>(b)];
      if (static_cast<int>(ex.data.size()) != L) throw LengthMismatch("ragged example lengths");
      std::copy(ex.data.begin(), ex.data.end(),
                x->data.begin() + static_cast<std::size_t>(b) * L);
    }
    ad::TensorPtr probs = model::forward(nullptr, net, x, ad::Mode::EVAL);
    const int K = probs->shape[1];
    for (int b = 0; b < B; ++b) {
      const auto& ex = examples[lo + static_cast<std::size_t>(b)];
      eval::SiteScore s;
      s.patient_id = ex.patient_id;
      s.site = ex.site;
      s.quality = ex.quality;
      s.label = ex.label;
      s.score = probs->data[static_cast<std::size_t>(b) * K + (K - 1)];
      scores.push_back(std::move(s));
    }
  }
  return scores;
}

}  // namespace pcgnet::pipeline
