#pragma once

// Screening metrics: confusion-matrix statistics, ROC / precision-recall
// curves with trapezoidal AUROC, patient-level aggregation of per-recording
// probabilities, and the site / quality ablation slices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "pcgnet/common.hpp"
#include "pcgnet/signal_io.hpp"

namespace pcgnet::eval {

// --- thresholded counts ---------------------------------------------------------

struct Confusion {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  double accuracy() const { return total() ? static_cast<double>(tp + tn) / total() : 0.0; }
  // sensitivity == recall on the positive class
  double sensitivity() const { return (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0; }
  double specificity() const { return (tn + fp) ? static_cast<double>(tn) / (tn + fp) : 0.0; }
  double precision() const { return (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 1.0; }
  double f1() const {
    const double p = precision(), r = sensitivity();
    return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
};

// Scores >= threshold predict positive, so a 0.5 tie resolves to positive.
inline Confusion confusion(const std::vector<double>& scores, const std::vector<int>& labels,
                           double threshold = 0.5) {
  if (scores.size() != labels.size()) throw LengthMismatch("scores and labels must align");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool truth = labels[i] != 0;
    if (pred && truth) ++c.tp;
    else if (pred && !truth) ++c.fp;
    else if (!pred && !truth) ++c.tn;
    else ++c.fn;
  }
  return c;
}

// --- curves ---------------------------------------------------------------------

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;  // ROC: FPR, PR: recall
  double y = 0.0;  // ROC: TPR, PR: precision
};

namespace detail_eval {

struct RankedScores {
  // distinct score values, descending, with cumulative positive/negative counts
  std::vector<double> thresholds;
  std::vector<std::int64_t> cum_pos, cum_neg;
  std::int64_t total_pos = 0, total_neg = 0;
};

inline RankedScores rank(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw LengthMismatch("scores and labels must align");
  if (scores.empty()) throw EmptyDataset("no scores to rank");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RankedScores r;
  std::int64_t pos = 0, neg = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == s) {
      if (labels[order[j]] != 0) ++pos;
      else ++neg;
      ++j;
    }
    r.thresholds.push_back(s);
    r.cum_pos.push_back(pos);
    r.cum_neg.push_back(neg);
    i = j;
  }
  r.total_pos = pos;
  r.total_neg = neg;
  return r;
}

}  // namespace detail_eval

// Trapezoidal area under the ROC curve. Tied scores enter as one group, which
// makes the trapezoid rule equal to pairwise concordance with half-credit for
// ties. Requires both classes present.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  auto r = detail_eval::rank(scores, labels);
  if (r.total_pos == 0 || r.total_neg == 0)
    throw SingleClass("auroc needs both positive and negative examples");
  double area = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    const double tpr = static_cast<double>(r.cum_pos[i]) / r.total_pos;
    const double fpr = static_cast<double>(r.cum_neg[i]) / r.total_neg;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  return area;
}

// ROC points from (0,0) at threshold +inf down to (1,1), one per distinct score.
inline std::vector<CurvePoint> roc_curve(const std::vector<double>& scores,
                                         const std::vector<int>& labels) {
  auto r = detail_eval::rank(scores, labels);
  if (r.total_pos == 0 || r.total_neg == 0)
    throw SingleClass("roc curve needs both positive and negative examples");
  std::vector<CurvePoint> pts;
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (std::size_t i = 0; i < r.thresholds.size(); ++i)
    pts.push_back({r.thresholds[i], static_cast<double>(r.cum_neg[i]) / r.total_neg,
                   static_cast<double>(r.cum_pos[i]) / r.total_pos});
  return pts;
}

// Precision-recall points; precision at zero predicted positives is defined as 1.
inline std::vector<CurvePoint> pr_curve(const std::vector<double>& scores,
                                        const std::vector<int>& labels) {
  auto r = detail_eval::rank(scores, labels);
  if (r.total_pos == 0) throw SingleClass("pr curve needs positive examples");
  std::vector<CurvePoint> pts;
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    const std::int64_t predicted = r.cum_pos[i] + r.cum_neg[i];
    pts.push_back({r.thresholds[i], static_cast<double>(r.cum_pos[i]) / r.total_pos,
                   static_cast<double>(r.cum_pos[i]) / predicted});
  }
  return pts;
}

// --- patient-level aggregation ----------------------------------------------------

// One scored recording site.
struct SiteScore {
  std::string patient_id;
  Site site = Site::UNKNOWN;
  Quality quality = Quality::UNRATED;
  int label = 0;       // 1 = positive patient
  double score = 0.0;  // positive-class probability for this recording
};

struct PatientScore {
  std::string patient_id;
  int label = 0;
  double score = 0.0;  // mean of the patient's site scores
  int site_count = 0;
};

// Mean of each patient's per-site probabilities, order of first appearance.
inline std::vector<PatientScore> aggregate_patients(const std::vector<SiteScore>& sites) {
  if (sites.empty()) throw EmptyDataset("no site scores to aggregate");
  std::vector<PatientScore> out;
  std::map<std::string, std::size_t> index;
  for (const auto& s : sites) {
    auto [it, inserted] = index.emplace(s.patient_id, out.size());
    if (inserted) out.push_back({s.patient_id, s.label, 0.0, 0});
    PatientScore& p = out[it->second];
    if (p.label != s.label)
      throw UnknownLabel("conflicting labels for patient " + s.patient_id);
    p.score += s.score;
    ++p.site_count;
  }
  for (auto& p : out) p.score /= p.site_count;
  return out;
}

// --- cohort report -----------------------------------------------------------------

struct CohortReport {
  Confusion confusion;
  double auroc = std::numeric_limits<double>::quiet_NaN();  // NaN when one class absent
  std::int64_t n_patients = 0;
  std::int64_t n_recordings = 0;
};

inline CohortReport evaluate_cohort(const std::vector<SiteScore>& sites, double threshold = 0.5) {
  auto patients = aggregate_patients(sites);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : patients) {
    scores.push_back(p.score);
    labels.push_back(p.label);
  }
  CohortReport rep;
  rep.confusion = confusion(scores, labels, threshold);
  rep.n_patients = static_cast<std::int64_t>(patients.size());
  rep.n_recordings = static_cast<std::int64_t>(sites.size());
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (has_pos && has_neg) rep.auroc = auroc(scores, labels);
  return rep;
}

// --- ablation slices ----------------------------------------------------------------

// Location-wise protocol: evaluate each auscultation site using only that
// site's recordings (patients without that site drop out of its slice).
inline std::map<Site, CohortReport> per_site_protocol(const std::vector<SiteScore>& sites,
                                                      double threshold = 0.5) {
  std::map<Site, CohortReport> out;
  for (Site s : {Site::AV, Site::MV, Site::PV, Site::TV}) {
    std::vector<SiteScore> slice;
    for (const auto& r : sites)
      if (r.site == s) slice.push_back(r);
    if (slice.empty()) throw EmptySite(std::string("no recordings for site ") + to_string(s));
    out[s] = evaluate_cohort(slice, threshold);
  }
  return out;
}

// Signal-quality slices: patients are scored from their recordings of the
// given quality only.
inline CohortReport quality_slice(const std::vector<SiteScore>& sites, Quality q,
                                  double threshold = 0.5) {
  std::vector<SiteScore> slice;
  for (const auto& r : sites)
    if (r.quality == q) slice.push_back(r);
  if (slice.empty()) throw EmptyGroup(std::string("no recordings with quality ") + to_string(q));
  return evaluate_cohort(slice, threshold);
}

// --- CSV writers ------------------------------------------------------------------

inline void write_report_csv(const std::string& path, const CohortReport& rep) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open report file: " + path);
  out << "metric,value\n";
  out << "n_patients," << rep.n_patients << "\n";
  out << "n_recordings," << rep.n_recordings << "\n";
  out << "tp," << rep.confusion.tp << "\n";
  out << "fp," << rep.confusion.fp << "\n";
  out << "tn," << rep.confusion.tn << "\n";
  out << "fn," << rep.confusion.fn << "\n";
  char buf[64];
  auto put = [&](const char* name, double v) {
    if (std::isnan(v)) {
      out << name << ",nan\n";
    } else {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << name << "," << buf << "\n";
    }
  };
  put("accuracy", rep.confusion.accuracy());
  put("sensitivity", rep.confusion.sensitivity());
  put("specificity", rep.confusion.specificity());
  put("precision", rep.confusion.precision());
  put("f1", rep.confusion.f1());
  put("auroc", rep.auroc);
  if (!out) throw Error("failed writing report file: " + path);
}

inline void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& pts,
                            const char* x_name, const char* y_name) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open curve file: " + path);
  out << "threshold," << x_name << "," << y_name << "\n";
  char buf[128];
  for (const auto& p : pts) {
    if (std::isinf(p.threshold)) std::snprintf(buf, sizeof buf, "inf,%.17g,%.17g", p.x, p.y);
    else std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", p.threshold, p.x, p.y);
    out << buf << "\n";
  }
  if (!out) throw Error("failed writing curve file: " + path);
}

}  // namespace pcgnet::eval
