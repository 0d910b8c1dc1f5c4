#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ucf/data.hpp"
#include "ucf/parallel.hpp"

namespace ucf {

struct Confusion {
  std::int64_t tp = 0, fp = 0, fn = 0;
};

/// Binarizes S at `threshold` with the >= rule and counts against binary G.
inline Confusion confusion_at(const std::vector<double>& S,
                              const std::vector<double>& G, double threshold) {
  if (S.size() != G.size())
    throw std::invalid_argument("confusion_at: shape mismatch");
  Confusion c;
  for (std::size_t i = 0; i < S.size(); ++i) {
    const bool pred = S[i] >= threshold;
    const bool truth = G[i] != 0.0;
    if (pred && truth) ++c.tp;
    else if (pred && !truth) ++c.fp;
    else if (!pred && truth) ++c.fn;
  }
  return c;
}

/// Precision with the empty-prediction convention: when nothing is predicted,
/// precision is 1 if there was nothing to find, else 0.
inline double precision_of(const Confusion& c) {
  if (c.tp + c.fp == 0) return c.fn == 0 ? 1.0 : 0.0;
  return double(c.tp) / double(c.tp + c.fp);
}

inline double recall_of(const Confusion& c) {
  if (c.tp + c.fn == 0)
    throw std::invalid_argument("recall_of: ground truth has no foreground");
  return double(c.tp) / double(c.tp + c.fn);
}

/// 256 (precision, recall) points at thresholds t/255, t = 0..255.
inline std::array<std::pair<double, double>, 256> pr_curve(
    const std::vector<double>& S, const std::vector<double>& G) {
  if (S.size() != G.size())
    throw std::invalid_argument("pr_curve: shape mismatch");
  bool any_fg = false;
  for (double g : G) any_fg = any_fg || g != 0.0;
  if (!any_fg)
    throw std::invalid_argument(
        "pr_curve: all-zero ground truth, recall undefined");
  std::array<std::pair<double, double>, 256> out;
  for (int t = 0; t < 256; ++t) {
    const Confusion c = confusion_at(S, G, double(t) / 255.0);
    out[std::size_t(t)] = {precision_of(c), recall_of(c)};
  }
  return out;
}

/// Twice the mean saliency, clamped into [0,1].
inline double adaptive_threshold(const std::vector<double>& S) {
  if (S.empty()) throw std::invalid_argument("adaptive_threshold: empty map");
  double sum = 0;
  for (double v : S) sum += v;
  const double t = 2.0 * sum / double(S.size());
  return std::min(1.0, std::max(0.0, t));
}

inline double f_measure(double precision, double recall, double beta2 = 0.3) {
  if (precision < 0 || precision > 1 || recall < 0 || recall > 1)
    throw std::invalid_argument("f_measure: precision/recall out of [0,1]");
  if (beta2 <= 0) throw std::invalid_argument("f_measure: beta2 must be > 0");
  if (precision == 0 && recall == 0) return 0.0;
  return (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
}

inline double mae(const std::vector<double>& S, const std::vector<double>& G) {
  if (S.size() != G.size()) throw std::invalid_argument("mae: shape mismatch");
  if (S.empty()) throw std::invalid_argument("mae: empty map");
  double sum = 0;
  for (std::size_t i = 0; i < S.size(); ++i) sum += std::abs(S[i] - G[i]);
  return sum / double(S.size());
}

// ---------------------------------------------------------------------------
// Directory-level evaluation.
// ---------------------------------------------------------------------------

struct PerImageEval {
  std::string name;
  double T = 0, precision = 0, recall = 0, fbeta = 0, mae = 0;
  bool gt_empty = false;  // footnote flag; excluded from curve and mean F
};

struct EvalReport {
  std::vector<PerImageEval> rows;           // in filename order
  double mean_fbeta = 0;                    // over non-flagged rows
  double mean_mae = 0;                      // over all rows
  std::int64_t n_images = 0;                // all paired rows
  std::int64_t n_curve_images = 0;          // rows contributing to the curve
  std::array<std::pair<double, double>, 256> curve{};  // pooled means
};

/// Evaluates one prediction against its binary ground truth.
inline PerImageEval evaluate_pair(const std::string& name,
                                  const std::vector<double>& S,
                                  const std::vector<double>& G, double beta2) {
  PerImageEval row;
  row.name = name;
  row.T = adaptive_threshold(S);
  const Confusion c = confusion_at(S, G, row.T);
  row.gt_empty = (c.tp + c.fn) == 0;
  row.precision = precision_of(c);
  // On an empty ground truth there is nothing to miss; recall is vacuously 1
  // and the row is flagged so aggregates can exclude it.
  row.recall = row.gt_empty ? 1.0 : recall_of(c);
  row.fbeta = f_measure(row.precision, row.recall, beta2);
  row.mae = mae(S, G);
  return row;
}

namespace detail {

inline std::vector<double> unit_values(const ImageU8& img, const std::string& what) {
  if (img.channels != 1)
    throw std::runtime_error(what + ": expected a single-channel map");
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(img.pixels[i]) / 255.0;
  return v;
}

inline std::vector<std::string> list_pgm_names(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm")
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace detail

inline EvalReport evaluate_dir(const std::string& pred_dir,
                               const std::string& gt_dir, double beta2 = 0.3) {
  namespace fs = std::filesystem;
  const std::vector<std::string> pred_names = detail::list_pgm_names(pred_dir);
  const std::vector<std::string> gt_names = detail::list_pgm_names(gt_dir);
  for (const auto& n : pred_names)
    if (!std::binary_search(gt_names.begin(), gt_names.end(), n))
      throw std::runtime_error("missing ground truth for " + n);
  for (const auto& n : gt_names)
    if (!std::binary_search(pred_names.begin(), pred_names.end(), n))
      throw std::runtime_error("missing prediction for " + n);
  if (pred_names.empty())
    throw std::runtime_error("no .pgm pairs found under " + pred_dir + " and " +
                             gt_dir);

  EvalReport report;
  const std::size_t n_names = pred_names.size();
  report.rows.resize(n_names);
  std::vector<std::array<std::pair<double, double>, 256>> curves(n_names);
  std::vector<std::exception_ptr> errors(n_names);
  parallel_for(std::int64_t(n_names), [&](std::int64_t idx) {
    const std::size_t i = std::size_t(idx);
    const std::string& name = pred_names[i];
    try {
      const ImageU8 pred_img = read_pnm((fs::path(pred_dir) / name).string());
      const ImageU8 gt_img = read_pnm((fs::path(gt_dir) / name).string());
      if (pred_img.width != gt_img.width || pred_img.height != gt_img.height)
        throw std::runtime_error("prediction/gt size mismatch for " + name);
      const std::vector<double> S =
          detail::unit_values(pred_img, "prediction " + name);
      std::vector<double> G = detail::unit_values(gt_img, "ground truth " + name);
      for (double& g : G) g = g >= 0.5 ? 1.0 : 0.0;
      report.rows[i] = evaluate_pair(name, S, G, beta2);
      if (!report.rows[i].gt_empty) curves[i] = pr_curve(S, G);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  // filename-order aggregation keeps the report bitwise-stable
  std::array<double, 256> psum{}, rsum{};
  double fsum = 0, msum = 0;
  std::int64_t fcount = 0;
  for (std::size_t i = 0; i < n_names; ++i) {
    msum += report.rows[i].mae;
    if (!report.rows[i].gt_empty) {
      fsum += report.rows[i].fbeta;
      ++fcount;
      for (int t = 0; t < 256; ++t) {
        psum[std::size_t(t)] += curves[i][std::size_t(t)].first;
        rsum[std::size_t(t)] += curves[i][std::size_t(t)].second;
      }
    }
  }
  report.n_images = std::int64_t(report.rows.size());
  report.n_curve_images = fcount;
  report.mean_mae = msum / double(report.n_images);
  report.mean_fbeta = fcount ? fsum / double(fcount) : 0.0;
  for (int t = 0; t < 256; ++t)
    report.curve[std::size_t(t)] =
        fcount ? std::make_pair(psum[std::size_t(t)] / double(fcount),
                                rsum[std::size_t(t)] / double(fcount))
               : std::make_pair(0.0, 0.0);
  return report;
}

// ---------------------------------------------------------------------------
// CSV emission (fixed %.6f formatting keeps reruns byte-identical).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

inline void write_per_image_csv(const std::string& path,
                                const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "name,T,precision,recall,fbeta,mae\n";
  for (const auto& r : report.rows)
    out << r.name << ',' << detail::fmt6(r.T) << ',' << detail::fmt6(r.precision)
        << ',' << detail::fmt6(r.recall) << ',' << detail::fmt6(r.fbeta) << ','
        << detail::fmt6(r.mae) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline void write_summary_csv(const std::string& path,
                              const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "mean_fbeta,mean_mae,n_images\n";
  out << detail::fmt6(report.mean_fbeta) << ',' << detail::fmt6(report.mean_mae)
      << ',' << report.n_images << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline void write_pr_curve_csv(const std::string& path,
                               const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "threshold,precision,recall\n";
  for (int t = 0; t < 256; ++t)
    out << t << ',' << detail::fmt6(report.curve[std::size_t(t)].first) << ','
        << detail::fmt6(report.curve[std::size_t(t)].second) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace ucf
