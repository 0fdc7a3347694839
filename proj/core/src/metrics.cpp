#include "odgcnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace odgcnn {

CenterMatch match_by_center(std::span<const Box9> predictions, std::span<const Box9> targets, double threshold) {
  CenterMatch out;
  out.true_positive.assign(predictions.size(), false);
  std::vector<char> taken(targets.size(), 0);
  for (std::size_t p = 0; p < predictions.size(); ++p) {
    std::size_t best = targets.size();
    double best_dist = threshold;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (taken[t]) continue;
      const double d = std::hypot(predictions[p].x - targets[t].x, predictions[p].y - targets[t].y);
      if (d < best_dist) {
        best_dist = d;
        best = t;
      }
    }
    if (best < targets.size()) {
      taken[best] = 1;
      out.true_positive[p] = true;
      out.pairs.emplace_back(p, best);
    }
  }
  return out;
}

namespace {

// numpy.interp(x, xp, fp, right=0) for non-decreasing xp.
double interp(double x, const std::vector<double>& xp, const std::vector<double>& fp) {
  if (x < xp.front()) return fp.front();
  if (x > xp.back()) return 0.0;
  const auto j = static_cast<std::size_t>(std::upper_bound(xp.begin(), xp.end(), x) - xp.begin()) - 1;
  if (j + 1 == xp.size()) return fp.back();
  return fp[j] + (x - xp[j]) * (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]);
}

}  // namespace

double average_precision(std::vector<ScoredLabel> labels, std::size_t n_targets) {
  constexpr double kMinRecall = 0.1, kMinPrecision = 0.1;
  if (n_targets == 0 || labels.empty()) return 0.0;
  std::stable_sort(labels.begin(), labels.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  std::vector<double> precision, recall;
  double tp = 0, fp = 0;
  for (const ScoredLabel& l : labels) {
    (l.true_positive ? tp : fp) += 1.0;
    precision.push_back(tp / (tp + fp));
    recall.push_back(tp / static_cast<double>(n_targets));
  }
  double total = 0.0;
  std::size_t count = 0;
  // Recall points 0.01 apart, strictly above the minimum recall.
  for (auto k = static_cast<std::size_t>(std::lround(kMinRecall * 100)) + 1; k <= 100; ++k) {
    const double p = interp(static_cast<double>(k) / 100.0, recall, precision);
    total += std::max(p - kMinPrecision, 0.0);
    ++count;
  }
  return total / static_cast<double>(count) / (1.0 - kMinPrecision);
}

TpErrors tp_errors(std::span<const std::pair<Box9, Box9>> pairs) {
  if (pairs.empty()) return {};
  TpErrors e{0, 0, 0, 0};
  for (const auto& [p, t] : pairs) {
    e.ate += std::hypot(p.x - t.x, p.y - t.y);
    const double inter = std::min(p.w, t.w) * std::min(p.l, t.l) * std::min(p.h, t.h);
    const double uni = p.w * p.l * p.h + t.w * t.l * t.h - inter;
    e.ase += 1.0 - inter / uni;
    e.aoe += angle_distance(p.yaw, t.yaw);
    e.ave += std::hypot(p.vx - t.vx, p.vy - t.vy);
  }
  const double n = static_cast<double>(pairs.size());
  return {e.ate / n, e.ase / n, e.aoe / n, e.ave / n};
}

double nds(double mean_ap, const TpErrors& e) {
  double score = 5.0 * mean_ap;
  for (double err : {e.ate, e.ase, e.aoe, e.ave}) score += 1.0 - std::min(1.0, err);
  return score / 9.0;
}

MetricsReport evaluate_detections(std::span<const SceneDetections> scenes, const std::vector<std::string>& class_names,
                                  const MetricsConfig& config) {
  MetricsReport report;
  report.class_names = class_names;
  report.thresholds = config.distance_thresholds;
  const std::size_t n_classes = class_names.size();
  report.ap.assign(n_classes, std::vector<double>(config.distance_thresholds.size(), 0.0));
  report.class_errors.assign(n_classes, TpErrors{});
  for (const auto& s : scenes) {
    report.num_detections += s.detections.size();
    report.num_targets += s.targets.size();
  }

  for (std::size_t c = 0; c < n_classes; ++c) {
    // Per scene: this class's predictions sorted by score, and its targets.
    std::vector<std::vector<Box9>> preds(scenes.size()), gts(scenes.size());
    std::vector<std::vector<double>> scores(scenes.size());
    std::size_t n_targets = 0;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      std::vector<std::size_t> order;
      for (std::size_t d = 0; d < scenes[s].detections.size(); ++d)
        if (scenes[s].detections[d].label() == c) order.push_back(d);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scenes[s].detections[a].score() > scenes[s].detections[b].score();
      });
      for (std::size_t d : order) {
        preds[s].push_back(scenes[s].detections[d].box);
        scores[s].push_back(scenes[s].detections[d].score());
      }
      for (const auto& t : scenes[s].targets)
        if (t.label == c) gts[s].push_back(t.box);
      n_targets += gts[s].size();
    }
    for (std::size_t k = 0; k < config.distance_thresholds.size(); ++k) {
      std::vector<ScoredLabel> labels;
      for (std::size_t s = 0; s < scenes.size(); ++s) {
        const CenterMatch m = match_by_center(preds[s], gts[s], config.distance_thresholds[k]);
        for (std::size_t p = 0; p < preds[s].size(); ++p) labels.push_back({scores[s][p], m.true_positive[p]});
      }
      report.ap[c][k] = average_precision(std::move(labels), n_targets);
    }
    std::vector<std::pair<Box9, Box9>> pairs;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      const CenterMatch m = match_by_center(preds[s], gts[s], config.tp_threshold);
      for (const auto& [p, t] : m.pairs) pairs.emplace_back(preds[s][p], gts[s][t]);
    }
    report.class_errors[c] = tp_errors(pairs);
  }

  TpErrors mean{0, 0, 0, 0};
  double ap_total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (double ap : report.ap[c]) ap_total += ap;
    mean.ate += report.class_errors[c].ate;
    mean.ase += report.class_errors[c].ase;
    mean.aoe += report.class_errors[c].aoe;
    mean.ave += report.class_errors[c].ave;
  }
  if (n_classes > 0) {
    const double n = static_cast<double>(n_classes);
    report.mean_ap = ap_total / (n * static_cast<double>(config.distance_thresholds.size()));
    report.errors = {mean.ate / n, mean.ase / n, mean.aoe / n, mean.ave / n};
  }
  report.nds = nds(report.mean_ap, report.errors);
  return report;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string threshold_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

}  // namespace

void write_metrics(std::ostream& out, const MetricsReport& r, const std::string& prefix) {
  out << prefix << "nds=" << fixed6(r.nds) << '\n';
  out << prefix << "map=" << fixed6(r.mean_ap) << '\n';
  out << prefix << "mate=" << fixed6(r.errors.ate) << '\n';
  out << prefix << "mase=" << fixed6(r.errors.ase) << '\n';
  out << prefix << "maoe=" << fixed6(r.errors.aoe) << '\n';
  out << prefix << "mave=" << fixed6(r.errors.ave) << '\n';
  out << prefix << "detections=" << r.num_detections << '\n';
  out << prefix << "targets=" << r.num_targets << '\n';
  for (std::size_t c = 0; c < r.class_names.size(); ++c)
    for (std::size_t k = 0; k < r.thresholds.size(); ++k)
      out << prefix << "ap." << r.class_names[c] << '@' << threshold_tag(r.thresholds[k]) << '=' << fixed6(r.ap[c][k]) << '\n';
}

void write_ap_csv(std::ostream& out, const MetricsReport& r, const std::string& variant) {
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    out << variant << ',' << r.class_names[c];
    double total = 0.0;
    for (double ap : r.ap[c]) {
      out << ',' << fixed6(ap);
      total += ap;
    }
    out << ',' << fixed6(r.ap[c].empty() ? 0.0 : total / static_cast<double>(r.ap[c].size())) << '\n';
  }
}

}  // namespace odgcnn
