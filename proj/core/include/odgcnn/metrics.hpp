#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "odgcnn/geometry.hpp"

namespace odgcnn {

struct MetricsConfig {
  std::vector<double> distance_thresholds = {0.5, 1.0, 2.0, 4.0};
  double tp_threshold = 2.0;  // matches used for the TP error metrics
};

struct CenterMatch {
  std::vector<bool> true_positive;                        // per prediction, in input order
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (prediction, target)
};

// Single class, single scene. Predictions must already be sorted by
// descending score; each takes the nearest unmatched target whose BEV centre
// distance is strictly below the threshold.
CenterMatch match_by_center(std::span<const Box9> predictions, std::span<const Box9> targets, double threshold);

struct ScoredLabel {
  double score = 0;
  bool true_positive = false;
};

// 101-point interpolated AP restricted to recall > 0.1 and precision > 0.1,
// renormalised to [0, 1]. Labels need not be sorted.
double average_precision(std::vector<ScoredLabel> labels, std::size_t n_targets);

struct TpErrors {
  double ate = 1.0;  // m
  double ase = 1.0;  // 1 - aligned 3D IoU
  double aoe = 1.0;  // rad, in [0, pi]
  double ave = 1.0;  // m/s
};

// Means over (prediction, target) pairs; all 1.0 when there are none.
TpErrors tp_errors(std::span<const std::pair<Box9, Box9>> pairs);

double nds(double mean_ap, const TpErrors& errors);

struct SceneDetections {
  std::vector<Detection> detections;
  std::vector<LabeledBox> targets;
};

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<double> thresholds;
  std::vector<std::vector<double>> ap;  // [class][threshold]
  std::vector<TpErrors> class_errors;
  double mean_ap = 0;
  TpErrors errors;
  double nds = 0;
  std::size_t num_detections = 0;
  std::size_t num_targets = 0;
};

MetricsReport evaluate_detections(std::span<const SceneDetections> scenes, const std::vector<std::string>& class_names,
                                  const MetricsConfig& config = {});

// key=value lines, 6 decimals, every key prefixed with `prefix`.
void write_metrics(std::ostream& out, const MetricsReport& report, const std::string& prefix);
// class,ap@<t>...,ap_mean
void write_ap_csv(std::ostream& out, const MetricsReport& report, const std::string& variant);

}  // namespace odgcnn
