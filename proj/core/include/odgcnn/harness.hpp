#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "odgcnn/config.hpp"
#include "odgcnn/metrics.hpp"

namespace odgcnn {

// Training diverged; the message names the step and learning rate.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint, teacher or architecture problems.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-epoch progress lines go here when set (nullptr silences them).
void set_progress_stream(std::ostream* out);

// Asks the C allocator to keep freed tensor buffers instead of returning them
// to the kernel. Training reallocates the same sizes every step; without this
// a large share of run time goes to page faults. No-op outside glibc.
void keep_freed_memory();

struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> eval;
  std::vector<std::uint64_t> train_ids;
  std::vector<std::uint64_t> eval_ids;
};

// Scene id of eval scene i; train scene i has id i.
inline std::uint64_t eval_scene_id(std::size_t i) { return (std::uint64_t{1} << 32) + i; }

// Sampled from data.seed, or read from data.dir when set.
Dataset build_dataset(const DataConfig& config);
// The version of a scene a model consumes for a given input density. The
// density sub-seeds derive from data.seed and the scene id.
Scene scene_for_input(const Scene& scene, std::uint64_t scene_id, InputDensity density, const DataConfig& config);

void write_dataset(const Dataset& data, const std::filesystem::path& dir);

// A set or dense detector with its parameters.
class Model {
 public:
  explicit Model(const RunConfig& config);

  void init(std::uint64_t seed);
  const RunConfig& config() const { return config_; }
  HeadKind head() const { return config_.head; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  const ObjectDgcnn& set_model() const { return *set_; }
  const DenseDetector& dense_model() const { return *dense_; }
  GridSpec feature_spec() const { return config_.bev.out_spec(); }
  std::size_t feature_channels() const { return config_.bev.out_channels(); }

  PillarBatch prepare(const Scene& input) const;

  // Detections after top-k, and after top-k plus NMS.
  struct Detections {
    std::vector<Detection> raw;
    std::vector<Detection> nms;
  };
  Detections detect(const PillarBatch& batch) const;

 private:
  RunConfig config_;
  ParamRegistry params_;
  std::shared_ptr<ObjectDgcnn> set_;
  std::shared_ptr<DenseDetector> dense_;
};

// A trained model plus the configuration it was trained with, loaded from
// `<dir>/model.odgc1` and `<dir>/config.echo`.
Model load_model(const std::filesystem::path& checkpoint);

struct EvalResult {
  MetricsReport no_nms;
  MetricsReport nms;
};

EvalResult evaluate(const Model& model, const Dataset& data);

struct RunReport {
  std::string command;
  RunConfig config;
  std::size_t param_count = 0;
  std::size_t steps = 0;
  std::vector<double> epoch_loss;  // mean per-scene loss of each epoch
  std::optional<EvalResult> eval;
  std::string checkpoint_hash;
  double wall_clock_s = 0;
  std::vector<std::string> extra;  // additional key=value lines
};

// Trains per config.train and config.distill (mode none = supervised only).
// The teacher, when needed, is loaded from config.distill.teacher.
struct TrainOutcome {
  Model model;
  RunReport report;
};
TrainOutcome train(const RunConfig& config, const Dataset& data);

// Deterministic report text: no wall-clock. No-NMS metrics come first.
void write_report(std::ostream& out, const RunReport& report);
void write_report_csv(std::ostream& out, const RunReport& report);

// config.echo, report.txt, report.csv, timing.txt and, when given, model.odgc1.
void write_run_outputs(const std::filesystem::path& dir, const RunReport& report, const Model* model);

// Subcommand bodies; each writes its outputs under `out`.
RunReport run_gen_data(const RunConfig& config, const std::filesystem::path& out);
RunReport run_train(const RunConfig& config, const std::filesystem::path& out);
RunReport run_distill(const RunConfig& config, const std::filesystem::path& out);
RunReport run_eval(const RunConfig& config, const std::filesystem::path& out);

struct AblationRow {
  std::string value;
  std::size_t param_count = 0;
  MetricsReport no_nms;
  MetricsReport nms;
};
std::vector<AblationRow> run_ablate(const RunConfig& config, const std::filesystem::path& out);
void write_ablation_csv(std::ostream& out, const std::string& sweep, const std::vector<AblationRow>& rows);

}  // namespace odgcnn
