#include "odgcnn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "odgcnn/checkpoint.hpp"
#include "odgcnn/nn.hpp"
#include "odgcnn/ops.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace odgcnn {

namespace {

std::ostream* g_progress = nullptr;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string scene_file_name(std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "scene_%05zu.scene", i);
  return buf;
}

std::vector<std::string> class_names(const SceneConfig& config) {
  std::vector<std::string> out;
  for (const auto& c : config.classes) out.push_back(c.name);
  return out;
}

}  // namespace

void set_progress_stream(std::ostream* out) { g_progress = out; }

void keep_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

Dataset build_dataset(const DataConfig& config) {
  Dataset data;
  for (std::size_t i = 0; i < config.train_scenes; ++i) data.train_ids.push_back(i);
  for (std::size_t i = 0; i < config.eval_scenes; ++i) data.eval_ids.push_back(eval_scene_id(i));
  if (!config.data_dir.empty()) {
    const auto load_split = [&](const char* split, std::size_t n, std::vector<Scene>& out) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto path = config.data_dir / split / scene_file_name(i);
        if (!std::filesystem::exists(path)) throw ConfigError("missing scene file " + path.string());
        out.push_back(load_scene(path));
      }
    };
    load_split("train", config.train_scenes, data.train);
    load_split("eval", config.eval_scenes, data.eval);
    return data;
  }
  for (std::uint64_t id : data.train_ids) data.train.push_back(sample_scene(config.scene, derive_seed(config.data_seed, id)));
  for (std::uint64_t id : data.eval_ids) data.eval.push_back(sample_scene(config.scene, derive_seed(config.data_seed, id)));
  return data;
}

Scene scene_for_input(const Scene& scene, std::uint64_t scene_id, InputDensity density, const DataConfig& config) {
  const std::uint64_t base = derive_seed(config.data_seed, scene_id);
  switch (density) {
    case InputDensity::plain: return scene;
    case InputDensity::dense: return densify(scene, config.dense_factor, base ^ (std::uint64_t{1} << 40), config.scene);
    case InputDensity::sparse: return sparsify(scene, config.sparse_keep, base ^ (std::uint64_t{2} << 40));
  }
  return scene;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "train");
  std::filesystem::create_directories(dir / "eval");
  for (std::size_t i = 0; i < data.train.size(); ++i) save_scene(data.train[i], dir / "train" / scene_file_name(i));
  for (std::size_t i = 0; i < data.eval.size(); ++i) save_scene(data.eval[i], dir / "eval" / scene_file_name(i));
}

Model::Model(const RunConfig& config) : config_(config) {
  config_.bev.half_extent = config_.data.scene.half_extent;
  config_.validate();
  if (config_.head == HeadKind::set) {
    set_ = std::make_shared<ObjectDgcnn>(config_.bev, config_.dgcnn);
  } else {
    dense_ = std::make_shared<DenseDetector>(config_.bev, config_.dense);
  }
}

void Model::init(std::uint64_t seed) {
  params_ = ParamRegistry{};
  Rng rng(seed);
  if (set_) {
    set_->register_params(params_, rng);
  } else {
    dense_->register_params(params_, rng);
  }
}

PillarBatch Model::prepare(const Scene& input) const {
  return make_pillar_batch(input.points, config_.bev.grid, config_.bev.half_extent);
}

Model::Detections Model::detect(const PillarBatch& batch) const {
  std::vector<Detection> all;
  if (set_) {
    all = decode_detections(set_->forward(batch, params_).prediction);
  } else {
    all = decode_dense(dense_->forward(batch, params_).head, config_.eval.score_floor);
  }
  Detections out;
  const std::vector<std::size_t> best = top_k(all, config_.eval.top_k);
  out.raw = select<Detection>(all, best);
  const std::vector<std::size_t> kept = nms(out.raw, config_.eval.nms_threshold);
  out.nms = select<Detection>(out.raw, kept);
  return out;
}

Model load_model(const std::filesystem::path& checkpoint) {
  const auto echo = checkpoint.parent_path() / "config.echo";
  if (!std::filesystem::exists(checkpoint)) throw ModelError("checkpoint not found: " + checkpoint.string());
  if (!std::filesystem::exists(echo)) throw ModelError("no config.echo beside " + checkpoint.string());
  Model model(load_config(echo));
  model.init(0);
  load_into(model.params(), load_checkpoint(checkpoint));
  return model;
}

EvalResult evaluate(const Model& model, const Dataset& data) {
  std::vector<SceneDetections> raw, suppressed;
  raw.reserve(data.eval.size());
  suppressed.reserve(data.eval.size());
  for (std::size_t i = 0; i < data.eval.size(); ++i) {
    const Scene input = scene_for_input(data.eval[i], data.eval_ids[i], model.config().train.input, model.config().data);
    Model::Detections dets = model.detect(model.prepare(input));
    raw.push_back({std::move(dets.raw), data.eval[i].boxes});
    suppressed.push_back({std::move(dets.nms), data.eval[i].boxes});
  }
  const auto names = class_names(model.config().data.scene);
  return {evaluate_detections(raw, names), evaluate_detections(suppressed, names)};
}

namespace {

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

// Everything about one training scene that stays fixed across epochs.
struct Prepared {
  PillarBatch batch;
  std::vector<LabeledBox> targets;
  PaddedTargets padded;
  std::vector<long> assignment;
  std::optional<SetPrediction> teacher_pred;
  Tensor teacher_features;
};

bool same_architecture(const ParamRegistry& a, const ParamRegistry& b, std::string& first_difference) {
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end() && ib != b.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape() != ib->second.shape()) {
      first_difference = ia->first != ib->first ? ia->first + " vs " + ib->first : ia->first;
      return false;
    }
  }
  if (ia != a.end() || ib != b.end()) {
    first_difference = ia != a.end() ? ia->first : ib->first;
    return false;
  }
  return true;
}

BevGrid encode_features(const Model& model, const PillarBatch& batch) {
  if (model.head() == HeadKind::set) return model.set_model().encoder().forward(batch, model.params());
  return model.dense_model().encoder().forward(batch, model.params());
}

// Teacher detections turned into ground truth for one scene.
std::vector<LabeledBox> pseudo_labels(const Model& teacher, const PillarBatch& batch, double threshold, std::size_t cap) {
  Model::Detections dets = teacher.detect(batch);
  const std::vector<Detection>& source = teacher.head() == HeadKind::set ? dets.raw : dets.nms;
  std::vector<LabeledBox> out;
  for (const Detection& d : source) {
    if (out.size() == cap) break;
    if (d.probs.back() < threshold) out.push_back({d.box, d.label()});
  }
  return out;
}

void ensure_grads(ParamRegistry& params) {
  for (auto& [name, p] : params)
    if (!p.has_grad()) p.zero_grad();
}

double learning_rate(const TrainConfig& t, std::size_t step, std::size_t total) {
  if (t.lr.lr_initial == 0.0 && t.lr.lr_peak == 0.0 && t.lr.lr_final == 0.0) return 0.0;
  return cyclic_lr(step, total, t.lr);
}

}  // namespace

TrainOutcome train(const RunConfig& config, const Dataset& data) {
  const auto start = std::chrono::steady_clock::now();
  const DistillMode mode = config.distill.mode;
  Model model(config);
  model.init(config.train.seed);

  std::optional<Model> teacher;
  if (mode != DistillMode::none) {
    if (config.distill.teacher.empty()) throw ConfigError("distill.mode=" + to_string(mode) + " needs distill.teacher");
    teacher.emplace(load_model(config.distill.teacher));
    const bool set_modes = mode == DistillMode::set || mode == DistillMode::self;
    if (set_modes && (teacher->head() != HeadKind::set || model.head() != HeadKind::set))
      throw ModelError("set-to-set distillation needs set heads on teacher and student");
    std::string diff;
    if (mode == DistillMode::self && !same_architecture(teacher->params(), model.params(), diff))
      throw ModelError("self distillation needs identical architectures; first mismatched tensor: " + diff);
    if (mode == DistillMode::feature && !(teacher->feature_spec() == model.feature_spec())) {
      const GridSpec t = teacher->feature_spec(), s = model.feature_spec();
      throw ModelError("feature distillation: F^d grid differs (teacher " + std::to_string(t.width) + "x" +
                       std::to_string(t.height) + ", student " + std::to_string(s.width) + "x" + std::to_string(s.height) + ")");
    }
    if (config.distill.init_from_teacher) load_into(model.params(), teacher->params());
  }

  // Learned map from student to teacher channels, trained alongside the student
  // but not part of its checkpoint.
  ParamRegistry projection;
  if (mode == DistillMode::feature && teacher->feature_channels() != model.feature_channels()) {
    Rng rng(derive_seed(config.train.seed, 3));
    nn::register_linear(projection, rng, "distill.proj", model.feature_channels(), teacher->feature_channels());
  }

  std::vector<char> use_pseudo(data.train.size(), 0);
  if (mode == DistillMode::pseudo) {
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.train.seed, 2));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    const auto count = static_cast<std::size_t>(std::llround(config.distill.pseudo_fraction * static_cast<double>(order.size())));
    for (std::size_t i = 0; i < count; ++i) use_pseudo[order[i]] = 1;
  }

  const std::size_t set_size = config.dgcnn.num_queries, n_classes = config.data.scene.num_classes();
  std::vector<Prepared> prepared(data.train.size());
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    Prepared& p = prepared[i];
    const Scene& scene = data.train[i];
    p.batch = model.prepare(scene_for_input(scene, data.train_ids[i], config.train.input, config.data));
    p.targets = scene.boxes;
    if (teacher) {
      const PillarBatch tb = teacher->prepare(scene_for_input(scene, data.train_ids[i], config.distill.teacher_input, config.data));
      if (mode == DistillMode::set || mode == DistillMode::self) {
        p.teacher_pred = teacher->set_model().forward(tb, teacher->params()).prediction.detach();
      } else if (mode == DistillMode::feature) {
        p.teacher_features = encode_features(*teacher, tb).data.detach();
      } else if (mode == DistillMode::pseudo && use_pseudo[i]) {
        const std::size_t cap = model.head() == HeadKind::set ? set_size : static_cast<std::size_t>(-1);
        p.targets = pseudo_labels(*teacher, tb, config.distill.pseudo_threshold, cap);
      }
    }
    if (model.head() == HeadKind::set) {
      p.padded = pad_targets(p.targets, set_size, n_classes);
    } else {
      p.assignment = assign_overlap(p.targets, model.feature_spec());
    }
  }

  RunReport report;
  report.command = mode == DistillMode::none ? "train" : "distill";
  report.config = config;
  report.param_count = model.params().scalar_count();

  AdamW optimizer(config.train.adamw), projection_optimizer(config.train.adamw);
  const std::size_t n = prepared.size(), batch = config.train.batch_size;
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = config.train.epochs * steps_per_epoch;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(config.train.seed, 1));
  std::vector<double> distill_curve;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    double epoch_total = 0.0, distill_total = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += batch, ++step) {
      const std::size_t b1 = std::min(n, b0 + batch);
      const double lr = learning_rate(config.train, step, total_steps);
      for (std::size_t k = b0; k < b1; ++k) {
        const Prepared& p = prepared[order[k]];
        Tape tape;
        TapeScope scope(tape);
        Tensor supervised, distill, features;
        std::optional<SetPrediction> pred;
        const auto diverged = [&] {
          char rate[32];
          std::snprintf(rate, sizeof rate, "%.6g", lr);
          return TrainingError("non-finite loss at step " + std::to_string(step) + " (lr=" + rate + ", epoch " +
                               std::to_string(epoch + 1) + ")");
        };
        if (model.head() == HeadKind::set) {
          ObjectDgcnn::Output out = model.set_model().forward(p.batch, model.params());
          features = out.features.data;
          // The matcher rejects NaN costs; report the divergence instead.
          if (!all_finite(out.prediction.probs) || !all_finite(out.prediction.boxes)) throw diverged();
          const Assignment matching = set_match(p.padded, out.prediction, config.indicator);
          supervised = set_loss(p.padded, out.prediction, matching, config.indicator);
          pred = std::move(out.prediction);
        } else {
          DenseDetector::Output out = model.dense_model().forward(p.batch, model.params());
          features = out.features.data;
          supervised = dense_loss(out.head, p.targets, p.assignment, config.dense.negative_weight);
        }
        if (p.teacher_pred) {
          distill = distill_loss(*p.teacher_pred, *pred, distill_match(*p.teacher_pred, *pred), config.distill.mask_no_object);
        } else if (p.teacher_features.defined()) {
          const Tensor student = projection.size() ? nn::linear(projection, "distill.proj", features) : features;
          const Tensor diff = ops::sub(student, p.teacher_features);
          distill = ops::scale(ops::sum_all(ops::mul(diff, diff)), 1.0 / static_cast<double>(diff.rows()));
        }
        const Tensor loss =
            distill.defined() ? combined_loss(supervised, distill, config.distill.alpha, config.distill.beta) : supervised;
        const double value = loss.item();
        if (!std::isfinite(value)) throw diverged();
        epoch_total += value;
        if (distill.defined()) distill_total += distill.item();
        tape.backward(ops::scale(loss, 1.0 / static_cast<double>(b1 - b0)));
      }
      ensure_grads(model.params());
      optimizer.step(model.params(), lr);
      if (projection.size()) {
        ensure_grads(projection);
        projection_optimizer.step(projection, lr);
      }
    }
    report.epoch_loss.push_back(epoch_total / static_cast<double>(std::max<std::size_t>(n, 1)));
    if (teacher && mode != DistillMode::pseudo) distill_curve.push_back(distill_total / static_cast<double>(std::max<std::size_t>(n, 1)));
    if (g_progress) {
      *g_progress << "epoch " << epoch + 1 << "/" << config.train.epochs << " loss=" << fixed6(report.epoch_loss.back()) << std::endl;
    }
  }
  report.steps = step;
  for (std::size_t e = 0; e < distill_curve.size(); ++e)
    report.extra.push_back("distill_loss.epoch." + std::to_string(e + 1) + "=" + fixed6(distill_curve[e]));
  if (mode == DistillMode::pseudo) {
    report.extra.push_back("pseudo.scenes=" + std::to_string(std::count(use_pseudo.begin(), use_pseudo.end(), 1)));
  }

  report.eval = evaluate(model, data);
  report.checkpoint_hash = git_blob_hash(encode_checkpoint(model.params()));
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

void write_report(std::ostream& out, const RunReport& r) {
  out << "command=" << r.command << '\n';
  out << "head=" << to_string(r.config.head) << '\n';
  out << "seed=" << r.config.train.seed << '\n';
  out << "param_count=" << r.param_count << '\n';
  out << "steps=" << r.steps << '\n';
  if (!r.epoch_loss.empty()) {
    out << "loss.first=" << fixed6(r.epoch_loss.front()) << '\n';
    out << "loss.last=" << fixed6(r.epoch_loss.back()) << '\n';
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
      out << "loss.epoch." << e + 1 << '=' << fixed6(r.epoch_loss[e]) << '\n';
  }
  if (!r.checkpoint_hash.empty()) out << "checkpoint.sha1=" << r.checkpoint_hash << '\n';
  if (r.eval) {
    write_metrics(out, r.eval->no_nms, "nonms.");
    write_metrics(out, r.eval->nms, "nms.");
    out << "nms_delta.map=" << fixed6(std::abs(r.eval->nms.mean_ap - r.eval->no_nms.mean_ap)) << '\n';
    out << "nms_delta.nds=" << fixed6(std::abs(r.eval->nms.nds - r.eval->no_nms.nds)) << '\n';
  }
  for (const auto& line : r.extra) out << line << '\n';
}

void write_report_csv(std::ostream& out, const RunReport& r) {
  if (!r.eval) return;
  out << "variant,class";
  for (double t : r.eval->no_nms.thresholds) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ",ap@%g", t);
    out << buf;
  }
  out << ",ap_mean\n";
  write_ap_csv(out, r.eval->no_nms, "nonms");
  write_ap_csv(out, r.eval->nms, "nms");
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

void write_run_outputs(const std::filesystem::path& dir, const RunReport& report, const Model* model) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.echo", config_echo(report.config));
  std::ostringstream txt, csv;
  write_report(txt, report);
  write_report_csv(csv, report);
  write_text(dir / "report.txt", txt.str());
  write_text(dir / "report.csv", csv.str());
  write_text(dir / "timing.txt", "wall_clock_s=" + fixed6(report.wall_clock_s) + "\n");
  if (model) save_checkpoint(model->params(), dir / "model.odgc1");
}

RunReport run_gen_data(const RunConfig& config, const std::filesystem::path& out) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  RunConfig sampled = config;
  sampled.data.data_dir.clear();
  const Dataset data = build_dataset(sampled.data);
  write_dataset(data, out);

  RunReport report;
  report.command = "gen-data";
  report.config = sampled;
  std::ostringstream csv;
  csv << "split,scenes,points,boxes\n";
  std::string all_text;
  const auto summarize = [&](const char* split, const std::vector<Scene>& scenes) {
    std::size_t points = 0, boxes = 0;
    for (const Scene& s : scenes) {
      points += s.points.size();
      boxes += s.boxes.size();
      std::ostringstream one;
      write_scene(one, s);
      all_text += one.str();
    }
    report.extra.push_back(std::string(split) + ".scenes=" + std::to_string(scenes.size()));
    report.extra.push_back(std::string(split) + ".points=" + std::to_string(points));
    report.extra.push_back(std::string(split) + ".boxes=" + std::to_string(boxes));
    csv << split << ',' << scenes.size() << ',' << points << ',' << boxes << '\n';
  };
  summarize("train", data.train);
  summarize("eval", data.eval);
  report.extra.push_back("dataset.sha1=" +
                         git_blob_hash({reinterpret_cast<const unsigned char*>(all_text.data()), all_text.size()}));
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::filesystem::create_directories(out);
  write_text(out / "config.echo", config_echo(report.config));
  std::ostringstream txt;
  txt << "command=gen-data\n";
  for (const auto& line : report.extra) txt << line << '\n';
  write_text(out / "report.txt", txt.str());
  write_text(out / "report.csv", csv.str());
  write_text(out / "timing.txt", "wall_clock_s=" + fixed6(report.wall_clock_s) + "\n");
  return report;
}

RunReport run_train(const RunConfig& config, const std::filesystem::path& out) {
  if (config.distill.mode != DistillMode::none)
    throw ConfigError("distill.mode=" + to_string(config.distill.mode) + " belongs to the distill subcommand");
  config.validate();
  TrainOutcome outcome = train(config, build_dataset(config.data));
  write_run_outputs(out, outcome.report, &outcome.model);
  return outcome.report;
}

RunReport run_distill(const RunConfig& config, const std::filesystem::path& out) {
  if (config.distill.mode == DistillMode::none) throw ConfigError("distill needs distill.mode other than none");
  config.validate();
  TrainOutcome outcome = train(config, build_dataset(config.data));
  write_run_outputs(out, outcome.report, &outcome.model);
  return outcome.report;
}

RunReport run_eval(const RunConfig& config, const std::filesystem::path& out) {
  const auto start = std::chrono::steady_clock::now();
  if (config.eval.checkpoint.empty()) throw ConfigError("eval needs eval.checkpoint");
  if (!std::filesystem::exists(config.eval.checkpoint))
    throw ModelError("checkpoint not found: " + config.eval.checkpoint.string());
  Model model(config);
  model.init(0);
  try {
    load_into(model.params(), load_checkpoint(config.eval.checkpoint));
  } catch (const std::exception& e) {
    throw ModelError(e.what());
  }
  RunReport report;
  report.command = "eval";
  report.config = config;
  report.param_count = model.params().scalar_count();
  report.eval = evaluate(model, build_dataset(config.data));
  report.checkpoint_hash = git_blob_hash(encode_checkpoint(model.params()));
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_run_outputs(out, report, &model);
  return report;
}

std::vector<AblationRow> run_ablate(const RunConfig& config, const std::filesystem::path& out) {
  const auto start = std::chrono::steady_clock::now();
  std::string key;
  if (config.ablate.sweep == "neighbors") key = "model.neighbors";
  else if (config.ablate.sweep == "layers") key = "model.num_layers";
  else if (config.ablate.sweep == "interaction") key = "model.interaction";
  else throw ConfigError("ablate.sweep must be neighbors|layers|interaction, got '" + config.ablate.sweep + "'");
  if (config.ablate.values.empty()) throw ConfigError("empty sweep: ablate.values lists no values");
  if (config.distill.mode != DistillMode::none) throw ConfigError("ablate trains supervised models only");

  // Every entry must be valid before any training starts.
  std::vector<RunConfig> entries;
  for (const std::string& v : config.ablate.values) {
    RunConfig c = config;
    apply_setting(c, key, v);
    c.validate();
    entries.push_back(std::move(c));
  }
  const Dataset data = build_dataset(config.data);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (g_progress) *g_progress << config.ablate.sweep << "=" << config.ablate.values[i] << std::endl;
    TrainOutcome outcome = train(entries[i], data);
    write_run_outputs(out / (config.ablate.sweep + "-" + config.ablate.values[i]), outcome.report, &outcome.model);
    rows.push_back({config.ablate.values[i], outcome.report.param_count, outcome.report.eval->no_nms, outcome.report.eval->nms});
  }

  std::filesystem::create_directories(out);
  write_text(out / "config.echo", config_echo(config));
  std::ostringstream csv, txt;
  write_ablation_csv(csv, config.ablate.sweep, rows);
  write_text(out / "report.csv", csv.str());
  txt << "command=ablate\nsweep=" << config.ablate.sweep << "\nseed=" << config.train.seed << '\n';
  for (const AblationRow& row : rows) {
    const std::string p = config.ablate.sweep + "." + row.value + ".";
    txt << p << "param_count=" << row.param_count << '\n';
    txt << p << "nonms.nds=" << fixed6(row.no_nms.nds) << '\n';
    txt << p << "nonms.map=" << fixed6(row.no_nms.mean_ap) << '\n';
    txt << p << "nms.nds=" << fixed6(row.nms.nds) << '\n';
    txt << p << "nms.map=" << fixed6(row.nms.mean_ap) << '\n';
  }
  write_text(out / "report.txt", txt.str());
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(out / "timing.txt", "wall_clock_s=" + fixed6(seconds) + "\n");
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::string& sweep, const std::vector<AblationRow>& rows) {
  out << sweep << ",params,nds,map,mate,mase,maoe,mave,nds_nms,map_nms\n";
  for (const AblationRow& r : rows) {
    out << r.value << ',' << r.param_count << ',' << fixed6(r.no_nms.nds) << ',' << fixed6(r.no_nms.mean_ap) << ','
        << fixed6(r.no_nms.errors.ate) << ',' << fixed6(r.no_nms.errors.ase) << ',' << fixed6(r.no_nms.errors.aoe) << ','
        << fixed6(r.no_nms.errors.ave) << ',' << fixed6(r.nms.nds) << ',' << fixed6(r.nms.mean_ap) << '\n';
  }
}

}  // namespace odgcnn
