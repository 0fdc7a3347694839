// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// when any fails. Training criteria run sequentially at the default toy scale.
//
//   acceptance [--work DIR] [--only 1,5,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "odgcnn/harness.hpp"
#include "odgcnn/verify.hpp"

using namespace odgcnn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Runner {
 public:
  explicit Runner(fs::path work) : work_(std::move(work)) {}

  // Trains (or distills) into work/name once; later calls return the cached report.
  const RunReport& run(const std::string& name, const RunConfig& config) {
    if (auto it = done_.find(name); it != done_.end()) return it->second;
    const auto start = Clock::now();
    const RunReport r = config.distill.mode == DistillMode::none ? run_train(config, work_ / name)
                                                                   : run_distill(config, work_ / name);
    std::printf("  run %-28s %7.1fs  nonms.nds=%.4f nonms.map=%.4f nms.map=%.4f\n", name.c_str(), seconds_since(start),
                r.eval->no_nms.nds, r.eval->no_nms.mean_ap, r.eval->nms.mean_ap);
    std::fflush(stdout);
    return done_.emplace(name, r).first->second;
  }

  fs::path checkpoint(const std::string& name) const { return work_ / name / "model.odgc1"; }
  const fs::path& work() const { return work_; }

 private:
  fs::path work_;
  std::map<std::string, RunReport> done_;
};

const std::vector<std::uint64_t> kSeeds = {0, 1, 2};

RunConfig base(std::uint64_t seed) {
  RunConfig c;
  c.train.seed = seed;
  c.validate();
  return c;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + fmt("%.4f", x);
  return "[" + s + "]";
}

// limit_s = 0: no time limit.
Outcome from_check(const verify::CheckResult& r, double limit_s = 0) {
  const bool in_time = limit_s == 0 || r.seconds < limit_s;
  const std::string limit = limit_s == 0 ? "" : ", limit " + fmt("%.0f", limit_s) + "s";
  return {r.pass && in_time, r.detail + " (" + fmt("%.2f", r.seconds) + "s" + limit + ")"};
}

std::string baseline_name(std::uint64_t s) { return "baseline_s" + std::to_string(s); }

Outcome nms_robustness(Runner& runner) {
  const auto start = Clock::now();
  const RunReport& set = runner.run(baseline_name(0), base(0));
  RunConfig d = base(0);
  d.head = HeadKind::dense;
  const RunReport& dense = runner.run("dense_s0", d);
  const double elapsed = seconds_since(start);
  const double set_gap = std::abs(set.eval->nms.mean_ap - set.eval->no_nms.mean_ap);
  const double dense_loss = dense.eval->nms.mean_ap - dense.eval->no_nms.mean_ap;
  return {set_gap < 0.01 && dense_loss > 0.05 && elapsed < 1800,
          "set |dmAP|=" + fmt("%.4f", set_gap) + " (<0.01), dense mAP loss without NMS=" + fmt("%.4f", dense_loss) +
              " (>0.05), dense nms/no-nms mAP=" + fmt("%.4f", dense.eval->nms.mean_ap) + "/" +
              fmt("%.4f", dense.eval->no_nms.mean_ap) + ", " + fmt("%.0f", elapsed) + "s (<1800s)"};
}

Outcome self_distillation(Runner& runner) {
  std::vector<double> plain, set, feature;
  for (std::uint64_t s : kSeeds) {
    plain.push_back(runner.run(baseline_name(s), base(s)).eval->no_nms.nds);
    RunConfig d = base(s);
    d.distill.teacher = runner.checkpoint(baseline_name(s));
    d.distill.mode = DistillMode::self;
    set.push_back(runner.run("self_set_s" + std::to_string(s), d).eval->no_nms.nds);
    d.distill.mode = DistillMode::feature;
    feature.push_back(runner.run("self_feature_s" + std::to_string(s), d).eval->no_nms.nds);
  }
  const double mp = mean(plain), ms = mean(set), mf = mean(feature);
  return {ms >= mp - 0.01 && ms >= mf - 0.01,
          "mean NDS set-to-set=" + fmt("%.4f", ms) + " baseline=" + fmt("%.4f", mp) + " feature=" + fmt("%.4f", mf) +
              " per seed set" + list(set) + " baseline" + list(plain) + " feature" + list(feature)};
}

Outcome privileged(Runner& runner) {
  std::vector<double> dense_teacher, sparse_teacher;
  for (std::uint64_t s : kSeeds) {
    const std::string tag = "_s" + std::to_string(s);
    for (InputDensity teacher_input : {InputDensity::dense, InputDensity::sparse}) {
      const std::string t = to_string(teacher_input);
      RunConfig teacher = base(s);
      teacher.train.input = teacher_input;
      runner.run("teacher_" + t + tag, teacher);
      RunConfig student = base(s);
      student.train.input = InputDensity::sparse;
      student.distill.mode = DistillMode::self;
      student.distill.teacher = runner.checkpoint("teacher_" + t + tag);
      student.distill.teacher_input = teacher_input;
      const double nds = runner.run("student_" + t + "_to_sparse" + tag, student).eval->no_nms.nds;
      (teacher_input == InputDensity::dense ? dense_teacher : sparse_teacher).push_back(nds);
    }
  }
  const double md = mean(dense_teacher), ms = mean(sparse_teacher);
  return {md >= ms - 0.01, "mean NDS dense->sparse=" + fmt("%.4f", md) + " sparse->sparse=" + fmt("%.4f", ms) +
                               " per seed " + list(dense_teacher) + " vs " + list(sparse_teacher)};
}

AblationRow row(const std::string& value, const RunReport& r) {
  return {value, r.param_count, r.eval->no_nms, r.eval->nms};
}

Outcome ablations(Runner& runner) {
  std::string detail;
  bool ok = true;
  // Per-seed neighbor sweeps; k=16 and L=2 are the baseline runs.
  std::map<std::size_t, std::vector<double>> by_k;
  for (std::uint64_t s : kSeeds) {
    std::vector<AblationRow> rows;
    for (std::size_t k : {1, 4, 16, 32}) {
      RunConfig c = base(s);
      c.dgcnn.neighbors = k;
      const std::string name = k == 16 ? baseline_name(s) : "k" + std::to_string(k) + "_s" + std::to_string(s);
      const RunReport& r = runner.run(name, c);
      rows.push_back(row(std::to_string(k), r));
      by_k[k].push_back(r.eval->no_nms.nds);
    }
    std::ofstream csv(runner.work() / ("neighbors_s" + std::to_string(s) + ".csv"));
    write_ablation_csv(csv, "neighbors", rows);
  }
  std::vector<AblationRow> layer_rows;
  for (std::size_t layers : {1, 2, 4}) {
    RunConfig c = base(0);
    c.dgcnn.num_layers = layers;
    const std::string name = layers == 2 ? baseline_name(0) : "layers" + std::to_string(layers) + "_s0";
    layer_rows.push_back(row(std::to_string(layers), runner.run(name, c)));
  }
  {
    std::ofstream csv(runner.work() / "layers_s0.csv");
    write_ablation_csv(csv, "layers", layer_rows);
  }

  // Repeat one sweep entry from scratch and compare its report bytes.
  RunConfig again = base(0);
  again.dgcnn.neighbors = 1;
  runner.run("k1_s0_repeat", again);
  const bool repeat_same = slurp(runner.work() / "k1_s0" / "report.txt") ==
                           slurp(runner.work() / "k1_s0_repeat" / "report.txt");
  const bool csv_ok = slurp(runner.work() / "layers_s0.csv").starts_with("layers,params,nds,map") &&
                      slurp(runner.work() / "neighbors_s0.csv").starts_with("neighbors,params,nds,map");
  const double k16 = mean(by_k[16]), k1 = mean(by_k[1]);
  ok = repeat_same && csv_ok && k16 >= k1;
  detail = "mean NDS k=1/4/16/32: " + fmt("%.4f", k1) + "/" + fmt("%.4f", mean(by_k[4])) + "/" + fmt("%.4f", k16) + "/" +
           fmt("%.4f", mean(by_k[32])) + ", layers 1/2/4 NDS: " + fmt("%.4f", layer_rows[0].no_nms.nds) + "/" +
           fmt("%.4f", layer_rows[1].no_nms.nds) + "/" + fmt("%.4f", layer_rows[2].no_nms.nds) +
           ", repeat identical=" + (repeat_same ? "yes" : "no") + ", csv=" + (csv_ok ? "ok" : "bad");
  return {ok, detail};
}

Outcome determinism(Runner& runner) {
  RunConfig c = base(7);
  c.data.train_scenes = 100;
  c.data.eval_scenes = 20;
  c.train.epochs = 3;
  std::vector<std::string> mismatched;
  for (int rep = 0; rep < 2; ++rep) runner.run("repeat_train_" + std::to_string(rep), c);
  RunConfig d = c;
  d.distill.mode = DistillMode::set;
  d.distill.teacher = runner.checkpoint("repeat_train_0");
  for (int rep = 0; rep < 2; ++rep) runner.run("repeat_distill_" + std::to_string(rep), d);
  for (const std::string kind : {"train", "distill"})
    for (const char* file : {"report.txt", "report.csv", "config.echo", "model.odgc1"})
      if (slurp(runner.work() / ("repeat_" + kind + "_0") / file) != slurp(runner.work() / ("repeat_" + kind + "_1") / file))
        mismatched.push_back(kind + "/" + file);
  std::string detail = "train and set-distill runs repeated: ";
  if (mismatched.empty()) return {true, detail + "reports, config echoes and checkpoints byte-identical"};
  for (const auto& m : mismatched) detail += m + " ";
  return {false, detail + "differ"};
}

}  // namespace

int main(int argc, char** argv) {
  keep_freed_memory();
  fs::path work = fs::temp_directory_path() / "odgcnn_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string item; std::getline(list, item, ',');) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);
  Runner runner(work);
  const std::uint64_t seed = 2024;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"hungarian equals brute force", [&] { return from_check(verify::check_hungarian(seed), 10); }},
      {"gradient checks", [&] { return from_check(verify::check_gradients(seed), 60); }},
      {"matched losses permutation invariant", [&] { return from_check(verify::check_loss_invariance(seed)); }},
      {"rotated IoU against Monte Carlo", [&] { return from_check(verify::check_iou(seed)); }},
      {"NMS robustness", [&] { return nms_robustness(runner); }},
      {"self-distillation direction", [&] { return self_distillation(runner); }},
      {"privileged-information direction", [&] { return privileged(runner); }},
      {"neighbor and layer sweeps", [&] { return ablations(runner); }},
      {"file round trips", [&] { return from_check(verify::check_roundtrips(seed)); }},
      {"end-to-end determinism", [&] { return determinism(runner); }},
  };

  std::ofstream summary(work / "acceptance.txt");
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    std::printf("criterion %d: %s\n", id, criteria[i].first.c_str());
    std::fflush(stdout);
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    char line[4096];
    std::snprintf(line, sizeof line, "%s %2d %s: %s", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                  o.detail.c_str());
    std::printf("%s\n", line);
    std::fflush(stdout);
    summary << line << '\n';
    summary.flush();
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
