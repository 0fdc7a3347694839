#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "odgcnn/checkpoint.hpp"
#include "odgcnn/harness.hpp"

using namespace odgcnn;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(# small enough to train in a few seconds
scene.half_extent = 8
grid.size = 16
grid.cell = 1
bev.pointnet_hidden = 8
bev.pointnet_out = 8
bev.conv_channels = 8,8
bev.conv_strides = 1,2
model.num_queries = 8
model.query_dim = 16
model.num_layers = 1
model.neighbors = 3
model.edge_hidden = 16
dense.hidden = 16
scene.max_objects = 3
scene.clutter_points = 60
data.train_scenes = 6
data.eval_scenes = 3
train.epochs = 2
train.batch_size = 2
eval.top_k = 8
)";

RunConfig tiny() {
  std::istringstream in(kTiny);
  RunConfig c = parse_config(in);
  c.validate();
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("odgcnn_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string report_text(const RunReport& r) {
  std::ostringstream out;
  write_report(out, r);
  return out.str();
}

std::string line_value(const std::string& text, const std::string& key) {
  const auto at = text.find("\n" + key + "=");
  REQUIRE(at != std::string::npos);
  const auto start = at + key.size() + 2;
  return text.substr(start, text.find('\n', start) - start);
}

}  // namespace

TEST_CASE("configuration text") {
  SUBCASE("echo parses back to the same configuration") {
    RunConfig c = tiny();
    apply_setting(c, "distill.alpha", "0.3");
    apply_setting(c, "train.lr_peak", "0.0007");
    apply_setting(c, "model.interaction", "self_attention");
    const std::string echo = config_echo(c);
    std::istringstream in(echo);
    CHECK(config_echo(parse_config(in)) == echo);
    CHECK(echo.find("distill.alpha=0.3\n") != std::string::npos);
  }
  SUBCASE("unknown key names the line") {
    std::istringstream in("grid.size = 16\nmodel.depth = 3\n");
    CHECK_THROWS_WITH_AS(parse_config(in), doctest::Contains("line 2"), ConfigError);
  }
  SUBCASE("bad values") {
    RunConfig c;
    CHECK_THROWS_AS(apply_setting(c, "train.epochs", "many"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "nope", "1"), ConfigError);
    c = tiny();
    c.data.scene.max_objects = 9;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny();
    c.train.lr.lr_final = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}

TEST_CASE("datasets") {
  const RunConfig c = tiny();
  const Dataset a = build_dataset(c.data), b = build_dataset(c.data);
  CHECK(a.train.size() == 6);
  CHECK(a.eval.size() == 3);
  std::ostringstream sa, sb;
  write_scene(sa, a.eval[2]);
  write_scene(sb, b.eval[2]);
  CHECK(sa.str() == sb.str());

  const fs::path dir = scratch("data");
  write_dataset(a, dir);
  RunConfig from_disk = c;
  from_disk.data.data_dir = dir;
  const Dataset d = build_dataset(from_disk.data);
  std::ostringstream sd;
  write_scene(sd, d.eval[2]);
  CHECK(sd.str() == sa.str());

  const Scene dense = scene_for_input(a.train[0], a.train_ids[0], InputDensity::dense, c.data);
  CHECK(dense.points.size() == 2 * a.train[0].points.size());
  const Scene sparse = scene_for_input(a.train[0], a.train_ids[0], InputDensity::sparse, c.data);
  CHECK(sparse.points.size() < a.train[0].points.size());
  fs::remove_all(dir);
}

TEST_CASE("training") {
  const RunConfig c = tiny();
  const Dataset data = build_dataset(c.data);

  SUBCASE("runs are reproducible") {
    const TrainOutcome a = train(c, data), b = train(c, data);
    CHECK(a.report.checkpoint_hash.size() == 40);
    CHECK(a.report.checkpoint_hash == b.report.checkpoint_hash);
    CHECK(report_text(a.report) == report_text(b.report));
    CHECK(a.report.steps == 6);
    CHECK(report_text(a.report).find("nms_delta.map=") != std::string::npos);
  }
  SUBCASE("zero epochs evaluates the initial model") {
    RunConfig z = c;
    z.train.epochs = 0;
    const TrainOutcome o = train(z, data);
    CHECK(o.report.steps == 0);
    REQUIRE(o.report.eval.has_value());
    CHECK(o.report.eval->no_nms.mean_ap < 0.05);
  }
  SUBCASE("set distillation with zero weight matches plain training") {
    const fs::path dir = scratch("teacher");
    run_train(c, dir);
    RunConfig s = c;
    s.distill.mode = DistillMode::set;
    s.distill.teacher = dir / "model.odgc1";
    s.distill.beta = 0;
    const TrainOutcome plain = train(c, data), distilled = train(s, data);
    CHECK(plain.report.checkpoint_hash == distilled.report.checkpoint_hash);
    CHECK(plain.report.epoch_loss == distilled.report.epoch_loss);

    SUBCASE("frozen student keeps its distillation loss") {
      RunConfig f = s;
      f.distill.beta = 1;
      f.distill.init_from_teacher = true;
      f.train.lr = {0, 0, 0, 0.4};
      f.train.epochs = 3;
      const std::string text = report_text(train(f, data).report);
      const std::string first = line_value(text, "distill_loss.epoch.1");
      CHECK(line_value(text, "distill_loss.epoch.2") == first);
      CHECK(line_value(text, "distill_loss.epoch.3") == first);
      CHECK(line_value(text, "checkpoint.sha1") == git_blob_hash([&] {
              const std::string bytes = slurp(dir / "model.odgc1");
              return std::vector<unsigned char>(bytes.begin(), bytes.end());
            }()));
    }
    SUBCASE("feature distillation rejects a different feature grid") {
      RunConfig f = c;
      f.distill.mode = DistillMode::feature;
      f.distill.teacher = dir / "model.odgc1";
      f.bev.conv_strides = {1, 1};
      CHECK_THROWS_AS(train(f, data), ModelError);
    }
    SUBCASE("eval names the first mismatched tensor") {
      RunConfig e = c;
      e.eval.checkpoint = dir / "model.odgc1";
      e.dgcnn.query_dim = 8;
      CHECK_THROWS_WITH_AS(run_eval(e, scratch("eval_bad")), doctest::Contains("dgcnn.layer0"), ModelError);
      e.dgcnn.query_dim = 16;
      const RunReport r1 = run_eval(e, scratch("eval1"));
      const RunReport r2 = run_eval(e, scratch("eval2"));
      CHECK(report_text(r1) == report_text(r2));
    }
    fs::remove_all(dir);
  }
  SUBCASE("a dense head with score floor one detects nothing") {
    RunConfig d = c;
    d.head = HeadKind::dense;
    d.eval.score_floor = 1.0;
    const TrainOutcome o = train(d, data);
    CHECK(o.report.eval->no_nms.num_detections == 0);
    CHECK(o.report.eval->no_nms.mean_ap == 0.0);
  }
  SUBCASE("divergence is reported with the step") {
    RunConfig d = c;
    d.train.lr = {1e300, 1e300, 1e300, 0.4};
    CHECK_THROWS_WITH_AS(train(d, data), doctest::Contains("step"), TrainingError);
  }
}

TEST_CASE("subcommands") {
  RunConfig c = tiny();
  c.train.epochs = 1;

  SUBCASE("train writes its outputs") {
    const fs::path dir = scratch("train");
    const RunReport r = run_train(c, dir);
    for (const char* f : {"config.echo", "report.txt", "report.csv", "timing.txt", "model.odgc1"}) CHECK(fs::exists(dir / f));
    CHECK(slurp(dir / "report.txt") == report_text(r));
    CHECK(slurp(dir / "report.csv").starts_with("variant,class,"));
    fs::remove_all(dir);
  }
  SUBCASE("distillation commands check their mode") {
    RunConfig d = c;
    d.distill.mode = DistillMode::set;
    CHECK_THROWS_AS(run_train(d, scratch("bad_train")), ConfigError);
    CHECK_THROWS(run_distill(c, scratch("bad_distill")));
  }
  SUBCASE("ablation") {
    RunConfig a = c;
    a.ablate.sweep = "neighbors";
    CHECK_THROWS_WITH_AS(run_ablate(a, scratch("ablate_empty")), doctest::Contains("empty"), ConfigError);
    a.ablate.sweep = "layers";
    a.ablate.values = {"1", "2"};
    const fs::path dir = scratch("ablate");
    const std::vector<AblationRow> rows = run_ablate(a, dir);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].param_count < rows[1].param_count);
    CHECK(slurp(dir / "report.csv").starts_with("layers,params,nds,map"));
    a.ablate.sweep = "interaction";
    a.ablate.values = {"dgcnn", "self_attention"};
    CHECK(run_ablate(a, scratch("ablate_inter")).size() == 2);
    fs::remove_all(dir);
  }
  SUBCASE("gen-data is reproducible") {
    const RunReport a = run_gen_data(c, scratch("gen_a"));
    const RunReport b = run_gen_data(c, scratch("gen_b"));
    CHECK(report_text(a) == report_text(b));
  }
}
