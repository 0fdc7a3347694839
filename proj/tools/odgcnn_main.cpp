// Command-line front end: gen-data, train, distill, eval, ablate, verify.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "odgcnn/checkpoint.hpp"
#include "odgcnn/harness.hpp"
#include "odgcnn/verify.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "key=value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "training seed (overrides train.seed)");
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--set", args.overrides, "extra key=value settings applied after the config file");
  cmd->add_flag("--quiet", args.quiet, "no per-epoch progress on stderr");
}

odgcnn::RunConfig resolve(const CommonArgs& args) {
  odgcnn::RunConfig config = args.config.empty() ? odgcnn::RunConfig{} : odgcnn::load_config(args.config);
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw odgcnn::ConfigError("--set expects key=value, got '" + kv + "'");
    odgcnn::apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed) config.train.seed = *args.seed;
  return config;
}

// One line, machine-parseable: "odgcnn: error[<kind>]: <message>".
int fail(const char* kind, const std::string& message, int code) {
  std::string flat = message;
  for (char& c : flat)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "odgcnn: error[" << kind << "]: " << flat << std::endl;
  return code;
}

void print_summary(const odgcnn::RunReport& r) {
  if (!r.eval) return;
  std::printf("nonms.map=%.6f nonms.nds=%.6f nms.map=%.6f nms.nds=%.6f\n", r.eval->no_nms.mean_ap, r.eval->no_nms.nds,
              r.eval->nms.mean_ap, r.eval->nms.nds);
}

}  // namespace

int main(int argc, char** argv) {
  odgcnn::keep_freed_memory();
  CLI::App app{"Object DGCNN set-prediction detector: data generation, training, distillation and evaluation"};
  app.require_subcommand(1);
  app.footer(
      "report.txt keys: command, head, seed, param_count, steps, loss.first, loss.last, loss.epoch.<n>,\n"
      "checkpoint.sha1, then nonms.* and nms.* metric blocks (nds, map, mate, mase, maoe, mave,\n"
      "detections, targets, ap.<class>@<threshold>), nms_delta.map, nms_delta.nds.\n"
      "Errors print one line 'odgcnn: error[<kind>]: <message>' with kind in\n"
      "{usage, config, model, training, io, runtime} and exit nonzero.");

  CommonArgs gen_args, train_args, distill_args, eval_args, ablate_args, verify_args;
  auto* gen = app.add_subcommand("gen-data", "sample train/eval scenes and write them as SCENE v1 files");
  add_common(gen, gen_args);
  auto* train = app.add_subcommand("train", "supervised training followed by evaluation with and without NMS");
  add_common(train, train_args);
  auto* distill = app.add_subcommand("distill", "train a student against a frozen teacher (distill.mode, distill.teacher)");
  add_common(distill, distill_args);
  auto* eval = app.add_subcommand("eval", "evaluate eval.checkpoint on the eval split");
  add_common(eval, eval_args);
  auto* ablate = app.add_subcommand("ablate", "train one model per ablate.values entry of ablate.sweep and tabulate");
  add_common(ablate, ablate_args);
  auto* verify = app.add_subcommand("verify", "run the oracle suites (matching, gradients, invariance, IoU, formats)");
  add_common(verify, verify_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*gen) {
      const auto config = resolve(gen_args);
      const auto report = odgcnn::run_gen_data(config, gen_args.out);
      for (const auto& line : report.extra) std::cout << line << '\n';
    } else if (*train) {
      const auto config = resolve(train_args);
      if (!train_args.quiet) odgcnn::set_progress_stream(&std::cerr);
      print_summary(odgcnn::run_train(config, train_args.out));
    } else if (*distill) {
      const auto config = resolve(distill_args);
      if (!distill_args.quiet) odgcnn::set_progress_stream(&std::cerr);
      print_summary(odgcnn::run_distill(config, distill_args.out));
    } else if (*eval) {
      print_summary(odgcnn::run_eval(resolve(eval_args), eval_args.out));
    } else if (*ablate) {
      const auto config = resolve(ablate_args);
      if (!ablate_args.quiet) odgcnn::set_progress_stream(&std::cerr);
      const auto rows = odgcnn::run_ablate(config, ablate_args.out);
      odgcnn::write_ablation_csv(std::cout, config.ablate.sweep, rows);
    } else if (*verify) {
      const auto config = resolve(verify_args);
      std::filesystem::create_directories(verify_args.out);
      std::ofstream report(std::filesystem::path(verify_args.out) / "report.txt");
      bool all = true;
      for (const auto& check : odgcnn::verify::run_all(config.train.seed)) {
        all = all && check.pass;
        std::printf("%s %s: %s (%.2fs)\n", check.pass ? "PASS" : "FAIL", check.name.c_str(), check.detail.c_str(), check.seconds);
        report << check.name << ".pass=" << (check.pass ? "true" : "false") << '\n';
        report << check.name << ".detail=" << check.detail << '\n';
      }
      std::ofstream(std::filesystem::path(verify_args.out) / "config.echo") << odgcnn::config_echo(config);
      if (!all) return fail("verify", "one or more oracle suites failed", 5);
    }
  } catch (const odgcnn::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const odgcnn::ModelError& e) {
    return fail("model", e.what(), 3);
  } catch (const odgcnn::TrainingError& e) {
    return fail("training", e.what(), 4);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what(), 6);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}
