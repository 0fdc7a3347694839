#include "odgcnn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace odgcnn {

std::string to_string(HeadKind v) { return v == HeadKind::set ? "set" : "dense"; }

std::string to_string(DistillMode v) {
  switch (v) {
    case DistillMode::none: return "none";
    case DistillMode::set: return "set";
    case DistillMode::feature: return "feature";
    case DistillMode::pseudo: return "pseudo";
    case DistillMode::self: return "self";
  }
  return "none";
}

std::string to_string(InputDensity v) {
  switch (v) {
    case InputDensity::plain: return "plain";
    case InputDensity::dense: return "dense";
    case InputDensity::sparse: return "sparse";
  }
  return "plain";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("bad value '" + value + "' for " + key + " (expected " + expected + ")");
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v, "non-negative integer");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v, "unsigned 64-bit integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v, "real number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true|false");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_size(key, s));
  if (out.empty()) bad_value(key, v, "comma-separated integers");
  return out;
}

InputDensity to_density(const std::string& key, const std::string& v) {
  if (v == "plain") return InputDensity::plain;
  if (v == "dense") return InputDensity::dense;
  if (v == "sparse") return InputDensity::sparse;
  bad_value(key, v, "plain|dense|sparse");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, std::string>) {
      out += items[i];
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define ODG_SIZE(k, member) \
  Field{k, [](RunConfig& c, const std::string& v) { c.member = to_size(k, v); }, [](const RunConfig& c) { return std::to_string(c.member); }}
#define ODG_REAL(k, member) \
  Field{k, [](RunConfig& c, const std::string& v) { c.member = to_double(k, v); }, [](const RunConfig& c) { return fmt(c.member); }}
#define ODG_BOOL(k, member)                                                              \
  Field{k, [](RunConfig& c, const std::string& v) { c.member = to_bool(k, v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define ODG_PATH(k, member) \
  Field{k, [](RunConfig& c, const std::string& v) { c.member = v; }, [](const RunConfig& c) { return c.member.string(); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"head",
            [](RunConfig& c, const std::string& v) {
              if (v == "set") c.head = HeadKind::set;
              else if (v == "dense") c.head = HeadKind::dense;
              else bad_value("head", v, "set|dense");
            },
            [](const RunConfig& c) { return to_string(c.head); }},
      Field{"grid.size",
            [](RunConfig& c, const std::string& v) { c.set_grid(to_size("grid.size", v), c.bev.grid.cell); },
            [](const RunConfig& c) { return std::to_string(c.bev.grid.width); }},
      Field{"grid.cell",
            [](RunConfig& c, const std::string& v) { c.set_grid(c.bev.grid.width, to_double("grid.cell", v)); },
            [](const RunConfig& c) { return fmt(c.bev.grid.cell); }},
      ODG_SIZE("bev.pointnet_hidden", bev.pointnet_hidden),
      ODG_SIZE("bev.pointnet_out", bev.pointnet_out),
      Field{"bev.conv_channels",
            [](RunConfig& c, const std::string& v) { c.bev.conv_channels = to_size_list("bev.conv_channels", v); },
            [](const RunConfig& c) { return join(c.bev.conv_channels); }},
      Field{"bev.conv_strides",
            [](RunConfig& c, const std::string& v) { c.bev.conv_strides = to_size_list("bev.conv_strides", v); },
            [](const RunConfig& c) { return join(c.bev.conv_strides); }},
      ODG_SIZE("model.num_queries", dgcnn.num_queries),
      ODG_SIZE("model.query_dim", dgcnn.query_dim),
      ODG_SIZE("model.num_layers", dgcnn.num_layers),
      ODG_SIZE("model.neighbors", dgcnn.neighbors),
      ODG_SIZE("model.num_offsets", dgcnn.num_offsets),
      ODG_SIZE("model.edge_hidden", dgcnn.edge_hidden),
      ODG_SIZE("model.interactions_per_layer", dgcnn.interactions_per_layer),
      Field{"model.interaction",
            [](RunConfig& c, const std::string& v) {
              try {
                c.dgcnn.interaction = parse_interaction(v);
              } catch (const std::exception&) {
                bad_value("model.interaction", v, "dgcnn|self-attention");
              }
            },
            [](const RunConfig& c) { return to_string(c.dgcnn.interaction); }},
      ODG_SIZE("model.attention_heads", dgcnn.attention_heads),
      ODG_BOOL("model.edge_difference", dgcnn.edge_difference),
      Field{"model.indicator",
            [](RunConfig& c, const std::string& v) {
              if (v == "detr") c.indicator = IndicatorMode::detr;
              else if (v == "literal") c.indicator = IndicatorMode::literal;
              else bad_value("model.indicator", v, "detr|literal");
            },
            [](const RunConfig& c) { return std::string(c.indicator == IndicatorMode::detr ? "detr" : "literal"); }},
      ODG_SIZE("dense.hidden", dense.hidden),
      ODG_REAL("dense.negative_weight", dense.negative_weight),
      Field{"data.seed", [](RunConfig& c, const std::string& v) { c.data.data_seed = to_u64("data.seed", v); },
            [](const RunConfig& c) { return std::to_string(c.data.data_seed); }},
      ODG_SIZE("data.train_scenes", data.train_scenes),
      ODG_SIZE("data.eval_scenes", data.eval_scenes),
      ODG_PATH("data.dir", data.data_dir),
      ODG_SIZE("data.dense_factor", data.dense_factor),
      ODG_REAL("data.sparse_keep", data.sparse_keep),
      ODG_REAL("scene.half_extent", data.scene.half_extent),
      ODG_SIZE("scene.min_objects", data.scene.min_objects),
      ODG_SIZE("scene.max_objects", data.scene.max_objects),
      ODG_SIZE("scene.min_points_per_object", data.scene.min_points_per_object),
      ODG_SIZE("scene.max_points_per_object", data.scene.max_points_per_object),
      ODG_SIZE("scene.clutter_points", data.scene.clutter_points),
      ODG_REAL("scene.max_speed", data.scene.max_speed),
      ODG_REAL("scene.size_jitter", data.scene.size_jitter),
      ODG_REAL("scene.noise_sigma", data.scene.noise_sigma),
      Field{"train.seed", [](RunConfig& c, const std::string& v) { c.train.seed = to_u64("train.seed", v); },
            [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      ODG_SIZE("train.epochs", train.epochs),
      ODG_SIZE("train.batch_size", train.batch_size),
      ODG_REAL("train.lr_initial", train.lr.lr_initial),
      ODG_REAL("train.lr_peak", train.lr.lr_peak),
      ODG_REAL("train.lr_final", train.lr.lr_final),
      ODG_REAL("train.warmup_fraction", train.lr.warmup_fraction),
      ODG_REAL("train.weight_decay", train.adamw.weight_decay),
      Field{"train.input", [](RunConfig& c, const std::string& v) { c.train.input = to_density("train.input", v); },
            [](const RunConfig& c) { return to_string(c.train.input); }},
      Field{"distill.mode",
            [](RunConfig& c, const std::string& v) {
              if (v == "none") c.distill.mode = DistillMode::none;
              else if (v == "set") c.distill.mode = DistillMode::set;
              else if (v == "feature") c.distill.mode = DistillMode::feature;
              else if (v == "pseudo") c.distill.mode = DistillMode::pseudo;
              else if (v == "self") c.distill.mode = DistillMode::self;
              else bad_value("distill.mode", v, "none|set|feature|pseudo|self");
            },
            [](const RunConfig& c) { return to_string(c.distill.mode); }},
      ODG_PATH("distill.teacher", distill.teacher),
      Field{"distill.teacher_input",
            [](RunConfig& c, const std::string& v) { c.distill.teacher_input = to_density("distill.teacher_input", v); },
            [](const RunConfig& c) { return to_string(c.distill.teacher_input); }},
      ODG_REAL("distill.alpha", distill.alpha),
      ODG_REAL("distill.beta", distill.beta),
      ODG_BOOL("distill.mask_no_object", distill.mask_no_object),
      ODG_REAL("distill.pseudo_fraction", distill.pseudo_fraction),
      ODG_REAL("distill.pseudo_threshold", distill.pseudo_threshold),
      ODG_BOOL("distill.init_from_teacher", distill.init_from_teacher),
      ODG_SIZE("eval.top_k", eval.top_k),
      ODG_REAL("eval.nms_threshold", eval.nms_threshold),
      ODG_REAL("eval.score_floor", eval.score_floor),
      ODG_PATH("eval.checkpoint", eval.checkpoint),
      Field{"ablate.sweep", [](RunConfig& c, const std::string& v) { c.ablate.sweep = v; },
            [](const RunConfig& c) { return c.ablate.sweep; }},
      Field{"ablate.values", [](RunConfig& c, const std::string& v) { c.ablate.values = split_list(v); },
            [](const RunConfig& c) { return join(c.ablate.values); }},
  };
  return table;
}

#undef ODG_SIZE
#undef ODG_REAL
#undef ODG_BOOL
#undef ODG_PATH

}  // namespace

void RunConfig::set_grid(std::size_t size, double cell) {
  bev.grid.width = bev.grid.height = size;
  bev.grid.cell = cell;
  bev.grid.x_min = bev.grid.y_min = -0.5 * cell * static_cast<double>(size);
}

void RunConfig::validate() const {
  try {
    bev.grid.validate();
    (void)bev.out_spec();
    data.scene.validate();
    dgcnn.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (bev.conv_channels.size() != bev.conv_strides.size())
    throw ConfigError("bev.conv_channels and bev.conv_strides differ in length");
  if (dgcnn.num_classes != data.scene.num_classes())
    throw ConfigError("model class count " + std::to_string(dgcnn.num_classes) + " differs from scene class count " +
                      std::to_string(data.scene.num_classes()));
  if (dense.num_classes != data.scene.num_classes()) throw ConfigError("dense class count differs from scene class count");
  if (data.scene.max_objects > dgcnn.num_queries)
    throw ConfigError("scene.max_objects " + std::to_string(data.scene.max_objects) + " exceeds model.num_queries " +
                      std::to_string(dgcnn.num_queries));
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (data.dense_factor == 0) throw ConfigError("data.dense_factor must be >= 1");
  if (!(data.sparse_keep > 0.0 && data.sparse_keep <= 1.0)) throw ConfigError("data.sparse_keep must lie in (0, 1]");
  if (!(distill.pseudo_fraction >= 0.0 && distill.pseudo_fraction <= 1.0))
    throw ConfigError("distill.pseudo_fraction must lie in [0, 1]");
  const auto& lr = train.lr;
  const bool frozen = lr.lr_initial == 0 && lr.lr_peak == 0 && lr.lr_final == 0;
  if (!frozen && !(lr.lr_initial > 0 && lr.lr_peak > 0 && lr.lr_final > 0))
    throw ConfigError("learning rates must all be positive (or all zero to freeze the weights)");
  if (eval.top_k == 0) throw ConfigError("eval.top_k must be >= 1");
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key=value");
    try {
      apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return parse_config(in, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const Field& f : fields()) out << f.key << '=' << f.get(config) << '\n';
}

std::string config_echo(const RunConfig& config) {
  std::ostringstream out;
  write_config(out, config);
  return out.str();
}

}  // namespace odgcnn
