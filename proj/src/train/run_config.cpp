#include "mixerflow/train/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <class E>
E to_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(key + ": expected one of " + names + ", got '" + v + "'");
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MF_SIZE(name, member)                                                                   \
  Field {                                                                                       \
    name, [](RunConfig& c, const std::string& v) { c.member = to_u64(name, v); },               \
        [](const RunConfig& c) { return std::to_string(c.member); }                             \
  }
#define MF_DOUBLE(name, member)                                                                 \
  Field {                                                                                       \
    name, [](RunConfig& c, const std::string& v) { c.member = to_double(name, v); },            \
        [](const RunConfig& c) { return format_double(c.member); }                              \
  }
#define MF_BOOL(name, member)                                                                   \
  Field {                                                                                       \
    name, [](RunConfig& c, const std::string& v) { c.member = to_bool(name, v); },              \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MF_SIZE("height", model.geometry.height),
      MF_SIZE("width", model.geometry.width),
      MF_SIZE("channels", model.geometry.channels),
      MF_SIZE("patch_h", model.geometry.patch_h),
      MF_SIZE("patch_w", model.geometry.patch_w),
      MF_SIZE("n_layers", model.n_layers),
      MF_SIZE("flows_per_stage", model.flows_per_stage),
      MF_SIZE("hidden_dim", model.hidden_dim),
      MF_SIZE("patch_hidden_dim", model.patch_hidden_dim),
      MF_SIZE("shift_every", model.shift_every),
      MF_SIZE("shift_h", model.shift_h),
      MF_SIZE("shift_w", model.shift_w),
      Field{"linear_mode",
            [](RunConfig& c, const std::string& v) {
              c.model.linear_mode = to_enum<LinearMode>("linear_mode", v, {{"lu", LinearMode::lu}, {"rlu", LinearMode::rlu}});
            },
            [](const RunConfig& c) { return std::string(to_string(c.model.linear_mode)); }},
      Field{"coupling_kind",
            [](RunConfig& c, const std::string& v) {
              c.model.coupling_kind = to_enum<CouplingKind>(
                  "coupling_kind", v, {{"mlp_affine", CouplingKind::mlp_affine}, {"maf", CouplingKind::maf}});
            },
            [](const RunConfig& c) { return std::string(to_string(c.model.coupling_kind)); }},
      Field{"scale_law",
            [](RunConfig& c, const std::string& v) {
              c.model.scale_law = to_enum<ScaleLaw>("scale_law", v, {{"exp", ScaleLaw::exp}, {"bounded", ScaleLaw::bounded}});
            },
            [](const RunConfig& c) { return std::string(to_string(c.model.scale_law)); }},
      MF_BOOL("linear_blocks", model.enable_linear_blocks),
      MF_BOOL("shift_layers", model.enable_shift_layers),
      MF_BOOL("couplings", model.enable_couplings),
      MF_BOOL("conditioner_norm", model.conditioner_norm),
      Field{"gelu",
            [](RunConfig& c, const std::string& v) {
              c.model.gelu = to_enum<GeluKind>("gelu", v, {{"exact", GeluKind::exact}, {"tanh", GeluKind::tanh}});
            },
            [](const RunConfig& c) { return std::string(to_string(c.model.gelu)); }},
      Field{"made_degrees",
            [](RunConfig& c, const std::string& v) {
              c.model.made_degrees = to_enum<DegreeAssignment>(
                  "made_degrees", v, {{"random", DegreeAssignment::random}, {"sequential", DegreeAssignment::sequential}});
            },
            [](const RunConfig& c) { return std::string(to_string(c.model.made_degrees)); }},
      Field{"dequant_levels",
            [](RunConfig& c, const std::string& v) {
              const auto n = to_u64("dequant_levels", v);
              if (n > 65536) throw ConfigError("dequant_levels: at most 65536");
              c.model.dequant_levels = static_cast<int>(n);
            },
            [](const RunConfig& c) { return std::to_string(c.model.dequant_levels); }},
      MF_DOUBLE("actnorm_min_std", model.actnorm_min_std),
      MF_SIZE("seed", model.seed),
      Field{"dataset", [](RunConfig& c, const std::string& v) { c.dataset = parse_dataset_kind(v); },
            [](const RunConfig& c) { return to_string(c.dataset); }},
      Field{"data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
            [](const RunConfig& c) { return c.data_dir; }},
      MF_SIZE("image_size", image_size),
      MF_SIZE("split_seed", split_seed),
      MF_SIZE("batch_size", batch_size),
      MF_SIZE("steps", steps),
      MF_DOUBLE("lr", lr),
      MF_DOUBLE("lr_min", lr_min),
      MF_DOUBLE("grad_clip", grad_clip),
      Field{"shuffle", [](RunConfig& c, const std::string& v) { c.shuffle = parse_shuffle_kind(v); },
            [](const RunConfig& c) { return to_string(c.shuffle); }},
      MF_SIZE("shuffle_seed", shuffle_seed),
      Field{"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
            [](const RunConfig& c) { return c.out_dir; }},
      MF_SIZE("log_every", log_every),
      MF_SIZE("checkpoint_every", checkpoint_every),
      MF_SIZE("eval_samples", eval_samples),
      MF_SIZE("eval_seed", eval_seed),
  };
  return table;
}

#undef MF_SIZE
#undef MF_DOUBLE
#undef MF_BOOL

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void RunConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(lr_min >= 0.0 && lr_min <= lr)) throw ConfigError("lr_min must lie in [0, lr]");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (log_every == 0) throw ConfigError("log_every must be positive");
  if (dataset == DatasetKind::mnist && (model.geometry.height != 28 || model.geometry.width != 28 || model.geometry.channels != 1))
    throw ConfigError("mnist images are 28x28x1");
  if (dataset == DatasetKind::cifar10 && (model.geometry.height != 32 || model.geometry.width != 32 || model.geometry.channels != 3))
    throw ConfigError("cifar10 images are 32x32x3");
  if (dataset == DatasetKind::image_dir && (model.geometry.height != image_size || model.geometry.width != image_size))
    throw ConfigError("image_dir datasets are image_size x image_size");
}

void set_run_option(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      set_run_option(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> run_config_entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : run_config_entries(config)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace mixerflow
