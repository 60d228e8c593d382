#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "waverora/cli.hpp"
#include "waverora/error.hpp"

namespace waverora::cli {
namespace {

const std::map<std::string, std::string, std::less<>> kAliases = {
    {"L", "lookback"}, {"H", "horizon"}, {"M", "variables"}, {"J", "levels"},
    {"D", "embed_dim"}, {"N", "encoder_layers"}, {"r", "routes"}, {"lr", "learning_rate"},
    {"epochs", "max_epochs"}, {"batch", "batch_size"}, {"out", "out_dir"},
};

const std::set<std::string, std::less<>> kTrainKeys = {"learning_rate", "batch_size", "max_epochs", "patience",
                                                       "seed",          "clip_norm",  "max_steps"};
const std::set<std::string, std::less<>> kTopKeys = {"dataset", "registry", "split", "out_dir", "raw_metrics"};

nlohmann::json train_to_json(const trainer::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size}, {"max_epochs", t.max_epochs},
          {"patience", t.patience},           {"seed", t.seed},             {"clip_norm", t.clip_norm},
          {"max_steps", t.max_steps}};
}

void train_from_json(const nlohmann::json& j, trainer::TrainConfig& t) {
  for (const auto& [key, _] : j.items()) {
    if (!kTrainKeys.contains(key)) throw ConfigError("unknown train config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("learning_rate", t.learning_rate);
  get("batch_size", t.batch_size);
  get("max_epochs", t.max_epochs);
  get("patience", t.patience);
  get("seed", t.seed);
  get("clip_norm", t.clip_norm);
  get("max_steps", t.max_steps);
}

data::SplitSpec split_from_json(const nlohmann::json& j) {
  std::vector<double> f;
  if (j.is_string()) {
    std::string text = j.get<std::string>();
    for (char& c : text) {
      if (c == ',') c = ' ';
    }
    std::istringstream in(text);
    for (double x; in >> x;) f.push_back(x);
  } else {
    f = j.get<std::vector<double>>();
  }
  if (f.size() != 3) throw ConfigError("split: expected three fractions (train, val, test)");
  return {f[0], f[1], f[2]};
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["model"] = model.to_json();
  j["train"] = train_to_json(train);
  j["dataset"] = dataset;
  j["registry"] = registry ? nlohmann::json(registry->string()) : nlohmann::json(nullptr);
  j["split"] = split ? nlohmann::json({split->train, split->val, split->test}) : nlohmann::json(nullptr);
  j["out_dir"] = out_dir.string();
  j["raw_metrics"] = raw_metrics;
  return j;
}

void RunConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model") {
        if (!value.is_object()) throw ConfigError("run config: 'model' must be an object");
        nlohmann::json merged = model.to_json();
        merged.update(value);
        model = model::ModelConfig::from_json(merged);
        for (const auto& [k, _] : value.items()) explicit_model_keys.insert(k);
      } else if (key == "train") {
        if (!value.is_object()) throw ConfigError("run config: 'train' must be an object");
        train_from_json(value, train);
      } else if (key == "dataset") {
        dataset = value.get<std::string>();
      } else if (key == "registry") {
        if (value.is_null()) {
          registry.reset();
        } else {
          registry = value.get<std::string>();
        }
      } else if (key == "split") {
        if (value.is_null()) {
          split.reset();
        } else {
          split = split_from_json(value);
        }
      } else if (key == "out_dir") {
        out_dir = value.get<std::string>();
      } else if (key == "raw_metrics") {
        raw_metrics = value.get<bool>();
      } else {
        throw ConfigError("unknown run config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

void RunConfig::apply_set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + std::string(assignment) + "'");
  }
  std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  if (auto it = kAliases.find(key); it != kAliases.end()) key = it->second;

  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  static const model::ModelConfig defaults;
  nlohmann::json patch;
  if (defaults.to_json().contains(key)) {
    patch["model"][key] = value;
  } else if (kTrainKeys.contains(key)) {
    patch["train"][key] = value;
  } else if (kTopKeys.contains(key)) {
    if (key == "split" && value.is_number()) value = text;
    if ((key == "dataset" || key == "registry" || key == "out_dir") && !value.is_string()) value = text;
    patch[key] = value;
  } else {
    throw ConfigError("--set: unknown key '" + key + "'");
  }
  merge_json(patch);
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (split) split->validate();
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

PreparedData prepare_data(RunConfig& run, std::ostream& log) {
  if (run.dataset.empty()) throw ConfigError("dataset: no dataset given (use --data or --set dataset=...)");
  data::DatasetLocation loc;
  const std::filesystem::path as_path(run.dataset);
  if (as_path.extension() == ".csv" && std::filesystem::is_regular_file(as_path)) {
    loc.name = as_path.stem().string();
    loc.path = as_path;
  } else {
    loc = data::resolve_dataset(run.dataset, run.registry);
  }

  PreparedData prepared;
  prepared.raw = data::load_csv(loc.path, loc.name);
  data::check_known(prepared.raw);
  for (const auto& w : prepared.raw.warnings) log << "warning: " << w << '\n';

  const std::size_t vars = prepared.raw.variables();
  if (run.model.variables == 0) {
    run.model.variables = vars;
  } else if (run.model.variables != vars) {
    throw ConfigError("variables: config has M=" + std::to_string(run.model.variables) + " but " + loc.name +
                      " has " + std::to_string(vars) + " columns");
  }
  if (!run.split) run.split = loc.split ? *loc.split : data::SplitSpec::defaults_for(loc.name);
  run.validate();

  prepared.ranges = data::split(prepared.raw.steps(), *run.split, run.model.lookback, run.model.horizon);
  auto [scaled, stats] = data::standardize(prepared.raw, prepared.ranges.train);
  for (std::size_t i = prepared.raw.warnings.size(); i < scaled.warnings.size(); ++i) {
    log << "warning: " << scaled.warnings[i] << '\n';
  }
  prepared.scaled = std::move(scaled);
  prepared.stats = std::move(stats);
  return prepared;
}

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const CompatibilityError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace waverora::cli
