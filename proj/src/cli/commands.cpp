#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "waverora/checkpoint.hpp"
#include "waverora/cli.hpp"
#include "waverora/error.hpp"
#include "waverora/ops.hpp"
#include "waverora/wavelet.hpp"

namespace waverora::cli {
namespace {

using Row = std::vector<std::string>;

std::string fixed(double x, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

std::string full(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

void print_table(std::ostream& out, const Row& header, const std::vector<Row>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const Row& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const Row& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      out << (c == 0 ? "" : "  ") << std::setw(static_cast<int>(width[c])) << (c == 0 ? std::left : std::right)
          << r[c];
    }
    out << std::right << '\n';
  };
  line(header);
  for (const Row& r : rows) line(r);
}

void write_csv(const std::filesystem::path& path, const Row& header, const std::vector<Row>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  auto line = [&](const Row& r) {
    for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << r[c];
    out << '\n';
  };
  line(header);
  for (const Row& r : rows) line(r);
}

trainer::MetricsReport evaluate_range(const model::WaveRoRAModel& model, const PreparedData& prepared,
                                      data::Range range, bool raw) {
  const data::WindowSpec spec{model.config().lookback, model.config().horizon, 1};
  if (!raw) return trainer::evaluate(model, data::WindowSampler(prepared.scaled.values, range, spec));
  const data::Standardizer& s = prepared.stats;
  auto forecast = [&](const Tensor& window) {
    Tensor y = model.forecast(s.apply(window));
    for (std::size_t t = 0; t < y.rows(); ++t) {
      for (std::size_t m = 0; m < y.cols(); ++m) y(t, m) = y(t, m) * s.stdev[m] + s.mean[m];
    }
    return y;
  };
  return trainer::evaluate(forecast, data::WindowSampler(prepared.raw.values, range, spec));
}

trainer::TrainResult fit(const model::ModelConfig& cfg, const RunConfig& run, const PreparedData& prepared,
                         std::ostream& out, const std::string& tag) {
  const data::WindowSpec spec{cfg.lookback, cfg.horizon, 1};
  const data::WindowSampler train(prepared.scaled.values, prepared.ranges.train, spec);
  const data::WindowSampler val(prepared.scaled.values, prepared.ranges.val, spec);
  model::WaveRoRAModel model(cfg, run.train.seed);
  out << tag << "parameters=" << model.parameter_count() << " train_windows=" << train.size()
      << " val_windows=" << val.size() << '\n';
  return trainer::train(std::move(model), train, &val, run.train, [&](const trainer::EpochRecord& r) {
    out << tag << "epoch " << r.epoch << "  train_loss " << fixed(r.train_loss, 6) << "  val_mse "
        << fixed(r.val_mse, 6) << "  val_mae " << fixed(r.val_mae, 6) << "  (" << fixed(r.seconds, 1) << " s)\n";
  });
}

}  // namespace

int cmd_train(RunConfig run, std::ostream& out) {
  const PreparedData prepared = prepare_data(run, out);
  std::filesystem::create_directories(run.out_dir);
  write_json_file(run.out_dir / "config.json", run.to_json());

  trainer::TrainResult result = fit(run.model, run, prepared, out, "");
  const trainer::MetricsReport test = evaluate_range(result.best, prepared, prepared.ranges.test, run.raw_metrics);

  checkpoint::save(run.out_dir / "checkpoint.wrr", result.best,
                   {{"dataset", prepared.raw.name},
                    {"best_epoch", result.best_epoch},
                    {"steps", result.steps},
                    {"seed", run.train.seed}});
  trainer::write_history_csv(run.out_dir / "history.csv", result.history);
  out << "best epoch " << result.best_epoch << (result.stopped_early ? " (early stop)" : "") << "; test mse "
      << fixed(test.mse) << ", mae " << fixed(test.mae) << " over " << test.windows << " windows\n";
  out << "wrote " << (run.out_dir / "checkpoint.wrr").string() << '\n';
  return 0;
}

int cmd_eval(RunConfig run, const std::vector<std::filesystem::path>& checkpoints, std::ostream& out) {
  if (checkpoints.empty()) throw ConfigError("eval: at least one --checkpoint is required");
  std::vector<checkpoint::Loaded> loaded;
  for (const auto& path : checkpoints) loaded.push_back(checkpoint::load(path));

  // Keys not set on the command line or in a config file come from the first checkpoint;
  // the data split needs the shortest horizon to hold.
  const nlohmann::json given = run.model.to_json();
  nlohmann::json merged = loaded.front().model.config().to_json();
  for (const std::string& k : run.explicit_model_keys) merged[k] = given[k];
  if (!run.explicit_model_keys.contains("variables")) merged["variables"] = run.model.variables;
  if (!run.explicit_model_keys.contains("horizon")) {
    std::size_t shortest = loaded.front().model.config().horizon;
    for (const auto& l : loaded) shortest = std::min(shortest, l.model.config().horizon);
    merged["horizon"] = shortest;
  }
  run.model = model::ModelConfig::from_json(merged);
  const PreparedData prepared = prepare_data(run, out);
  std::filesystem::create_directories(run.out_dir);
  write_json_file(run.out_dir / "config.json", run.to_json());

  std::vector<std::string> fields = {"variables", "lookback"};
  for (const std::string& k : run.explicit_model_keys) {
    if (k != "dropout" && k != "loss_domain" && std::find(fields.begin(), fields.end(), k) == fields.end()) {
      fields.push_back(k);
    }
  }

  const Row header = {"dataset", "H", "MSE", "MAE", "windows", "checkpoint"};
  std::vector<Row> rows;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const auto& path = checkpoints[i];
    const model::WaveRoRAModel& net = loaded[i].model;
    checkpoint::check_compatible(run.model, net.config(), fields);
    const std::size_t horizon = net.config().horizon;
    const data::SplitRanges ranges = data::split(prepared.raw.steps(), *run.split, run.model.lookback, horizon);
    const trainer::MetricsReport m = evaluate_range(net, prepared, ranges.test, run.raw_metrics);
    rows.push_back({prepared.raw.name, std::to_string(horizon), fixed(m.mse), fixed(m.mae), std::to_string(m.windows),
                    path.string()});
  }
  print_table(out, header, rows);
  write_csv(run.out_dir / "metrics.csv", header, rows);
  std::ofstream text(run.out_dir / "metrics.txt");
  print_table(text, header, rows);
  return 0;
}

EnergyTable energy_table(const wavelet::CoefficientPyramid& pyramid, std::size_t segments) {
  if (segments == 0) throw ConfigError("segments must be positive");
  const std::vector<Tensor> comps = pyramid.components();
  const std::size_t vars = comps.front().rows();
  EnergyTable table(vars, std::vector<std::vector<double>>(comps.size(), std::vector<double>(segments, 0.0)));
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const std::size_t len = comps[c].cols();
    for (std::size_t m = 0; m < vars; ++m) {
      for (std::size_t n = 0; n < len; ++n) {
        // Coefficient n sits at relative time n/len within the signal.
        const std::size_t s = std::min(segments - 1, n * segments / len);
        table[m][c][s] += comps[c](m, n) * comps[c](m, n);
      }
    }
  }
  return table;
}

int cmd_decompose(const DecomposeOptions& opts, std::ostream& out) {
  const wavelet::FilterBank fb = wavelet::make_filter_bank(opts.basis);
  if (opts.levels < 1) throw ConfigError("levels: J >= 1 required");
  if (opts.segments < 1) throw ConfigError("segments must be positive");
  const data::SeriesDataset ds = data::load_csv(opts.input);
  for (const auto& w : ds.warnings) out << "warning: " << w << '\n';
  const wavelet::CoefficientPyramid pyramid = wavelet::dwt(ops::transpose(ds.values), fb, opts.levels);

  std::filesystem::create_directories(opts.out_dir);
  write_json_file(opts.out_dir / "config.json", {{"command", "decompose"},
                                                 {"input", opts.input.string()},
                                                 {"basis", opts.basis},
                                                 {"levels", opts.levels},
                                                 {"segments", opts.segments},
                                                 {"out_dir", opts.out_dir.string()}});

  const std::vector<Tensor> comps = pyramid.components();
  std::vector<std::string> names;
  for (std::size_t j = 1; j <= opts.levels; ++j) names.push_back("high_" + std::to_string(j));
  names.push_back("low_" + std::to_string(opts.levels));

  nlohmann::json sidecar = {{"input", opts.input.string()},
                            {"basis", fb.name},
                            {"support", fb.support()},
                            {"levels", opts.levels},
                            {"base_length", pyramid.schedule.base_length},
                            {"schedule", pyramid.schedule.per_level},
                            {"variables", ds.variable_names},
                            {"boundary", "half-sample symmetric"},
                            {"components", nlohmann::json::array()}};
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const std::string file = names[c] + ".csv";
    std::ofstream csv(opts.out_dir / file);
    csv.precision(17);
    for (std::size_t m = 0; m < ds.variable_names.size(); ++m) csv << (m ? "," : "") << ds.variable_names[m];
    csv << '\n';
    for (std::size_t n = 0; n < comps[c].cols(); ++n) {
      for (std::size_t m = 0; m < comps[c].rows(); ++m) csv << (m ? "," : "") << comps[c](m, n);
      csv << '\n';
    }
    sidecar["components"].push_back({{"name", names[c]},
                                      {"file", file},
                                      {"level", std::min(c + 1, opts.levels)},
                                      {"kind", c < opts.levels ? "high" : "low"},
                                      {"length", comps[c].cols()}});
  }
  write_json_file(opts.out_dir / "decomposition.json", sidecar);

  const EnergyTable energy = energy_table(pyramid, opts.segments);
  const Row header = {"variable", "component", "segment", "energy", "share"};
  std::vector<Row> rows;
  for (std::size_t m = 0; m < energy.size(); ++m) {
    for (std::size_t c = 0; c < comps.size(); ++c) {
      double total = 0.0;
      for (double e : energy[m][c]) total += e;
      for (std::size_t s = 0; s < opts.segments; ++s) {
        const double share = total > 0.0 ? energy[m][c][s] / total : 0.0;
        rows.push_back({ds.variable_names[m], names[c], std::to_string(s), full(energy[m][c][s]), full(share)});
      }
    }
  }
  write_csv(opts.out_dir / "energy.csv", header, rows);

  out << ds.variable_names.size() << " variable(s), length " << pyramid.schedule.base_length << ", " << fb.name
      << " J=" << opts.levels << " schedule [";
  for (std::size_t j = 0; j < pyramid.schedule.per_level.size(); ++j) {
    out << (j ? "," : "") << pyramid.schedule.per_level[j];
  }
  out << "]\n";
  std::vector<Row> shown;
  for (const Row& r : rows) shown.push_back({r[0], r[1], r[2], fixed(std::stod(r[3]), 6), fixed(std::stod(r[4]), 4)});
  print_table(out, header, shown);
  return 0;
}

model::ModelConfig ablation_config(model::ModelConfig base, std::string_view variant) {
  if (variant == "full") return base;
  if (variant == "sa") {
    base.attention = attention::Kind::softmax;
  } else if (variant == "la") {
    base.attention = attention::Kind::linear;
  } else if (variant == "no_ro") {
    base.rotary = false;
  } else if (variant == "no_gate") {
    base.gate = false;
  } else if (variant == "no_skip") {
    base.skip = false;
  } else {
    throw ConfigError("unknown ablation variant '" + std::string(variant) +
                      "'; expected sa, la, no_ro, no_gate, no_skip or full");
  }
  return base;
}

int cmd_ablate(RunConfig run, const std::vector<std::string>& variants, std::ostream& out) {
  const std::vector<std::string>& chosen = variants.empty() ? ablation_variants() : variants;
  for (const auto& v : chosen) ablation_config(run.model, v);
  const PreparedData prepared = prepare_data(run, out);
  std::filesystem::create_directories(run.out_dir);
  nlohmann::json resolved = run.to_json();
  resolved["variants"] = chosen;
  write_json_file(run.out_dir / "config.json", resolved);

  const bool etth2 = data::find_known(prepared.raw.name) && prepared.raw.name == "ETTh2";
  const Row header = {"variant", "MSE", "MAE", "best_epoch", "seed", "reference (ETTh2 avg)"};
  std::vector<Row> rows;
  for (const auto& v : chosen) {
    const model::ModelConfig cfg = ablation_config(run.model, v);
    cfg.validate();
    trainer::TrainResult result = fit(cfg, run, prepared, out, "[" + v + "] ");
    const trainer::MetricsReport m = evaluate_range(result.best, prepared, prepared.ranges.test, run.raw_metrics);
    const std::string reference = (v == "full" && etth2) ? "0.359 / 0.393" : "-";
    rows.push_back({v, fixed(m.mse), fixed(m.mae), std::to_string(result.best_epoch),
                    std::to_string(run.train.seed), reference});
  }
  out << "dataset " << prepared.raw.name << ", H=" << run.model.horizon << '\n';
  print_table(out, header, rows);
  write_csv(run.out_dir / "ablation.csv", header, rows);
  std::ofstream text(run.out_dir / "ablation.txt");
  print_table(text, header, rows);
  return 0;
}

}  // namespace waverora::cli
