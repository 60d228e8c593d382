// Acceptance suite: one line per criterion, nonzero exit only on a failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "waverora/attention.hpp"
#include "waverora/cli.hpp"
#include "waverora/error.hpp"
#include "waverora/grad_check.hpp"
#include "waverora/model.hpp"
#include "waverora/ops.hpp"
#include "waverora/trainer.hpp"
#include "waverora/wavelet.hpp"

namespace fs = std::filesystem;
using namespace waverora;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::pass : Status::fail, std::move(detail)}; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double max_abs(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Outcome perfect_reconstruction() {
  Rng rng(101);
  double worst = 0;
  std::size_t cases = 0;
  for (const std::string& basis : {"haar", "sym3", "coif3", "db4"}) {
    const wavelet::FilterBank fb = wavelet::make_filter_bank(basis);
    for (std::size_t j = 1; j <= 4; ++j) {
      for (std::size_t len : {16, 27, 96}) {
        for (int k = 0; k < 20; ++k) {
          const Tensor x = rng.normal_tensor({1, len}, 0, 1);
          worst = std::max(worst, max_abs(wavelet::idwt(wavelet::dwt(x, fb, j), fb, len), x));
          ++cases;
        }
      }
    }
  }
  return verdict(worst < 1e-8, std::to_string(cases) + " signals, max error " + num(worst));
}

Outcome length_schedules() {
  using V = std::vector<std::size_t>;
  const auto s96 = wavelet::length_schedule(96, 6, 4).per_level;
  const auto s192 = wavelet::length_schedule(192, 6, 4).per_level;
  model::ModelConfig c;
  c.variables = 2;
  c.embed_dim = 8;
  const model::WaveRoRAModel m96(c, 1);
  c.horizon = 192;
  const model::WaveRoRAModel m192(c, 1);
  const bool ok = s96 == V{50, 27, 16, 10} && s192 == V{98, 51, 28, 16} && m96.input_schedule().per_level == s96 &&
                  m96.output_schedule().per_level == s96 && m192.output_schedule().per_level == s192;
  return verdict(ok, "L=96 and H=96 give [50,27,16,10], H=192 gives [98,51,28,16]");
}

Outcome rora_oracle() {
  Rng rng(303);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    attention::RoRAConfig cfg;
    cfg.heads = 1 + rng.below(3);
    cfg.d_model = cfg.heads * (1 + rng.below(4)) * 2;
    cfg.routes = 1 + rng.below(6);
    cfg.rotary = trial & 1;
    cfg.gate = trial & 2;
    cfg.skip = trial & 4;
    const attention::RoRAWeights w = attention::RoRAWeights::init(cfg, rng);
    const Tensor x = rng.normal_tensor({1 + rng.below(9), cfg.d_model}, 0, 1);
    worst = std::max(worst, max_abs(attention::rora_forward(x, w, cfg), oracle::rora(x, w, cfg)));
  }
  return verdict(worst < 1e-10, "200 draws over all 8 flag combinations, max difference " + num(worst));
}

Outcome relative_position() {
  Rng rng(404);
  double worst_rel = 0, worst_orth = 0;
  for (std::size_t r : {2, 4, 8, 10}) {
    const auto angles = attention::RotaryAngles::standard(r);
    for (int m = 0; m <= 16; ++m) {
      const Tensor rm = attention::rotation_matrix(angles, m);
      const Tensor gram = ops::matmul_tn(rm, rm);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t k = 0; k < r; ++k) worst_orth = std::max(worst_orth, std::abs(gram(i, k) - (i == k)));
      }
      for (int n = 0; n <= 16; ++n) {
        const Tensor u = rng.normal_tensor({r, 1}, 0, 1), v = rng.normal_tensor({r, 1}, 0, 1);
        const double lhs = ops::matmul_tn(ops::matmul(rm, u), ops::matmul(attention::rotation_matrix(angles, n), v))[0];
        const double rhs = ops::matmul_tn(u, ops::matmul(attention::rotation_matrix(angles, n - m), v))[0];
        worst_rel = std::max(worst_rel, std::abs(lhs - rhs));
      }
    }
  }
  return verdict(worst_rel < 1e-10 && worst_orth < 1e-12,
                 "inner product error " + num(worst_rel) + ", orthogonality error " + num(worst_orth));
}

Outcome gradient_check() {
  model::ModelConfig c;
  c.lookback = 16;
  c.horizon = 8;
  c.variables = 3;
  c.levels = 2;
  c.embed_dim = 8;
  c.encoder_layers = 1;
  c.heads = 2;
  c.basis = "haar";
  c.dropout = 0.0;
  model::WaveRoRAModel m(c, 505);
  Rng rng(506);
  const Tensor x = rng.normal_tensor({16, 3}, 0, 1), y = rng.normal_tensor({8, 3}, 0, 1);
  const std::vector<Parameter*> params = m.parameters();
  const GradCheckReport r = grad_check([&](Tape& t) { return m.loss(t, x, y, nullptr); }, params, 1e-5);
  return verdict(r.max_relative_error < 1e-4, std::to_string(r.coordinates) + " coordinates, max relative error " +
                                                  num(r.max_relative_error) + " (" + r.worst_parameter + ")");
}

Outcome linear_scaling() {
  cli::BenchOptions opts;
  const cli::BenchReport rep = cli::run_bench(opts);
  const double rora = rep.exponent("rora"), sa = rep.exponent("softmax");
  const double ratio = rep.row("rora", 2048).mean_ms / rep.row("softmax", 2048).mean_ms;
  const bool ok = rora >= 0.8 && rora <= 1.2 && sa >= 1.7 && sa <= 2.3 && ratio < 0.25;
  return verdict(ok, "slopes rora " + num(rora) + ", softmax " + num(sa) + "; rora/softmax at M=2048 " + num(ratio));
}

Tensor toy_series(std::size_t steps) {
  Tensor t({steps, 2});
  for (std::size_t i = 0; i < steps; ++i) {
    const double s = static_cast<double>(i);
    t(i, 0) = std::sin(0.4 * s);
    t(i, 1) = 0.5 * std::cos(0.25 * s) + 0.3 * std::sin(0.9 * s);
  }
  return t;
}

Outcome overfit() {
  model::ModelConfig c;
  c.lookback = 16;
  c.horizon = 8;
  c.variables = 2;
  c.levels = 2;
  c.embed_dim = 16;
  c.encoder_layers = 1;
  c.heads = 2;
  c.routes = 2;
  c.basis = "haar";
  c.dropout = 0.0;
  const Tensor series = toy_series(16 + 8 + 15);
  const data::WindowSampler windows(series, {0, series.rows()}, {16, 8, 1});
  trainer::TrainConfig t;
  t.learning_rate = 3e-3;
  t.batch_size = 16;
  t.max_epochs = 500;
  t.patience = 500;
  t.max_steps = 500;
  t.seed = 707;
  const trainer::TrainResult r = trainer::train(model::WaveRoRAModel(c, 707), windows, nullptr, t);
  const double m = trainer::evaluate(r.best, windows).mse;
  return verdict(windows.size() == 16 && r.steps == 500 && m < 1e-3,
                 std::to_string(windows.size()) + " windows, " + std::to_string(r.steps) + " steps, training MSE " + num(m));
}

Outcome localization() {
  const fs::path dir = fs::temp_directory_path() / "waverora_acceptance_decompose";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const double rate = 20.0, span = 4 * std::numbers::pi;
  const std::size_t per = static_cast<std::size_t>(std::floor(span * rate)) + 1;
  {
    std::ofstream csv(dir / "signal.csv");
    csv << "x\n";
    csv.precision(17);
    for (double freq : {1.0, 3.0, 8.0}) {
      for (std::size_t i = 0; i < per; ++i) csv << std::sin(freq * static_cast<double>(i) / rate) << '\n';
    }
  }
  cli::DecomposeOptions opts;
  opts.input = dir / "signal.csv";
  opts.levels = 3;
  opts.segments = 3;
  opts.out_dir = dir / "out";
  std::ostringstream log;
  if (cli::cmd_decompose(opts, log) != 0) return {Status::fail, "decompose returned nonzero"};
  std::ifstream energy(opts.out_dir / "energy.csv");
  std::string line;
  std::getline(energy, line);
  double share = -1;
  while (std::getline(energy, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() == 5 && cells[1] == "high_1" && cells[2] == "2") share = std::stod(cells[4]);
  }
  return verdict(share > 0.6, "sin 8t segment holds " + num(100 * share) + "% of level-1 high-pass energy (" +
                                  opts.basis + ")");
}

Outcome reproduction() {
  try {
    data::resolve_dataset("ETTh1", std::nullopt);
  } catch (const ConfigError&) {
    return {Status::skip, "ETTh1 not found (set WAVERORA_DATA to a directory holding ETTh1.csv)"};
  }
  cli::RunConfig run;
  run.dataset = "ETTh1";
  run.out_dir = fs::temp_directory_path() / "waverora_acceptance_etth1";
  std::ostringstream log;
  cli::cmd_train(run, log);
  const std::string text = log.str();
  const auto at = text.rfind("test mse ");
  const auto mae_at = text.rfind(", mae ");
  if (at == std::string::npos || mae_at == std::string::npos) return {Status::fail, "no test metrics reported"};
  const double mse = std::stod(text.substr(at + 9)), mae = std::stod(text.substr(mae_at + 6));
  const bool ok = std::abs(mse - 0.381) <= 0.15 * 0.381 && std::abs(mae - 0.402) <= 0.15 * 0.402;
  return verdict(ok, "test MSE " + num(mse) + ", MAE " + num(mae) + " against 0.381 / 0.402 within 15%");
}

Outcome determinism() {
  model::ModelConfig c;
  c.lookback = 16;
  c.horizon = 8;
  c.variables = 2;
  c.levels = 2;
  c.embed_dim = 8;
  c.encoder_layers = 1;
  c.heads = 2;
  c.basis = "sym3";
  const Tensor series = toy_series(160);
  const data::WindowSampler train(series, {0, 112}, {16, 8, 1});
  const data::WindowSampler val(series, {88, 136}, {16, 8, 1});
  const data::WindowSampler test(series, {112, 160}, {16, 8, 1});
  trainer::TrainConfig t;
  t.max_epochs = 2;
  t.patience = 2;
  t.batch_size = 8;
  t.learning_rate = 1e-3;
  auto once = [&] {
    trainer::TrainResult r = trainer::train(model::WaveRoRAModel(c, t.seed), train, &val, t);
    return std::make_pair(r.history.front().train_loss, trainer::evaluate(r.best, test));
  };
  const auto a = once(), b = once();
  const bool ok = a.first == b.first && a.second.mse == b.second.mse && a.second.mae == b.second.mae;
  return verdict(ok, "epoch-1 loss " + num(a.first) + " vs " + num(b.first) + ", test MSE " + num(a.second.mse) +
                         " vs " + num(b.second.mse));
}

}  // namespace

int main() {
  cli::tune_allocator();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"perfect reconstruction", perfect_reconstruction},
      {"length schedules", length_schedules},
      {"route attention matches oracle", rora_oracle},
      {"relative position", relative_position},
      {"gradient check", gradient_check},
      {"linear scaling", linear_scaling},
      {"overfit", overfit},
      {"energy localization", localization},
      {"ETTh1 reproduction", reproduction},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    failures += o.status == Status::fail;
    std::printf("[%s] %2zu %-32s %s (%.1f s)\n", tag, i + 1, criteria[i].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
