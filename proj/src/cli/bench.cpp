#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "waverora/attention.hpp"
#include "waverora/cli.hpp"
#include "waverora/error.hpp"
#include "waverora/rng.hpp"

namespace waverora::cli {
namespace {

using Clock = std::chrono::steady_clock;

struct Sample {
  double ms;
  std::size_t peak_bytes;
};

template <typename F>
Sample measure(F&& call) {
  const std::size_t before = stats::live_bytes();
  stats::reset_peak();
  const auto start = Clock::now();
  Tensor result = call();
  const auto stop = Clock::now();
  const std::size_t peak = stats::peak_bytes() > before ? stats::peak_bytes() - before : 0;
  if (!result.all_finite()) throw EvaluationError("bench: mechanism produced non-finite output");
  return {std::chrono::duration<double, std::milli>(stop - start).count(), peak};
}

}  // namespace

void BenchOptions::validate() const {
  if (sizes.empty()) throw ConfigError("bench: at least one size is required");
  for (std::size_t m : sizes) {
    if (m == 0) throw ConfigError("bench: sizes must be positive");
  }
  if (repeats == 0) throw ConfigError("bench: repeats must be positive");
  if (routes == 0 || d_model == 0 || heads == 0) throw ConfigError("bench: routes, width and heads must be positive");
  if (d_model % heads != 0) throw ConfigError("bench: width is not divisible by the head count");
  for (const auto& m : mechanisms) attention::parse_kind(m);
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("slope fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double BenchReport::exponent(std::string_view mechanism) const {
  for (const auto& [name, slope] : exponents) {
    if (name == mechanism) return slope;
  }
  throw ConfigError("bench: no exponent for " + std::string(mechanism));
}

const BenchRow& BenchReport::row(std::string_view mechanism, std::size_t variables) const {
  for (const BenchRow& r : rows) {
    if (r.mechanism == mechanism && r.variables == variables) return r;
  }
  throw ConfigError("bench: no row for " + std::string(mechanism) + " at M=" + std::to_string(variables));
}

BenchReport run_bench(const BenchOptions& opts, const std::function<void(const BenchRow&)>& progress) {
  opts.validate();
  Rng rng(opts.seed);
  attention::RoRAConfig cfg;
  cfg.d_model = opts.d_model;
  cfg.heads = opts.heads;
  cfg.routes = opts.routes;
  const attention::RoRAWeights weights = attention::RoRAWeights::init(cfg, rng, "bench");

  BenchReport report;
  for (const std::string& name : opts.mechanisms) {
    const attention::Kind kind = attention::parse_kind(name);
    std::vector<double> xs, ys;
    for (std::size_t m : opts.sizes) {
      // Softmax and linear attention are timed on already projected Q, K, V;
      // RoRA is timed as its full forward pass, projections included.
      const Tensor x = rng.normal_tensor({m, opts.d_model}, 0.0, 1.0);
      const Tensor k = rng.normal_tensor({m, opts.d_model}, 0.0, 1.0);
      const Tensor v = rng.normal_tensor({m, opts.d_model}, 0.0, 1.0);
      auto call = [&]() -> Tensor {
        if (kind == attention::Kind::rora) return attention::rora_forward(x, weights, cfg);
        return attention::multihead_mix(x, k, v, opts.heads, kind);
      };
      for (std::size_t w = 0; w < opts.warmup; ++w) measure(call);
      std::vector<double> times;
      std::size_t peak = 0;
      for (std::size_t r = 0; r < opts.repeats; ++r) {
        const Sample s = measure(call);
        times.push_back(s.ms);
        peak = std::max(peak, s.peak_bytes);
      }
      BenchRow row;
      row.mechanism = std::string(attention::to_string(kind));
      row.variables = m;
      row.mean_ms = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
      double var = 0.0;
      for (double t : times) var += (t - row.mean_ms) * (t - row.mean_ms);
      row.std_ms = times.size() > 1 ? std::sqrt(var / static_cast<double>(times.size() - 1)) : 0.0;
      row.peak_bytes = peak;
      if (progress) progress(row);
      report.rows.push_back(row);
      xs.push_back(static_cast<double>(m));
      ys.push_back(row.mean_ms);
    }
    if (xs.size() >= 2) report.exponents.emplace_back(std::string(attention::to_string(kind)), loglog_slope(xs, ys));
  }
  return report;
}

int cmd_bench(const BenchOptions& opts, const std::filesystem::path& out_dir, std::ostream& out) {
  opts.validate();
  std::filesystem::create_directories(out_dir);
  write_json_file(out_dir / "config.json", {{"command", "bench"},
                                            {"sizes", opts.sizes},
                                            {"routes", opts.routes},
                                            {"d_model", opts.d_model},
                                            {"heads", opts.heads},
                                            {"repeats", opts.repeats},
                                            {"warmup", opts.warmup},
                                            {"seed", opts.seed},
                                            {"mechanisms", opts.mechanisms},
                                            {"out_dir", out_dir.string()}});
  out << std::fixed;
  const BenchReport report = run_bench(opts, [&](const BenchRow& r) {
    out << std::setw(8) << r.mechanism << "  M=" << std::setw(5) << r.variables << "  " << std::setprecision(3)
        << std::setw(10) << r.mean_ms << " ms  ± " << std::setw(8) << r.std_ms << "  peak " << r.peak_bytes
        << " B\n";
  });

  std::ofstream csv(out_dir / "bench.csv");
  csv << "mechanism,M,mean_ms,std_ms,peak_bytes\n";
  csv.precision(6);
  for (const BenchRow& r : report.rows) {
    csv << r.mechanism << ',' << r.variables << ',' << r.mean_ms << ',' << r.std_ms << ',' << r.peak_bytes << '\n';
  }
  std::ofstream fit(out_dir / "exponents.csv");
  fit << "mechanism,exponent\n";
  for (const auto& [name, slope] : report.exponents) {
    fit << name << ',' << slope << '\n';
    out << "fitted exponent " << name << ": " << std::setprecision(3) << slope << '\n';
  }
  return 0;
}

}  // namespace waverora::cli
