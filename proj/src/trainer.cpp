#include "waverora/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "waverora/checkpoint.hpp"
#include "waverora/error.hpp"

namespace waverora::trainer {
namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.empty()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ");
  }
}

std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

double mse(const Tensor& truth, const Tensor& prediction) {
  require_same("mse", truth, prediction);
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) acc += (truth[i] - prediction[i]) * (truth[i] - prediction[i]);
  return acc / static_cast<double>(truth.size());
}

double mae(const Tensor& truth, const Tensor& prediction) {
  require_same("mae", truth, prediction);
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) acc += std::abs(truth[i] - prediction[i]);
  return acc / static_cast<double>(truth.size());
}

AdamState AdamState::zeros_like(std::span<Parameter* const> params) {
  AdamState s;
  for (const Parameter* p : params) {
    s.m.emplace_back(p->value.shape());
    s.v.emplace_back(p->value.shape());
  }
  return s;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()) + " parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (m.shape() != p.value.shape()) throw ShapeError("adam_step: state shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g;
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
    }
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const Parameter* p : params) {
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
    }
  }
  return norm;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0 || patience > max_epochs) throw ConfigError("patience must lie in [1, max_epochs]");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
}

TrainResult train(model::WaveRoRAModel model, const data::WindowSampler& train, const data::WindowSampler* val,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.size() == 0) throw ConfigError("train: the training range yields no windows");
  if (val != nullptr && val->size() == 0) throw ConfigError("train: the validation range yields no windows");

  Rng order_rng(cfg.seed);
  Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  const std::vector<Parameter*> params = model.parameters();
  AdamState adam = AdamState::zeros_like(params);

  TrainResult result{model, {}, 0, 0, false};
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    bool capped = false;
    for (std::size_t start = 0, batch = 1; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double weight = 1.0 / static_cast<double>(end - start);
      for (Parameter* p : params) p->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        Tape tape;
        const Var loss = model.loss(tape, train.input(order[k]), train.target(order[k]), &dropout_rng);
        const Var scaled = ad::scale(loss, weight);
        tape.backward(scaled);
        batch_loss += loss.value()[0];
      }
      if (!std::isfinite(batch_loss)) {
        throw EvaluationError("non-finite training loss " + format_double(batch_loss) + " at epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(batch) + " (step " +
                              std::to_string(result.steps + 1) + ")");
      }
      clip_grad_norm(params, cfg.clip_norm);
      adam_step(params, adam, cfg.learning_rate);
      loss_sum += batch_loss;
      seen += end - start;
      ++result.steps;
      if (cfg.max_steps != 0 && result.steps >= cfg.max_steps) {
        capped = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    if (val != nullptr) {
      const MetricsReport m = evaluate(model, *val);
      rec.val_mse = m.mse;
      rec.val_mae = m.mae;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val == nullptr) {
      result.best_epoch = epoch;
    } else if (rec.val_mse < best_val) {
      best_val = rec.val_mse;
      result.best_epoch = epoch;
      since_best = 0;
      checkpoint::copy_parameters(model, result.best);
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
    if (capped) break;
  }
  if (val == nullptr) checkpoint::copy_parameters(model, result.best);
  return result;
}

MetricsReport evaluate(const Forecaster& forecast, const data::WindowSampler& windows) {
  if (windows.size() == 0) throw ConfigError("evaluate: no windows to evaluate");
  MetricsReport r;
  double sq = 0.0, abs = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Tensor truth = windows.target(i);
    const Tensor pred = forecast(windows.input(i));
    require_same("evaluate", truth, pred);
    if (r.horizon_mse.empty()) r.horizon_mse.assign(truth.rows(), 0.0);
    for (std::size_t t = 0; t < truth.rows(); ++t) {
      for (std::size_t m = 0; m < truth.cols(); ++m) {
        const double e = pred(t, m) - truth(t, m);
        sq += e * e;
        abs += std::abs(e);
        r.horizon_mse[t] += e * e;
      }
    }
    count += truth.size();
  }
  if (!std::isfinite(sq) || !std::isfinite(abs)) throw EvaluationError("evaluate: non-finite forecast error");
  r.windows = windows.size();
  r.mse = sq / static_cast<double>(count);
  r.mae = abs / static_cast<double>(count);
  const double per_step = static_cast<double>(count / r.horizon_mse.size());
  for (double& h : r.horizon_mse) h /= per_step;
  return r;
}

MetricsReport evaluate(const model::WaveRoRAModel& model, const data::WindowSampler& windows) {
  return evaluate([&model](const Tensor& w) { return model.forecast(w); }, windows);
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,train_loss,val_mse,val_mae,seconds\n";
  out.precision(17);
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val_mse << ',' << r.val_mae << ',' << r.seconds << '\n';
  }
}

}  // namespace waverora::trainer
