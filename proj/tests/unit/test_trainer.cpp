#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "waverora/error.hpp"
#include "waverora/trainer.hpp"

using namespace waverora;
using namespace waverora::trainer;

namespace {

model::ModelConfig small_model() {
  model::ModelConfig c;
  c.lookback = 16;
  c.horizon = 8;
  c.variables = 2;
  c.levels = 2;
  c.embed_dim = 8;
  c.encoder_layers = 1;
  c.heads = 2;
  c.routes = 2;
  c.basis = "haar";
  c.dropout = 0.0;
  return c;
}

Tensor sine_table(std::size_t steps, double noise_seed) {
  Rng rng(static_cast<std::uint64_t>(noise_seed));
  Tensor t({steps, 2});
  for (std::size_t i = 0; i < steps; ++i) {
    t(i, 0) = std::sin(0.3 * static_cast<double>(i)) + 0.05 * rng.normal();
    t(i, 1) = std::cos(0.17 * static_cast<double>(i)) + 0.05 * rng.normal();
  }
  return t;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("mse and mae examples") {
    CHECK(mse(Tensor::vector({1, 2}), Tensor::vector({1, 2})) == 0.0);
    CHECK(mae(Tensor::vector({1, 2}), Tensor::vector({1, 2})) == 0.0);
    CHECK(mse(Tensor::vector({0, 0}), Tensor::vector({1, 1})) == 1.0);
    CHECK(mae(Tensor::vector({0, 0}), Tensor::vector({1, 1})) == 1.0);
    CHECK(mse(Tensor::vector({0, 2}), Tensor::vector({1, 1})) == 1.0);
    CHECK(mae(Tensor::vector({0, 2}), Tensor::vector({1, 1})) == 1.0);
    CHECK_THROWS_AS(mse(Tensor::vector({0, 2}), Tensor::vector({1, 1, 1})), ShapeError);
  }

  TEST_CASE("perfect forecaster scores zero") {
    const Tensor t = sine_table(60, 1);
    const data::WindowSampler w(t, {0, 60}, {16, 8, 1});
    const MetricsReport r = evaluate(
        [&](const Tensor& window) {
          // Locate the window in the table and return the true continuation.
          for (std::size_t i = 0; i < w.size(); ++i) {
            if (w.input(i) == window) return w.target(i);
          }
          return Tensor({8, 2});
        },
        w);
    CHECK(r.mse == 0.0);
    CHECK(r.mae == 0.0);
    CHECK(r.windows == w.size());
    CHECK(r.horizon_mse.size() == 8);
  }

  TEST_CASE("metrics do not depend on the order windows are visited") {
    const Tensor t = sine_table(80, 2);
    const model::WaveRoRAModel m(small_model(), 1);
    const data::WindowSampler all(t, {0, 80}, {16, 8, 1});
    const MetricsReport whole = evaluate(m, all);
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = all.size(); i-- > 0;) {
      const Tensor p = m.forecast(all.input(i));
      sq += mse(all.target(i), p) * static_cast<double>(p.size());
      n += p.size();
    }
    CHECK(std::abs(whole.mse - sq / static_cast<double>(n)) < 1e-9);
  }
}

TEST_SUITE("adam") {
  TEST_CASE("first step moves each coordinate by the learning rate") {
    Parameter p("p", Tensor::vector({1.0, -2.0, 0.5}));
    p.grad = Tensor::vector({0.3, -7.0, 0.0});
    Parameter* params[] = {&p};
    AdamState s = AdamState::zeros_like(params);
    adam_step(params, s, 0.01);
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p.value[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(p.value[2] == 0.5);
  }

  TEST_CASE("hand-stepped recurrence on a quadratic") {
    // f(θ) = Σ a_i θ_i², gradient 2 a_i θ_i; the reference loop below is the textbook update.
    const double a[] = {1.0, 3.0, 0.5};
    Parameter p("p", Tensor::vector({1.0, -1.0, 2.0}));
    Parameter* params[] = {&p};
    AdamState s = AdamState::zeros_like(params);
    double theta[] = {1.0, -1.0, 2.0}, m[3] = {}, v[3] = {};
    const double lr = 0.1;
    for (int t = 1; t <= 5; ++t) {
      for (std::size_t i = 0; i < 3; ++i) p.grad[i] = 2 * a[i] * p.value[i];
      adam_step(params, s, lr);
      for (std::size_t i = 0; i < 3; ++i) {
        const double g = 2 * a[i] * theta[i];
        m[i] = 0.9 * m[i] + 0.1 * g;
        v[i] = 0.999 * v[i] + 0.001 * g * g;
        const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
        theta[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(p.value[i] - theta[i]) < 1e-10);
  }

  TEST_CASE("gradient clipping") {
    Parameter p("p", Tensor::vector({0, 0}));
    p.grad = Tensor::vector({3.0, 4.0});
    Parameter* params[] = {&p};
    CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(5.0));
    CHECK(p.grad[0] == 3.0);
    clip_grad_norm(params, 1.0);
    CHECK(p.grad[0] == doctest::Approx(0.6));
    CHECK(p.grad[1] == doctest::Approx(0.8));
  }
}

TEST_SUITE("train") {
  TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.patience = 20;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("same seed gives identical trajectories") {
    const Tensor t = sine_table(120, 3);
    const data::WindowSampler train(t, {0, 80}, {16, 8, 1});
    const data::WindowSampler val(t, {64, 120}, {16, 8, 1});
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.patience = 2;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.seed = 77;
    model::ModelConfig mc = small_model();
    mc.dropout = 0.1;
    const TrainResult a = trainer::train(model::WaveRoRAModel(mc, 1), train, &val, cfg);
    const TrainResult b = trainer::train(model::WaveRoRAModel(mc, 1), train, &val, cfg);
    REQUIRE(a.history.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
      CHECK(a.history[e].train_loss == b.history[e].train_loss);
      CHECK(a.history[e].val_mse == b.history[e].val_mse);
    }
    cfg.seed = 78;
    const TrainResult c = trainer::train(model::WaveRoRAModel(mc, 1), train, &val, cfg);
    CHECK(c.history[0].train_loss != a.history[0].train_loss);
  }

  TEST_CASE("best checkpoint matches the minimum of the history") {
    const Tensor t = sine_table(150, 4);
    const data::WindowSampler train(t, {0, 100}, {16, 8, 1});
    const data::WindowSampler val(t, {84, 150}, {16, 8, 1});
    TrainConfig cfg;
    cfg.max_epochs = 4;
    cfg.patience = 4;
    cfg.batch_size = 16;
    cfg.learning_rate = 3e-3;
    const TrainResult r = trainer::train(model::WaveRoRAModel(small_model(), 2), train, &val, cfg);
    double best = 1e300;
    std::size_t best_epoch = 0;
    for (const EpochRecord& e : r.history) {
      if (e.val_mse < best) {
        best = e.val_mse;
        best_epoch = e.epoch;
      }
    }
    CHECK(r.best_epoch == best_epoch);
    CHECK(evaluate(r.best, val).mse == best);
  }

  TEST_CASE("patience stops training once validation stops improving") {
    // A learning rate this large makes validation worse after the first epoch.
    const Tensor t = sine_table(150, 5);
    const data::WindowSampler train(t, {0, 100}, {16, 8, 1});
    const data::WindowSampler val(t, {84, 150}, {16, 8, 1});
    TrainConfig cfg;
    cfg.max_epochs = 6;
    cfg.patience = 1;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.5;
    cfg.clip_norm = 0.0;
    TrainResult r = [&] {
      try {
        return trainer::train(model::WaveRoRAModel(small_model(), 3), train, &val, cfg);
      } catch (const EvaluationError&) {
        FAIL("diverged to a non-finite loss");
        throw;
      }
    }();
    const std::size_t epochs = r.history.size();
    REQUIRE(epochs >= 2);
    CHECK(r.history[epochs - 1].val_mse >= r.history[r.best_epoch - 1].val_mse);
    if (epochs < cfg.max_epochs) {
      CHECK(r.stopped_early);
      CHECK(epochs == r.best_epoch + 1);
    }
  }

  TEST_CASE("non-finite loss aborts with diagnostics") {
    Tensor t = sine_table(60, 6);
    t(30, 1) = 1e300;
    const data::WindowSampler train(t, {0, 60}, {16, 8, 1});
    TrainConfig cfg;
    cfg.max_epochs = 1;
    cfg.patience = 1;
    try {
      trainer::train(model::WaveRoRAModel(small_model(), 4), train, nullptr, cfg);
      FAIL("expected EvaluationError");
    } catch (const EvaluationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("epoch 1") != std::string::npos);
      CHECK(msg.find("batch") != std::string::npos);
    }
  }

  TEST_CASE("step cap and history file") {
    const Tensor t = sine_table(80, 7);
    const data::WindowSampler train(t, {0, 80}, {16, 8, 1});
    TrainConfig cfg;
    cfg.max_steps = 3;
    cfg.batch_size = 4;
    const TrainResult r = trainer::train(model::WaveRoRAModel(small_model(), 5), train, nullptr, cfg);
    CHECK(r.steps == 3);
    CHECK(r.history.size() == 1);
    const auto path = std::filesystem::temp_directory_path() / "waverora_history.csv";
    write_history_csv(path, r.history);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,train_loss,val_mse,val_mae,seconds");
  }
}
