#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "waverora/checkpoint.hpp"
#include "waverora/error.hpp"
#include "waverora/grad_check.hpp"
#include "waverora/model.hpp"
#include "waverora/ops.hpp"

using namespace waverora;
using namespace waverora::model;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.lookback = 16;
  c.horizon = 8;
  c.variables = 3;
  c.levels = 2;
  c.embed_dim = 8;
  c.encoder_layers = 1;
  c.heads = 2;
  c.routes = 3;
  c.basis = "haar";
  c.dropout = 0.0;
  return c;
}

std::vector<Parameter*> mutable_params(WaveRoRAModel& m) { return m.parameters(); }

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("waverora_test_" + name);
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("automatic route count") {
    CHECK(auto_routes(862) == 10);
    CHECK(auto_routes(7) == 2);
    CHECK(auto_routes(1) == 2);
    CHECK(auto_routes(21) == 3);  // (ln 21 + √21) / 2 = 3.81
    CHECK(auto_routes(137) == 8);
    ModelConfig c;
    c.variables = 321;
    CHECK(c.resolved_routes() == 10);
    c.routes = 20;
    CHECK(c.resolved_routes() == 20);
  }

  TEST_CASE("validation") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    c.levels = 0;
    try {
      c.validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("J >= 1") != std::string::npos);
    }
    c = ModelConfig{};
    c.heads = 7;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.horizon = 4;
    c.basis = "coif3";
    CHECK_THROWS_AS(c.validate(), DepthError);
    c = ModelConfig{};
    c.basis = "db7";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("json round trip") {
    ModelConfig c = tiny_config();
    c.attention = attention::Kind::linear;
    c.loss_domain = LossDomain::coefficient;
    c.gate = false;
    const ModelConfig back = ModelConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK_THROWS_AS(ModelConfig::from_json({{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_json({{"levels", "four"}}), ConfigError);
  }
}

TEST_SUITE("instance norm") {
  TEST_CASE("statistics and degenerate columns") {
    Rng rng(1);
    Tensor x = rng.normal_tensor({50, 3}, 4.0, 3.0);
    for (std::size_t t = 0; t < 50; ++t) x(t, 2) = 7.5;
    const auto [xn, state] = instance_normalize(x);
    for (std::size_t m = 0; m < 2; ++m) {
      double mean = 0, sq = 0;
      for (std::size_t t = 0; t < 50; ++t) mean += xn(t, m);
      mean /= 50;
      for (std::size_t t = 0; t < 50; ++t) sq += (xn(t, m) - mean) * (xn(t, m) - mean);
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(std::sqrt(sq / 50) - 1.0) < 1e-3);
    }
    for (std::size_t t = 0; t < 50; ++t) CHECK(xn(t, 2) == 0.0);
    CHECK(state.stdev[2] == doctest::Approx(std::sqrt(kInstanceNormEps)));
    CHECK(max_abs_diff(instance_denormalize(xn, state), x) < 1e-8);
  }

  TEST_CASE("denormalize examples") {
    const InstanceNormState s{{3.0}, {2.0}};
    CHECK(instance_denormalize(Tensor::matrix({{1}}), s) == Tensor::matrix({{5}}));
    const InstanceNormState s2{{1.0, -2.0}, {4.0, 5.0}};
    const Tensor y = instance_denormalize(Tensor({3, 2}), s2);
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(y(t, 0) == 1.0);
      CHECK(y(t, 1) == -2.0);
    }
  }

  TEST_CASE("round trip under affine changes of the input") {
    Rng rng(2);
    const Tensor x = rng.normal_tensor({20, 4}, 0, 1);
    for (double c : {0.01, 1.0, 250.0}) {
      for (double d : {-40.0, 0.0, 3.0}) {
        const Tensor y = ops::add(ops::scale(x, c), Tensor({20, 4}, d));
        const auto [yn, state] = instance_normalize(y);
        CHECK(max_abs_diff(instance_denormalize(yn, state), y) < 1e-8);
      }
    }
    CHECK_THROWS_AS(instance_normalize(Tensor({1, 3})), ShapeError);
  }
}

TEST_SUITE("model") {
  TEST_CASE("wave embedding shapes, bias broadcast and loop oracle") {
    ModelConfig c;
    c.variables = 7;
    const WaveRoRAModel m(c, 1);
    Rng rng(3);
    const wavelet::FilterBank fb = wavelet::make_filter_bank("sym3");
    const wavelet::CoefficientPyramid p = wavelet::dwt(rng.normal_tensor({7, 96}, 0, 1), fb, 4);
    const std::vector<Tensor> e = m.wave_embed(p);
    REQUIRE(e.size() == 5);
    for (const Tensor& t : e) CHECK(t.shape() == Shape{7, 64});

    const auto params = m.parameters();
    const auto comps = p.components();
    for (std::size_t j = 0; j < 5; ++j) {
      const Tensor& w = params[2 * j]->value;
      const Tensor& b = params[2 * j + 1]->value;
      REQUIRE(params[2 * j]->name == "embed." + std::to_string(j) + ".weight");
      for (std::size_t v = 0; v < 7; ++v) {
        for (std::size_t d = 0; d < 64; ++d) {
          double acc = b[d];
          for (std::size_t k = 0; k < comps[j].cols(); ++k) acc += comps[j](v, k) * w(d, k);
          CHECK(std::abs(e[j](v, d) - acc) < 1e-12);
        }
      }
    }

    wavelet::CoefficientPyramid zero = p;
    for (Tensor& h : zero.high) h.fill(0.0);
    zero.low.fill(0.0);
    const std::vector<Tensor> ez = m.wave_embed(zero);
    for (std::size_t j = 0; j < 5; ++j) {
      for (std::size_t v = 0; v < 7; ++v) {
        for (std::size_t d = 0; d < 64; ++d) CHECK(ez[j](v, d) == params[2 * j + 1]->value[d]);
      }
    }
    const wavelet::CoefficientPyramid wrong = wavelet::dwt(rng.normal_tensor({7, 64}, 0, 1), fb, 4);
    CHECK_THROWS_AS(m.wave_embed(wrong), ShapeError);
  }

  TEST_CASE("encoder identity, determinism and WaveNorm statistics") {
    ModelConfig c = tiny_config();
    c.encoder_layers = 0;
    Rng rng(4);
    const Tensor tokens = rng.normal_tensor({3, 24}, 0, 1);
    CHECK(WaveRoRAModel(c, 1).encode(tokens) == tokens);

    c.encoder_layers = 2;
    c.dropout = 0.3;
    const WaveRoRAModel m(c, 1);
    const Tensor a = m.encode(tokens), b = m.encode(tokens);
    CHECK(a == b);
    // Scale 1 and shift 0 at initialization: the output is the pre-affine normalized value.
    for (std::size_t v = 0; v < 3; ++v) {
      for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0, sq = 0;
        for (std::size_t d = 0; d < 8; ++d) mean += a(v, j * 8 + d);
        mean /= 8;
        for (std::size_t d = 0; d < 8; ++d) sq += (a(v, j * 8 + d) - mean) * (a(v, j * 8 + d) - mean);
        CHECK(std::abs(mean) < 1e-6);
        CHECK(sq / 8 < 1.0);  // var / (var + eps) falls just short of 1
        CHECK(sq / 8 > 0.99);
      }
    }
  }

  TEST_CASE("predictor lengths and bias broadcast") {
    for (auto [h, expect] : std::vector<std::pair<std::size_t, std::vector<std::size_t>>>{
             {96, {50, 27, 16, 10}}, {192, {98, 51, 28, 16}}}) {
      ModelConfig c;
      c.horizon = h;
      c.embed_dim = 16;
      const WaveRoRAModel m(c, 2);
      CHECK(m.output_schedule().per_level == expect);
      std::vector<Tensor> zeros(5, Tensor({7, 16}));
      const wavelet::CoefficientPyramid p = m.wave_predict(zeros);
      REQUIRE(p.levels() == 4);
      for (std::size_t j = 0; j < 4; ++j) CHECK(p.high[j].cols() == expect[j]);
      CHECK(p.low.cols() == expect[3]);
      const auto params = m.parameters();
      const Parameter* bias = params[params.size() - 1];
      REQUIRE(bias->name == "predict.4.bias");
      for (std::size_t v = 0; v < 7; ++v) {
        for (std::size_t k = 0; k < expect[3]; ++k) CHECK(p.low(v, k) == bias->value[k]);
      }
    }
  }

  TEST_CASE("forward shape across configurations and attention kinds") {
    Rng rng(5);
    for (auto kind : {attention::Kind::rora, attention::Kind::softmax, attention::Kind::linear}) {
      for (auto [l, h, basis, j] : std::vector<std::tuple<std::size_t, std::size_t, std::string, std::size_t>>{
               {16, 8, "haar", 2}, {96, 96, "sym3", 4}, {48, 24, "db4", 2}, {96, 30, "coif3", 1}}) {
        ModelConfig c;
        c.lookback = l;
        c.horizon = h;
        c.basis = basis;
        c.levels = j;
        c.variables = 4;
        c.embed_dim = 8;
        c.heads = 2;
        c.attention = kind;
        const WaveRoRAModel m(c, 3);
        const Tensor y = m.forecast(rng.normal_tensor({l, 4}, 0, 1));
        CHECK(y.shape() == Shape{h, 4});
        CHECK(y.all_finite());
      }
    }
  }

  TEST_CASE("eval forward is bitwise deterministic and dropout only acts in training") {
    ModelConfig c = tiny_config();
    c.dropout = 0.5;
    const WaveRoRAModel m(c, 4);
    Rng rng(6);
    const Tensor x = rng.normal_tensor({16, 3}, 0, 1);
    CHECK(m.forecast(x) == m.forecast(x));
    Rng drop(1);
    Tape tape;
    const Tensor trained = m.forward(tape, x, &drop).output.value();
    CHECK(max_abs_diff(trained, m.forecast(x)) > 1e-9);
  }

  TEST_CASE("every parameter receives a finite gradient") {
    const WaveRoRAModel m(tiny_config(), 5);
    Rng rng(7);
    Tape tape;
    tape.backward(m.loss(tape, rng.normal_tensor({16, 3}, 0, 1), rng.normal_tensor({8, 3}, 0, 1), nullptr));
    for (const Parameter* p : m.parameters()) {
      CAPTURE(p->name);
      CHECK(p->grad.all_finite());
      double norm = 0;
      for (std::size_t i = 0; i < p->grad.size(); ++i) norm += std::abs(p->grad[i]);
      CHECK(norm > 0.0);
    }
  }

  TEST_CASE("full-pipeline gradient check in both loss domains") {
    for (LossDomain domain : {LossDomain::time, LossDomain::coefficient}) {
      ModelConfig c = tiny_config();
      c.loss_domain = domain;
      WaveRoRAModel m(c, 6);
      Rng rng(8);
      const Tensor x = rng.normal_tensor({16, 3}, 0, 1), y = rng.normal_tensor({8, 3}, 0, 1);
      auto loss = [&](Tape& t) { return m.loss(t, x, y, nullptr); };
      const GradCheckReport r = grad_check(loss, mutable_params(m), 1e-5);
      CAPTURE(r.worst_parameter);
      CHECK(r.max_relative_error < 1e-4);
    }
  }

  TEST_CASE("ablation variants are distinct computations") {
    Rng rng(9);
    const Tensor x = rng.normal_tensor({16, 3}, 0, 1);
    std::vector<Tensor> outputs;
    std::vector<std::function<void(ModelConfig&)>> edits = {
        [](ModelConfig&) {},
        [](ModelConfig& c) { c.attention = attention::Kind::softmax; },
        [](ModelConfig& c) { c.attention = attention::Kind::linear; },
        [](ModelConfig& c) { c.rotary = false; },
        [](ModelConfig& c) { c.gate = false; },
        [](ModelConfig& c) { c.skip = false; },
    };
    for (const auto& edit : edits) {
      ModelConfig c = tiny_config();
      edit(c);
      outputs.push_back(WaveRoRAModel(c, 10).forecast(x));
    }
    for (std::size_t a = 0; a < outputs.size(); ++a) {
      for (std::size_t b = a + 1; b < outputs.size(); ++b) CHECK(max_abs_diff(outputs[a], outputs[b]) > 1e-9);
    }
  }

  TEST_CASE("outer residual changes the graph") {
    ModelConfig c = tiny_config();
    Rng rng(11);
    const Tensor x = rng.normal_tensor({16, 3}, 0, 1);
    const Tensor plain = WaveRoRAModel(c, 12).forecast(x);
    c.outer_residual = true;
    CHECK(max_abs_diff(plain, WaveRoRAModel(c, 12).forecast(x)) > 1e-9);
  }

  TEST_CASE("input shape is checked") {
    const WaveRoRAModel m(tiny_config(), 13);
    CHECK_THROWS_AS(m.forecast(Tensor({15, 3})), ShapeError);
    CHECK_THROWS_AS(m.forecast(Tensor({16, 4})), ShapeError);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip preserves forecasts bitwise") {
    ModelConfig c = tiny_config();
    c.attention = attention::Kind::linear;
    const WaveRoRAModel m(c, 14);
    const auto path = temp_path("roundtrip.wrr");
    checkpoint::save(path, m, {{"note", "unit"}});
    const checkpoint::Loaded loaded = checkpoint::load(path);
    CHECK(loaded.meta.at("note") == "unit");
    Rng rng(15);
    const Tensor x = rng.normal_tensor({16, 3}, 0, 1);
    CHECK(loaded.model.forecast(x) == m.forecast(x));
    std::filesystem::remove(path);
  }

  TEST_CASE("corrupt files are rejected") {
    const auto path = temp_path("bad.wrr");
    {
      std::ofstream out(path, std::ios::binary);
      out << "NOPE and more";
    }
    CHECK_THROWS_AS(checkpoint::load(path), LoadError);
    const WaveRoRAModel m(tiny_config(), 16);
    checkpoint::save(path, m);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 16);
    CHECK_THROWS_AS(checkpoint::load(path), LoadError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(checkpoint::load(path), LoadError);
  }

  TEST_CASE("compatibility names the differing field") {
    ModelConfig a = tiny_config(), b = tiny_config();
    CHECK_NOTHROW(checkpoint::check_compatible(a, b));
    b.dropout = 0.4;
    CHECK_NOTHROW(checkpoint::check_compatible(a, b));
    b.variables = 5;
    try {
      checkpoint::check_compatible(a, b);
      FAIL("expected CompatibilityError");
    } catch (const CompatibilityError& e) {
      CHECK(e.field() == "variables");
    }
  }

  TEST_CASE("parameter names follow module paths") {
    const WaveRoRAModel m(tiny_config(), 17);
    std::vector<std::string> names;
    for (const Parameter* p : m.parameters()) names.push_back(p->name);
    for (const char* expect : {"embed.0.weight", "encoder.0.rora.query.weight", "encoder.0.rora.routing_tokens",
                               "encoder.0.rora.skip.1.bias", "encoder.0.norm.scale", "predict.2.bias"}) {
      CHECK(std::find(names.begin(), names.end(), expect) != names.end());
    }
  }
}
