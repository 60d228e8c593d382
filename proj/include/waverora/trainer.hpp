#ifndef WAVERORA_TRAINER_HPP
#define WAVERORA_TRAINER_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "waverora/autograd.hpp"
#include "waverora/data.hpp"
#include "waverora/model.hpp"
#include "waverora/tensor.hpp"

namespace waverora::trainer {

/// Mean squared / absolute difference over all elements; ShapeError on mismatch.
double mse(const Tensor& truth, const Tensor& prediction);
double mae(const Tensor& truth, const Tensor& prediction);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(std::span<Parameter* const> params);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One bias-corrected Adam update of every parameter from its `grad`.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr);

/// Scales all gradients so their joint L2 norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t patience = 3;
  std::uint64_t seed = 2024;
  double clip_norm = 5.0;  // 0 disables clipping
  std::size_t max_steps = 0;  // optimizer steps; 0 means no cap

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
  double seconds = 0.0;
};

struct MetricsReport {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t windows = 0;
  std::vector<double> horizon_mse;  // per forecast step, averaged over windows and variables
};

struct TrainResult {
  model::WaveRoRAModel best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam over shuffled mini-batches of `train` windows. With a validation
/// sampler the model with the lowest val MSE is returned and training stops
/// after `patience` epochs without improvement; without one the final model
/// is returned. A non-finite loss raises EvaluationError with the epoch,
/// batch and value.
TrainResult train(model::WaveRoRAModel model, const data::WindowSampler& train, const data::WindowSampler* val,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

using Forecaster = std::function<Tensor(const Tensor& window)>;

MetricsReport evaluate(const Forecaster& forecast, const data::WindowSampler& windows);
MetricsReport evaluate(const model::WaveRoRAModel& model, const data::WindowSampler& windows);

/// Columns: epoch, train_loss, val_mse, val_mae, seconds.
void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace waverora::trainer

#endif  // WAVERORA_TRAINER_HPP
