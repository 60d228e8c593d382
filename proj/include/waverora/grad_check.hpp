#ifndef WAVERORA_GRAD_CHECK_HPP
#define WAVERORA_GRAD_CHECK_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "waverora/autograd.hpp"

namespace waverora {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Builds the scalar loss on the given tape.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares tape gradients against central differences (f(θ+ε) − f(θ−ε)) / 2ε
/// for every coordinate of every parameter. The relative error of one
/// coordinate is |a − n| / max(|a|, |n|, floor); the floor keeps coordinates
/// whose true gradient is numerically zero from dominating the report.
/// Parameter values are restored and gradients are left zeroed on return.
GradCheckReport grad_check(const LossBuilder& loss_fn, std::span<Parameter* const> params, double epsilon,
                           double floor = 1e-6);

}  // namespace waverora

#endif  // WAVERORA_GRAD_CHECK_HPP
