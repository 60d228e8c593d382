#include "waverora/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "waverora/error.hpp"

namespace waverora {
namespace {

double evaluate(const LossBuilder& loss_fn) {
  Tape tape(false);
  const double v = loss_fn(tape).value()[0];
  if (!std::isfinite(v)) throw EvaluationError("grad_check: loss evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss_fn, std::span<Parameter* const> params, double epsilon,
                           double floor) {
  if (!(epsilon > 0.0)) throw ConfigError("grad_check: epsilon must be positive");
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    if (!std::isfinite(loss.value()[0])) throw EvaluationError("grad_check: loss evaluated to a non-finite value");
    tape.backward(loss);
  }

  GradCheckReport report;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double original = p->value[i];
      p->value[i] = original + epsilon;
      const double up = evaluate(loss_fn);
      p->value[i] = original - epsilon;
      const double down = evaluate(loss_fn);
      p->value[i] = original;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coordinates;
      if (rel >= report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  for (auto* p : params) p->zero_grad();
  return report;
}

}  // namespace waverora
