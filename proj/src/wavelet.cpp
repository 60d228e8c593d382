#include "waverora/wavelet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "waverora/error.hpp"

namespace waverora::wavelet {
namespace {

// Decomposition low-pass filters in convolution order. sym3 is evaluated from
// its closed form (it coincides with db3) to 20 significant digits.
constexpr std::array<double, 2> kHaarLow = {0.70710678118654752440, 0.70710678118654752440};

constexpr std::array<double, 6> kSym3Low = {
    0.035226291885709536603, -0.085441273882026661693, -0.13501102001025458870,
    0.45987750211849157010,  0.80689150931109257649,   0.33267055295008261600,
};

constexpr std::array<double, 8> kDb4Low = {
    -0.010597401785069032, 0.0328830116668852,  0.030841381835560764, -0.18703481171909309,
    -0.027983769416859854, 0.6308807679298589,  0.7148465705529157,   0.2303778133088965,
};

constexpr std::array<double, 18> kCoif3Low = {
    -3.459977319727278e-05, -7.0983302506379e-05,  0.0004662169598204029, 0.0011175187708306303,
    -0.0025745176881367972, -0.009007976136730624, 0.015880544863669452,  0.03455502757329774,
    -0.08230192710629983,   -0.07179982161915484,  0.42848347637737,      0.7937772226260872,
    0.40517690240911824,    -0.06112339000297255,  -0.06577191128146936,  0.023452696142077168,
    0.007782596425672746,   -0.003793512864380802,
};

FilterBank from_low_pass(std::string name, std::span<const double> low) {
  FilterBank fb;
  fb.name = std::move(name);
  const std::size_t s = low.size();
  fb.dec_low.assign(low.begin(), low.end());
  fb.rec_low.assign(low.rbegin(), low.rend());
  fb.dec_high.resize(s);
  for (std::size_t k = 0; k < s; ++k) {
    const double sign = (k % 2 == 0) ? -1.0 : 1.0;
    fb.dec_high[k] = sign * low[s - 1 - k];
  }
  fb.rec_high.assign(fb.dec_high.rbegin(), fb.dec_high.rend());
  return fb;
}

// Half-sample symmetric extension: ... x1 x0 | x0 x1 ... x(n-1) | x(n-1) x(n-2) ...
// Periodic with period 2n, so it is defined for any offset and any n ≥ 1.
std::size_t reflect(std::ptrdiff_t k, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = k % period;
  if (m < 0) m += period;
  const auto um = static_cast<std::size_t>(m);
  return um < n ? um : 2 * n - 1 - um;
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected an M×L matrix, got " + shape_string(t.shape()));
}

void analyse_row(const double* x, std::size_t n, const std::vector<double>& f, double* out, std::size_t out_len) {
  const std::size_t s = f.size();
  for (std::size_t i = 0; i < out_len; ++i) {
    double acc = 0.0;
    const auto centre = static_cast<std::ptrdiff_t>(2 * i + 1);
    for (std::size_t j = 0; j < s; ++j) acc += f[j] * x[reflect(centre - static_cast<std::ptrdiff_t>(j), n)];
    out[i] = acc;
  }
}

}  // namespace

std::vector<std::string> supported_bases() { return {"haar", "sym3", "coif3", "db4"}; }

FilterBank make_filter_bank(std::string_view name) {
  FilterBank fb;
  if (name == "haar") {
    fb = from_low_pass("haar", kHaarLow);
  } else if (name == "sym3") {
    fb = from_low_pass("sym3", kSym3Low);
  } else if (name == "coif3") {
    fb = from_low_pass("coif3", kCoif3Low);
  } else if (name == "db4") {
    fb = from_low_pass("db4", kDb4Low);
  } else {
    throw ConfigError("unknown wavelet basis '" + std::string(name) + "'; supported: haar, sym3, coif3, db4");
  }
  validate_filter_bank(fb);
  return fb;
}

void validate_filter_bank(const FilterBank& fb) {
  const std::size_t s = fb.dec_low.size();
  if (s < 2 || fb.dec_high.size() != s || fb.rec_low.size() != s || fb.rec_high.size() != s) {
    throw ConfigError("filter bank '" + fb.name + "': filters must share one length ≥ 2");
  }
  double sum_low = 0.0, sum_high = 0.0, energy_low = 0.0, energy_high = 0.0;
  for (std::size_t k = 0; k < s; ++k) {
    sum_low += fb.dec_low[k];
    sum_high += fb.dec_high[k];
    energy_low += fb.dec_low[k] * fb.dec_low[k];
    energy_high += fb.dec_high[k] * fb.dec_high[k];
  }
  constexpr double tol = 1e-10;
  if (std::abs(sum_low - std::numbers::sqrt2) > tol) throw ConfigError("filter bank '" + fb.name + "': Σg ≠ √2");
  if (std::abs(sum_high) > tol) throw ConfigError("filter bank '" + fb.name + "': Σh ≠ 0");
  if (std::abs(energy_low - 1.0) > tol || std::abs(energy_high - 1.0) > tol) {
    throw ConfigError("filter bank '" + fb.name + "': filters are not unit-energy");
  }
}

LengthSchedule length_schedule(std::size_t base, std::size_t support, std::size_t levels) {
  if (levels < 1) throw ConfigError("decomposition depth J must be at least 1");
  if (support < 2) throw ConfigError("filter support must be at least 2");
  // Every level must be fed at least max(2, S/2) samples.
  const std::size_t minimum = std::max<std::size_t>(2, support / 2);
  LengthSchedule schedule{base, {}};
  std::size_t length = base;
  for (std::size_t j = 1; j <= levels; ++j) {
    if (length < minimum) {
      throw DepthError("decomposition depth too large: level " + std::to_string(j) + " would receive " +
                       std::to_string(length) + " samples, needs at least " + std::to_string(minimum) +
                       " (base " + std::to_string(base) + ", support " + std::to_string(support) +
                       ", J=" + std::to_string(levels) + ")");
    }
    length = step_length(length, support);
    schedule.per_level.push_back(length);
  }
  return schedule;
}

Subbands dwt_step(const Tensor& signal, const FilterBank& fb) {
  require_matrix("dwt_step", signal);
  const std::size_t rows = signal.rows();
  const std::size_t n = signal.cols();
  if (n < 2) throw ShapeError("dwt_step: signal length must be at least 2");
  const std::size_t out_len = step_length(n, fb.support());
  Subbands out{Tensor({rows, out_len}), Tensor({rows, out_len})};
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = signal.data() + r * n;
    analyse_row(x, n, fb.dec_high, out.high.data() + r * out_len, out_len);
    analyse_row(x, n, fb.dec_low, out.low.data() + r * out_len, out_len);
  }
  stats::add_flops(4 * rows * out_len * fb.support());
  return out;
}

Tensor idwt_step(const Tensor& high, const Tensor& low, const FilterBank& fb, std::size_t target_len) {
  require_matrix("idwt_step", high);
  require_matrix("idwt_step", low);
  if (high.shape() != low.shape()) {
    throw ReconstructionError("idwt_step: high " + shape_string(high.shape()) + " and low " +
                              shape_string(low.shape()) + " differ");
  }
  const std::size_t s = fb.support();
  const std::size_t coeffs = low.cols();
  if (target_len + s < 2 * coeffs + 1 || target_len > 2 * coeffs) {
    throw ReconstructionError("idwt_step: target length " + std::to_string(target_len) +
                              " is inconsistent with " + std::to_string(coeffs) + " coefficients at support " +
                              std::to_string(s));
  }
  const std::size_t rows = low.rows();
  const std::size_t offset = s - 2;
  Tensor out({rows, target_len});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* hi = high.data() + r * coeffs;
    const double* lo = low.data() + r * coeffs;
    double* y = out.data() + r * target_len;
    for (std::size_t i = 0; i < coeffs; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t pos = 2 * i + j;
        if (pos < offset || pos - offset >= target_len) continue;
        y[pos - offset] += fb.rec_low[j] * lo[i] + fb.rec_high[j] * hi[i];
      }
    }
  }
  stats::add_flops(4 * rows * coeffs * s);
  return out;
}

std::vector<Tensor> CoefficientPyramid::components() const {
  std::vector<Tensor> out(high.begin(), high.end());
  out.push_back(low);
  return out;
}

CoefficientPyramid dwt(const Tensor& signal, const FilterBank& fb, std::size_t levels) {
  require_matrix("dwt", signal);
  CoefficientPyramid pyramid;
  pyramid.schedule = length_schedule(signal.cols(), fb.support(), levels);
  pyramid.basis = fb.name;
  Tensor current = signal;
  for (std::size_t j = 0; j < levels; ++j) {
    Subbands bands = dwt_step(current, fb);
    pyramid.high.push_back(std::move(bands.high));
    current = std::move(bands.low);
  }
  pyramid.low = std::move(current);
  return pyramid;
}

Tensor idwt(const CoefficientPyramid& pyramid, const FilterBank& fb, std::size_t base_len) {
  const LengthSchedule& schedule = pyramid.schedule;
  if (schedule.base_length != base_len) {
    throw ReconstructionError("idwt: pyramid was recorded for length " + std::to_string(schedule.base_length) +
                              ", requested " + std::to_string(base_len));
  }
  if (pyramid.high.size() != schedule.levels() || schedule.levels() == 0) {
    throw ReconstructionError("idwt: pyramid holds " + std::to_string(pyramid.high.size()) +
                              " high-pass levels but its schedule has " + std::to_string(schedule.levels()));
  }
  if (schedule != length_schedule(base_len, fb.support(), schedule.levels())) {
    throw ReconstructionError("idwt: schedule does not follow the length recurrence for basis " + fb.name);
  }
  for (std::size_t j = 0; j < schedule.levels(); ++j) {
    if (pyramid.high[j].rank() != 2 || pyramid.high[j].cols() != schedule.per_level[j]) {
      throw ReconstructionError("idwt: level " + std::to_string(j + 1) + " high-pass has shape " +
                                shape_string(pyramid.high[j].shape()) + ", schedule expects length " +
                                std::to_string(schedule.per_level[j]));
    }
  }
  if (pyramid.low.rank() != 2 || pyramid.low.cols() != schedule.per_level.back()) {
    throw ReconstructionError("idwt: low-pass has shape " + shape_string(pyramid.low.shape()) +
                              ", schedule expects length " + std::to_string(schedule.per_level.back()));
  }
  Tensor current = pyramid.low;
  for (std::size_t j = schedule.levels(); j >= 1; --j) {
    current = idwt_step(pyramid.high[j - 1], current, fb, schedule.input_length(j));
  }
  return current;
}

Tensor analysis_matrix(const FilterBank& fb, std::size_t length, bool high) {
  const auto& f = high ? fb.dec_high : fb.dec_low;
  const std::size_t out_len = step_length(length, fb.support());
  Tensor a({out_len, length});
  for (std::size_t i = 0; i < out_len; ++i) {
    const auto centre = static_cast<std::ptrdiff_t>(2 * i + 1);
    for (std::size_t j = 0; j < f.size(); ++j) a(i, reflect(centre - static_cast<std::ptrdiff_t>(j), length)) += f[j];
  }
  return a;
}

Tensor synthesis_matrix(const FilterBank& fb, std::size_t coeff_len, std::size_t target_len, bool high) {
  const auto& f = high ? fb.rec_high : fb.rec_low;
  const std::size_t s = fb.support();
  if (target_len + s < 2 * coeff_len + 1 || target_len > 2 * coeff_len) {
    throw ReconstructionError("synthesis_matrix: target length " + std::to_string(target_len) +
                              " is inconsistent with " + std::to_string(coeff_len) + " coefficients");
  }
  const std::size_t offset = s - 2;
  Tensor b({target_len, coeff_len});
  for (std::size_t i = 0; i < coeff_len; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const std::size_t pos = 2 * i + j;
      if (pos < offset || pos - offset >= target_len) continue;
      b(pos - offset, i) += f[j];
    }
  }
  return b;
}

MultilevelTransform::MultilevelTransform(FilterBank fb, std::size_t base_length, std::size_t levels)
    : fb_(std::move(fb)), schedule_(length_schedule(base_length, fb_.support(), levels)) {
  for (std::size_t j = 1; j <= levels; ++j) {
    const std::size_t in = schedule_.input_length(j);
    const std::size_t out = schedule_.per_level[j - 1];
    analysis_high_.push_back(analysis_matrix(fb_, in, true));
    analysis_low_.push_back(analysis_matrix(fb_, in, false));
    synthesis_high_.push_back(synthesis_matrix(fb_, out, in, true));
    synthesis_low_.push_back(synthesis_matrix(fb_, out, in, false));
  }
}

std::vector<Var> MultilevelTransform::decompose(const Var& signal) const {
  if (signal.value().rank() != 2 || signal.value().cols() != schedule_.base_length) {
    throw ShapeError("decompose: expected M×" + std::to_string(schedule_.base_length) + ", got " +
                     shape_string(signal.shape()));
  }
  std::vector<Var> out;
  Var current = signal;
  for (std::size_t j = 0; j < schedule_.levels(); ++j) {
    out.push_back(ad::apply_linear_map(current, analysis_high_[j]));
    current = ad::apply_linear_map(current, analysis_low_[j]);
  }
  out.push_back(current);
  return out;
}

Var MultilevelTransform::reconstruct(std::span<const Var> components) const {
  const std::size_t levels = schedule_.levels();
  if (components.size() != levels + 1) {
    throw ReconstructionError("reconstruct: expected " + std::to_string(levels + 1) + " components, got " +
                              std::to_string(components.size()));
  }
  for (std::size_t j = 0; j <= levels; ++j) {
    const std::size_t expected = schedule_.per_level[std::min(j, levels - 1)];
    const Tensor& c = components[j].value();
    if (c.rank() != 2 || c.cols() != expected) {
      throw ReconstructionError("reconstruct: component " + std::to_string(j) + " has shape " +
                                shape_string(c.shape()) + ", schedule expects length " + std::to_string(expected));
    }
  }
  Var current = components[levels];
  for (std::size_t j = levels; j >= 1; --j) {
    current = ad::add(ad::apply_linear_map(components[j - 1], synthesis_high_[j - 1]),
                      ad::apply_linear_map(current, synthesis_low_[j - 1]));
  }
  return current;
}

}  // namespace waverora::wavelet
