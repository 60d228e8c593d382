#ifndef WAVERORA_WAVELET_HPP
#define WAVERORA_WAVELET_HPP

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "waverora/autograd.hpp"
#include "waverora/tensor.hpp"

// Orthogonal two-channel filter banks and the multi-level discrete wavelet
// transform over the rows of an M×L matrix (one row per variable).
//
// Boundary handling is half-sample symmetric extension, and a level maps a
// length-L row to ⌊(L + S − 1) / 2⌋ coefficients per branch. Reconstruction
// takes the full upsampled convolution and keeps the window starting at
// offset S − 2 whose length is the recorded forward length, which makes
// idwt(dwt(x)) = x for every supported basis and every L.
namespace waverora::wavelet {

/// Decomposition and reconstruction filters, stored in convolution order.
struct FilterBank {
  std::string name;
  std::vector<double> dec_high;  // h
  std::vector<double> dec_low;   // g
  std::vector<double> rec_high;  // h'
  std::vector<double> rec_low;   // g'

  std::size_t support() const { return dec_low.size(); }
};

std::vector<std::string> supported_bases();

/// Hard-coded tables for haar, sym3, coif3 and db4; checked with
/// validate_filter_bank before being returned. Unknown names raise ConfigError.
FilterBank make_filter_bank(std::string_view name);

/// Throws ConfigError unless the four filters share one length, Σg = √2,
/// Σh = 0 and both decomposition filters have unit energy (all ±1e-10).
void validate_filter_bank(const FilterBank& fb);

struct LengthSchedule {
  std::size_t base_length = 0;
  std::vector<std::size_t> per_level;  // L(1) ... L(J)

  std::size_t levels() const { return per_level.size(); }
  /// Length entering level j (1-based): L(j-1), with L(0) the base length.
  std::size_t input_length(std::size_t level) const {
    return level == 1 ? base_length : per_level[level - 2];
  }
  bool operator==(const LengthSchedule&) const = default;
};

/// L(j) = ⌊(L(j−1) + S − 1) / 2⌋. Raises DepthError naming the first level
/// whose input length L(j−1) is below max(2, S/2).
LengthSchedule length_schedule(std::size_t base, std::size_t support, std::size_t levels);

/// Output length of one analysis step.
inline std::size_t step_length(std::size_t length, std::size_t support) { return (length + support - 1) / 2; }

struct Subbands {
  Tensor high;
  Tensor low;
};

/// One analysis level over each row of an M×L signal (L ≥ 2).
Subbands dwt_step(const Tensor& signal, const FilterBank& fb);

/// One synthesis level. `target_len` must lie in [2L′ − S + 1, 2L′];
/// anything else raises ReconstructionError.
Tensor idwt_step(const Tensor& high, const Tensor& low, const FilterBank& fb, std::size_t target_len);

/// J high-pass components plus the final low-pass component.
struct CoefficientPyramid {
  std::vector<Tensor> high;  // level 1 (finest) ... level J
  Tensor low;                // level J
  LengthSchedule schedule;
  std::string basis;

  std::size_t levels() const { return high.size(); }
  /// Components in model order: [high_1 ... high_J, low_J].
  std::vector<Tensor> components() const;
};

CoefficientPyramid dwt(const Tensor& signal, const FilterBank& fb, std::size_t levels);

/// Folds idwt_step from level J down to 1, trimming each level to the
/// recorded schedule. Raises ReconstructionError on any length mismatch.
Tensor idwt(const CoefficientPyramid& pyramid, const FilterBank& fb, std::size_t base_len);

/// Matrix A (L′×L) of one analysis branch: dwt_step(x) = x · Aᵀ row-wise.
Tensor analysis_matrix(const FilterBank& fb, std::size_t length, bool high);

/// Matrix B (target×L′) of one synthesis branch: the branch's contribution
/// to idwt_step is c · Bᵀ row-wise.
Tensor synthesis_matrix(const FilterBank& fb, std::size_t coeff_len, std::size_t target_len, bool high);

/// Multi-level transform at a fixed base length with its linear maps
/// precomputed, for use inside a differentiable computation.
class MultilevelTransform {
 public:
  MultilevelTransform(FilterBank fb, std::size_t base_length, std::size_t levels);

  const FilterBank& filter_bank() const { return fb_; }
  const LengthSchedule& schedule() const { return schedule_; }

  /// Components in model order [high_1 ... high_J, low_J].
  std::vector<Var> decompose(const Var& signal) const;
  /// Inverse of decompose; expects components in model order.
  Var reconstruct(std::span<const Var> components) const;

 private:
  FilterBank fb_;
  LengthSchedule schedule_;
  std::vector<Tensor> analysis_high_, analysis_low_;    // per level
  std::vector<Tensor> synthesis_high_, synthesis_low_;  // per level
};

}  // namespace waverora::wavelet

#endif  // WAVERORA_WAVELET_HPP
