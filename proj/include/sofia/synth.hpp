#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sofia/tensor.hpp"

namespace sofia {

/// Low-rank seasonal stream: uniform [0,1) non-temporal factors and temporal columns
/// a_r sin(2 pi i / m + b_r) + c_r with a_r, c_r ~ U[-2, 2], b_r ~ U[0, 2 pi], i = 1, 2, ...
struct SynthConfig {
  Shape slice_shape{30, 30};
  std::size_t steps = 90;
  std::size_t rank = 3;
  std::size_t period = 30;
  double amplitude_max = 2.0;
  double offset_max = 2.0;
  /// Standard deviation of additive Gaussian observation noise.
  double noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Slice-on-demand generator, for streams too long to hold in memory.
class SyntheticStream {
 public:
  explicit SyntheticStream(const SynthConfig& config);

  const SynthConfig& config() const noexcept { return config_; }
  const std::vector<Matrix>& nontemporal() const noexcept { return nontemporal_; }

  /// Temporal vector of 0-based step t.
  Vector temporal(std::size_t t) const;
  DenseTensor clean_slice(std::size_t t) const;
  /// Clean slice plus observation noise; deterministic in (seed, t).
  DenseTensor noisy_slice(std::size_t t) const;

  /// Factor set of the first `steps` slices, temporal matrix last.
  FactorSet factors(std::size_t steps) const;

 private:
  SynthConfig config_;
  std::vector<Matrix> nontemporal_;
  Vector amplitude_;
  Vector phase_;
  Vector offset_;
};

struct SynthData {
  std::vector<DenseTensor> truth;     // clean slices
  std::vector<DenseTensor> observed;  // truth plus noise
  FactorSet factors;
};

SynthData synth_stream(const SynthConfig& config);

}  // namespace sofia
