#include "sofia/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "sofia/errors.hpp"

namespace sofia {

void SynthConfig::validate() const {
  shape_size(slice_shape);
  if (rank < 1) throw ConfigError("rank must be at least 1");
  if (period < 2) throw ConfigError("seasonal period must be at least 2");
  if (!(noise >= 0.0)) throw ConfigError("noise level must be >= 0");
}

SyntheticStream::SyntheticStream(const SynthConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto rank = static_cast<Eigen::Index>(config_.rank);
  for (std::size_t len : config_.slice_shape) {
    Matrix u(static_cast<Eigen::Index>(len), rank);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      for (Eigen::Index r = 0; r < rank; ++r) u(i, r) = unit(rng);
    nontemporal_.push_back(std::move(u));
  }
  amplitude_.resize(rank);
  phase_.resize(rank);
  offset_.resize(rank);
  std::uniform_real_distribution<double> amp(-config_.amplitude_max, config_.amplitude_max);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> off(-config_.offset_max, config_.offset_max);
  for (Eigen::Index r = 0; r < rank; ++r) {
    amplitude_[r] = amp(rng);
    phase_[r] = phase(rng);
    offset_[r] = off(rng);
  }
}

Vector SyntheticStream::temporal(std::size_t t) const {
  const double angle = 2.0 * std::numbers::pi / static_cast<double>(config_.period) * static_cast<double>(t + 1);
  Vector u(amplitude_.size());
  for (Eigen::Index r = 0; r < u.size(); ++r) u[r] = amplitude_[r] * std::sin(angle + phase_[r]) + offset_[r];
  return u;
}

DenseTensor SyntheticStream::clean_slice(std::size_t t) const { return kruskal_slice(nontemporal_, temporal(t)); }

DenseTensor SyntheticStream::noisy_slice(std::size_t t) const {
  DenseTensor slice = clean_slice(t);
  if (config_.noise > 0.0) {
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(t), 0x6e6f6973u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, config_.noise);
    for (double& v : slice.values()) v += noise(rng);
  }
  return slice;
}

FactorSet SyntheticStream::factors(std::size_t steps) const {
  FactorSet f;
  f.matrices = nontemporal_;
  Matrix temporal_matrix(static_cast<Eigen::Index>(steps), amplitude_.size());
  for (std::size_t t = 0; t < steps; ++t) temporal_matrix.row(static_cast<Eigen::Index>(t)) = temporal(t).transpose();
  f.matrices.push_back(std::move(temporal_matrix));
  return f;
}

SynthData synth_stream(const SynthConfig& config) {
  const SyntheticStream gen(config);
  SynthData data;
  data.truth.reserve(config.steps);
  data.observed.reserve(config.steps);
  for (std::size_t t = 0; t < config.steps; ++t) {
    data.truth.push_back(gen.clean_slice(t));
    data.observed.push_back(gen.noisy_slice(t));
  }
  data.factors = gen.factors(config.steps);
  return data;
}

}  // namespace sofia
