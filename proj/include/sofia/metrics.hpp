#pragma once

#include <cstddef>
#include <span>

#include "sofia/tensor.hpp"

namespace sofia {

/// |estimate - truth|_F / |truth|_F over all entries.
double metric_nre(const DenseTensor& estimate, const DenseTensor& truth);

/// NRE restricted to the entries set in `mask`.
double metric_masked_nre(const DenseTensor& estimate, const DenseTensor& truth, const ObservationMask& mask);

/// Mean of a per-step NRE series.
double metric_rae(std::span<const double> nre_series);

/// Mean NRE of forecasts h = 1..t_f against the matching truths.
double metric_afe(std::span<const DenseTensor> forecasts, std::span<const DenseTensor> truths);

/// Average per-step running time. `timings[t]` is the time spent on step t (0-based);
/// steps before `t_init` belong to initialisation and step `t_init` is a warm-up, so
/// the average runs over t_init + 1 .. T - 1.
double metric_art(std::span<const double> timings, std::size_t t_init);

}  // namespace sofia
