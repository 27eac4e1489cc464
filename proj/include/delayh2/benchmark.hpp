#pragma once

#include <span>
#include <vector>

#include "delayh2/lti.hpp"

namespace delayh2 {

/// Evenly spaced values, computed as start + i * step with the last point
/// pinned to stop.
std::vector<double> linspace(double start, double stop, std::size_t n);

/// Poles of the cascade benchmark: n values evenly spaced over [-2, -1].
std::vector<double> cascade_poles(std::size_t n = 20);

/// G(s) = prod_j mu_j / (s - mu_j). Residues come from the partial-fraction
/// formula prod_j mu_j / prod_{j != k} (mu_k - mu_j), evaluated in quad.
PoleResidueModel cascade_model(std::size_t n = 20);

/// Lower-bidiagonal state-space realization of the same cascade.
StateSpaceModel cascade_state_space(std::size_t n = 20);

/// Mean over the grid of the squared impulse-response difference, summed
/// over channels.
double impulse_mse(const DelayedModel& a, const DelayedModel& b, std::span<const double> t_grid);

}  // namespace delayh2
