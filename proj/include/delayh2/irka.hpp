#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "delayh2/lti.hpp"

namespace delayh2 {

enum class IrkaInit {
    LogSpacedReal,  // real shifts log-spaced over the pole magnitudes of g, unit directions
    RandomStable,   // seeded random real shifts in the same range, Gaussian directions
    User,           // shifts and directions taken from IrkaConfig
};

struct IrkaConfig {
    std::size_t order = 2;
    int max_iters = 200;
    double shift_tol = 1e-8;
    /// Hermite residuals must stay below certificate_tol * ||g||_H2 for a
    /// run to count as converged.
    double certificate_tol = 1e-6;
    IrkaInit init = IrkaInit::LogSpacedReal;
    std::uint64_t seed = 0;
    /// Used with IrkaInit::User. Shifts must be closed under conjugation.
    std::vector<Complex> shifts;
    std::vector<Eigen::VectorXcd> right_directions;  // n_u each
    std::vector<Eigen::VectorXcd> left_directions;   // n_y each
    /// On failure, restart once from IrkaInit::RandomStable with `seed` and
    /// keep the better of the two runs.
    bool retry = false;
};

struct HermiteResidual {
    double right = 0;    // ||(H - G)(-lambda_k) b_k||
    double left = 0;     // ||c_k^T (H - G)(-lambda_k)||
    double hermite = 0;  // |c_k^T (H' - G')(-lambda_k) b_k|
};

struct IrkaResult {
    PoleResidueModel model;
    int iterations = 0;
    bool converged = false;
    double final_shift_movement = 0;
    /// Number of iterate poles found in the closed right half-plane and
    /// reflected.
    int reflections = 0;
    /// H2 gap ||g - model||^2 of the returned model.
    double gap = 0;
    std::vector<HermiteResidual> certificate;
    /// Shifts and directions for a warm restart (-lambda_k, b_k, c_k).
    std::vector<Complex> next_shifts;
    std::vector<Eigen::VectorXcd> next_right;
    std::vector<Eigen::VectorXcd> next_left;
};

/// Iterative rational Krylov fixed point: project g onto tangential
/// rational Krylov bases at the shifts, take the reduced poles and residue
/// directions, mirror them to new shifts and repeat. The resolvent solves
/// are rational evaluations in g's diagonal (pole/residue) realization.
IrkaResult irka_reduce(const PoleResidueModel& g, const IrkaConfig& cfg);

std::vector<HermiteResidual> hermite_residuals(const PoleResidueModel& g, const PoleResidueModel& h);

}  // namespace delayh2
