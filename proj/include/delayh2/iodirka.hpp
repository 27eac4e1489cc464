#pragma once

#include <string>
#include <vector>

#include "delayh2/delay_opt.hpp"
#include "delayh2/h2.hpp"
#include "delayh2/irka.hpp"
#include "delayh2/lti.hpp"

namespace delayh2 {

enum class StoppingMode {
    PoleVariation,       // pole set and delay vector both settle below outer_tol
    OptimalityResidual,  // every optimality residual below its threshold
    H2Error,             // relative change of the gap below outer_tol
};

enum class DelayInit {
    Zero,
    /// Reduce without delays, then take the delays that best align that
    /// model with g (maximal cross term).
    CrossCorrelation,
};

struct IoDirkaConfig {
    std::size_t order = 2;
    /// Channels allowed to carry a delay; empty means all.
    std::vector<bool> input_mask;
    std::vector<bool> output_mask;
    /// Starting delays; empty means zero (or the DelayInit heuristic).
    std::vector<double> init_input_delays;
    std::vector<double> init_output_delays;
    DelayInit init = DelayInit::Zero;
    /// The alternation can creep: the n=4 cascade benchmark needs ~2300 steps.
    int outer_max_iters = 5000;
    double outer_tol = 1e-6;
    StoppingMode stopping = StoppingMode::PoleVariation;
    /// Thresholds for StoppingMode::OptimalityResidual.
    double interp_tol = 1e-6;
    double delay_tol = 1e-6;
    /// Run IRKA once more on G~ built from the final delays.
    bool final_irka_pass = true;
    /// Start each inner IRKA from the previous iteration's shifts/directions.
    bool warm_start = true;
    IrkaConfig irka;
    DelaySearchConfig delay;
};

struct TraceEntry {
    int iteration = 0;
    DelayedModel model;
    GapValue gap;
    double pole_movement = 0;   // relative change of the pole set
    double delay_movement = 0;  // ||delta delays||_inf / max(||delays||_inf, 1)
    bool irka_converged = false;
    int irka_iterations = 0;
    double irka_certificate = 0;  // largest Hermite residual against G~ at this step
    double delay_gradient_norm = 0;
    bool delay_on_boundary = false;
};

struct ReductionReport {
    DelayedModel model;
    GapValue gap;
    OptimalityResiduals residuals;
    int outer_iterations = 0;
    std::vector<TraceEntry> trace;
    bool converged = false;
    std::string stop_reason;
    /// Residuals of the loop's last (core, delays) pair, before the final
    /// IRKA pass; equal to `residuals` when no pass was made.
    OptimalityResiduals loop_residuals;
    bool final_pass_applied = false;
    double norm_g_sq = 0;
};

/// Alternates IRKA on the delay-advanced surrogate G~ with delay
/// optimization for the new core, until the stopping criterion holds.
ReductionReport io_dirka(const PoleResidueModel& g, const IoDirkaConfig& cfg);

/// Recomputes all optimality residuals of the report's final model.
OptimalityResiduals certify(const PoleResidueModel& g, const ReductionReport& report);

const char* to_string(StoppingMode m);
StoppingMode stopping_mode_from_string(const std::string& s);

}  // namespace delayh2
