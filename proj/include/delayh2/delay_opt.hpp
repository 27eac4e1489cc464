#pragma once

#include <vector>

#include "delayh2/lti.hpp"

namespace delayh2 {

struct DelaySearchConfig {
    std::size_t grid_points_per_channel = 400;
    /// Upper end of the search box per channel; empty means default_tau_max().
    std::vector<double> tau_max_in;
    std::vector<double> tau_max_out;
    /// Stop refining once the projected gradient of J (not of the cross
    /// term) is below this norm.
    double refine_tol = 1e-10;
    int max_refine_iters = 100;
    /// Channels allowed to carry a delay; empty means all.
    std::vector<bool> input_mask;
    std::vector<bool> output_mask;
    /// Joint grids over up to three channels are used while their size stays
    /// within this budget (points per channel are reduced if needed); more
    /// channels are scanned cyclically, one coordinate at a time.
    std::size_t joint_grid_budget = 40000;
    std::size_t refine_starts = 5;
    /// Keep every evaluated sample in DelaySearchResult::landscape.
    bool keep_landscape = false;
};

struct LandscapeSample {
    std::vector<double> tau;    // n_u
    std::vector<double> gamma;  // n_y
    double objective = 0;
};

struct DelaySearchResult {
    DelayBlock input;
    DelayBlock output;
    double objective = 0;       // cross term <H_d, G> at the returned delays
    double zero_objective = 0;  // cross term at zero delays
    double best_grid_objective = 0;
    double gradient_norm = 0;   // projected gradient of J at the returned delays
    bool on_boundary = false;   // some free delay sits on a face of the box
    std::size_t grid_evaluations = 0;
    int refine_iterations = 0;
    std::vector<double> tau_max_in;
    std::vector<double> tau_max_out;
    std::vector<LandscapeSample> landscape;
};

/// Per-channel box size. For input l it is the smallest T at which the
/// energy of column l of g's impulse response beyond T drops to 1e-8 of its
/// total (outputs: row m), but at least 5 / min_j |Re mu_j|. By
/// Cauchy-Schwarz the cross term with any delay beyond T is then at most
/// 1e-4 ||H|| ||G||.
void default_tau_max(const PoleResidueModel& g, std::vector<double>& tau_max_in, std::vector<double>& tau_max_out);

/// Cross term <Delta_o H Delta_i, G>.
double cross_objective(const PoleResidueModel& g, const PoleResidueModel& h, const DelayBlock& input,
                       const DelayBlock& output);

/// Maximizes the cross term over the delay box: coarse grid, then projected
/// Newton/gradient ascent from the best grid local maxima. Highest objective
/// wins; ties go to the lexicographically smallest delay vector
/// (inputs first, then outputs).
DelaySearchResult optimize_delays(const PoleResidueModel& g, const PoleResidueModel& h, const DelaySearchConfig& cfg);

}  // namespace delayh2
