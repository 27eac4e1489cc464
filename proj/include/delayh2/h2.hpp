#pragma once

#include <vector>

#include <Eigen/Core>

#include "delayh2/lti.hpp"

namespace delayh2 {

/// J = ||G||^2 - 2 <H_d, G> + ||H||^2 with its three parts.
struct GapValue {
    double j = 0;
    double norm_g_sq = 0;
    double cross = 0;
    double norm_h_sq = 0;

    /// j clamped at zero; tiny negative values are rounding.
    double reported() const { return j < 0 ? 0.0 : j; }
};

/// Residuals of the first-order optimality conditions, one entry per reduced
/// pole (interp_*) or per channel (delay_*). Delay entries of channels that
/// may not carry a delay are 0.
struct OptimalityResiduals {
    std::vector<double> interp_right;
    std::vector<double> interp_left;
    std::vector<double> interp_hermite;
    std::vector<double> delay_in;
    std::vector<double> delay_out;

    double max_interp() const;
    double max_delay() const;
};

/// ||H||^2 = sum_k c_k^T H(-lambda_k) b_k. The double sum is accumulated in
/// 100-digit arithmetic: for high-order models the individual terms can
/// exceed the result by thirty orders of magnitude.
double h2_norm_squared(const PoleResidueModel& h);
double h2_norm_pole_residue(const PoleResidueModel& h);

/// Composite Simpson approximation of (1/2pi) int ||H_d(iw)||_F^2 dw over
/// [-omega_max, omega_max]. Test oracle only: the discretization error is
/// O(dw^4) and the truncated tails contribute roughly
/// ||sum_j l_j r_j^T||_F^2 / (pi omega_max).
double h2_norm_quadrature(const DelayedModel& h, double omega_max = 1e4, std::size_t n_points = 2000001);

/// Same quadrature applied to Re (1/2pi) int tr(A(iw)^H B(iw)) dw.
double inner_product_quadrature(const DelayedModel& a, const DelayedModel& b, double omega_max = 1e4,
                                std::size_t n_points = 2000001);

/// <H_d, G> = sum_j l_j^T Delta_o(-mu_j) H(-mu_j) Delta_i(-mu_j) r_j.
double inner_product_delayed(const DelayedModel& hd, const PoleResidueModel& g);

GapValue compute_gap(const PoleResidueModel& g, const DelayedModel& hd, double g_norm_sq);

/// G with each term's residue vectors scaled channel-wise:
/// l_j -> Delta_o(-mu_j) l_j, r_j -> Delta_i(-mu_j) r_j.
PoleResidueModel build_gtilde(const PoleResidueModel& g, const DelayBlock& input_delays,
                              const DelayBlock& output_delays);

struct DelayGradient {
    std::vector<double> input;   // dJ/dtau_l
    std::vector<double> output;  // dJ/dgamma_m
};

/// Analytic delay gradient of J. Channels that may not carry a delay get 0.
DelayGradient grad_delays(const PoleResidueModel& g, const DelayedModel& hd);

/// Value of the delay optimality condition per channel, i.e.
/// sum_j mu_j [l~_j^T H(-mu_j)]_l [r~_j]_l for inputs; equals -grad/2.
DelayGradient delay_condition(const PoleResidueModel& g, const DelayedModel& hd);

/// Formal complex gradients of J with respect to the reduced parameters,
/// treating each term independently of its conjugate partner:
///   dJ/dc_k = -2 (G~ - H)(-lambda_k) b_k
///   dJ/db_k = -2 (G~ - H)(-lambda_k)^T c_k
///   dJ/dlambda_k = 2 c_k^T (G~' - H')(-lambda_k) b_k
struct ResiduePoleGradient {
    std::vector<Eigen::VectorXcd> db;
    std::vector<Eigen::VectorXcd> dc;
    std::vector<Complex> dl;
};

ResiduePoleGradient grad_residues_poles(const PoleResidueModel& gt, const PoleResidueModel& h);

/// Gradient with respect to real coordinates. For a complex term the
/// coordinates are (Re x, Im x) of the parameter x of that term, perturbed
/// together with its conjugate partner so the model stays real; the entries
/// are (2 Re g, -2 Im g). For a real-pole term only Re x is a coordinate and
/// the imaginary slot is 0. The conjugate partner's own entries are 0 since
/// it is not an independent coordinate.
struct RealGradient {
    std::vector<Eigen::MatrixX2d> db;  // n_u x 2 per term
    std::vector<Eigen::MatrixX2d> dc;  // n_y x 2 per term
    std::vector<Eigen::Vector2d> dl;
};

RealGradient to_real_coordinates(const PoleResidueModel& h, const ResiduePoleGradient& g);

/// Index of the conjugate partner of every term (itself for real poles,
/// -1 if absent).
std::vector<int> conjugate_partners(const PoleResidueModel& h);

OptimalityResiduals optimality_residuals(const PoleResidueModel& g, const DelayedModel& hd);

}  // namespace delayh2
