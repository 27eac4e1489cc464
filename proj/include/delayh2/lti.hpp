#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "delayh2/scalar.hpp"

namespace delayh2 {

/// Descriptor realization C (sE - A)^{-1} B of a strictly proper LTI system.
/// Only shapes are checked on construction; invertibility of E and
/// stability are checked when the model is converted to pole/residue form.
class StateSpaceModel {
   public:
    StateSpaceModel(Eigen::MatrixXd E, Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C);

    const Eigen::MatrixXd& E() const { return E_; }
    const Eigen::MatrixXd& A() const { return A_; }
    const Eigen::MatrixXd& B() const { return B_; }
    const Eigen::MatrixXd& C() const { return C_; }

    Eigen::Index order() const { return A_.rows(); }
    Eigen::Index inputs() const { return B_.cols(); }
    Eigen::Index outputs() const { return C_.rows(); }

   private:
    Eigen::MatrixXd E_, A_, B_, C_;
};

/// One rank-1 term  left * right^T / (s - pole).
struct PoleResidueTerm {
    WideComplex pole;
    WideVector left;   // n_y
    WideVector right;  // n_u
};

/// Transfer function G(s) = sum_j l_j r_j^T / (s - mu_j).
///
/// Terms are kept in canonical order: ascending real part, then ascending
/// |imaginary part|, with the positive-imaginary member of a conjugate pair
/// first. Each factor pair is balanced (||l|| = ||r||) and its phase fixed so
/// that the largest entry of l is real and positive; only the product l r^T
/// carries meaning. Poles must be stable and pairwise distinct.
/// Conjugate closure is not enforced here, see realify_check().
class PoleResidueModel {
   public:
    PoleResidueModel() = default;
    PoleResidueModel(std::vector<PoleResidueTerm> terms, Eigen::Index ny, Eigen::Index nu);

    /// SISO helper from (pole, residue) pairs given in double precision.
    static PoleResidueModel siso(const std::vector<std::pair<Complex, Complex>>& pole_residue);

    const std::vector<PoleResidueTerm>& terms() const { return terms_; }
    const PoleResidueTerm& term(std::size_t k) const { return terms_[k]; }
    std::size_t order() const { return terms_.size(); }
    Eigen::Index ny() const { return ny_; }
    Eigen::Index nu() const { return nu_; }

    std::vector<Complex> poles() const;
    /// Residue matrix l_k r_k^T of term k.
    WideMatrix residue(std::size_t k) const;

   private:
    std::vector<PoleResidueTerm> terms_;
    Eigen::Index ny_ = 0;
    Eigen::Index nu_ = 0;
};

/// Channel-wise pure delays. A channel whose mask entry is false is not
/// allowed to carry a delay and must hold zero.
class DelayBlock {
   public:
    DelayBlock() = default;
    explicit DelayBlock(std::vector<double> delays, std::vector<bool> mask = {});

    static DelayBlock zeros(std::size_t channels, bool delay_allowed = true);

    std::size_t size() const { return delays_.size(); }
    const std::vector<double>& delays() const { return delays_; }
    const std::vector<bool>& mask() const { return mask_; }
    double operator[](std::size_t i) const { return delays_[i]; }
    bool is_free(std::size_t i) const { return mask_[i]; }
    bool any_free() const;

    /// Same mask, new delay values.
    DelayBlock with_delays(std::vector<double> delays) const { return DelayBlock(std::move(delays), mask_); }

    friend bool operator==(const DelayBlock&, const DelayBlock&) = default;

   private:
    std::vector<double> delays_;
    std::vector<bool> mask_;
};

/// H_d(s) = Delta_o(s) H(s) Delta_i(s).
struct DelayedModel {
    PoleResidueModel core;
    DelayBlock input_delays;
    DelayBlock output_delays;

    DelayedModel() = default;
    explicit DelayedModel(PoleResidueModel core);
    DelayedModel(PoleResidueModel core, DelayBlock input, DelayBlock output);
};

PoleResidueModel pole_residue_from_state_space(const StateSpaceModel& m);

Eigen::MatrixXcd eval_transfer(const PoleResidueModel& m, Complex s);
WideMatrix eval_transfer(const PoleResidueModel& m, const WideComplex& s);

Eigen::MatrixXcd eval_transfer_derivative(const PoleResidueModel& m, Complex s);
WideMatrix eval_transfer_derivative(const PoleResidueModel& m, const WideComplex& s);

/// Includes the delay factors e^{-s gamma_m}, e^{-s tau_l}.
Eigen::MatrixXcd eval_transfer(const DelayedModel& m, Complex s);

/// Sampled impulse response, stored as data[(k * ny + m) * nu + l].
struct ImpulseResponse {
    Eigen::Index ny = 0;
    Eigen::Index nu = 0;
    std::vector<double> t;
    std::vector<double> data;

    double operator()(Eigen::Index m, Eigen::Index l, std::size_t k) const {
        return data[(k * static_cast<std::size_t>(ny) + static_cast<std::size_t>(m)) * static_cast<std::size_t>(nu) +
                    static_cast<std::size_t>(l)];
    }
};

ImpulseResponse impulse_response(const DelayedModel& m, std::span<const double> t_grid);

/// True iff every complex term has a conjugate partner (pole and residue
/// matrix) and every real-pole term has a real residue matrix, within tol.
bool realify_check(const PoleResidueModel& m, double tol = 1e-10);

/// Tolerance used wherever a conjugate-closed sum is asserted to be real.
inline constexpr double kRealTol = 1e-10;

}  // namespace delayh2
