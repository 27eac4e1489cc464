// State-space to pole/residue conversion. The eigendecomposition runs in
// quad precision: highly non-normal realizations (cascades of first-order
// sections, for instance) have eigenvector matrices whose conditioning wipes
// out every digit of a double-precision residue.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

#include "delayh2/error.hpp"
#include "delayh2/lti.hpp"

namespace delayh2 {

namespace {

using WideRealMatrix = Eigen::Matrix<Wide, Eigen::Dynamic, Eigen::Dynamic>;

constexpr double kMaxConditionE = 1e12;
constexpr double kRepeatedPoleTol = 1e-8;

}  // namespace

PoleResidueModel pole_residue_from_state_space(const StateSpaceModel& m) {
    const Eigen::Index n = m.order();

    Eigen::PartialPivLU<Eigen::MatrixXd> lu_e(m.E());
    const double rcond = lu_e.rcond();
    if (!(rcond > 1.0 / kMaxConditionE)) {
        std::ostringstream os;
        os << "E is singular or too ill-conditioned (reciprocal condition estimate " << rcond << ")";
        throw Error(ErrorCode::NonInvertibleE, os.str());
    }

    const WideRealMatrix E = m.E().cast<Wide>();
    const WideRealMatrix A = m.A().cast<Wide>();
    const WideRealMatrix B = m.B().cast<Wide>();
    const WideRealMatrix C = m.C().cast<Wide>();

    Eigen::PartialPivLU<WideRealMatrix> lu(E);
    const WideRealMatrix M = lu.solve(A);
    const WideRealMatrix EB = lu.solve(B);

    Eigen::EigenSolver<WideRealMatrix> es(M);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "eigendecomposition of E^{-1}A failed");
    const WideVector lambda = es.eigenvalues();
    const WideMatrix X = es.eigenvectors();

    Wide scale = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(lambda(i).real() < 0)) {
            std::ostringstream os;
            os << "eigenvalue " << narrow(lambda(i)) << " is not in the open left half-plane";
            throw Error(ErrorCode::Unstable, os.str());
        }
        scale = std::max(scale, wabs(lambda(i)));
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (wabs(lambda(i) - lambda(j)) < Wide(kRepeatedPoleTol) * scale) {
                std::ostringstream os;
                os << "eigenvalues " << narrow(lambda(i)) << " and " << narrow(lambda(j))
                   << " coincide; the pencil is not semi-simple with distinct poles";
                throw Error(ErrorCode::RepeatedPole, os.str());
            }

    const WideMatrix R = X.partialPivLu().solve(EB.cast<WideComplex>());  // n x nu, row j is r_j^T
    const WideMatrix L = C.cast<WideComplex>() * X;                       // ny x n, column j is l_j

    std::vector<PoleResidueTerm> terms(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        terms[static_cast<std::size_t>(j)] = {lambda(j), L.col(j), R.row(j).transpose()};
    }

    // Real input data: make conjugate pairs exact so the model is real to
    // the last bit.
    std::vector<bool> done(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& ti = terms[static_cast<std::size_t>(i)];
        if (done[static_cast<std::size_t>(i)] || ti.pole.imag() <= 0) continue;
        Eigen::Index best = -1;
        Wide best_dist = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i || done[static_cast<std::size_t>(j)] || terms[static_cast<std::size_t>(j)].pole.imag() >= 0) continue;
            const Wide d = wabs(terms[static_cast<std::size_t>(j)].pole - std::conj(ti.pole));
            if (best < 0 || d < best_dist) {
                best = j;
                best_dist = d;
            }
        }
        if (best < 0) continue;
        auto& tj = terms[static_cast<std::size_t>(best)];
        tj.pole = std::conj(ti.pole);
        tj.left = ti.left.conjugate();
        tj.right = ti.right.conjugate();
        done[static_cast<std::size_t>(i)] = done[static_cast<std::size_t>(best)] = true;
    }
    for (auto& t : terms) {
        if (t.pole.imag() != 0) continue;
        // real eigenvector: discard the rounding-level imaginary dust
        for (Eigen::Index i = 0; i < t.left.size(); ++i) t.left(i) = WideComplex(t.left(i).real());
        for (Eigen::Index i = 0; i < t.right.size(); ++i) t.right(i) = WideComplex(t.right(i).real());
    }

    return PoleResidueModel(std::move(terms), m.outputs(), m.inputs());
}

}  // namespace delayh2
