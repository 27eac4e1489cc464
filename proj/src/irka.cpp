#include "delayh2/irka.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "delayh2/error.hpp"
#include "delayh2/h2.hpp"
#include "delayh2/parallel.hpp"

namespace delayh2 {

namespace {

constexpr double kRealPoleTol = 1e-8;

struct Interpolation {
    std::vector<Complex> shifts;
    std::vector<Eigen::VectorXcd> right;
    std::vector<Eigen::VectorXcd> left;
};

bool canonical_less(Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() < b.real();
    if (std::abs(a.imag()) != std::abs(b.imag())) return std::abs(a.imag()) < std::abs(b.imag());
    return a.imag() > b.imag();
}

Eigen::VectorXcd unit(const Eigen::VectorXcd& v) {
    const double n = v.norm();
    if (!(n > 0) || !std::isfinite(n)) throw Error(ErrorCode::DegenerateDirections, "tangential direction vanished");
    return v / n;
}

Interpolation initial_interpolation(const PoleResidueModel& g, const IrkaConfig& cfg, IrkaInit kind) {
    const std::size_t n = cfg.order;
    Interpolation ip;
    if (kind == IrkaInit::User) {
        if (cfg.shifts.size() != n || cfg.right_directions.size() != n || cfg.left_directions.size() != n)
            throw Error(ErrorCode::InvalidArgument, "user initialization needs one shift and one direction pair per reduced pole");
        ip.shifts = cfg.shifts;
        for (std::size_t k = 0; k < n; ++k) {
            if (cfg.right_directions[k].size() != g.nu() || cfg.left_directions[k].size() != g.ny())
                throw Error(ErrorCode::DimensionMismatch, "user tangential direction has the wrong length");
            ip.right.push_back(unit(cfg.right_directions[k]));
            ip.left.push_back(unit(cfg.left_directions[k]));
        }
        return ip;
    }

    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (const auto& t : g.terms()) {
        const double a = narrow(wabs(t.pole));
        lo = std::min(lo, a);
        hi = std::max(hi, a);
    }
    if (hi < lo * (1 + 1e-6)) hi = lo * (1 + 0.5 * static_cast<double>(n));

    if (kind == IrkaInit::LogSpacedReal) {
        for (std::size_t k = 0; k < n; ++k) {
            const double f = n == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(n - 1);
            ip.shifts.emplace_back(std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo))), 0.0);
            ip.right.push_back(Eigen::VectorXcd::Ones(g.nu()) / std::sqrt(static_cast<double>(g.nu())));
            ip.left.push_back(Eigen::VectorXcd::Ones(g.ny()) / std::sqrt(static_cast<double>(g.ny())));
        }
    } else {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
        std::normal_distribution<double> gauss;
        for (std::size_t k = 0; k < n; ++k) {
            ip.shifts.emplace_back(std::exp(u(rng)), 0.0);
            Eigen::VectorXcd r(g.nu()), l(g.ny());
            for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = gauss(rng);
            for (Eigen::Index i = 0; i < l.size(); ++i) l(i) = gauss(rng);
            ip.right.push_back(unit(r));
            ip.left.push_back(unit(l));
        }
    }
    return ip;
}

// Reduced pencil (Er, Ar, Br, Cr) from the bases
//   V_jk = r_j^T b_k / (sigma_k - mu_j),  W_ji = l_j^T c_i / (sigma_i - mu_j)
// of g's diagonal realization: Er = W^T V, Ar = W^T diag(mu) V, Br = W^T R,
// Cr = L V. Sums run in quad; the reduced quantities are O(1).
struct ReducedPencil {
    Eigen::MatrixXcd E, A, B, C;
};

ReducedPencil project(const PoleResidueModel& g, const Interpolation& ip) {
    const auto n = static_cast<Eigen::Index>(ip.shifts.size());
    const auto N = g.order();
    const Eigen::Index ny = g.ny(), nu = g.nu();
    std::vector<WideVector> alpha(static_cast<std::size_t>(n)), beta(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t k0, std::size_t k1) {
        for (std::size_t k = k0; k < k1; ++k) {
            const WideComplex s = widen(ip.shifts[k]);
            const WideVector br = widen(Eigen::VectorXcd(ip.right[k]));
            const WideVector cl = widen(Eigen::VectorXcd(ip.left[k]));
            alpha[k].resize(static_cast<Eigen::Index>(N));
            beta[k].resize(static_cast<Eigen::Index>(N));
            for (std::size_t j = 0; j < N; ++j) {
                const auto& t = g.term(j);
                const WideComplex d = s - t.pole;
                if (wabs(d) == 0) throw Error(ErrorCode::EvalAtPole, "interpolation shift coincides with a pole");
                alpha[k](static_cast<Eigen::Index>(j)) = dotu(cl, t.left) / d;
                beta[k](static_cast<Eigen::Index>(j)) = dotu(t.right, br) / d;
            }
        }
    });
    ReducedPencil p;
    p.E.resize(n, n);
    p.A.resize(n, n);
    p.B.resize(n, nu);
    p.C.resize(ny, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& a = alpha[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto& b = beta[static_cast<std::size_t>(k)];
            WideComplex e{}, av{};
            for (std::size_t j = 0; j < N; ++j) {
                const WideComplex ab = a(static_cast<Eigen::Index>(j)) * b(static_cast<Eigen::Index>(j));
                e += ab;
                av += ab * g.term(j).pole;
            }
            p.E(i, k) = narrow(e);
            p.A(i, k) = narrow(av);
        }
        for (Eigen::Index l = 0; l < nu; ++l) {
            WideComplex acc{};
            for (std::size_t j = 0; j < N; ++j) acc += a(static_cast<Eigen::Index>(j)) * g.term(j).right(l);
            p.B(i, l) = narrow(acc);
        }
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& b = beta[static_cast<std::size_t>(k)];
        for (Eigen::Index m = 0; m < ny; ++m) {
            WideComplex acc{};
            for (std::size_t j = 0; j < N; ++j) acc += g.term(j).left(m) * b(static_cast<Eigen::Index>(j));
            p.C(m, k) = narrow(acc);
        }
    }
    return p;
}

struct RawTerm {
    Complex pole;
    Eigen::VectorXcd left, right;
};

// Diagonalizes the reduced pencil and returns a conjugate-closed real model.
PoleResidueModel diagonalize(const ReducedPencil& p, Eigen::Index ny, Eigen::Index nu, int& reflections) {
    const Eigen::Index n = p.E.rows();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(p.E);
    const Eigen::MatrixXcd M = lu.solve(p.A);
    const Eigen::MatrixXcd EB = lu.solve(p.B);
    if (!M.allFinite() || !EB.allFinite()) throw Error(ErrorCode::InvalidArgument, "reduced pencil is singular");
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(M);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "reduced eigenproblem failed");
    const Eigen::MatrixXcd X = es.eigenvectors();
    const Eigen::MatrixXcd Bh = X.partialPivLu().solve(EB);
    const Eigen::MatrixXcd Ch = p.C * X;

    std::vector<RawTerm> raw;
    for (Eigen::Index k = 0; k < n; ++k) raw.push_back({es.eigenvalues()(k), Ch.col(k), Bh.row(k).transpose()});
    std::sort(raw.begin(), raw.end(), [](const RawTerm& a, const RawTerm& b) { return canonical_less(a.pole, b.pole); });

    auto is_real = [](Complex z) { return std::abs(z.imag()) <= kRealPoleTol * std::max(1.0, std::abs(z)); };
    std::vector<RawTerm> out;
    std::vector<bool> used(raw.size(), false);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (used[i]) continue;
        used[i] = true;
        RawTerm t = raw[i];
        std::size_t partner = raw.size();
        if (!is_real(t.pole)) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < raw.size(); ++j) {
                if (used[j] || is_real(raw[j].pole) || raw[j].pole.imag() * t.pole.imag() > 0) continue;
                const double d = std::abs(raw[j].pole - std::conj(t.pole));
                if (d < best) {
                    best = d;
                    partner = j;
                }
            }
        }
        if (partner == raw.size()) {
            // real pole: remove the common phase, keep the real residue
            Eigen::Index pk = 0;
            t.left.cwiseAbs().maxCoeff(&pk);
            const Complex ph = t.left(pk) / std::abs(t.left(pk));
            t.left = (t.left * std::conj(ph)).real().cast<Complex>();
            t.right = (t.right * ph).real().cast<Complex>();
            t.pole = Complex(t.pole.real(), 0);
            out.push_back(t);
            continue;
        }
        used[partner] = true;
        if (t.pole.imag() < 0) t = raw[partner];
        t.pole = Complex(t.pole.real(), std::abs(t.pole.imag()));
        out.push_back(t);
        out.push_back({std::conj(t.pole), t.left.conjugate(), t.right.conjugate()});
    }

    std::vector<PoleResidueTerm> terms;
    for (auto& t : out) {
        if (!(t.pole.real() < 0)) {
            ++reflections;
            const double re = t.pole.real() == 0 ? -1e-12 * std::max(1.0, std::abs(t.pole)) : -t.pole.real();
            t.pole = Complex(re, t.pole.imag());
        }
        terms.push_back({widen(t.pole), widen(t.left), widen(t.right)});
    }
    return PoleResidueModel(std::move(terms), ny, nu);
}

double pole_movement(const PoleResidueModel& h, const std::vector<Complex>& shifts) {
    std::vector<Complex> a = h.poles(), b;
    for (Complex s : shifts) b.push_back(-s);
    std::sort(a.begin(), a.end(), canonical_less);
    std::sort(b.begin(), b.end(), canonical_less);
    double num = 0, den = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        num = std::max(num, std::abs(a[k] - b[k]));
        den = std::max(den, std::abs(b[k]));
    }
    return den > 0 ? num / den : num;
}

Interpolation mirrored(const PoleResidueModel& h) {
    Interpolation ip;
    for (const auto& t : h.terms()) {
        ip.shifts.push_back(-narrow(t.pole));
        ip.right.push_back(unit(narrow(t.right)));
        ip.left.push_back(unit(narrow(t.left)));
    }
    return ip;
}

IrkaResult run(const PoleResidueModel& g, const IrkaConfig& cfg, IrkaInit kind, double g_norm_sq) {
    Interpolation ip = initial_interpolation(g, cfg, kind);
    const double threshold = cfg.certificate_tol * std::sqrt(g_norm_sq);

    IrkaResult best;
    bool have_best = false;
    double best_gap = std::numeric_limits<double>::infinity();
    int reflections = 0;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        PoleResidueModel h;
        try {
            h = diagonalize(project(g, ip), g.ny(), g.nu(), reflections);
        } catch (const Error&) {
            if (!have_best) throw;
            break;
        }
        const double movement = pole_movement(h, ip.shifts);
        const double gap = compute_gap(g, DelayedModel(h), g_norm_sq).j;
        ip = mirrored(h);

        const bool settled = movement < cfg.shift_tol;
        if (settled || gap < best_gap || !have_best) {
            best.model = h;
            best.iterations = it;
            best.final_shift_movement = movement;
            best.gap = gap;
            best.next_shifts = ip.shifts;
            best.next_right = ip.right;
            best.next_left = ip.left;
            best_gap = gap;
            have_best = true;
        }
        if (settled) {
            best.certificate = hermite_residuals(g, h);
            double worst = 0;
            for (const auto& r : best.certificate) worst = std::max({worst, r.right, r.left, r.hermite});
            best.converged = worst <= threshold;
            best.reflections = reflections;
            return best;
        }
    }
    best.iterations = cfg.max_iters;
    best.converged = false;
    best.reflections = reflections;
    best.certificate = hermite_residuals(g, best.model);
    return best;
}

}  // namespace

std::vector<HermiteResidual> hermite_residuals(const PoleResidueModel& g, const PoleResidueModel& h) {
    const DelayedModel hd(h, DelayBlock::zeros(static_cast<std::size_t>(h.nu()), false),
                          DelayBlock::zeros(static_cast<std::size_t>(h.ny()), false));
    const OptimalityResiduals r = optimality_residuals(g, hd);
    std::vector<HermiteResidual> out;
    for (std::size_t k = 0; k < r.interp_right.size(); ++k)
        out.push_back({r.interp_right[k], r.interp_left[k], r.interp_hermite[k]});
    return out;
}

IrkaResult irka_reduce(const PoleResidueModel& g, const IrkaConfig& cfg) {
    if (cfg.order < 1 || cfg.order > g.order()) {
        std::ostringstream os;
        os << "reduced order " << cfg.order << " must lie in [1, " << g.order() << "]";
        throw Error(ErrorCode::InvalidArgument, os.str());
    }
    if (!(cfg.shift_tol > 0) || !(cfg.certificate_tol > 0) || cfg.max_iters < 1)
        throw Error(ErrorCode::InvalidArgument, "IRKA tolerances and iteration limit must be positive");
    const double g_norm_sq = h2_norm_squared(g);
    IrkaResult r = run(g, cfg, cfg.init, g_norm_sq);
    if (!r.converged && cfg.retry) {
        IrkaResult second = run(g, cfg, IrkaInit::RandomStable, g_norm_sq);
        if (second.converged || second.gap < r.gap) r = std::move(second);
    }
    return r;
}

}  // namespace delayh2
