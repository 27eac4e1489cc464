#pragma once

// Shared helpers for the test binaries: seeded random models and
// independent reference computations that do not go through the
// pole/residue machinery under test.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "delayh2/h2.hpp"
#include "delayh2/lti.hpp"

namespace testsupport {

using delayh2::Complex;

// Conjugate-closed model with `order` poles (real poles and conjugate pairs
// mixed), real parts in [-1, -0.1].
inline delayh2::PoleResidueModel random_model(std::mt19937_64& rng, int order, int ny = 1, int nu = 1) {
    std::uniform_real_distribution<double> re(-1.0, -0.1), im(0.2, 2.0), coin(0.0, 1.0);
    std::normal_distribution<double> gauss;
    std::vector<delayh2::PoleResidueTerm> terms;
    auto vec = [&](int n, bool complex) {
        delayh2::WideVector v(n);
        for (int i = 0; i < n; ++i) v(i) = delayh2::widen(Complex(gauss(rng), complex ? gauss(rng) : 0.0));
        return v;
    };
    int left = order;
    while (left > 0) {
        const double a = re(rng);
        if (left >= 2 && coin(rng) < 0.6) {
            const Complex p(a, im(rng));
            delayh2::PoleResidueTerm t{delayh2::widen(p), vec(ny, true), vec(nu, true)};
            delayh2::PoleResidueTerm c{delayh2::widen(std::conj(p)), t.left.conjugate(), t.right.conjugate()};
            terms.push_back(t);
            terms.push_back(c);
            left -= 2;
        } else {
            terms.push_back({delayh2::widen(Complex(a, 0)), vec(ny, false), vec(nu, false)});
            left -= 1;
        }
    }
    return delayh2::PoleResidueModel(std::move(terms), ny, nu);
}

inline delayh2::DelayBlock random_delays(std::mt19937_64& rng, int n, double max_delay = 2.0) {
    std::uniform_real_distribution<double> d(0.0, max_delay);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = d(rng);
    return delayh2::DelayBlock(v);
}

// Direct resolvent C (sE - A)^{-1} B.
inline Eigen::MatrixXcd resolvent(const delayh2::StateSpaceModel& m, Complex s) {
    const Eigen::MatrixXcd pencil = s * m.E().cast<Complex>() - m.A().cast<Complex>();
    return m.C().cast<Complex>() * pencil.partialPivLu().solve(m.B().cast<Complex>());
}

// Impulse response of E x' = A x, x(0) = E^{-1} B e_l, y = C x, by classic
// fixed-step RK4 in long double. Returns y(t_k) for every grid point, shape
// (k * ny + m) * nu + l.
inline std::vector<double> rk4_impulse(const delayh2::StateSpaceModel& m, const std::vector<double>& grid,
                                       double dt) {
    using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const MatL M = m.E().partialPivLu().solve(m.A()).cast<long double>();
    const MatL X0 = m.E().partialPivLu().solve(m.B()).cast<long double>();
    const MatL C = m.C().cast<long double>();
    const auto ny = m.outputs(), nu = m.inputs();
    std::vector<double> out(grid.size() * static_cast<std::size_t>(ny * nu));
    MatL x = X0;
    long double t = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        while (t < grid[k] - 1e-12) {
            const long double h = std::min<long double>(dt, grid[k] - t);
            const MatL k1 = M * x;
            const MatL k2 = M * (x + h / 2 * k1);
            const MatL k3 = M * (x + h / 2 * k2);
            const MatL k4 = M * (x + h * k3);
            x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
            t += h;
        }
        const MatL y = C * x;
        for (Eigen::Index i = 0; i < ny; ++i)
            for (Eigen::Index l = 0; l < nu; ++l)
                out[(k * static_cast<std::size_t>(ny) + static_cast<std::size_t>(i)) * static_cast<std::size_t>(nu) +
                    static_cast<std::size_t>(l)] = static_cast<double>(y(i, l));
    }
    return out;
}

}  // namespace testsupport

namespace testsupport {

// ||G||^2 = C P C^T with A P + P A^T + B B^T = 0 (E = I), solved through
// the Kronecker form in long double. Independent of any residue sum.
inline long double gramian_norm_sq(const delayh2::StateSpaceModel& m) {
    using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const MatL A = m.E().partialPivLu().solve(m.A()).cast<long double>();
    const MatL B = m.E().partialPivLu().solve(m.B()).cast<long double>();
    const MatL C = m.C().cast<long double>();
    const Eigen::Index n = A.rows();
    const MatL I = MatL::Identity(n, n);
    MatL K = MatL::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            K.block(i * n, j * n, n, n) += A(i, j) * I;  // A (x) I acting on column-major vec(P): P A^T
            if (i == j) K.block(i * n, j * n, n, n) += A;
        }
    const MatL Q = B * B.transpose();
    const Eigen::Matrix<long double, Eigen::Dynamic, 1> q = -Eigen::Map<const Eigen::Matrix<long double, Eigen::Dynamic, 1>>(Q.data(), n * n);
    const Eigen::Matrix<long double, Eigen::Dynamic, 1> p = K.partialPivLu().solve(q);
    const MatL P = Eigen::Map<const MatL>(p.data(), n, n);
    return (C * P * C.transpose()).trace();
}

// Best second-order gap for a SISO model given by (pole, residue) pairs.
// For fixed poles the optimal residues solve the normal equations
// M phi = g with M_kk' = 1/(-l_k - l_k'), g_k = G(-l_k), and the gap is
// ||G||^2 - g^T M^{-1} g. The poles are found by a dense grid over real
// pairs and conjugate pairs followed by repeated zoomed grids.
struct BruteForce {
    std::vector<std::pair<Complex, Complex>> g;
    double gsq = 0;

    explicit BruteForce(std::vector<std::pair<Complex, Complex>> terms) : g(std::move(terms)) {
        Complex s = 0;
        for (auto [p, r] : g)
            for (auto [q, t] : g) s += r * t / (-p - q);
        gsq = s.real();
    }

    Complex G(Complex s) const {
        Complex v = 0;
        for (auto [p, r] : g) v += r / (s - p);
        return v;
    }

    double gap(Complex l1, Complex l2) const {
        Eigen::Matrix2cd M;
        Eigen::Vector2cd rhs;
        const Complex l[2] = {l1, l2};
        for (int i = 0; i < 2; ++i) {
            rhs(i) = G(-l[i]);
            for (int k = 0; k < 2; ++k) M(i, k) = 1.0 / (-l[i] - l[k]);
        }
        const Eigen::Vector2cd phi = M.fullPivLu().solve(rhs);
        // near-coalescing poles with huge cancelling residues are numerically
        // meaningless here
        if (phi.cwiseAbs().maxCoeff() > 1e3) return 1e300;
        const double v = gsq - (rhs.transpose() * phi)(0).real();
        return std::isfinite(v) ? v : 1e300;
    }

    // x, y: real pair (x, y) or conjugate pair x +- iy
    double eval(bool complex, double x, double y) const {
        if (complex) return gap(Complex(x, y), Complex(x, -y));
        if (std::abs(x - y) < 1e-9) return 1e300;
        return gap(Complex(x, 0), Complex(y, 0));
    }

    double solve() const {
        double best = 1e300;
        for (bool complex : {false, true}) {
            double bx = 0, by = 0, local = 1e300;
            const int n = 200;
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < n; ++k) {
                    const double x = -std::exp(std::log(0.05) + (std::log(20.0) - std::log(0.05)) * i / (n - 1));
                    const double y = complex ? std::exp(std::log(0.01) + (std::log(20.0) - std::log(0.01)) * k / (n - 1))
                                             : -std::exp(std::log(0.05) + (std::log(20.0) - std::log(0.05)) * k / (n - 1));
                    const double v = eval(complex, x, y);
                    if (v < local) local = v, bx = x, by = y;
                }
            double wx = std::abs(bx) * 0.05, wy = std::abs(by) * 0.05;
            for (int round = 0; round < 40; ++round) {
                const double cx = bx, cy = by;
                for (int i = -10; i <= 10; ++i)
                    for (int k = -10; k <= 10; ++k) {
                        const double x = cx + wx * i / 10.0, y = cy + wy * k / 10.0;
                        if (x >= 0 || (complex && y <= 0) || (!complex && y >= 0)) continue;
                        const double v = eval(complex, x, y);
                        if (v < local) local = v, bx = x, by = y;
                    }
                wx *= 0.5;
                wy *= 0.5;
            }
            best = std::min(best, local);
        }
        return best;
    }
};


// Rebuilds h with term k's parameter moved by eps (complex) and its conjugate
// partner moved by conj(eps).
enum class Param { Pole, Left, Right };

inline delayh2::PoleResidueModel perturbed(const delayh2::PoleResidueModel& h, std::size_t k, Param p, Eigen::Index idx, Complex eps) {
    auto terms = h.terms();
    const auto partner = delayh2::conjugate_partners(h);
    auto apply = [&](delayh2::PoleResidueTerm& t, Complex e) {
        switch (p) {
            case Param::Pole: t.pole += delayh2::widen(e); break;
            case Param::Left: t.left(idx) += delayh2::widen(e); break;
            case Param::Right: t.right(idx) += delayh2::widen(e); break;
        }
    };
    apply(terms[k], eps);
    const auto j = static_cast<std::size_t>(partner[k]);
    if (j != k) apply(terms[j], std::conj(eps));
    return delayh2::PoleResidueModel(std::move(terms), h.ny(), h.nu());
}

inline double gap_of(const delayh2::PoleResidueModel& g, double gsq, const delayh2::PoleResidueModel& h, const delayh2::DelayBlock& in, const delayh2::DelayBlock& out) {
    return delayh2::compute_gap(g, delayh2::DelayedModel(h, in, out), gsq).j;
}

// Largest relative deviation, over `instances` random (g, h, delays)
// triples, between every analytic gradient entry (delays, and b, c, lambda
// as Re/Im pairs) and central differences of the gap. Per instance the
// error is max |analytic - fd| over max |analytic|.
inline double worst_gradient_error(std::mt19937_64& rng, int instances, double step = 1e-6) {
    using namespace delayh2;
    double worst = 0;
    for (int inst = 0; inst < instances; ++inst) {
        const int ny = 1 + inst % 2, nu = 1 + (inst / 2) % 2;
        const int N = 3 + inst % 6, n = 1 + inst % 3;
        const auto g = testsupport::random_model(rng, N, ny, nu);
        const auto h = testsupport::random_model(rng, n, ny, nu);
        const auto in = testsupport::random_delays(rng, nu), out = testsupport::random_delays(rng, ny);
        const double gsq = h2_norm_squared(g);
        const DelayedModel hd(h, in, out);

        std::vector<double> an, fd;
        const auto dg = grad_delays(g, hd);
        for (int l = 0; l < nu; ++l) {
            auto up = in.delays(), dn = in.delays();
            up[static_cast<std::size_t>(l)] += step;
            dn[static_cast<std::size_t>(l)] -= step;
            fd.push_back((gap_of(g, gsq, h, DelayBlock(up), out) - gap_of(g, gsq, h, DelayBlock(dn), out)) / (2 * step));
            an.push_back(dg.input[static_cast<std::size_t>(l)]);
        }
        for (int m = 0; m < ny; ++m) {
            auto up = out.delays(), dn = out.delays();
            up[static_cast<std::size_t>(m)] += step;
            dn[static_cast<std::size_t>(m)] -= step;
            fd.push_back((gap_of(g, gsq, h, in, DelayBlock(up)) - gap_of(g, gsq, h, in, DelayBlock(dn))) / (2 * step));
            an.push_back(dg.output[static_cast<std::size_t>(m)]);
        }

        const auto gt = build_gtilde(g, in, out);
        const RealGradient rg = to_real_coordinates(h, grad_residues_poles(gt, h));
        const auto partner = conjugate_partners(h);
        for (std::size_t k = 0; k < h.order(); ++k) {
            const bool real_term = partner[k] == static_cast<int>(k);
            if (!real_term && h.term(k).pole.imag() < 0) continue;
            auto coord = [&](Param p, Eigen::Index idx, int part, double analytic) {
                const Complex e = part == 0 ? Complex(step, 0) : Complex(0, step);
                const double up = gap_of(g, gsq, perturbed(h, k, p, idx, e), in, out);
                const double dn = gap_of(g, gsq, perturbed(h, k, p, idx, -e), in, out);
                fd.push_back((up - dn) / (2 * step));
                an.push_back(analytic);
            };
            const int parts = real_term ? 1 : 2;
            for (int part = 0; part < parts; ++part) {
                coord(Param::Pole, 0, part, rg.dl[k](part));
                for (Eigen::Index i = 0; i < ny; ++i) coord(Param::Left, i, part, rg.dc[k](i, part));
                for (Eigen::Index i = 0; i < nu; ++i) coord(Param::Right, i, part, rg.db[k](i, part));
            }
        }
        double scale = 0, err = 0;
        for (std::size_t i = 0; i < an.size(); ++i) {
            scale = std::max(scale, std::abs(an[i]));
            err = std::max(err, std::abs(an[i] - fd[i]));
        }
        worst = std::max(worst, err / scale);
    }
    return worst;
}

// (1/2pi) int ||H_d(iw)||_F^2 dw after the substitution w = tan(theta),
// which turns the real line into (-pi/2, pi/2) and the 1/w^2 tail into a
// bounded integrand; composite Simpson with n (odd) points. The endpoint
// value is the limit ||sum_j l_j r_j^T||_F^2 (delays only change phases).
inline double mapped_norm_squared(const delayh2::DelayedModel& h, std::size_t n = 200001) {
    const double pi = std::acos(-1.0);
    Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(h.core.ny(), h.core.nu());
    for (const auto& t : h.core.terms())
        D += delayh2::narrow(t.left) * delayh2::narrow(t.right).transpose();
    const double edge = D.squaredNorm();
    const double dt = pi / static_cast<double>(n - 1);
    double sum = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double f = edge;
        if (k != 0 && k + 1 != n) {
            const double th = -pi / 2 + dt * static_cast<double>(k);
            const double c = std::cos(th);
            f = delayh2::eval_transfer(h, Complex(0, std::tan(th))).squaredNorm() / (c * c);
        }
        const double w = (k == 0 || k + 1 == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        sum += w * f;
    }
    return sum * dt / 3 / (2 * pi);
}

}  // namespace testsupport
