#include "delayh2/h2.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "delayh2/error.hpp"
#include "delayh2/parallel.hpp"

namespace delayh2 {

namespace {

using Ext = boost::multiprecision::cpp_bin_float_100;

struct ExtComplex {
    Ext re = 0;
    Ext im = 0;

    ExtComplex& operator+=(const ExtComplex& o) {
        re += o.re;
        im += o.im;
        return *this;
    }
    friend ExtComplex operator+(ExtComplex a, const ExtComplex& b) { return a += b; }
    friend ExtComplex operator*(const ExtComplex& a, const ExtComplex& b) {
        return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
    }
    friend ExtComplex operator/(const ExtComplex& a, const ExtComplex& b) {
        const Ext d = b.re * b.re + b.im * b.im;
        return {(a.re * b.re + a.im * b.im) / d, (a.im * b.re - a.re * b.im) / d};
    }
};

// Exact: three doubles hold all 113 bits of a binary128 significand.
Ext to_ext(const Wide& x) {
    const double hi = static_cast<double>(x);
    const Wide r1 = x - Wide(hi);
    const double mid = static_cast<double>(r1);
    const double lo = static_cast<double>(r1 - Wide(mid));
    return Ext(hi) + Ext(mid) + Ext(lo);
}

ExtComplex to_ext(const WideComplex& z) { return {to_ext(z.real()), to_ext(z.imag())}; }

void check_real(const WideComplex& z, const char* what) {
    using boost::multiprecision::abs;
    if (abs(z.imag()) > Wide(kRealTol) * std::max(Wide(1), abs(z.real()))) {
        std::ostringstream os;
        os << what << " has imaginary part " << static_cast<double>(z.imag())
           << "; the model is not conjugate-closed";
        throw Error(ErrorCode::NonRealSum, os.str());
    }
}

void check_dims(const PoleResidueModel& a, const PoleResidueModel& b) {
    if (a.ny() != b.ny() || a.nu() != b.nu()) {
        std::ostringstream os;
        os << "models are " << a.ny() << "x" << a.nu() << " and " << b.ny() << "x" << b.nu();
        throw Error(ErrorCode::DimensionMismatch, os.str());
    }
}

double simpson_weight(std::size_t i, std::size_t n) {
    // n odd: plain Simpson. n even: Simpson on the first n-3 points and the
    // 3/8 rule on the last four.
    if (n == 2) return 0.5;
    const std::size_t simpson_end = (n % 2 == 1) ? n - 1 : n - 4;
    double w = 0;
    if (i <= simpson_end && simpson_end > 0) {
        if (i == 0 || i == simpson_end) w += 1.0 / 3.0;
        else w += (i % 2 == 1) ? 4.0 / 3.0 : 2.0 / 3.0;
    }
    if (n % 2 == 0 && i >= n - 4) {
        const std::size_t k = i - (n - 4);
        w += (k == 0 || k == 3) ? 3.0 / 8.0 : 9.0 / 8.0;
    }
    return w;
}

template <class Integrand>
double frequency_quadrature(double omega_max, std::size_t n, Integrand f) {
    if (!(omega_max > 0) || n < 2) throw Error(ErrorCode::InvalidArgument, "quadrature needs omega_max > 0 and at least 2 points");
    const double h = 2 * omega_max / static_cast<double>(n - 1);
    const double sum = parallel_sum<double>(n, [&](std::size_t begin, std::size_t end) {
        double acc = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const double w = -omega_max + h * static_cast<double>(i);
            acc += simpson_weight(i, n) * f(w);
        }
        return acc;
    });
    return sum * h / (2 * std::numbers::pi);
}

// Double-precision evaluator for the quadrature oracle. The oracle is only
// meant for well-conditioned test models, and millions of evaluations in
// quad would be prohibitive.
class FastTransfer {
   public:
    explicit FastTransfer(const DelayedModel& m) : ny_(m.core.ny()), nu_(m.core.nu()) {
        for (std::size_t k = 0; k < m.core.order(); ++k) {
            poles_.push_back(narrow(m.core.term(k).pole));
            residues_.push_back(narrow(m.core.residue(k)));
        }
        for (Eigen::Index i = 0; i < ny_; ++i)
            for (Eigen::Index l = 0; l < nu_; ++l)
                shift_.push_back(m.output_delays[static_cast<std::size_t>(i)] + m.input_delays[static_cast<std::size_t>(l)]);
    }

    Eigen::MatrixXcd operator()(double w) const {
        const Complex s(0, w);
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(ny_, nu_);
        for (std::size_t k = 0; k < poles_.size(); ++k) out += residues_[k] / (s - poles_[k]);
        for (Eigen::Index i = 0; i < ny_; ++i)
            for (Eigen::Index l = 0; l < nu_; ++l) {
                const double d = shift_[static_cast<std::size_t>(i * nu_ + l)];
                if (d != 0) out(i, l) *= std::exp(-s * d);
            }
        return out;
    }

   private:
    Eigen::Index ny_, nu_;
    std::vector<Complex> poles_;
    std::vector<Eigen::MatrixXcd> residues_;
    std::vector<double> shift_;
};

}  // namespace

double OptimalityResiduals::max_interp() const {
    double m = 0;
    for (const auto* v : {&interp_right, &interp_left, &interp_hermite})
        for (double x : *v) m = std::max(m, x);
    return m;
}

double OptimalityResiduals::max_delay() const {
    double m = 0;
    for (const auto* v : {&delay_in, &delay_out})
        for (double x : *v) m = std::max(m, x);
    return m;
}

namespace {

struct ExtTerms {
    std::vector<ExtComplex> pole;
    std::vector<std::vector<ExtComplex>> left, right;
};

ExtTerms to_ext(const PoleResidueModel& h) {
    ExtTerms e;
    for (const auto& t : h.terms()) {
        e.pole.push_back(to_ext(t.pole));
        e.left.emplace_back();
        e.right.emplace_back();
        for (Eigen::Index i = 0; i < h.ny(); ++i) e.left.back().push_back(to_ext(t.left(i)));
        for (Eigen::Index i = 0; i < h.nu(); ++i) e.right.back().push_back(to_ext(t.right(i)));
    }
    return e;
}

// sum_{j in a, i in b} (l_j^T l_i)(r_i^T r_j) / (-lambda_j - lambda_i)
ExtComplex pairwise_sum(const ExtTerms& a, const ExtTerms& b) {
    return parallel_sum<ExtComplex>(a.pole.size(), [&](std::size_t begin, std::size_t end) {
        ExtComplex acc;
        for (std::size_t j = begin; j < end; ++j) {
            for (std::size_t i = 0; i < b.pole.size(); ++i) {
                ExtComplex ll, rr;
                for (std::size_t m = 0; m < a.left[j].size(); ++m) ll += a.left[j][m] * b.left[i][m];
                for (std::size_t m = 0; m < a.right[j].size(); ++m) rr += b.right[i][m] * a.right[j][m];
                const ExtComplex denom{-(a.pole[j].re + b.pole[i].re), -(a.pole[j].im + b.pole[i].im)};
                acc += ll * rr / denom;
            }
        }
        return acc;
    });
}

}  // namespace

double h2_norm_squared(const PoleResidueModel& h) {
    const ExtTerms e = to_ext(h);
    const ExtComplex total = pairwise_sum(e, e);
    const double re = static_cast<double>(total.re);
    const double im = static_cast<double>(total.im);
    if (std::abs(im) > kRealTol * std::max(1.0, std::abs(re))) {
        std::ostringstream os;
        os << "norm sum has imaginary part " << im << "; the model is not conjugate-closed";
        throw Error(ErrorCode::NonRealSum, os.str());
    }
    if (re < -kRealTol) {
        std::ostringstream os;
        os << "norm sum evaluates to " << re;
        throw Error(ErrorCode::NegativeNormSquared, os.str());
    }
    return std::max(re, 0.0);
}

double h2_norm_pole_residue(const PoleResidueModel& h) { return std::sqrt(h2_norm_squared(h)); }

double h2_norm_quadrature(const DelayedModel& h, double omega_max, std::size_t n_points) {
    const FastTransfer f(h);
    return std::sqrt(frequency_quadrature(omega_max, n_points, [&](double w) { return f(w).squaredNorm(); }));
}

double inner_product_quadrature(const DelayedModel& a, const DelayedModel& b, double omega_max, std::size_t n_points) {
    check_dims(a.core, b.core);
    const FastTransfer fa(a), fb(b);
    return frequency_quadrature(omega_max, n_points, [&](double w) {
        return (fa(w).conjugate().cwiseProduct(fb(w))).sum().real();
    });
}

PoleResidueModel build_gtilde(const PoleResidueModel& g, const DelayBlock& input_delays, const DelayBlock& output_delays) {
    if (input_delays.size() != static_cast<std::size_t>(g.nu()) || output_delays.size() != static_cast<std::size_t>(g.ny()))
        throw Error(ErrorCode::DimensionMismatch, "delay blocks do not match the model's inputs/outputs");
    if (std::all_of(input_delays.delays().begin(), input_delays.delays().end(), [](double d) { return d == 0; }) &&
        std::all_of(output_delays.delays().begin(), output_delays.delays().end(), [](double d) { return d == 0; }))
        return g;
    std::vector<PoleResidueTerm> terms = g.terms();
    for (auto& t : terms) {
        for (Eigen::Index m = 0; m < g.ny(); ++m) {
            const double d = output_delays[static_cast<std::size_t>(m)];
            if (d != 0) t.left(m) *= wexp(t.pole * Wide(d));
        }
        for (Eigen::Index l = 0; l < g.nu(); ++l) {
            const double d = input_delays[static_cast<std::size_t>(l)];
            if (d != 0) t.right(l) *= wexp(t.pole * Wide(d));
        }
    }
    return PoleResidueModel(std::move(terms), g.ny(), g.nu());
}

double inner_product_delayed(const DelayedModel& hd, const PoleResidueModel& g) {
    check_dims(hd.core, g);
    // Same 100-digit sum as the norm: with h close to g the terms cancel
    // just as badly.
    const ExtComplex total = pairwise_sum(to_ext(build_gtilde(g, hd.input_delays, hd.output_delays)), to_ext(hd.core));
    const WideComplex acc{Wide(static_cast<double>(total.re)), Wide(static_cast<double>(total.im))};
    check_real(acc, "inner product");
    return narrow(acc.real());
}

GapValue compute_gap(const PoleResidueModel& g, const DelayedModel& hd, double g_norm_sq) {
    GapValue v;
    v.norm_g_sq = g_norm_sq;
    v.cross = inner_product_delayed(hd, g);
    v.norm_h_sq = h2_norm_squared(hd.core);
    v.j = v.norm_g_sq - 2 * v.cross + v.norm_h_sq;
    return v;
}

DelayGradient delay_condition(const PoleResidueModel& g, const DelayedModel& hd) {
    check_dims(hd.core, g);
    const PoleResidueModel gt = build_gtilde(g, hd.input_delays, hd.output_delays);
    const Eigen::Index ny = g.ny(), nu = g.nu();
    WideVector in = WideVector::Zero(nu), out = WideVector::Zero(ny);
    for (const auto& t : gt.terms()) {
        const WideMatrix hm = eval_transfer(hd.core, WideComplex(-t.pole));
        const WideVector row = hm.transpose() * t.left;  // (l~^T H)^T
        const WideVector col = hm * t.right;
        for (Eigen::Index l = 0; l < nu; ++l) in(l) += t.pole * row(l) * t.right(l);
        for (Eigen::Index m = 0; m < ny; ++m) out(m) += t.pole * t.left(m) * col(m);
    }
    DelayGradient r;
    r.input.assign(static_cast<std::size_t>(nu), 0.0);
    r.output.assign(static_cast<std::size_t>(ny), 0.0);
    for (Eigen::Index l = 0; l < nu; ++l) {
        if (!hd.input_delays.is_free(static_cast<std::size_t>(l))) continue;
        check_real(in(l), "input delay condition");
        r.input[static_cast<std::size_t>(l)] = narrow(in(l).real());
    }
    for (Eigen::Index m = 0; m < ny; ++m) {
        if (!hd.output_delays.is_free(static_cast<std::size_t>(m))) continue;
        check_real(out(m), "output delay condition");
        r.output[static_cast<std::size_t>(m)] = narrow(out(m).real());
    }
    return r;
}

DelayGradient grad_delays(const PoleResidueModel& g, const DelayedModel& hd) {
    DelayGradient r = delay_condition(g, hd);
    for (auto& x : r.input) x = x == 0 ? 0.0 : -2 * x;  // keep masked zeros unsigned
    for (auto& x : r.output) x = x == 0 ? 0.0 : -2 * x;
    return r;
}

ResiduePoleGradient grad_residues_poles(const PoleResidueModel& gt, const PoleResidueModel& h) {
    check_dims(gt, h);
    ResiduePoleGradient r;
    for (const auto& t : h.terms()) {
        const WideComplex s = -t.pole;
        const WideMatrix d = eval_transfer(gt, s) - eval_transfer(h, s);
        const WideMatrix dp = eval_transfer_derivative(gt, s) - eval_transfer_derivative(h, s);
        const WideComplex two(Wide(2));
        r.dc.push_back(narrow(WideVector(-two * (d * t.right))));
        r.db.push_back(narrow(WideVector(-two * (d.transpose() * t.left))));
        r.dl.push_back(narrow(two * dotu(t.left, dp * t.right)));
    }
    return r;
}

std::vector<int> conjugate_partners(const PoleResidueModel& h) {
    const auto& terms = h.terms();
    std::vector<int> p(terms.size(), -1);
    for (std::size_t k = 0; k < terms.size(); ++k) {
        if (terms[k].pole.imag() == 0) {
            p[k] = static_cast<int>(k);
            continue;
        }
        Wide best = -1;
        for (std::size_t j = 0; j < terms.size(); ++j) {
            if (j == k || terms[j].pole.imag() * terms[k].pole.imag() >= 0) continue;
            const Wide d = wabs(terms[j].pole - std::conj(terms[k].pole));
            if (best < 0 || d < best) {
                best = d;
                p[k] = static_cast<int>(j);
            }
        }
        if (best > Wide(kRealTol) * std::max(Wide(1), wabs(terms[k].pole))) p[k] = -1;
    }
    return p;
}

RealGradient to_real_coordinates(const PoleResidueModel& h, const ResiduePoleGradient& g) {
    const auto partner = conjugate_partners(h);
    RealGradient r;
    const std::size_t n = h.order();
    for (std::size_t k = 0; k < n; ++k) {
        Eigen::MatrixX2d db = Eigen::MatrixX2d::Zero(h.nu(), 2);
        Eigen::MatrixX2d dc = Eigen::MatrixX2d::Zero(h.ny(), 2);
        Eigen::Vector2d dl = Eigen::Vector2d::Zero();
        const bool real_term = partner[k] == static_cast<int>(k);
        const bool leader = real_term || h.term(k).pole.imag() > 0;
        if (real_term) {
            db.col(0) = g.db[k].real();
            dc.col(0) = g.dc[k].real();
            dl(0) = g.dl[k].real();
        } else if (leader) {
            db.col(0) = 2 * g.db[k].real();
            db.col(1) = -2 * g.db[k].imag();
            dc.col(0) = 2 * g.dc[k].real();
            dc.col(1) = -2 * g.dc[k].imag();
            dl << 2 * g.dl[k].real(), -2 * g.dl[k].imag();
        }
        r.db.push_back(db);
        r.dc.push_back(dc);
        r.dl.push_back(dl);
    }
    return r;
}

OptimalityResiduals optimality_residuals(const PoleResidueModel& g, const DelayedModel& hd) {
    check_dims(hd.core, g);
    const PoleResidueModel gt = build_gtilde(g, hd.input_delays, hd.output_delays);
    OptimalityResiduals r;
    for (const auto& t : hd.core.terms()) {
        const WideComplex s = -t.pole;
        const WideMatrix d = eval_transfer(hd.core, s) - eval_transfer(gt, s);
        const WideMatrix dp = eval_transfer_derivative(hd.core, s) - eval_transfer_derivative(gt, s);
        r.interp_right.push_back(narrow(norm2(d * t.right)));
        r.interp_left.push_back(narrow(norm2(d.transpose() * t.left)));
        r.interp_hermite.push_back(narrow(wabs(dotu(t.left, dp * t.right))));
    }
    const DelayGradient c = delay_condition(g, hd);
    for (double x : c.input) r.delay_in.push_back(std::abs(x));
    for (double x : c.output) r.delay_out.push_back(std::abs(x));
    return r;
}

}  // namespace delayh2
