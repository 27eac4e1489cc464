#include "delayh2/delay_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <Eigen/Dense>

#include "delayh2/error.hpp"
#include "delayh2/h2.hpp"
#include "delayh2/parallel.hpp"

namespace delayh2 {

namespace {

using Ext = boost::multiprecision::cpp_bin_float_100;

constexpr double kTailFraction = 1e-8;
constexpr double kTimeConstants = 5.0;
constexpr double kArmijo = 1e-4;

// Tail energy of one impulse-response column (input l) or row (output m):
//   E(T) = sum_{j,i} (x_j^T x_i) y_j y_i e^{(mu_j + mu_i) T} / -(mu_j + mu_i)
// where x_j is the residue vector on the other side and y_j the entry of
// the channel itself. Evaluated in 100-digit arithmetic: the terms of a
// high-order cascade cancel by thirty orders of magnitude.
class TailEnergy {
   public:
    TailEnergy(const PoleResidueModel& g, bool input, Eigen::Index channel) {
        const std::size_t n = g.order();
        mu_re_.resize(n);
        mu_im_.resize(n);
        coef_re_.assign(n * n, Ext(0));
        coef_im_.assign(n * n, Ext(0));
        std::vector<WideComplex> y(n);
        for (std::size_t j = 0; j < n; ++j) {
            mu_re_[j] = to_ext(g.term(j).pole.real());
            mu_im_[j] = to_ext(g.term(j).pole.imag());
            y[j] = input ? g.term(j).right(channel) : g.term(j).left(channel);
        }
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                const auto& xj = input ? g.term(j).left : g.term(j).right;
                const auto& xi = input ? g.term(i).left : g.term(i).right;
                // products of quad numbers are exact in Ext
                Ext pr = 0, pi = 0;
                for (Eigen::Index m = 0; m < xj.size(); ++m) {
                    const Ext ar = to_ext(xj(m).real()), ai = to_ext(xj(m).imag());
                    const Ext br = to_ext(xi(m).real()), bi = to_ext(xi(m).imag());
                    pr += ar * br - ai * bi;
                    pi += ar * bi + ai * br;
                }
                const Ext yr = to_ext(y[j].real()), yi = to_ext(y[j].imag());
                const Ext zr = to_ext(y[i].real()), zi = to_ext(y[i].imag());
                const Ext yyr = yr * zr - yi * zi, yyi = yr * zi + yi * zr;
                const Ext nr = pr * yyr - pi * yyi, ni = pr * yyi + pi * yyr;
                // divide by -(mu_j + mu_i)
                const Ext dr = -(mu_re_[j] + mu_re_[i]), di = -(mu_im_[j] + mu_im_[i]);
                const Ext den = dr * dr + di * di;
                coef_re_[j * n + i] = (nr * dr + ni * di) / den;
                coef_im_[j * n + i] = (ni * dr - nr * di) / den;
            }
    }

    double operator()(double T) const {
        const std::size_t n = mu_re_.size();
        std::vector<Ext> er(n), ei(n);
        const Ext t(T);
        for (std::size_t j = 0; j < n; ++j) {
            const Ext m = boost::multiprecision::exp(mu_re_[j] * t);
            er[j] = m * boost::multiprecision::cos(mu_im_[j] * t);
            ei[j] = m * boost::multiprecision::sin(mu_im_[j] * t);
        }
        Ext acc = 0;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                const Ext pr = er[j] * er[i] - ei[j] * ei[i], pi = er[j] * ei[i] + ei[j] * er[i];
                acc += coef_re_[j * n + i] * pr - coef_im_[j * n + i] * pi;
            }
        return static_cast<double>(acc);
    }

   private:
    static Ext to_ext(const Wide& x) {
        const double hi = static_cast<double>(x);
        const Wide r = x - Wide(hi);
        const double mid = static_cast<double>(r);
        return Ext(hi) + Ext(mid) + Ext(static_cast<double>(r - Wide(mid)));
    }

    std::vector<Ext> mu_re_, mu_im_, coef_re_, coef_im_;
};

double tail_time(const PoleResidueModel& g, bool input, Eigen::Index channel, double floor_time) {
    const TailEnergy e(g, input, channel);
    const double total = e(0.0);
    if (!(total > 0)) return floor_time;
    const double target = kTailFraction * total;
    double hi = floor_time;
    int guard = 0;
    while (e(hi) > target && guard++ < 60) hi *= 2;
    if (hi == floor_time) return floor_time;
    double lo = hi / 2;
    for (int it = 0; it < 60 && hi - lo > 1e-6 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (e(mid) > target ? lo : hi) = mid;
    }
    return std::max(hi, floor_time);
}

// Cross term as a function of all delays, x = (tau_1..tau_nu, gamma_1..gamma_ny):
//   f(x) = Re sum_j sum_{m,l} a_jml e^{mu_j (gamma_m + tau_l)},
//   a_jml = [l_j]_m H(-mu_j)_ml [r_j]_l.
class CrossModel {
   public:
    CrossModel(const PoleResidueModel& g, const PoleResidueModel& h) : ny_(g.ny()), nu_(g.nu()) {
        for (const auto& t : g.terms()) {
            mu_.push_back(t.pole);
            const WideMatrix hm = eval_transfer(h, WideComplex(-t.pole));
            WideMatrix a(ny_, nu_);
            for (Eigen::Index m = 0; m < ny_; ++m)
                for (Eigen::Index l = 0; l < nu_; ++l) a(m, l) = t.left(m) * hm(m, l) * t.right(l);
            a_.push_back(std::move(a));
        }
    }

    std::size_t dims() const { return static_cast<std::size_t>(nu_ + ny_); }
    std::size_t terms() const { return mu_.size(); }
    const WideComplex& mu(std::size_t j) const { return mu_[j]; }
    const WideMatrix& a(std::size_t j) const { return a_[j]; }
    Eigen::Index ny() const { return ny_; }
    Eigen::Index nu() const { return nu_; }

    struct Eval {
        double value = 0;
        Wide exact = 0;  // value before rounding, for line-search comparisons
        Eigen::VectorXd grad;
        Eigen::MatrixXd hess;
    };

    Eval eval(const std::vector<double>& x, bool derivatives) const {
        const std::size_t d = dims();
        Wide value = 0;
        std::vector<Wide> grad(d, Wide(0));
        std::vector<Wide> hess(derivatives ? d * d : 0, Wide(0));
        for (std::size_t j = 0; j < mu_.size(); ++j) {
            const WideComplex& m = mu_[j];
            std::vector<WideComplex> ei(static_cast<std::size_t>(nu_)), eo(static_cast<std::size_t>(ny_));
            for (Eigen::Index l = 0; l < nu_; ++l) ei[static_cast<std::size_t>(l)] = expmu(m, x[static_cast<std::size_t>(l)]);
            for (Eigen::Index o = 0; o < ny_; ++o)
                eo[static_cast<std::size_t>(o)] = expmu(m, x[static_cast<std::size_t>(nu_ + o)]);
            const WideComplex m2 = m * m;
            for (Eigen::Index o = 0; o < ny_; ++o)
                for (Eigen::Index l = 0; l < nu_; ++l) {
                    const WideComplex w = a_[j](o, l) * eo[static_cast<std::size_t>(o)] * ei[static_cast<std::size_t>(l)];
                    value += w.real();
                    if (!derivatives) continue;
                    const Wide g1 = (m * w).real();
                    const Wide g2 = (m2 * w).real();
                    const std::size_t il = static_cast<std::size_t>(l), io = static_cast<std::size_t>(nu_ + o);
                    grad[il] += g1;
                    grad[io] += g1;
                    hess[il * d + il] += g2;
                    hess[io * d + io] += g2;
                    hess[il * d + io] += g2;
                    hess[io * d + il] += g2;
                }
        }
        Eval e;
        e.value = narrow(value);
        e.exact = value;
        if (!std::isfinite(e.value)) throw Error(ErrorCode::NonFiniteObjective, "cross objective is not finite");
        if (derivatives) {
            e.grad.resize(static_cast<Eigen::Index>(d));
            e.hess.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
            for (std::size_t i = 0; i < d; ++i) {
                e.grad(static_cast<Eigen::Index>(i)) = narrow(grad[i]);
                for (std::size_t k = 0; k < d; ++k)
                    e.hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = narrow(hess[i * d + k]);
            }
        }
        return e;
    }

    static WideComplex expmu(const WideComplex& m, double t) { return t == 0 ? WideComplex(Wide(1)) : wexp(m * Wide(t)); }

   private:
    Eigen::Index ny_, nu_;
    std::vector<WideComplex> mu_;
    std::vector<WideMatrix> a_;
};

struct Candidate {
    std::vector<double> x;
    double value = 0;
};

// Higher objective first; exact ties by lexicographically smaller delays.
bool better(const Candidate& a, const Candidate& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.x < b.x;
}

struct Box {
    std::vector<std::size_t> free;  // coordinates allowed to move
    std::vector<double> upper;      // per coordinate
};

struct Refined {
    Candidate point;
    double grad_norm = 0;  // projected gradient norm of J = -2 f
    bool on_boundary = false;
    int iterations = 0;
};

Eigen::VectorXd projected(const Eigen::VectorXd& g, const std::vector<double>& x, const Box& box) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(g.size());
    for (std::size_t c : box.free) {
        const auto i = static_cast<Eigen::Index>(c);
        const bool at_lo = x[c] <= 0 && g(i) < 0;
        const bool at_hi = x[c] >= box.upper[c] && g(i) > 0;
        if (!at_lo && !at_hi) p(i) = g(i);
    }
    return p;
}

// Projected Newton ascent where the reduced Hessian is negative definite,
// projected gradient ascent otherwise; Armijo backtracking on the box.
Refined refine(const CrossModel& model, Candidate start, const Box& box, const DelaySearchConfig& cfg,
               double step_hint) {
    Refined r;
    std::vector<double> x = start.x;
    CrossModel::Eval e = model.eval(x, true);
    auto clamp = [&](std::vector<double> y) {
        for (std::size_t c : box.free) y[c] = std::clamp(y[c], 0.0, box.upper[c]);
        return y;
    };
    int it = 0;
    for (; it < cfg.max_refine_iters; ++it) {
        const Eigen::VectorXd pg = projected(e.grad, x, box);
        if (2 * pg.norm() < cfg.refine_tol) break;

        std::vector<std::size_t> active;
        for (std::size_t c : box.free)
            if (pg(static_cast<Eigen::Index>(c)) != 0) active.push_back(c);
        const auto k = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd Hs(k, k);
        Eigen::VectorXd gs(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            gs(i) = e.grad(static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)]));
            for (Eigen::Index m = 0; m < k; ++m)
                Hs(i, m) = e.hess(static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)]),
                                  static_cast<Eigen::Index>(active[static_cast<std::size_t>(m)]));
        }
        Eigen::VectorXd ds;
        Eigen::LLT<Eigen::MatrixXd> llt(-Hs);
        if (llt.info() == Eigen::Success) {
            ds = llt.solve(gs);
        } else {
            ds = gs * (step_hint / std::max(gs.cwiseAbs().maxCoeff(), 1e-300));
        }
        Eigen::VectorXd d = Eigen::VectorXd::Zero(e.grad.size());
        for (Eigen::Index i = 0; i < k; ++i) d(static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)])) = ds(i);

        double t = 1;
        bool moved = false;
        for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
            std::vector<double> y = x;
            for (std::size_t c : box.free) y[c] += t * d(static_cast<Eigen::Index>(c));
            y = clamp(y);
            Wide lin = 0;
            for (std::size_t c : box.free) lin += Wide(e.grad(static_cast<Eigen::Index>(c))) * Wide(y[c] - x[c]);
            if (y == x) break;
            const CrossModel::Eval ey = model.eval(y, true);
            if (ey.exact >= e.exact + Wide(kArmijo) * lin) {
                x = std::move(y);
                e = ey;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    r.iterations = it;
    r.point = {x, e.value};
    r.grad_norm = 2 * projected(e.grad, x, box).norm();
    for (std::size_t c : box.free)
        if (x[c] <= 0 || x[c] >= box.upper[c]) r.on_boundary = true;
    // never return less than the start
    if (better(start, r.point) && start.value > r.point.value) {
        const CrossModel::Eval es = model.eval(start.x, true);
        r.point = start;
        r.grad_norm = 2 * projected(es.grad, start.x, box).norm();
    }
    return r;
}

std::vector<bool> resolve_mask(const std::vector<bool>& m, Eigen::Index n, const char* which) {
    if (m.empty()) return std::vector<bool>(static_cast<std::size_t>(n), true);
    if (m.size() != static_cast<std::size_t>(n)) {
        std::ostringstream os;
        os << which << " mask has " << m.size() << " entries, expected " << n;
        throw Error(ErrorCode::DimensionMismatch, os.str());
    }
    return m;
}

}  // namespace

void default_tau_max(const PoleResidueModel& g, std::vector<double>& tau_max_in, std::vector<double>& tau_max_out) {
    double slowest = std::numeric_limits<double>::infinity();
    for (const auto& t : g.terms()) slowest = std::min(slowest, std::abs(narrow(t.pole.real())));
    const double floor_time = kTimeConstants / slowest;
    tau_max_in.clear();
    tau_max_out.clear();
    for (Eigen::Index l = 0; l < g.nu(); ++l) tau_max_in.push_back(tail_time(g, true, l, floor_time));
    for (Eigen::Index m = 0; m < g.ny(); ++m) tau_max_out.push_back(tail_time(g, false, m, floor_time));
}

double cross_objective(const PoleResidueModel& g, const PoleResidueModel& h, const DelayBlock& input, const DelayBlock& output) {
    return inner_product_delayed(DelayedModel(h, input, output), g);
}

DelaySearchResult optimize_delays(const PoleResidueModel& g, const PoleResidueModel& h, const DelaySearchConfig& cfg) {
    if (g.ny() != h.ny() || g.nu() != h.nu()) throw Error(ErrorCode::DimensionMismatch, "reduced model shape differs from the original");
    if (cfg.grid_points_per_channel < 2) throw Error(ErrorCode::InvalidArgument, "delay grid needs at least two points per channel");
    const Eigen::Index nu = g.nu(), ny = g.ny();
    const std::vector<bool> in_mask = resolve_mask(cfg.input_mask, nu, "input");
    const std::vector<bool> out_mask = resolve_mask(cfg.output_mask, ny, "output");

    DelaySearchResult res;
    res.tau_max_in = cfg.tau_max_in;
    res.tau_max_out = cfg.tau_max_out;
    if (res.tau_max_in.empty() || res.tau_max_out.empty()) {
        std::vector<double> ti, to;
        default_tau_max(g, ti, to);
        if (res.tau_max_in.empty()) res.tau_max_in = ti;
        if (res.tau_max_out.empty()) res.tau_max_out = to;
    }
    if (res.tau_max_in.size() != static_cast<std::size_t>(nu) || res.tau_max_out.size() != static_cast<std::size_t>(ny))
        throw Error(ErrorCode::DimensionMismatch, "tau_max needs one entry per channel");
    for (double t : res.tau_max_in)
        if (!(t > 0)) throw Error(ErrorCode::InvalidArgument, "tau_max must be positive");
    for (double t : res.tau_max_out)
        if (!(t > 0)) throw Error(ErrorCode::InvalidArgument, "tau_max must be positive");

    const CrossModel model(g, h);
    const std::size_t dims = model.dims();
    Box box;
    box.upper.resize(dims);
    for (Eigen::Index l = 0; l < nu; ++l) {
        box.upper[static_cast<std::size_t>(l)] = res.tau_max_in[static_cast<std::size_t>(l)];
        if (in_mask[static_cast<std::size_t>(l)]) box.free.push_back(static_cast<std::size_t>(l));
    }
    for (Eigen::Index m = 0; m < ny; ++m) {
        box.upper[static_cast<std::size_t>(nu + m)] = res.tau_max_out[static_cast<std::size_t>(m)];
        if (out_mask[static_cast<std::size_t>(m)]) box.free.push_back(static_cast<std::size_t>(nu + m));
    }

    const std::vector<double> zero(dims, 0.0);
    res.zero_objective = model.eval(zero, false).value;
    auto finish = [&](const Candidate& c) {
        std::vector<double> tau(c.x.begin(), c.x.begin() + nu), gamma(c.x.begin() + nu, c.x.end());
        res.input = DelayBlock(tau, in_mask);
        res.output = DelayBlock(gamma, out_mask);
        res.objective = c.value;
    };
    if (box.free.empty()) {
        finish({zero, res.zero_objective});
        res.best_grid_objective = res.zero_objective;
        return res;
    }

    const std::size_t k = box.free.size();
    const bool joint = k <= 3;
    std::size_t points = cfg.grid_points_per_channel;
    if (joint) {
        while (points > 2 && std::pow(static_cast<double>(points), static_cast<double>(k)) > static_cast<double>(cfg.joint_grid_budget))
            --points;
    }
    std::vector<std::vector<double>> grid(k);
    // exp tables: table[c][p * N + j] = e^{mu_j t_p}
    std::vector<std::vector<WideComplex>> table(k);
    const std::size_t N = model.terms();
    double min_spacing = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
        const double T = box.upper[box.free[c]];
        grid[c].resize(points);
        for (std::size_t p = 0; p < points; ++p) grid[c][p] = T * static_cast<double>(p) / static_cast<double>(points - 1);
        grid[c].back() = T;
        min_spacing = std::min(min_spacing, T / static_cast<double>(points - 1));
        table[c].resize(points * N);
        parallel_for(points, [&](std::size_t p0, std::size_t p1) {
            for (std::size_t p = p0; p < p1; ++p)
                for (std::size_t j = 0; j < N; ++j) table[c][p * N + j] = CrossModel::expmu(model.mu(j), grid[c][p]);
        });
    }
    // which free slot (if any) drives coordinate d
    std::vector<int> slot(dims, -1);
    for (std::size_t c = 0; c < k; ++c) slot[box.free[c]] = static_cast<int>(c);

    // f at a grid index vector (one index per free channel)
    auto grid_value = [&](const std::vector<std::size_t>& idx) {
        Wide acc = 0;
        for (std::size_t j = 0; j < N; ++j) {
            const WideMatrix& a = model.a(j);
            for (Eigen::Index o = 0; o < ny; ++o) {
                const int so = slot[static_cast<std::size_t>(nu + o)];
                const WideComplex eo = so < 0 ? WideComplex(Wide(1)) : table[static_cast<std::size_t>(so)][idx[static_cast<std::size_t>(so)] * N + j];
                for (Eigen::Index l = 0; l < nu; ++l) {
                    const int sl = slot[static_cast<std::size_t>(l)];
                    const WideComplex ei = sl < 0 ? WideComplex(Wide(1)) : table[static_cast<std::size_t>(sl)][idx[static_cast<std::size_t>(sl)] * N + j];
                    acc += (a(o, l) * eo * ei).real();
                }
            }
        }
        const double v = narrow(acc);
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteObjective, "cross objective is not finite on the delay grid");
        return v;
    };
    auto to_point = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> x(dims, 0.0);
        for (std::size_t c = 0; c < k; ++c) x[box.free[c]] = grid[c][idx[c]];
        return x;
    };
    auto record = [&](const std::vector<double>& x, double v) {
        if (!cfg.keep_landscape) return;
        res.landscape.push_back({std::vector<double>(x.begin(), x.begin() + nu), std::vector<double>(x.begin() + nu, x.end()), v});
    };

    std::vector<Candidate> starts;
    if (joint) {
        std::size_t total = 1;
        for (std::size_t c = 0; c < k; ++c) total *= points;
        auto unravel = [&](std::size_t flat) {
            std::vector<std::size_t> idx(k);
            for (std::size_t c = k; c-- > 0;) {
                idx[c] = flat % points;
                flat /= points;
            }
            return idx;
        };
        std::vector<double> values(total);
        parallel_for(chunk_count(total), [&](std::size_t c0, std::size_t c1) {
            for (std::size_t c = c0; c < c1; ++c)
                for (std::size_t f = chunk_begin(total, c); f < chunk_begin(total, c + 1); ++f) values[f] = grid_value(unravel(f));
        });
        res.grid_evaluations = total;
        for (std::size_t f = 0; f < total; ++f) {
            const auto idx = unravel(f);
            record(to_point(idx), values[f]);
            // local maximum over the full 3^k neighbourhood
            bool is_max = true;
            std::size_t offsets = 1;
            for (std::size_t c = 0; c < k; ++c) offsets *= 3;
            for (std::size_t o = 0; o < offsets && is_max; ++o) {
                std::size_t rest = o;
                std::size_t nb = 0;
                bool valid = true, self = true;
                for (std::size_t c = 0; c < k; ++c) {
                    const int delta = static_cast<int>(rest % 3) - 1;
                    rest /= 3;
                    const long v = static_cast<long>(idx[c]) + delta;
                    if (v < 0 || v >= static_cast<long>(points)) valid = false;
                    if (delta != 0) self = false;
                    nb = nb * points + static_cast<std::size_t>(std::max(0L, v));
                }
                if (!valid || self) continue;
                if (values[nb] > values[f]) is_max = false;
            }
            if (is_max) starts.push_back({to_point(idx), values[f]});
        }
    } else {
        // cyclic coordinate scans from zero; every line-scan local maximum
        // becomes a candidate start
        std::vector<std::size_t> idx(k, 0);
        double current = grid_value(idx);
        starts.push_back({to_point(idx), current});
        for (int sweep = 0; sweep < 50; ++sweep) {
            bool improved = false;
            for (std::size_t c = 0; c < k; ++c) {
                std::vector<double> line(points);
                for (std::size_t p = 0; p < points; ++p) {
                    auto probe = idx;
                    probe[c] = p;
                    line[p] = grid_value(probe);
                    record(to_point(probe), line[p]);
                }
                res.grid_evaluations += points;
                std::size_t arg = idx[c];
                for (std::size_t p = 0; p < points; ++p) {
                    const bool left_ok = p == 0 || line[p - 1] <= line[p];
                    const bool right_ok = p + 1 == points || line[p + 1] <= line[p];
                    if (left_ok && right_ok) {
                        auto probe = idx;
                        probe[c] = p;
                        starts.push_back({to_point(probe), line[p]});
                    }
                    if (line[p] > line[arg]) arg = p;
                }
                if (line[arg] > current) {
                    current = line[arg];
                    idx[c] = arg;
                    improved = true;
                }
            }
            if (!improved) break;
        }
    }
    std::sort(starts.begin(), starts.end(), better);
    starts.erase(std::unique(starts.begin(), starts.end(), [](const Candidate& a, const Candidate& b) { return a.x == b.x; }),
                 starts.end());
    if (starts.size() > cfg.refine_starts) starts.resize(std::max<std::size_t>(cfg.refine_starts, 1));
    res.best_grid_objective = starts.front().value;

    std::vector<Refined> refined(starts.size());
    parallel_for(starts.size(), [&](std::size_t s0, std::size_t s1) {
        for (std::size_t s = s0; s < s1; ++s) refined[s] = refine(model, starts[s], box, cfg, min_spacing);
    });
    std::size_t win = 0;
    for (std::size_t s = 1; s < refined.size(); ++s)
        if (better(refined[s].point, refined[win].point)) win = s;
    finish(refined[win].point);
    res.gradient_norm = refined[win].grad_norm;
    res.on_boundary = refined[win].on_boundary;
    for (const auto& r : refined) res.refine_iterations += r.iterations;
    return res;
}

}  // namespace delayh2
