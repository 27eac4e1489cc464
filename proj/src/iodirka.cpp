#include "delayh2/iodirka.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "delayh2/error.hpp"

namespace delayh2 {

namespace {

bool pole_less(Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() < b.real();
    if (std::abs(a.imag()) != std::abs(b.imag())) return std::abs(a.imag()) < std::abs(b.imag());
    return a.imag() > b.imag();
}

double relative_pole_movement(const PoleResidueModel& now, const PoleResidueModel& before) {
    std::vector<Complex> a = now.poles(), b = before.poles();
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    std::sort(a.begin(), a.end(), pole_less);
    std::sort(b.begin(), b.end(), pole_less);
    double num = 0, den = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        num = std::max(num, std::abs(a[k] - b[k]));
        den = std::max(den, std::abs(b[k]));
    }
    return den > 0 ? num / den : num;
}

std::vector<double> stacked(const DelayBlock& in, const DelayBlock& out) {
    std::vector<double> v = in.delays();
    v.insert(v.end(), out.delays().begin(), out.delays().end());
    return v;
}

double relative_delay_movement(const std::vector<double>& now, const std::vector<double>& before) {
    double num = 0, den = 1;
    for (std::size_t i = 0; i < now.size(); ++i) {
        num = std::max(num, std::abs(now[i] - before[i]));
        den = std::max(den, std::abs(now[i]));
    }
    return num / den;
}

double max_hermite(const std::vector<HermiteResidual>& c) {
    double m = 0;
    for (const auto& r : c) m = std::max({m, r.right, r.left, r.hermite});
    return m;
}

std::vector<bool> resolve(const std::vector<bool>& mask, Eigen::Index n, const char* which) {
    if (mask.empty()) return std::vector<bool>(static_cast<std::size_t>(n), true);
    if (mask.size() != static_cast<std::size_t>(n))
        throw Error(ErrorCode::DimensionMismatch, std::string(which) + " mask length differs from channel count");
    return mask;
}

DelayBlock initial_block(const std::vector<double>& delays, const std::vector<bool>& mask, const char* which) {
    if (delays.empty()) return DelayBlock(std::vector<double>(mask.size(), 0.0), mask);
    if (delays.size() != mask.size())
        throw Error(ErrorCode::DimensionMismatch, std::string(which) + " initial delays differ from channel count");
    return DelayBlock(delays, mask);
}

[[noreturn]] void rethrow_at(const Error& e, int it) {
    throw Error(e.code(), "outer iteration " + std::to_string(it) + ": " + e.detail());
}

void check_config(const PoleResidueModel& g, const IoDirkaConfig& cfg) {
    if (cfg.order < 1 || cfg.order > g.order())
        throw Error(ErrorCode::InvalidArgument, "reduced order must lie in [1, " + std::to_string(g.order()) + "]");
    if (cfg.outer_max_iters < 1) throw Error(ErrorCode::InvalidArgument, "outer_max_iters must be at least 1");
    if (!(cfg.outer_tol > 0) || !(cfg.interp_tol > 0) || !(cfg.delay_tol > 0))
        throw Error(ErrorCode::InvalidArgument, "tolerances must be positive");
    if (!realify_check(g)) throw Error(ErrorCode::NonRealModel, "full model is not conjugate-closed");
}

}  // namespace

const char* to_string(StoppingMode m) {
    switch (m) {
        case StoppingMode::PoleVariation: return "pole-variation";
        case StoppingMode::OptimalityResidual: return "optimality-residual";
        case StoppingMode::H2Error: return "h2-error";
    }
    return "?";
}

StoppingMode stopping_mode_from_string(const std::string& s) {
    if (s == "pole-variation") return StoppingMode::PoleVariation;
    if (s == "optimality-residual") return StoppingMode::OptimalityResidual;
    if (s == "h2-error") return StoppingMode::H2Error;
    throw Error(ErrorCode::InvalidArgument, "unknown stopping mode '" + s + "'");
}

ReductionReport io_dirka(const PoleResidueModel& g, const IoDirkaConfig& cfg) {
    check_config(g, cfg);
    const std::vector<bool> in_mask = resolve(cfg.input_mask, g.nu(), "input");
    const std::vector<bool> out_mask = resolve(cfg.output_mask, g.ny(), "output");

    ReductionReport rep;
    rep.norm_g_sq = h2_norm_squared(g);

    IrkaConfig icfg = cfg.irka;
    icfg.order = cfg.order;
    DelaySearchConfig dcfg = cfg.delay;
    dcfg.input_mask = in_mask;
    dcfg.output_mask = out_mask;
    if (dcfg.tau_max_in.empty() || dcfg.tau_max_out.empty()) {
        std::vector<double> ti, to;
        default_tau_max(g, ti, to);
        if (dcfg.tau_max_in.empty()) dcfg.tau_max_in = ti;
        if (dcfg.tau_max_out.empty()) dcfg.tau_max_out = to;
    }

    DelayBlock in = initial_block(cfg.init_input_delays, in_mask, "input");
    DelayBlock out = initial_block(cfg.init_output_delays, out_mask, "output");
    if (cfg.init == DelayInit::CrossCorrelation && cfg.init_input_delays.empty() && cfg.init_output_delays.empty()) {
        try {
            const IrkaResult plain = irka_reduce(g, icfg);
            const DelaySearchResult ds = optimize_delays(g, plain.model, dcfg);
            in = ds.input;
            out = ds.output;
        } catch (const Error& e) {
            rethrow_at(e, 0);
        }
    }

    std::size_t best = 0;
    for (int it = 1; it <= cfg.outer_max_iters; ++it) {
        TraceEntry t;
        t.iteration = it;
        try {
            const PoleResidueModel gt = build_gtilde(g, in, out);
            const IrkaResult ir = irka_reduce(gt, icfg);
            if (cfg.warm_start) {
                icfg.init = IrkaInit::User;
                icfg.shifts = ir.next_shifts;
                icfg.right_directions = ir.next_right;
                icfg.left_directions = ir.next_left;
            }
            const DelaySearchResult ds = optimize_delays(g, ir.model, dcfg);
            t.model = DelayedModel(ir.model, ds.input, ds.output);
            t.gap = compute_gap(g, t.model, rep.norm_g_sq);
            t.irka_converged = ir.converged;
            t.irka_iterations = ir.iterations;
            t.irka_certificate = max_hermite(ir.certificate);
            t.delay_gradient_norm = ds.gradient_norm;
            t.delay_on_boundary = ds.on_boundary;
        } catch (const Error& e) {
            rethrow_at(e, it);
        }
        const std::vector<double> tau_now = stacked(t.model.input_delays, t.model.output_delays);
        if (rep.trace.empty()) {
            t.pole_movement = std::numeric_limits<double>::infinity();
        } else {
            t.pole_movement = relative_pole_movement(t.model.core, rep.trace.back().model.core);
        }
        t.delay_movement = relative_delay_movement(tau_now, stacked(in, out));

        bool stop = false;
        switch (cfg.stopping) {
            case StoppingMode::PoleVariation:
                stop = t.pole_movement < cfg.outer_tol && t.delay_movement < cfg.outer_tol;
                break;
            case StoppingMode::OptimalityResidual: {
                const OptimalityResiduals r = optimality_residuals(g, t.model);
                stop = r.max_interp() < cfg.interp_tol && r.max_delay() < cfg.delay_tol;
                break;
            }
            case StoppingMode::H2Error:
                if (!rep.trace.empty()) {
                    const double prev = rep.trace.back().gap.j;
                    const double scale = std::max(std::abs(t.gap.j), rep.norm_g_sq * 1e-16);
                    stop = std::abs(t.gap.j - prev) / scale < cfg.outer_tol;
                }
                break;
        }

        in = t.model.input_delays;
        out = t.model.output_delays;
        rep.trace.push_back(std::move(t));
        if (rep.trace.back().gap.j < rep.trace[best].gap.j) best = rep.trace.size() - 1;
        rep.outer_iterations = it;
        if (stop) {
            rep.converged = true;
            break;
        }
    }

    const TraceEntry& chosen = rep.converged ? rep.trace.back() : rep.trace[best];
    rep.stop_reason = rep.converged ? std::string("converged (") + to_string(cfg.stopping) + ")" : "OuterMaxIters";
    rep.model = chosen.model;
    rep.loop_residuals = optimality_residuals(g, rep.model);
    rep.residuals = rep.loop_residuals;
    rep.gap = chosen.gap;

    // A last IRKA pass makes the core interpolate G~ at the final delays; it
    // is kept only if that inner run converged.
    if (cfg.final_irka_pass) {
        try {
            const PoleResidueModel gt = build_gtilde(g, rep.model.input_delays, rep.model.output_delays);
            const IrkaResult ir = irka_reduce(gt, icfg);
            if (ir.converged) {
                DelayedModel m(ir.model, rep.model.input_delays, rep.model.output_delays);
                rep.model = std::move(m);
                rep.gap = compute_gap(g, rep.model, rep.norm_g_sq);
                rep.residuals = optimality_residuals(g, rep.model);
                rep.final_pass_applied = true;
            }
        } catch (const Error& e) {
            rethrow_at(e, rep.outer_iterations + 1);
        }
    }
    if (rep.converged && cfg.stopping == StoppingMode::OptimalityResidual &&
        !(rep.residuals.max_interp() < cfg.interp_tol && rep.residuals.max_delay() < cfg.delay_tol)) {
        // The pass moved the model off the certified point; report the certified one.
        rep.model = chosen.model;
        rep.gap = chosen.gap;
        rep.residuals = rep.loop_residuals;
        rep.final_pass_applied = false;
    }
    return rep;
}

OptimalityResiduals certify(const PoleResidueModel& g, const ReductionReport& report) {
    return optimality_residuals(g, report.model);
}

}  // namespace delayh2
