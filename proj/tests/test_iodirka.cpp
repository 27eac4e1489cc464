#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <string>

#include "delayh2/benchmark.hpp"
#include "delayh2/error.hpp"
#include "delayh2/h2.hpp"
#include "delayh2/iodirka.hpp"
#include "support.hpp"

using namespace delayh2;

namespace {

IoDirkaConfig siso_input_delay(std::size_t order) {
    IoDirkaConfig cfg;
    cfg.order = order;
    cfg.output_mask = {false};
    return cfg;
}

const ReductionReport& cascade_n2() {
    static const ReductionReport rep = io_dirka(cascade_model(20), siso_input_delay(2));
    return rep;
}

double max_abs_diff(const OptimalityResiduals& a, const OptimalityResiduals& b) {
    double m = 0;
    auto cmp = [&](const std::vector<double>& x, const std::vector<double>& y) {
        REQUIRE(x.size() == y.size());
        for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
    };
    cmp(a.interp_right, b.interp_right);
    cmp(a.interp_left, b.interp_left);
    cmp(a.interp_hermite, b.interp_hermite);
    cmp(a.delay_in, b.delay_in);
    cmp(a.delay_out, b.delay_out);
    return m;
}

}  // namespace

TEST_CASE("cascade benchmark n=2: converged stationary point near the reported delay") {
    const auto& rep = cascade_n2();
    CHECK(rep.converged);
    CHECK(rep.final_pass_applied);
    const double tau = rep.model.input_delays[0];
    MESSAGE("tau = " << tau << ", outer iterations " << rep.outer_iterations << ", gap " << rep.gap.j);
    CHECK(std::abs(tau - 8.7) < 0.15);
    CHECK(rep.model.output_delays[0] == 0.0);
    const auto poles = rep.model.core.poles();
    REQUIRE(poles.size() == 2);
    for (const auto& p : poles) {
        CHECK(std::abs(p.real() + 0.2032) < 1e-2);
        CHECK(std::abs(std::abs(p.imag()) - 0.2070) < 1e-2);
    }
    CHECK(rep.residuals.max_interp() < 1e-4);
    CHECK(rep.residuals.max_delay() < 1e-3);
}

TEST_CASE("certify agrees with the loop's residuals; gap parts recompute") {
    const auto g = cascade_model(20);
    const auto& rep = cascade_n2();
    CHECK(max_abs_diff(certify(g, rep), rep.residuals) <= 1e-12);

    const GapValue fresh = compute_gap(g, rep.model, h2_norm_squared(g));
    const double assembled = h2_norm_squared(g) - 2 * inner_product_delayed(rep.model, g) + h2_norm_squared(rep.model.core);
    CHECK(std::abs(fresh.j - rep.gap.j) < 1e-12);
    CHECK(std::abs(assembled - rep.gap.j) < 1e-12);
}

TEST_CASE("trace gaps recompute bit-identically from the snapshots") {
    const auto g = cascade_model(20);
    const double gsq = h2_norm_squared(g);
    const auto& rep = cascade_n2();
    REQUIRE(static_cast<int>(rep.trace.size()) == rep.outer_iterations);
    for (const auto& t : rep.trace) {
        const GapValue again = compute_gap(g, t.model, gsq);
        CHECK(again.j == t.gap.j);
        CHECK(again.cross == t.gap.cross);
        CHECK(again.norm_h_sq == t.gap.norm_h_sq);
    }
}

TEST_CASE("alternating consistency on every trace entry") {
    const auto g = cascade_model(20);
    const IoDirkaConfig cfg = siso_input_delay(2);
    const double g_norm = std::sqrt(h2_norm_squared(g));
    for (const auto& t : cascade_n2().trace) {
        CHECK(t.irka_converged);
        // Hermite residuals are measured against G~, whose norm matches g's.
        CHECK(t.irka_certificate <= cfg.irka.certificate_tol * g_norm);
        CHECK((t.delay_gradient_norm < cfg.delay.refine_tol || t.delay_on_boundary));
    }
}

TEST_CASE("perturbing the final delay raises the delay residual") {
    const auto g = cascade_model(20);
    ReductionReport moved = cascade_n2();
    const double base = certify(g, moved).max_delay();
    moved.model.input_delays = moved.model.input_delays.with_delays({moved.model.input_delays[0] + 0.1});
    const double after = certify(g, moved).max_delay();
    MESSAGE("delay residual " << base << " -> " << after);
    CHECK(after >= 10 * base);
}

TEST_CASE("n = N recovers the model with zero delays") {
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 3; ++trial) {
        const auto g = testsupport::random_model(rng, 4, 2, 2);
        IoDirkaConfig cfg;
        cfg.order = 4;
        const auto rep = io_dirka(g, cfg);
        CHECK(rep.gap.j < 1e-9);
        for (double d : rep.model.input_delays.delays()) CHECK(d == 0.0);
        for (double d : rep.model.output_delays.delays()) CHECK(d == 0.0);
    }
}

TEST_CASE("masked channels never carry delay") {
    std::mt19937_64 rng(72);
    const auto g = testsupport::random_model(rng, 6, 2, 2);
    IoDirkaConfig cfg;
    cfg.order = 2;
    cfg.outer_max_iters = 30;
    cfg.input_mask = {true, false};
    cfg.output_mask = {false, true};
    const auto rep = io_dirka(g, cfg);
    for (const auto& t : rep.trace) {
        CHECK(t.model.input_delays[1] == 0.0);
        CHECK(t.model.output_delays[0] == 0.0);
        CHECK_FALSE(t.model.input_delays.is_free(1));
        CHECK_FALSE(t.model.output_delays.is_free(0));
    }
    CHECK(rep.model.input_delays[1] == 0.0);
    CHECK(rep.model.output_delays[0] == 0.0);
}

TEST_CASE("all delays masked off reduces to plain IRKA") {
    std::mt19937_64 rng(73);
    const auto g = testsupport::random_model(rng, 8, 2, 2);
    IoDirkaConfig cfg;
    cfg.order = 3;
    cfg.input_mask = {false, false};
    cfg.output_mask = {false, false};
    const auto rep = io_dirka(g, cfg);
    IrkaConfig icfg = cfg.irka;
    icfg.order = 3;
    const auto plain = irka_reduce(g, icfg);
    REQUIRE(plain.converged);
    CHECK(rep.converged);
    CHECK(std::abs(rep.gap.j - plain.gap) <= 1e-10 * std::max(1.0, plain.gap));
    const auto cert = hermite_residuals(g, rep.model.core);
    for (std::size_t k = 0; k < cert.size(); ++k) {
        CHECK(std::abs(cert[k].right - rep.residuals.interp_right[k]) < 1e-12);
        CHECK(std::abs(cert[k].hermite - rep.residuals.interp_hermite[k]) < 1e-12);
    }
    for (double d : rep.residuals.delay_in) CHECK(d == 0.0);
}

TEST_CASE("optimality-residual stopping meets its thresholds") {
    IoDirkaConfig cfg = siso_input_delay(2);
    cfg.stopping = StoppingMode::OptimalityResidual;
    cfg.interp_tol = 1e-6;
    cfg.delay_tol = 1e-6;
    const auto rep = io_dirka(cascade_model(20), cfg);
    REQUIRE(rep.converged);
    CHECK(rep.residuals.max_interp() < cfg.interp_tol);
    CHECK(rep.residuals.max_delay() < cfg.delay_tol);
}

TEST_CASE("h2-error stopping converges on the same point") {
    IoDirkaConfig cfg = siso_input_delay(2);
    cfg.stopping = StoppingMode::H2Error;
    cfg.outer_tol = 1e-10;
    const auto rep = io_dirka(cascade_model(20), cfg);
    CHECK(rep.converged);
    CHECK(std::abs(rep.model.input_delays[0] - cascade_n2().model.input_delays[0]) < 1e-2);
}

TEST_CASE("iteration limit returns the best iterate") {
    IoDirkaConfig cfg = siso_input_delay(2);
    cfg.outer_max_iters = 4;
    cfg.final_irka_pass = false;
    const auto rep = io_dirka(cascade_model(20), cfg);
    CHECK_FALSE(rep.converged);
    CHECK(rep.stop_reason == "OuterMaxIters");
    CHECK(rep.outer_iterations == 4);
    double best = rep.trace.front().gap.j;
    for (const auto& t : rep.trace) best = std::min(best, t.gap.j);
    CHECK(rep.gap.j == best);
}

TEST_CASE("cross-correlation start lands on the same stationary point") {
    IoDirkaConfig cfg = siso_input_delay(2);
    cfg.init = DelayInit::CrossCorrelation;
    const auto rep = io_dirka(cascade_model(20), cfg);
    CHECK(rep.converged);
    CHECK(rep.trace.front().model.input_delays[0] > 1.0);
    CHECK(std::abs(rep.model.input_delays[0] - cascade_n2().model.input_delays[0]) < 1e-3);
}

TEST_CASE("deterministic reruns") {
    const auto a = io_dirka(cascade_model(20), siso_input_delay(2));
    const auto& b = cascade_n2();
    REQUIRE(a.trace.size() == b.trace.size());
    CHECK(a.gap.j == b.gap.j);
    CHECK(a.model.input_delays == b.model.input_delays);
    for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].gap.j == b.trace[i].gap.j);
}

TEST_CASE("inner errors carry the outer iteration") {
    IoDirkaConfig cfg = siso_input_delay(2);
    cfg.irka.max_iters = 0;
    try {
        io_dirka(cascade_model(20), cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
        CHECK(std::string(e.what()).find("outer iteration 1") != std::string::npos);
    }
}

TEST_CASE("invalid configurations") {
    const auto g = cascade_model(20);
    IoDirkaConfig cfg;
    cfg.order = 0;
    CHECK_THROWS_AS(io_dirka(g, cfg), Error);
    cfg.order = 21;
    CHECK_THROWS_AS(io_dirka(g, cfg), Error);
    cfg.order = 2;
    cfg.outer_tol = 0;
    CHECK_THROWS_AS(io_dirka(g, cfg), Error);
    cfg.outer_tol = 1e-6;
    cfg.input_mask = {true, true};
    CHECK_THROWS_AS(io_dirka(g, cfg), Error);
    CHECK(stopping_mode_from_string("h2-error") == StoppingMode::H2Error);
    CHECK_THROWS_AS(stopping_mode_from_string("never"), Error);
}
