#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <string>

#include "json.hpp"

#include "delayh2/benchmark.hpp"
#include "delayh2/error.hpp"
#include "delayh2/h2.hpp"
#include "delayh2/io.hpp"
#include "support.hpp"

using namespace delayh2;

namespace {

std::string parse_error_message(const std::string& text) {
    try {
        io::parse_model(text);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Parse);
        return e.what();
    }
    FAIL("expected a parse error");
    return {};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("number formats") {
    CHECK(io::format_json_double(0.1) == "0.10000000000000001");
    CHECK(io::format_json_double(-2.0) == "-2");
    CHECK(io::format_json_double(std::numeric_limits<double>::infinity()) == "null");
    CHECK(io::format_csv_double(1.0) == "1.000000000000e+00");
}

TEST_CASE("cascade model round trip keeps quad residues exactly") {
    const auto g = cascade_model(20);
    const std::string text = io::model_json(DelayedModel(g));
    CHECK(contains(text, "\"#q:"));
    const auto doc = io::parse_model(text);
    CHECK_FALSE(doc.state_space.has_value());
    REQUIRE(doc.model.core.order() == 20);
    for (std::size_t k = 0; k < 20; ++k) {
        CHECK(doc.model.core.term(k).pole == g.term(k).pole);
        CHECK(doc.model.core.term(k).left == g.term(k).left);
        CHECK(doc.model.core.term(k).right == g.term(k).right);
    }
    CHECK(h2_norm_squared(doc.model.core) == h2_norm_squared(g));
    CHECK(io::model_json(doc) == text);
}

TEST_CASE("delayed MIMO round trip is byte-identical") {
    std::mt19937_64 rng(81);
    for (int trial = 0; trial < 10; ++trial) {
        const auto core = testsupport::random_model(rng, 5, 2, 3);
        const DelayedModel m(core, testsupport::random_delays(rng, 3), DelayBlock({0.5, 0.0}, {true, false}));
        const std::string once = io::model_json(m);
        const auto doc = io::parse_model(once);
        CHECK(io::model_json(doc) == once);
        CHECK(doc.model.input_delays == m.input_delays);
        CHECK(doc.model.output_delays == m.output_delays);
    }
}

TEST_CASE("state-space files keep their realization") {
    const auto ss = cascade_state_space(6);
    io::ModelDocument doc;
    doc.state_space.emplace(ss);
    doc.model = DelayedModel(pole_residue_from_state_space(ss));
    const std::string text = io::model_json(doc);
    CHECK(contains(text, "\"kind\": \"state_space\""));
    const auto back = io::parse_model(text);
    REQUIRE(back.state_space.has_value());
    CHECK(back.state_space->A() == ss.A());
    CHECK(io::model_json(back) == text);
    CHECK(std::abs(h2_norm_squared(back.model.core) - h2_norm_squared(cascade_model(6))) < 1e-14);
}

TEST_CASE("state-space E defaults to identity; delays default to zero and free") {
    const auto doc = io::parse_model(R"({"kind":"state_space","A":[[-1]],"B":[[1]],"C":[[2]]})");
    REQUIRE(doc.model.core.order() == 1);
    CHECK(narrow(doc.model.core.term(0).pole) == Complex(-1, 0));
    CHECK(doc.model.input_delays.delays() == std::vector<double>{0.0});
    CHECK(doc.model.input_delays.is_free(0));
}

TEST_CASE("keys are written sorted") {
    const std::string text = io::model_json(DelayedModel(PoleResidueModel::siso({{{-1, 0}, {1, 0}}})));
    const std::vector<std::string> keys = {"\"input_delays\"", "\"input_mask\"", "\"kind\"", "\"nu\"",
                                           "\"ny\"", "\"output_delays\"", "\"output_mask\"", "\"terms\""};
    std::size_t pos = 0;
    for (const auto& k : keys) {
        const std::size_t at = text.find(k);
        REQUIRE(at != std::string::npos);
        CHECK(at > pos);
        pos = at;
    }
}

TEST_CASE("parse errors name the line or the field") {
    CHECK(contains(parse_error_message("{\n\"kind\": \"pole_residue\",\n \"ny\": 1,,\n}"), "line 3"));
    CHECK(contains(parse_error_message(R"({"kind":"other"})"), "'kind'"));
    CHECK(contains(parse_error_message(R"({"ny":1})"), "'kind'"));
    CHECK(contains(parse_error_message(R"({"kind":"pole_residue","ny":1,"nu":1,"terms":[{"left":[[1,0]],"right":[[1,0]]}]})"),
                   "terms[0].pole"));
    CHECK(contains(parse_error_message(R"({"kind":"pole_residue","ny":1,"nu":1,"terms":[{"pole":[-1,0],"left":[[1,0],[2,0]],"right":[[1,0]]}]})"),
                   "terms[0].left"));
    CHECK(contains(parse_error_message(R"({"kind":"pole_residue","ny":1,"nu":1,"terms":[{"pole":[-1,"x"],"left":[[1,0]],"right":[[1,0]]}]})"),
                   "terms[0].pole[1]"));
    CHECK(contains(parse_error_message(R"({"kind":"state_space","A":[[-1,0],[0]],"B":[[1],[1]],"C":[[1,1]]})"), "A[1]"));
    CHECK(contains(parse_error_message(R"({"kind":"state_space","A":[[-1]],"B":[[1]],"C":[[1]],"input_delays":[1,2]})"),
                   "input_delays"));
    CHECK(contains(parse_error_message(R"({"kind":"state_space","A":[[-1]],"B":[[1]],"C":[[1]],"input_delays":[-1]})"),
                   "input_delays"));
    CHECK(contains(parse_error_message(R"({"kind":"state_space","A":[[-1]],"B":[[1]],"C":[[1]],"output_mask":[1]})"),
                   "output_mask[0]"));
}

TEST_CASE("unstable state-space model is reported") {
    CHECK_THROWS_AS(io::parse_model(R"({"kind":"state_space","A":[[1]],"B":[[1]],"C":[[1]]})"), Error);
}

TEST_CASE("report JSON carries gap, residuals and trace") {
    IoDirkaConfig cfg;
    cfg.order = 2;
    cfg.output_mask = {false};
    cfg.outer_max_iters = 3;
    const auto rep = io_dirka(cascade_model(20), cfg);
    const std::string text = io::report_json(rep);
    CHECK(text == io::report_json(rep));
    const auto j = nlohmann::json::parse(text);
    CHECK(j["converged"] == false);
    CHECK(j["gap"]["j"].get<double>() == rep.gap.j);
    CHECK(j["gap"]["norm_g_sq"].get<double>() == rep.gap.norm_g_sq);
    CHECK(j["residuals"]["max_delay"].get<double>() == rep.residuals.max_delay());
    REQUIRE(j["trace"].size() == 3);
    CHECK(j["trace"][0]["pole_movement"].is_null());
    const auto snapshot = io::parse_model(j["trace"][2]["model"].dump());
    CHECK(compute_gap(cascade_model(20), snapshot.model, rep.gap.norm_g_sq).j == rep.trace[2].gap.j);
}

TEST_CASE("impulse CSV headers") {
    const auto grid = linspace(0, 1, 3);
    const auto a = impulse_response(DelayedModel(PoleResidueModel::siso({{{-1, 0}, {1, 0}}})), grid);
    std::string one = io::impulse_csv({{"g", a}});
    CHECK(one.substr(0, one.find('\n')) == "t,y[0][0]");
    CHECK(contains(one, "1.000000000000e+00,3.678794411714e-01"));
    std::string two = io::impulse_csv({{"original", a}, {"free_n2", a}});
    CHECK(two.substr(0, two.find('\n')) == "t,original,free_n2");
    std::mt19937_64 rng(82);
    const auto b = impulse_response(DelayedModel(testsupport::random_model(rng, 2, 2, 1)), grid);
    std::string mixed = io::impulse_csv({{"g", a}, {"h", b}});
    CHECK(mixed.substr(0, mixed.find('\n')) == "t,g,h[0][0],h[1][0]");
}

TEST_CASE("landscape CSV columns") {
    std::vector<LandscapeSample> s = {{{1.0, 2.0}, {3.0}, 0.5}};
    CHECK(io::landscape_csv(s) ==
          "tau_1,tau_2,gamma_1,objective\n1.000000000000e+00,2.000000000000e+00,3.000000000000e+00,5.000000000000e-01\n");
}
