#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "delayh2/benchmark.hpp"
#include "delayh2/error.hpp"
#include "delayh2/h2.hpp"
#include "delayh2/io.hpp"
#include "delayh2/iodirka.hpp"
#include "delayh2/parallel.hpp"

namespace delayh2::cli {

namespace {

namespace fs = std::filesystem;

struct RunConfig {
    std::string model;
    std::string candidate;
    std::string out = "out";
    std::size_t order = 2;
    std::string delays = "io";
    std::uint64_t seed = 0;
    std::string irka_init = "log-real";
    std::string init_delays = "zero";
    std::string stopping = "pole-variation";
    int outer_max_iters = IoDirkaConfig{}.outer_max_iters;
    double outer_tol = IoDirkaConfig{}.outer_tol;
    double interp_tol = IoDirkaConfig{}.interp_tol;
    double delay_tol = IoDirkaConfig{}.delay_tol;
    int irka_max_iters = IrkaConfig{}.max_iters;
    double shift_tol = IrkaConfig{}.shift_tol;
    double certificate_tol = IrkaConfig{}.certificate_tol;
    std::size_t grid_points = DelaySearchConfig{}.grid_points_per_channel;
    double refine_tol = DelaySearchConfig{}.refine_tol;
    double tau_max = 0;
    bool no_final_pass = false;
    bool landscape = false;
    double t_max = 50;
    std::size_t points = 2000;
    std::vector<std::size_t> free_orders = {2, 3, 4, 5, 6};
    std::vector<std::size_t> delayed_orders = {2, 4};
};

struct Masks {
    std::vector<bool> input, output;
};

std::vector<bool> parse_bits(const std::string& bits, Eigen::Index n, const char* which) {
    if (bits.size() != static_cast<std::size_t>(n))
        throw Error(ErrorCode::InvalidArgument, std::string("--delays: ") + which + " mask needs " +
                                                    std::to_string(n) + " bits, got '" + bits + "'");
    std::vector<bool> out;
    for (char c : bits) {
        if (c != '0' && c != '1')
            throw Error(ErrorCode::InvalidArgument, std::string("--delays: ") + which + " mask must be 0/1 bits");
        out.push_back(c == '1');
    }
    return out;
}

Masks parse_delays(const std::string& spec, Eigen::Index ny, Eigen::Index nu) {
    const auto all = [](Eigen::Index n, bool v) { return std::vector<bool>(static_cast<std::size_t>(n), v); };
    if (spec == "none") return {all(nu, false), all(ny, false)};
    if (spec == "input") return {all(nu, true), all(ny, false)};
    if (spec == "output") return {all(nu, false), all(ny, true)};
    if (spec == "io") return {all(nu, true), all(ny, true)};
    if (spec.rfind("mask:", 0) == 0) {
        const std::string body = spec.substr(5);
        const auto comma = body.find(',');
        if (comma == std::string::npos)
            throw Error(ErrorCode::InvalidArgument, "--delays mask:<input bits>,<output bits> expected");
        return {parse_bits(body.substr(0, comma), nu, "input"), parse_bits(body.substr(comma + 1), ny, "output")};
    }
    throw Error(ErrorCode::InvalidArgument, "--delays must be none, input, output, io or mask:<bits>,<bits>");
}

IrkaInit parse_irka_init(const std::string& s) {
    if (s == "log-real") return IrkaInit::LogSpacedReal;
    if (s == "random") return IrkaInit::RandomStable;
    throw Error(ErrorCode::InvalidArgument, "--irka-init must be log-real or random");
}

DelayInit parse_delay_init(const std::string& s) {
    if (s == "zero") return DelayInit::Zero;
    if (s == "cross-correlation") return DelayInit::CrossCorrelation;
    throw Error(ErrorCode::InvalidArgument, "--init-delays must be zero or cross-correlation");
}

IoDirkaConfig make_config(const RunConfig& rc, const Masks& masks, std::size_t order) {
    IoDirkaConfig cfg;
    cfg.order = order;
    cfg.input_mask = masks.input;
    cfg.output_mask = masks.output;
    cfg.init = parse_delay_init(rc.init_delays);
    cfg.outer_max_iters = rc.outer_max_iters;
    cfg.outer_tol = rc.outer_tol;
    cfg.stopping = stopping_mode_from_string(rc.stopping);
    cfg.interp_tol = rc.interp_tol;
    cfg.delay_tol = rc.delay_tol;
    cfg.final_irka_pass = !rc.no_final_pass;
    cfg.irka.init = parse_irka_init(rc.irka_init);
    cfg.irka.seed = rc.seed;
    cfg.irka.max_iters = rc.irka_max_iters;
    cfg.irka.shift_tol = rc.shift_tol;
    cfg.irka.certificate_tol = rc.certificate_tol;
    cfg.delay.grid_points_per_channel = rc.grid_points;
    cfg.delay.refine_tol = rc.refine_tol;
    if (rc.tau_max > 0) {
        cfg.delay.tau_max_in.assign(masks.input.size(), rc.tau_max);
        cfg.delay.tau_max_out.assign(masks.output.size(), rc.tau_max);
    }
    return cfg;
}

void require_delay_free(const DelayedModel& g, const std::string& path) {
    for (double d : g.input_delays.delays())
        if (d != 0) throw Error(ErrorCode::InvalidArgument, path + ": field 'input_delays': the model to reduce must be delay-free");
    for (double d : g.output_delays.delays())
        if (d != 0) throw Error(ErrorCode::InvalidArgument, path + ": field 'output_delays': the model to reduce must be delay-free");
}

std::string join_delays(const DelayBlock& b) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < b.size(); ++i) os << (i ? ", " : "") << io::format_json_double(b[i]);
    os << ']';
    return os.str();
}

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6e", x);
    return buf;
}

void prepare_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw Error(ErrorCode::InvalidArgument, "cannot create output directory '" + dir + "'");
}

std::string out_path(const RunConfig& rc, const std::string& name) { return (fs::path(rc.out) / name).string(); }

// Echo of every option value (given or default), enough to rerun.
void write_run_config(const RunConfig& rc, const CLI::App& sub, const std::vector<std::string>& args) {
    nlohmann::json j;
    j["subcommand"] = sub.get_name();
    j["args"] = args;
    j["threads"] = thread_count();
    nlohmann::json opts = nlohmann::json::object();
    for (const CLI::Option* o : sub.get_options()) {
        if (o->get_name() == "--help") continue;
        const std::string key = o->get_name();
        if (o->get_type_size_max() == 0 || o->get_items_expected_max() == 0) {
            opts[key] = o->count() > 0;
        } else if (o->count() > 0) {
            opts[key] = o->results();
        } else {
            opts[key] = o->get_default_str();
        }
    }
    j["options"] = opts;
    io::write_file(out_path(rc, "run-config.json"), j.dump(1) + "\n");
}

void print_summary(std::ostream& out, const std::string& label, const ReductionReport& rep) {
    out << label << ": " << (rep.converged ? "converged" : "not converged") << " after " << rep.outer_iterations
        << " outer iterations (" << rep.stop_reason << ")\n";
    out << "  gap J = " << sci(rep.gap.reported()) << "  (relative " << sci(std::sqrt(rep.gap.reported() / rep.gap.norm_g_sq))
        << ")\n";
    out << "  input delays  " << join_delays(rep.model.input_delays) << "\n";
    out << "  output delays " << join_delays(rep.model.output_delays) << "\n";
    out << "  max interpolation residual " << sci(rep.residuals.max_interp()) << ", max delay residual "
        << sci(rep.residuals.max_delay()) << "\n";
}

int cmd_reduce(const RunConfig& rc, const CLI::App& sub, const std::vector<std::string>& args, std::ostream& out) {
    const io::ModelDocument doc = io::load_model(rc.model);
    require_delay_free(doc.model, rc.model);
    const PoleResidueModel& g = doc.model.core;
    const Masks masks = parse_delays(rc.delays, g.ny(), g.nu());
    const IoDirkaConfig cfg = make_config(rc, masks, rc.order);
    prepare_out(rc.out);
    write_run_config(rc, sub, args);

    const ReductionReport rep = io_dirka(g, cfg);
    io::write_file(out_path(rc, "reduced-model.json"), io::model_json(rep.model));
    io::write_file(out_path(rc, "report.json"), io::report_json(rep));
    if (rc.landscape) {
        DelaySearchConfig dcfg = cfg.delay;
        dcfg.input_mask = masks.input;
        dcfg.output_mask = masks.output;
        dcfg.keep_landscape = true;
        const DelaySearchResult ds = optimize_delays(g, rep.model.core, dcfg);
        io::write_file(out_path(rc, "landscape.csv"), io::landscape_csv(ds.landscape));
    }
    print_summary(out, "reduce n=" + std::to_string(rc.order), rep);
    return rep.converged ? kOk : kNotConverged;
}

int cmd_bench_paper(const RunConfig& rc, const CLI::App& sub, const std::vector<std::string>& args,
                    std::ostream& out) {
    prepare_out(rc.out);
    write_run_config(rc, sub, args);
    const PoleResidueModel g = cascade_model(20);
    const DelayedModel gd(g);
    io::write_file(out_path(rc, "paper20.json"), io::model_json(gd));
    const double gsq = h2_norm_squared(g);
    const std::vector<double> grid = linspace(0, rc.t_max, rc.points);

    std::vector<io::NamedResponse> responses = {{"original", impulse_response(gd, grid)}};
    std::string table = "model,order,delayed,converged,tau,gap,mse\n";
    bool all_converged = true;
    auto add_row = [&](const std::string& name, std::size_t n, bool delayed, bool converged, const DelayedModel& h,
                       double gap) {
        const double mse = impulse_mse(gd, h, grid);
        table += name + "," + std::to_string(n) + "," + (delayed ? "1" : "0") + "," + (converged ? "1" : "0") + "," +
                 io::format_csv_double(h.input_delays[0]) + "," + io::format_csv_double(gap) + "," +
                 io::format_csv_double(mse) + "\n";
        out << "  " << name << ": gap " << sci(gap) << ", impulse mse " << sci(mse) << ", tau "
            << io::format_json_double(h.input_delays[0]) << (converged ? "" : "  (not converged)") << "\n";
        responses.push_back({name, impulse_response(h, grid)});
        all_converged = all_converged && converged;
    };

    out << "N=20 cascade, poles evenly spaced in [-2, -1], ||G||^2 = " << sci(gsq) << "\n";
    for (std::size_t n : rc.free_orders) {
        IrkaConfig ic;
        ic.order = n;
        ic.init = parse_irka_init(rc.irka_init);
        ic.seed = rc.seed;
        ic.max_iters = rc.irka_max_iters;
        ic.shift_tol = rc.shift_tol;
        ic.certificate_tol = rc.certificate_tol;
        const IrkaResult r = irka_reduce(g, ic);
        add_row("free_n" + std::to_string(n), n, false, r.converged, DelayedModel(r.model), r.gap);
    }
    const Masks masks{{true}, {false}};
    for (std::size_t n : rc.delayed_orders) {
        const ReductionReport rep = io_dirka(g, make_config(rc, masks, n));
        const std::string name = "delayed_n" + std::to_string(n);
        io::write_file(out_path(rc, "report-" + name + ".json"), io::report_json(rep));
        add_row(name, n, true, rep.converged, rep.model, rep.gap.j);
    }
    io::write_file(out_path(rc, "impulse.csv"), io::impulse_csv(responses));
    io::write_file(out_path(rc, "errors.csv"), table);
    return all_converged ? kOk : kNotConverged;
}

int cmd_impulse(const RunConfig& rc, const CLI::App& sub, const std::vector<std::string>& args, std::ostream& out) {
    const io::ModelDocument doc = io::load_model(rc.model);
    if (rc.points < 2 || !(rc.t_max > 0)) throw Error(ErrorCode::InvalidArgument, "--t-max must be positive and --points at least 2");
    prepare_out(rc.out);
    write_run_config(rc, sub, args);
    const std::vector<double> grid = linspace(0, rc.t_max, rc.points);
    const std::string path = out_path(rc, "impulse.csv");
    io::write_file(path, io::impulse_csv({{"model", impulse_response(doc.model, grid)}}));
    out << "wrote " << path << " (" << rc.points << " samples on [0, " << rc.t_max << "])\n";
    return kOk;
}

int cmd_analyze(const RunConfig& rc, const CLI::App& sub, const std::vector<std::string>& args, std::ostream& out) {
    const io::ModelDocument gdoc = io::load_model(rc.model);
    require_delay_free(gdoc.model, rc.model);
    const io::ModelDocument hdoc = io::load_model(rc.candidate);
    const PoleResidueModel& g = gdoc.model.core;
    if (hdoc.model.core.ny() != g.ny() || hdoc.model.core.nu() != g.nu())
        throw Error(ErrorCode::DimensionMismatch, "candidate has " + std::to_string(hdoc.model.core.ny()) + "x" +
                                                      std::to_string(hdoc.model.core.nu()) + " channels, model has " +
                                                      std::to_string(g.ny()) + "x" + std::to_string(g.nu()));
    prepare_out(rc.out);
    write_run_config(rc, sub, args);
    const GapValue gap = compute_gap(g, hdoc.model, h2_norm_squared(g));
    const OptimalityResiduals r = optimality_residuals(g, hdoc.model);
    io::write_file(out_path(rc, "analysis.json"), io::analysis_json(gap, r));
    out << "gap J = " << sci(gap.reported()) << " (||G||^2 " << sci(gap.norm_g_sq) << ", cross " << sci(gap.cross)
        << ", ||H||^2 " << sci(gap.norm_h_sq) << ")\n";
    for (std::size_t k = 0; k < r.interp_right.size(); ++k)
        out << "  pole " << k << ": right " << sci(r.interp_right[k]) << ", left " << sci(r.interp_left[k])
            << ", hermite " << sci(r.interp_hermite[k]) << "\n";
    for (std::size_t l = 0; l < r.delay_in.size(); ++l) out << "  input delay " << l << ": " << sci(r.delay_in[l]) << "\n";
    for (std::size_t m = 0; m < r.delay_out.size(); ++m)
        out << "  output delay " << m << ": " << sci(r.delay_out[m]) << "\n";
    return kOk;
}

void add_reduction_options(CLI::App* s, RunConfig& rc) {
    s->add_option("--delays", rc.delays, "none | input | output | io | mask:<input bits>,<output bits>")
        ->capture_default_str();
    s->add_option("--seed", rc.seed, "Seed for random IRKA starts")->capture_default_str();
    s->add_option("--irka-init", rc.irka_init, "log-real | random")->capture_default_str();
    s->add_option("--init-delays", rc.init_delays, "zero | cross-correlation")->capture_default_str();
    s->add_option("--stopping", rc.stopping, "pole-variation | optimality-residual | h2-error")->capture_default_str();
    s->add_option("--outer-max-iters", rc.outer_max_iters)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--outer-tol", rc.outer_tol)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--interp-tol", rc.interp_tol)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--delay-tol", rc.delay_tol)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--irka-max-iters", rc.irka_max_iters)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--shift-tol", rc.shift_tol)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--certificate-tol", rc.certificate_tol)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--grid-points", rc.grid_points, "Delay grid points per channel")
        ->capture_default_str()
        ->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
    s->add_option("--refine-tol", rc.refine_tol)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--tau-max", rc.tau_max, "Delay box size for every channel (0: from the tail energy of the model)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    s->add_flag("--no-final-pass", rc.no_final_pass, "Skip the IRKA pass after the last delay update");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"H2-optimal reduction with input/output delays"};
    app.require_subcommand(1);
    RunConfig rc;

    CLI::App* reduce = app.add_subcommand("reduce", "Reduce a model with IO-dIRKA");
    reduce->add_option("--model", rc.model, "Model JSON file")->required()->check(CLI::ExistingFile);
    reduce->add_option("--order", rc.order, "Reduced order")->required()->check(CLI::PositiveNumber);
    reduce->add_option("--out", rc.out, "Output directory")->capture_default_str();
    reduce->add_flag("--landscape", rc.landscape, "Also write the delay landscape of the final core");
    add_reduction_options(reduce, rc);

    CLI::App* bench = app.add_subcommand("bench-paper", "Cascade benchmark: delay-free and delayed reductions");
    bench->add_option("--out", rc.out, "Output directory")->capture_default_str();
    bench->add_option("--t-max", rc.t_max)->capture_default_str()->check(CLI::PositiveNumber);
    bench->add_option("--points", rc.points)->capture_default_str()->check(CLI::Range(std::size_t{2}, std::size_t{10000000}));
    bench->add_option("--free-orders", rc.free_orders, "Orders reduced without delay")->capture_default_str()->delimiter(',');
    bench->add_option("--delayed-orders", rc.delayed_orders, "Orders reduced with an input delay")
        ->capture_default_str()
        ->delimiter(',');
    add_reduction_options(bench, rc);

    CLI::App* impulse = app.add_subcommand("impulse", "Sample the impulse response of a model");
    impulse->add_option("--model", rc.model, "Model JSON file")->required()->check(CLI::ExistingFile);
    impulse->add_option("--out", rc.out, "Output directory")->capture_default_str();
    impulse->add_option("--t-max", rc.t_max)->capture_default_str();
    impulse->add_option("--points", rc.points)->capture_default_str();

    CLI::App* analyze = app.add_subcommand("analyze", "Gap and optimality residuals of a candidate");
    analyze->add_option("--model", rc.model, "Model JSON file")->required()->check(CLI::ExistingFile);
    analyze->add_option("--candidate", rc.candidate, "Candidate delayed model JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    analyze->add_option("--out", rc.out, "Output directory")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kError;
        return kError;
    }

    try {
        if (reduce->parsed()) return cmd_reduce(rc, *reduce, args, out);
        if (bench->parsed()) return cmd_bench_paper(rc, *bench, args, out);
        if (impulse->parsed()) return cmd_impulse(rc, *impulse, args, out);
        if (analyze->parsed()) return cmd_analyze(rc, *analyze, args, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kError;
    }
    return kError;
}

}  // namespace delayh2::cli
