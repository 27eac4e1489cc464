#include "delayh2/io.hpp"

#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "delayh2/error.hpp"

namespace delayh2::io {

using nlohmann::json;

namespace {

constexpr const char* kQuadPrefix = "#q:";

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::Parse, "field '" + path + "': " + what);
}

// ---- reading -------------------------------------------------------------

const json& member(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) field_error(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) field_error(path.empty() ? key : path + "." + key, "missing");
    return *it;
}

const json* optional_member(const json& obj, const std::string& key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

Wide read_wide(const json& v, const std::string& path) {
    if (v.is_number()) return Wide(v.get<double>());
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s.rfind(kQuadPrefix, 0) == 0) {
            const std::string digits = s.substr(3);
            char* end = nullptr;
            const __float128 q = strtoflt128(digits.c_str(), &end);
            if (!digits.empty() && end && *end == '\0') return Wide(q);
        }
    }
    field_error(path, "expected a number");
}

double read_double(const json& v, const std::string& path) { return narrow(read_wide(v, path)); }

long long read_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) field_error(path, "expected an integer");
    return v.get<long long>();
}

const json& read_array(const json& v, const std::string& path) {
    if (!v.is_array()) field_error(path, "expected an array");
    return v;
}

WideComplex read_complex(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2) field_error(path, "expected [re, im]");
    return {read_wide(v[0], path + "[0]"), read_wide(v[1], path + "[1]")};
}

WideVector read_complex_vector(const json& v, const std::string& path) {
    read_array(v, path);
    WideVector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        out(static_cast<Eigen::Index>(i)) = read_complex(v[i], path + "[" + std::to_string(i) + "]");
    return out;
}

Eigen::MatrixXd read_matrix(const json& v, const std::string& path) {
    read_array(v, path);
    const std::size_t rows = v.size();
    const std::size_t cols = rows ? read_array(v[0], path + "[0]").size() : 0;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        const std::string rp = path + "[" + std::to_string(i) + "]";
        if (read_array(v[i], rp).size() != cols) field_error(rp, "rows differ in length");
        for (std::size_t j = 0; j < cols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                read_double(v[i][j], rp + "[" + std::to_string(j) + "]");
    }
    return m;
}

DelayBlock read_delays(const json& root, const char* delays_key, const char* mask_key, std::size_t channels) {
    std::vector<double> delays(channels, 0.0);
    std::vector<bool> mask(channels, true);
    if (const json* d = optional_member(root, delays_key)) {
        read_array(*d, delays_key);
        if (d->size() != channels)
            field_error(delays_key, "has " + std::to_string(d->size()) + " entries, expected " + std::to_string(channels));
        for (std::size_t i = 0; i < channels; ++i)
            delays[i] = read_double((*d)[i], std::string(delays_key) + "[" + std::to_string(i) + "]");
    }
    if (const json* m = optional_member(root, mask_key)) {
        read_array(*m, mask_key);
        if (m->size() != channels)
            field_error(mask_key, "has " + std::to_string(m->size()) + " entries, expected " + std::to_string(channels));
        for (std::size_t i = 0; i < channels; ++i) {
            if (!(*m)[i].is_boolean()) field_error(std::string(mask_key) + "[" + std::to_string(i) + "]", "expected true/false");
            mask[i] = (*m)[i].get<bool>();
        }
    }
    try {
        return DelayBlock(delays, mask);
    } catch (const Error& e) {
        field_error(delays_key, e.detail());
    }
}

// ---- writing -------------------------------------------------------------

json wide_value(const Wide& w) {
    const double d = narrow(w);
    if (Wide(d) == w || !std::isfinite(d)) return d;
    char buf[64];
    quadmath_snprintf(buf, sizeof buf, "%.36Qg", w.backend().value());
    return std::string(kQuadPrefix) + buf;
}

json complex_value(const WideComplex& z) { return json::array({wide_value(z.real()), wide_value(z.imag())}); }

json complex_value(const Complex& z) { return json::array({z.real(), z.imag()}); }

json matrix_value(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

void put_delays(json& obj, const DelayedModel& m) {
    obj["input_delays"] = m.input_delays.delays();
    obj["input_mask"] = m.input_delays.mask();
    obj["output_delays"] = m.output_delays.delays();
    obj["output_mask"] = m.output_delays.mask();
}

json pole_residue_value(const DelayedModel& m) {
    json obj;
    obj["kind"] = "pole_residue";
    obj["ny"] = static_cast<long long>(m.core.ny());
    obj["nu"] = static_cast<long long>(m.core.nu());
    json terms = json::array();
    for (const auto& t : m.core.terms()) {
        json jt;
        jt["pole"] = complex_value(t.pole);
        jt["left"] = json::array();
        for (Eigen::Index i = 0; i < t.left.size(); ++i) jt["left"].push_back(complex_value(t.left(i)));
        jt["right"] = json::array();
        for (Eigen::Index i = 0; i < t.right.size(); ++i) jt["right"].push_back(complex_value(t.right(i)));
        terms.push_back(std::move(jt));
    }
    obj["terms"] = std::move(terms);
    put_delays(obj, m);
    return obj;
}

json residuals_value(const OptimalityResiduals& r) {
    return json{{"interp_right", r.interp_right},   {"interp_left", r.interp_left},
                {"interp_hermite", r.interp_hermite}, {"delay_in", r.delay_in},
                {"delay_out", r.delay_out},         {"max_interp", r.max_interp()},
                {"max_delay", r.max_delay()}};
}

json gap_value(const GapValue& g) {
    return json{{"j", g.j}, {"norm_g_sq", g.norm_g_sq}, {"cross", g.cross}, {"norm_h_sq", g.norm_h_sq}};
}

json poles_value(const PoleResidueModel& m) {
    json out = json::array();
    for (const Complex& p : m.poles()) out.push_back(complex_value(p));
    return out;
}

bool is_scalar(const json& v) { return !v.is_structured(); }

bool is_flat(const json& v) {
    if (!v.is_array()) return false;
    for (const auto& e : v)
        if (!(is_scalar(e) || (e.is_array() && std::all_of(e.begin(), e.end(), is_scalar)))) return false;
    return true;
}

void emit(const json& v, std::string& out, int indent) {
    switch (v.type()) {
        case json::value_t::null: out += "null"; return;
        case json::value_t::boolean: out += v.get<bool>() ? "true" : "false"; return;
        case json::value_t::number_integer: out += std::to_string(v.get<long long>()); return;
        case json::value_t::number_unsigned: out += std::to_string(v.get<unsigned long long>()); return;
        case json::value_t::number_float: out += format_json_double(v.get<double>()); return;
        case json::value_t::string: out += v.dump(); return;
        case json::value_t::array: {
            if (v.empty()) {
                out += "[]";
                return;
            }
            if (is_flat(v)) {
                out += '[';
                bool first = true;
                for (const auto& e : v) {
                    if (!first) out += ", ";
                    first = false;
                    emit(e, out, indent);
                }
                out += ']';
                return;
            }
            out += "[\n";
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.append(static_cast<std::size_t>(indent + 1), ' ');
                emit(v[i], out, indent + 1);
                out += i + 1 < v.size() ? ",\n" : "\n";
            }
            out.append(static_cast<std::size_t>(indent), ' ');
            out += ']';
            return;
        }
        case json::value_t::object: {
            if (v.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            std::size_t i = 0;
            for (auto it = v.begin(); it != v.end(); ++it, ++i) {  // std::map: keys already sorted
                out.append(static_cast<std::size_t>(indent + 1), ' ');
                out += json(it.key()).dump();
                out += ": ";
                emit(it.value(), out, indent + 1);
                out += i + 1 < v.size() ? ",\n" : "\n";
            }
            out.append(static_cast<std::size_t>(indent), ' ');
            out += '}';
            return;
        }
        default: out += "null"; return;
    }
}

std::string dump(const json& v) {
    std::string out;
    emit(v, out, 0);
    out += '\n';
    return out;
}

}  // namespace

std::string format_json_double(double x) {
    if (!std::isfinite(x)) return "null";
    if (x == 0) return "0";  // a JSON reader cannot keep the sign of zero
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string format_csv_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12e", x);
    return buf;
}

ModelDocument parse_model(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, e.what());
    }
    if (!root.is_object()) field_error("(root)", "expected an object");
    const json& kind = member(root, "kind", "");
    if (!kind.is_string()) field_error("kind", "expected a string");

    ModelDocument doc;
    PoleResidueModel core;
    if (kind == "state_space") {
        const Eigen::MatrixXd A = read_matrix(member(root, "A", ""), "A");
        const Eigen::MatrixXd B = read_matrix(member(root, "B", ""), "B");
        const Eigen::MatrixXd C = read_matrix(member(root, "C", ""), "C");
        Eigen::MatrixXd E = Eigen::MatrixXd::Identity(A.rows(), A.cols());
        if (const json* e = optional_member(root, "E")) E = read_matrix(*e, "E");
        if (A.rows() != A.cols()) field_error("A", "must be square");
        if (E.rows() != A.rows() || E.cols() != A.cols()) field_error("E", "shape differs from A");
        if (B.rows() != A.rows()) field_error("B", "row count differs from A");
        if (C.cols() != A.cols()) field_error("C", "column count differs from A");
        try {
            doc.state_space.emplace(E, A, B, C);
            core = pole_residue_from_state_space(*doc.state_space);
        } catch (const Error& e) {
            throw Error(e.code(), "state-space model: " + e.detail());
        }
    } else if (kind == "pole_residue") {
        const long long ny = read_int(member(root, "ny", ""), "ny");
        const long long nu = read_int(member(root, "nu", ""), "nu");
        if (ny < 1) field_error("ny", "must be positive");
        if (nu < 1) field_error("nu", "must be positive");
        const json& terms = read_array(member(root, "terms", ""), "terms");
        std::vector<PoleResidueTerm> parsed;
        for (std::size_t k = 0; k < terms.size(); ++k) {
            const std::string p = "terms[" + std::to_string(k) + "]";
            PoleResidueTerm t;
            t.pole = read_complex(member(terms[k], "pole", p), p + ".pole");
            t.left = read_complex_vector(member(terms[k], "left", p), p + ".left");
            t.right = read_complex_vector(member(terms[k], "right", p), p + ".right");
            if (t.left.size() != ny) field_error(p + ".left", "length differs from ny");
            if (t.right.size() != nu) field_error(p + ".right", "length differs from nu");
            parsed.push_back(std::move(t));
        }
        if (parsed.empty()) field_error("terms", "must not be empty");
        try {
            core = PoleResidueModel(std::move(parsed), ny, nu);
        } catch (const Error& e) {
            throw Error(e.code(), "field 'terms': " + e.detail());
        }
    } else {
        field_error("kind", "expected \"state_space\" or \"pole_residue\"");
    }
    DelayBlock in = read_delays(root, "input_delays", "input_mask", static_cast<std::size_t>(core.nu()));
    DelayBlock out = read_delays(root, "output_delays", "output_mask", static_cast<std::size_t>(core.ny()));
    doc.model = DelayedModel(std::move(core), std::move(in), std::move(out));
    return doc;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
    f << content;
    if (!f) throw Error(ErrorCode::InvalidArgument, "write to '" + path + "' failed");
}

ModelDocument load_model(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return parse_model(text);
    } catch (const Error& e) {
        throw Error(e.code(), path + ": " + e.detail());
    }
}

std::string model_json(const ModelDocument& doc) {
    if (!doc.state_space) return model_json(doc.model);
    json obj;
    obj["kind"] = "state_space";
    obj["E"] = matrix_value(doc.state_space->E());
    obj["A"] = matrix_value(doc.state_space->A());
    obj["B"] = matrix_value(doc.state_space->B());
    obj["C"] = matrix_value(doc.state_space->C());
    put_delays(obj, doc.model);
    return dump(obj);
}

std::string model_json(const DelayedModel& m) { return dump(pole_residue_value(m)); }

std::string residuals_json(const OptimalityResiduals& r) { return dump(residuals_value(r)); }

std::string report_json(const ReductionReport& rep) {
    json obj;
    obj["converged"] = rep.converged;
    obj["stop_reason"] = rep.stop_reason;
    obj["outer_iterations"] = rep.outer_iterations;
    obj["final_pass_applied"] = rep.final_pass_applied;
    obj["model"] = pole_residue_value(rep.model);
    obj["poles"] = poles_value(rep.model.core);
    obj["gap"] = gap_value(rep.gap);
    obj["residuals"] = residuals_value(rep.residuals);
    obj["loop_residuals"] = residuals_value(rep.loop_residuals);
    json trace = json::array();
    for (const auto& t : rep.trace) {
        json e;
        e["iteration"] = t.iteration;
        e["model"] = pole_residue_value(t.model);
        e["poles"] = poles_value(t.model.core);
        e["gap"] = gap_value(t.gap);
        e["pole_movement"] = t.pole_movement;
        e["delay_movement"] = t.delay_movement;
        e["irka_converged"] = t.irka_converged;
        e["irka_iterations"] = t.irka_iterations;
        e["irka_certificate"] = t.irka_certificate;
        e["delay_gradient_norm"] = t.delay_gradient_norm;
        e["delay_on_boundary"] = t.delay_on_boundary;
        trace.push_back(std::move(e));
    }
    obj["trace"] = std::move(trace);
    return dump(obj);
}

std::string analysis_json(const GapValue& gap, const OptimalityResiduals& r) {
    return dump(json{{"gap", gap_value(gap)}, {"residuals", residuals_value(r)}});
}

std::string impulse_csv(const std::vector<NamedResponse>& responses) {
    if (responses.empty()) return "t\n";
    const auto& t = responses.front().response.t;
    std::string out = "t";
    for (const auto& r : responses) {
        if (r.response.t != t) throw Error(ErrorCode::DimensionMismatch, "impulse responses use different time grids");
        const bool siso = r.response.ny == 1 && r.response.nu == 1;
        for (Eigen::Index m = 0; m < r.response.ny; ++m)
            for (Eigen::Index l = 0; l < r.response.nu; ++l) {
                const std::string idx = "[" + std::to_string(m) + "][" + std::to_string(l) + "]";
                out += ',';
                if (responses.size() == 1)
                    out += "y" + idx;
                else
                    out += siso ? r.name : r.name + idx;
            }
    }
    out += '\n';
    for (std::size_t k = 0; k < t.size(); ++k) {
        out += format_csv_double(t[k]);
        for (const auto& r : responses)
            for (Eigen::Index m = 0; m < r.response.ny; ++m)
                for (Eigen::Index l = 0; l < r.response.nu; ++l) {
                    out += ',';
                    out += format_csv_double(r.response(m, l, k));
                }
        out += '\n';
    }
    return out;
}

std::string landscape_csv(const std::vector<LandscapeSample>& samples) {
    std::string out;
    if (samples.empty()) return "objective\n";
    for (std::size_t i = 0; i < samples.front().tau.size(); ++i) out += "tau_" + std::to_string(i + 1) + ",";
    for (std::size_t i = 0; i < samples.front().gamma.size(); ++i) out += "gamma_" + std::to_string(i + 1) + ",";
    out += "objective\n";
    for (const auto& s : samples) {
        for (double x : s.tau) out += format_csv_double(x) + ",";
        for (double x : s.gamma) out += format_csv_double(x) + ",";
        out += format_csv_double(s.objective) + "\n";
    }
    return out;
}

}  // namespace delayh2::io
