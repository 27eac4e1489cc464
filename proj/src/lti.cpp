#include "delayh2/lti.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "delayh2/error.hpp"

namespace delayh2 {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonInvertibleE: return "NonInvertibleE";
        case ErrorCode::RepeatedPole: return "RepeatedPole";
        case ErrorCode::Unstable: return "Unstable";
        case ErrorCode::EvalAtPole: return "EvalAtPole";
        case ErrorCode::NonRealModel: return "NonRealModel";
        case ErrorCode::NonRealSum: return "NonRealSum";
        case ErrorCode::NegativeNormSquared: return "NegativeNormSquared";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::DegenerateDirections: return "DegenerateDirections";
        case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Parse: return "Parse";
    }
    return "Unknown";
}

StateSpaceModel::StateSpaceModel(Eigen::MatrixXd E, Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C)
    : E_(std::move(E)), A_(std::move(A)), B_(std::move(B)), C_(std::move(C)) {
    const auto n = A_.rows();
    if (A_.cols() != n || E_.rows() != n || E_.cols() != n || B_.rows() != n || C_.cols() != n) {
        std::ostringstream os;
        os << "state-space shapes inconsistent: E " << E_.rows() << "x" << E_.cols() << ", A " << A_.rows() << "x"
           << A_.cols() << ", B " << B_.rows() << "x" << B_.cols() << ", C " << C_.rows() << "x" << C_.cols();
        throw Error(ErrorCode::DimensionMismatch, os.str());
    }
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "state-space model of order 0");
}

namespace {

bool finite(const WideComplex& z) {
    return boost::multiprecision::isfinite(z.real()) && boost::multiprecision::isfinite(z.imag());
}

void balance(PoleResidueTerm& t) {
    const Wide nl = norm2(t.left);
    const Wide nr = norm2(t.right);
    if (nl == 0 || nr == 0) return;
    // Already balanced terms are left alone so that balancing is idempotent
    // (a saved model reloads bit for bit).
    const Wide alpha = boost::multiprecision::sqrt(nr / nl);
    if (boost::multiprecision::abs(alpha - 1) > Wide(1e-30)) {
        t.left *= WideComplex(alpha);
        t.right /= WideComplex(alpha);
    }

    Wide peak = 0;
    for (Eigen::Index i = 0; i < t.left.size(); ++i) peak = std::max(peak, wabs(t.left(i)));
    Eigen::Index p = 0;
    while (wabs(t.left(p)) < peak * Wide(1 - 1e-12)) ++p;
    if (t.left(p).imag() == 0 && t.left(p).real() > 0) return;
    const WideComplex phase = t.left(p) / WideComplex(wabs(t.left(p)));
    t.left *= std::conj(phase);
    t.right *= phase;
    // the pivot is real and positive by construction; drop rounding residue
    t.left(p) = WideComplex(t.left(p).real());
}

bool canonical_less(const PoleResidueTerm& a, const PoleResidueTerm& b) {
    if (a.pole.real() != b.pole.real()) return a.pole.real() < b.pole.real();
    const Wide ia = boost::multiprecision::abs(a.pole.imag());
    const Wide ib = boost::multiprecision::abs(b.pole.imag());
    if (ia != ib) return ia < ib;
    return a.pole.imag() > b.pole.imag();
}

}  // namespace

PoleResidueModel::PoleResidueModel(std::vector<PoleResidueTerm> terms, Eigen::Index ny, Eigen::Index nu)
    : terms_(std::move(terms)), ny_(ny), nu_(nu) {
    if (ny_ <= 0 || nu_ <= 0) throw Error(ErrorCode::DimensionMismatch, "model needs at least one input and output");
    Wide scale = 0;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
        auto& t = terms_[k];
        if (t.left.size() != ny_ || t.right.size() != nu_) {
            std::ostringstream os;
            os << "term " << k << ": residue vectors of size " << t.left.size() << "/" << t.right.size()
               << ", expected " << ny_ << "/" << nu_;
            throw Error(ErrorCode::DimensionMismatch, os.str());
        }
        if (!finite(t.pole)) throw Error(ErrorCode::InvalidArgument, "non-finite pole in term " + std::to_string(k));
        for (Eigen::Index i = 0; i < ny_; ++i)
            if (!finite(t.left(i))) throw Error(ErrorCode::InvalidArgument, "non-finite residue in term " + std::to_string(k));
        for (Eigen::Index i = 0; i < nu_; ++i)
            if (!finite(t.right(i))) throw Error(ErrorCode::InvalidArgument, "non-finite residue in term " + std::to_string(k));
        if (!(t.pole.real() < 0)) {
            std::ostringstream os;
            os << "pole " << narrow(t.pole) << " is not in the open left half-plane";
            throw Error(ErrorCode::Unstable, os.str());
        }
        scale = std::max(scale, wabs(t.pole));
        balance(t);
    }
    for (std::size_t i = 0; i < terms_.size(); ++i)
        for (std::size_t j = i + 1; j < terms_.size(); ++j)
            if (wabs(terms_[i].pole - terms_[j].pole) < Wide(1e-8) * scale) {
                std::ostringstream os;
                os << "poles " << narrow(terms_[i].pole) << " and " << narrow(terms_[j].pole) << " coincide";
                throw Error(ErrorCode::RepeatedPole, os.str());
            }
    std::sort(terms_.begin(), terms_.end(), canonical_less);
}

PoleResidueModel PoleResidueModel::siso(const std::vector<std::pair<Complex, Complex>>& pole_residue) {
    std::vector<PoleResidueTerm> terms;
    terms.reserve(pole_residue.size());
    for (const auto& [pole, residue] : pole_residue) {
        PoleResidueTerm t{widen(pole), WideVector::Constant(1, WideComplex(Wide(1))), WideVector::Constant(1, widen(residue))};
        terms.push_back(std::move(t));
    }
    return PoleResidueModel(std::move(terms), 1, 1);
}

std::vector<Complex> PoleResidueModel::poles() const {
    std::vector<Complex> out;
    out.reserve(terms_.size());
    for (const auto& t : terms_) out.push_back(narrow(t.pole));
    return out;
}

WideMatrix PoleResidueModel::residue(std::size_t k) const { return terms_[k].left * terms_[k].right.transpose(); }

DelayBlock::DelayBlock(std::vector<double> delays, std::vector<bool> mask) : delays_(std::move(delays)), mask_(std::move(mask)) {
    if (mask_.empty()) mask_.assign(delays_.size(), true);
    if (mask_.size() != delays_.size())
        throw Error(ErrorCode::DimensionMismatch, "delay mask length differs from number of delays");
    for (std::size_t i = 0; i < delays_.size(); ++i) {
        if (!std::isfinite(delays_[i]) || delays_[i] < 0)
            throw Error(ErrorCode::InvalidArgument, "delay " + std::to_string(i) + " must be finite and nonnegative");
        if (!mask_[i] && delays_[i] != 0)
            throw Error(ErrorCode::InvalidArgument, "delay " + std::to_string(i) + " is masked off but nonzero");
    }
}

DelayBlock DelayBlock::zeros(std::size_t channels, bool delay_allowed) {
    return DelayBlock(std::vector<double>(channels, 0.0), std::vector<bool>(channels, delay_allowed));
}

bool DelayBlock::any_free() const { return std::find(mask_.begin(), mask_.end(), true) != mask_.end(); }

DelayedModel::DelayedModel(PoleResidueModel c)
    : core(std::move(c)),
      input_delays(DelayBlock::zeros(static_cast<std::size_t>(core.nu()))),
      output_delays(DelayBlock::zeros(static_cast<std::size_t>(core.ny()))) {}

DelayedModel::DelayedModel(PoleResidueModel c, DelayBlock input, DelayBlock output)
    : core(std::move(c)), input_delays(std::move(input)), output_delays(std::move(output)) {
    if (input_delays.size() != static_cast<std::size_t>(core.nu()) ||
        output_delays.size() != static_cast<std::size_t>(core.ny()))
        throw Error(ErrorCode::DimensionMismatch, "delay blocks do not match the model's inputs/outputs");
}

namespace {

void check_not_pole(const PoleResidueModel& m, const WideComplex& s) {
    for (const auto& t : m.terms()) {
        const Wide tol = Wide(1e-12) * std::max(Wide(1), wabs(t.pole));
        if (wabs(s - t.pole) <= tol) {
            std::ostringstream os;
            os << "s = " << narrow(s) << " coincides with pole " << narrow(t.pole);
            throw Error(ErrorCode::EvalAtPole, os.str());
        }
    }
}

}  // namespace

WideMatrix eval_transfer(const PoleResidueModel& m, const WideComplex& s) {
    check_not_pole(m, s);
    WideMatrix out = WideMatrix::Zero(m.ny(), m.nu());
    for (const auto& t : m.terms()) {
        const WideComplex w = WideComplex(Wide(1)) / (s - t.pole);
        out += (t.left * w) * t.right.transpose();
    }
    return out;
}

Eigen::MatrixXcd eval_transfer(const PoleResidueModel& m, Complex s) { return narrow(eval_transfer(m, widen(s))); }

WideMatrix eval_transfer_derivative(const PoleResidueModel& m, const WideComplex& s) {
    check_not_pole(m, s);
    WideMatrix out = WideMatrix::Zero(m.ny(), m.nu());
    for (const auto& t : m.terms()) {
        const WideComplex d = s - t.pole;
        const WideComplex w = -WideComplex(Wide(1)) / (d * d);
        out += (t.left * w) * t.right.transpose();
    }
    return out;
}

Eigen::MatrixXcd eval_transfer_derivative(const PoleResidueModel& m, Complex s) {
    return narrow(eval_transfer_derivative(m, widen(s)));
}

Eigen::MatrixXcd eval_transfer(const DelayedModel& m, Complex s) {
    Eigen::MatrixXcd h = eval_transfer(m.core, s);
    for (Eigen::Index i = 0; i < h.rows(); ++i)
        for (Eigen::Index l = 0; l < h.cols(); ++l)
            h(i, l) *= std::exp(-s * (m.output_delays[static_cast<std::size_t>(i)] + m.input_delays[static_cast<std::size_t>(l)]));
    return h;
}

ImpulseResponse impulse_response(const DelayedModel& m, std::span<const double> t_grid) {
    if (!realify_check(m.core)) throw Error(ErrorCode::NonRealModel, "impulse response requested for a model that is not conjugate-closed");
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        if (t_grid[k] < 0 || (k > 0 && t_grid[k] < t_grid[k - 1]))
            throw Error(ErrorCode::InvalidArgument, "time grid must be nonnegative and nondecreasing");
    }
    ImpulseResponse out;
    out.ny = m.core.ny();
    out.nu = m.core.nu();
    out.t.assign(t_grid.begin(), t_grid.end());
    out.data.assign(t_grid.size() * static_cast<std::size_t>(out.ny * out.nu), 0.0);

    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        for (Eigen::Index i = 0; i < out.ny; ++i) {
            for (Eigen::Index l = 0; l < out.nu; ++l) {
                const double shift = m.output_delays[static_cast<std::size_t>(i)] + m.input_delays[static_cast<std::size_t>(l)];
                const double local = t_grid[k] - shift;
                if (local < 0) continue;
                WideComplex acc{};
                for (const auto& term : m.core.terms()) acc += term.left(i) * term.right(l) * wexp(term.pole * Wide(local));
                if (boost::multiprecision::abs(acc.imag()) > Wide(kRealTol) * std::max(Wide(1), boost::multiprecision::abs(acc.real()))) {
                    throw Error(ErrorCode::NonRealModel, "impulse response has a non-vanishing imaginary part");
                }
                out.data[(k * static_cast<std::size_t>(out.ny) + static_cast<std::size_t>(i)) * static_cast<std::size_t>(out.nu) +
                         static_cast<std::size_t>(l)] = narrow(acc.real());
            }
        }
    }
    return out;
}

bool realify_check(const PoleResidueModel& m, double tol) {
    const Wide wtol(tol);
    const auto& terms = m.terms();
    for (std::size_t k = 0; k < terms.size(); ++k) {
        const auto& t = terms[k];
        const WideMatrix res = m.residue(k);
        Wide rscale = 1;
        for (Eigen::Index i = 0; i < res.size(); ++i) rscale = std::max(rscale, wabs(res(i)));
        const Wide pscale = std::max(Wide(1), wabs(t.pole));
        if (boost::multiprecision::abs(t.pole.imag()) <= wtol * pscale) {
            for (Eigen::Index i = 0; i < res.size(); ++i)
                if (boost::multiprecision::abs(res(i).imag()) > wtol * rscale) return false;
            continue;
        }
        bool matched = false;
        for (std::size_t j = 0; j < terms.size() && !matched; ++j) {
            if (j == k) continue;
            if (wabs(terms[j].pole - std::conj(t.pole)) > wtol * pscale) continue;
            const WideMatrix other = m.residue(j);
            bool same = true;
            for (Eigen::Index i = 0; i < res.size() && same; ++i)
                same = wabs(other(i) - std::conj(res(i))) <= wtol * rscale;
            matched = same;
        }
        if (!matched) return false;
    }
    return true;
}

}  // namespace delayh2
