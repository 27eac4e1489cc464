#include "delayh2/benchmark.hpp"

#include "delayh2/error.hpp"

namespace delayh2 {

std::vector<double> linspace(double start, double stop, std::size_t n) {
    std::vector<double> v(n);
    if (n == 0) return v;
    if (n == 1) {
        v[0] = start;
        return v;
    }
    const double step = (stop - start) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i) * step + start;
    v[n - 1] = stop;
    return v;
}

std::vector<double> cascade_poles(std::size_t n) { return linspace(-2.0, -1.0, n); }

PoleResidueModel cascade_model(std::size_t n) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "cascade needs at least one section");
    const std::vector<double> mu = cascade_poles(n);
    Wide gain = 1;
    for (double m : mu) gain *= Wide(m);
    std::vector<PoleResidueTerm> terms;
    for (std::size_t k = 0; k < n; ++k) {
        Wide denom = 1;
        for (std::size_t j = 0; j < n; ++j)
            if (j != k) denom *= Wide(mu[k]) - Wide(mu[j]);
        terms.push_back({WideComplex(Wide(mu[k])), WideVector::Constant(1, WideComplex(Wide(1))),
                         WideVector::Constant(1, WideComplex(gain / denom))});
    }
    return PoleResidueModel(std::move(terms), 1, 1);
}

StateSpaceModel cascade_state_space(std::size_t n) {
    const std::vector<double> mu = cascade_poles(n);
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N), B = Eigen::MatrixXd::Zero(N, 1), C = Eigen::MatrixXd::Zero(1, N);
    for (Eigen::Index i = 0; i < N; ++i) {
        A(i, i) = mu[static_cast<std::size_t>(i)];
        if (i > 0) A(i, i - 1) = mu[static_cast<std::size_t>(i)];
    }
    B(0, 0) = mu[0];
    C(0, N - 1) = 1;
    return StateSpaceModel(Eigen::MatrixXd::Identity(N, N), A, B, C);
}

double impulse_mse(const DelayedModel& a, const DelayedModel& b, std::span<const double> t_grid) {
    if (a.core.ny() != b.core.ny() || a.core.nu() != b.core.nu())
        throw Error(ErrorCode::DimensionMismatch, "impulse comparison of models with different shapes");
    if (t_grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty time grid");
    const ImpulseResponse ya = impulse_response(a, t_grid);
    const ImpulseResponse yb = impulse_response(b, t_grid);
    double acc = 0;
    for (std::size_t i = 0; i < ya.data.size(); ++i) {
        const double d = ya.data[i] - yb.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(t_grid.size());
}

}  // namespace delayh2
