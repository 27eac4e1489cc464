#pragma once

// Scalar and small-matrix types shared by the whole library.
//
// Reduced models live comfortably in double precision, but the original
// model G often does not: a pole/residue expansion of a high-order cascade
// has residues many orders of magnitude larger than G itself, and every sum
// over G's terms cancels catastrophically in double. All such sums are
// therefore carried out in quad precision (binary128), and values cross back
// to double only once the cancellation has happened.

#include <complex>

#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/float128.hpp>
#include <Eigen/Core>

namespace delayh2 {

using Complex = std::complex<double>;

using Wide = boost::multiprecision::float128;
using WideComplex = std::complex<Wide>;

using WideVector = Eigen::Matrix<WideComplex, Eigen::Dynamic, 1>;
using WideMatrix = Eigen::Matrix<WideComplex, Eigen::Dynamic, Eigen::Dynamic>;

inline WideComplex widen(Complex z) { return {Wide(z.real()), Wide(z.imag())}; }
inline WideComplex widen(double x) { return {Wide(x), Wide(0)}; }

inline Complex narrow(const WideComplex& z) {
    return {static_cast<double>(z.real()), static_cast<double>(z.imag())};
}
inline double narrow(const Wide& x) { return static_cast<double>(x); }

inline Eigen::MatrixXcd narrow(const WideMatrix& m) {
    Eigen::MatrixXcd out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = narrow(m(i, j));
    return out;
}

inline WideMatrix widen(const Eigen::MatrixXcd& m) {
    WideMatrix out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = widen(m(i, j));
    return out;
}

inline WideVector widen(const Eigen::VectorXcd& v) {
    WideVector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = widen(v(i));
    return out;
}

inline Eigen::VectorXcd narrow(const WideVector& v) {
    Eigen::VectorXcd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = narrow(v(i));
    return out;
}

inline Wide wabs(const WideComplex& z) { return boost::multiprecision::hypot(z.real(), z.imag()); }

inline WideComplex wexp(const WideComplex& z) {
    using boost::multiprecision::cos;
    using boost::multiprecision::exp;
    using boost::multiprecision::sin;
    const Wide m = exp(z.real());
    return {m * cos(z.imag()), m * sin(z.imag())};
}

// Unconjugated bilinear product x^T y.
inline WideComplex dotu(const WideVector& x, const WideVector& y) {
    WideComplex s{};
    for (Eigen::Index i = 0; i < x.size(); ++i) s += x(i) * y(i);
    return s;
}

inline Wide norm2(const WideVector& v) {
    Wide s = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::norm(v(i));
    return boost::multiprecision::sqrt(s);
}

}  // namespace delayh2
