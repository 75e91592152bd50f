#pragma once

#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace adnlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// Nominal system frequency used when a scenario does not override it.
inline constexpr double kNominalFrequencyHz = 50.0;

inline constexpr double nominal_omega(double f_hz = kNominalFrequencyHz) {
    return 2.0 * std::numbers::pi * f_hz;
}

/// Below this magnitude (pu) power-to-current conversions are frozen.
inline constexpr double kVoltageFloor = 0.01;

/// Rotation of a dq pair by +90 degrees, i.e. multiplication by j.
inline Complex rot90(Complex z) { return {-z.imag(), z.real()}; }

}  // namespace adnlab
