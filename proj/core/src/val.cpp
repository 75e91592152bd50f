#include "adnlab/val.hpp"

#include <cmath>

#include "adnlab/errors.hpp"

namespace adnlab {

void ValGains::validate() const {
    for (double v : {g_v, b_v, v_nom, g_min, g_max, b_min, b_max}) {
        if (!std::isfinite(v)) throw ConfigError("virtual admittance: non-finite gain or bound");
    }
    if (g_min > g_max || b_min > b_max) throw ConfigError("virtual admittance: empty gain box");
    constexpr double slack = 1e-12;
    if (g_v < g_min - slack || g_v > g_max + slack || b_v < b_min - slack || b_v > b_max + slack) {
        throw ConfigError("virtual admittance: gains outside their box");
    }
}

DvalResidual dval_residual(const ValGains& g, const DvalState& s, Complex v_pll, double omega0) {
    const Complex y = g.admittance();
    if (std::abs(y) == 0.0) {
        throw ConfigError("dynamic virtual admittance needs a non-zero admittance; use the quasi-stationary loop");
    }
    const Complex z = 1.0 / y;
    const double tau = std::abs(z) / omega0;
    DvalResidual r;
    r.i_v = s.i_v;
    r.i_v_rate = (voltage_deviation(g, v_pll) - z * s.i_v) / tau;
    return r;
}

Complex qval_reference(const ValGains& g, Complex v_pll) {
    return g.admittance() * voltage_deviation(g, v_pll);
}

}  // namespace adnlab
