#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adnlab/converter.hpp"
#include "adnlab/engine.hpp"
#include "adnlab/netmodel.hpp"
#include "adnlab/val.hpp"

namespace adnlab {

/// Grid-following unit together with its optional virtual admittance loop.
struct GflUnit {
    GflParams params;
    ValMode val_mode = ValMode::off;
    ValGains val;
};

/// Complete electrical description: network, loads and converters.
struct GridModel {
    NetworkModel network;
    std::vector<GflUnit> gfl;
    std::vector<GfmDroopParams> gfm;

    /// Validates the network and every converter. Throws ModelError or ConfigError.
    void validate();
};

/// Operating quantities extracted from a state vector.
struct GridDetail {
    std::vector<Complex> bus_v;
    std::vector<Complex> branch_i;
    std::vector<Complex> load_i;     ///< drawn from the bus
    std::vector<Complex> machine_i;  ///< drawn from the bus
    std::vector<Complex> source_i;   ///< injected into the bus
    std::vector<Complex> ltc_i;      ///< secondary-side current into the `to` bus
    std::vector<double> taps;
    std::vector<GflState> gfl_state;
    std::vector<GflResidual> gfl;
    std::vector<Complex> gfl_val;  ///< admittance current i_v, PLL frame
    std::vector<GfmState> gfm_state;
    std::vector<GfmResidual> gfm;
};

/// A GridModel assembled into a DaeSystem.
///
/// State naming: "<bus>.vd", "<branch>.id", "<source>.id" (non-ideal sources),
/// "<load>.id" (lagged ZIP loads), "<machine>.s" / ".ed" / ".eq",
/// "<ltc>.n" / ".id", "<conv>.theta" / ".eps" / ".id" / ".xd" / ".ivd" for
/// grid-following units and "<gfm>.theta" / ".pf" / ".qf" / ".id" for
/// grid-forming units (each complex quantity has a matching "q" entry).
///
/// Parameters are "lambda" and "<device id>.<field>" for every numeric
/// device field; ideal-source impedances are structural and not exposed.
class GridSystem {
public:
    explicit GridSystem(GridModel model);

    const DaeSystem& dae() const { return dae_; }
    DaeSystem& dae() { return dae_; }
    const GridModel& model() const;

    /// Copy of the model with the parameter vector applied.
    GridModel model_at(const Vec& p) const;

    /// Flat start: nominal voltages, zero line currents, converter states at
    /// their set-points.
    Vec flat_start() const;

    GridDetail detail(const Vec& x, const Vec& p, double t = 0.0) const;
    GridDetail detail(const Vec& x) const { return detail(x, dae_.params.values()); }

    Eigen::Index bus_state(std::size_t bus) const;
    Eigen::Index gfl_state(std::size_t k) const;

private:
    struct Layout;
    std::shared_ptr<const Layout> layout_;
    DaeSystem dae_;
};

/// Newton from `guess` (flat start when empty). On failure, retries by
/// ramping the loading factor up from a tenth of its value; the original
/// error is rethrown if the ramp fails as well.
EquilibriumSolution solve_grid_equilibrium(const GridSystem& grid, const Vec& p, const Vec& guess = {});

}  // namespace adnlab
