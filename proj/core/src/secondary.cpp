#include "adnlab/secondary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adnlab/errors.hpp"

namespace adnlab {

using Index = Eigen::Index;

MeasurementSnapshot collect_measurements(const GridSystem& grid, const Vec& x, const Vec& p, int iteration) {
    const GridDetail d = grid.detail(x, p);
    const GridModel m = grid.model_at(p);
    MeasurementSnapshot snap;
    snap.iteration = iteration;
    const auto nb = static_cast<Index>(d.bus_v.size());
    snap.v.resize(nb);
    for (Index b = 0; b < nb; ++b) {
        snap.bus_ids.push_back(m.network.buses[static_cast<std::size_t>(b)].id);
        snap.v[b] = std::abs(d.bus_v[static_cast<std::size_t>(b)]);
    }
    std::vector<double> li;
    for (std::size_t k = 0; k < d.load_i.size(); ++k) {
        snap.load_ids.push_back(m.network.zip_loads[k].id);
        li.push_back(std::abs(d.load_i[k]));
    }
    for (std::size_t k = 0; k < d.machine_i.size(); ++k) {
        snap.load_ids.push_back(m.network.machines[k].id);
        li.push_back(std::abs(d.machine_i[k]));
    }
    snap.load_i = Eigen::Map<const Vec>(li.data(), static_cast<Index>(li.size()));
    const auto nc = static_cast<Index>(m.gfl.size());
    snap.p_ref.resize(nc);
    snap.q_ref.resize(nc);
    snap.converter_i.resize(nc);
    for (Index k = 0; k < nc; ++k) {
        const auto& u = m.gfl[static_cast<std::size_t>(k)].params;
        snap.converter_ids.push_back(u.id);
        const Complex v_bus = d.bus_v[m.network.bus_index(u.bus)];
        snap.p_ref[k] = u.p_ref;
        snap.q_ref[k] = volt_var_q(u, std::abs(v_bus));
        snap.converter_i[k] = std::abs(d.gfl_state[static_cast<std::size_t>(k)].i);
    }
    return snap;
}

WeightVector WeightVector::uniform(std::size_t buses, double rho) {
    return {Vec::Ones(static_cast<Index>(buses)), rho};
}

void WeightVector::validate(std::size_t buses) const {
    if (w.size() != static_cast<Index>(buses)) {
        throw ConfigError("secondary: weight vector has " + std::to_string(w.size()) + " entries for " +
                          std::to_string(buses) + " buses");
    }
    if (!w.allFinite() || (w.array() < 0.0).any() || !(w.sum() > 0.0)) {
        throw ConfigError("secondary: weights must be finite, non-negative and not all zero");
    }
    if (!(rho >= 0.0) || !std::isfinite(rho)) {
        throw ConfigError("secondary: regularisation must be >= 0");
    }
}

GainLayout GainLayout::from(const GridSystem& grid, const Vec& p) {
    const GridModel m = grid.model_at(p);
    GainLayout g;
    std::vector<double> lo, hi;
    for (std::size_t k = 0; k < m.gfl.size(); ++k) {
        const auto& u = m.gfl[k];
        if (u.val_mode == ValMode::off) continue;
        u.val.validate();
        for (const char* field : {"g_v", "b_v"}) {
            const std::string name = u.params.id + "." + field;
            g.names.push_back(name);
            g.params.push_back(grid.dae().params.index(name));
            g.units.push_back(k);
        }
        lo.insert(lo.end(), {u.val.g_min, u.val.b_min});
        hi.insert(hi.end(), {u.val.g_max, u.val.b_max});
    }
    g.lower = Eigen::Map<const Vec>(lo.data(), static_cast<Index>(lo.size()));
    g.upper = Eigen::Map<const Vec>(hi.data(), static_cast<Index>(hi.size()));
    return g;
}

Vec GainLayout::values(const Vec& p) const {
    Vec g(size());
    for (Index j = 0; j < size(); ++j) g[j] = p[static_cast<Index>(params[static_cast<std::size_t>(j)])];
    return g;
}

void GainLayout::assign(Vec& p, const Vec& gains) const {
    for (Index j = 0; j < size(); ++j) p[static_cast<Index>(params[static_cast<std::size_t>(j)])] = gains[j];
}

namespace {

struct Observation {
    Vec v;
    Vec conv_i;
};

Observation observe(const GridSystem& grid, const Vec& x, const Vec& p) {
    const GridDetail d = grid.detail(x, p);
    Observation o;
    o.v.resize(static_cast<Index>(d.bus_v.size()));
    for (std::size_t b = 0; b < d.bus_v.size(); ++b) o.v[static_cast<Index>(b)] = std::abs(d.bus_v[b]);
    o.conv_i.resize(static_cast<Index>(d.gfl_state.size()));
    for (std::size_t k = 0; k < d.gfl_state.size(); ++k) o.conv_i[static_cast<Index>(k)] = std::abs(d.gfl_state[k].i);
    return o;
}

}  // namespace

Sensitivity gain_sensitivity(const GridSystem& grid, const Vec& x, const Vec& p, const GainLayout& gains,
                             double step, bool central) {
    const Observation base = observe(grid, x, p);
    Sensitivity s;
    s.voltage = Mat::Zero(base.v.size(), gains.size());
    s.current = Mat::Zero(base.conv_i.size(), gains.size());
    s.usable.assign(static_cast<std::size_t>(gains.size()), true);
    for (Index j = 0; j < gains.size(); ++j) {
        const auto pj = static_cast<Index>(gains.params[static_cast<std::size_t>(j)]);
        auto shifted = [&](double delta) {
            Vec q = p;
            q[pj] += delta;
            const auto sol = newton_equilibrium(grid.dae(), x, q);
            return observe(grid, sol.x, q);
        };
        try {
            if (central) {
                const Observation up = shifted(step);
                const Observation dn = shifted(-step);
                s.voltage.col(j) = (up.v - dn.v) / (2.0 * step);
                s.current.col(j) = (up.conv_i - dn.conv_i) / (2.0 * step);
            } else {
                const Observation up = shifted(step);
                s.voltage.col(j) = (up.v - base.v) / step;
                s.current.col(j) = (up.conv_i - base.conv_i) / step;
            }
        } catch (const Error&) {
            s.usable[static_cast<std::size_t>(j)] = false;
            s.voltage.col(j).setZero();
            s.current.col(j).setZero();
        }
    }
    return s;
}

double weighted_objective(const Vec& v, const WeightVector& w, double v_nom) {
    return (w.w.array() * (v.array() - v_nom).square()).sum();
}

namespace {

/// Primal active-set method for min ½zᵀHz + cᵀz subject to A z <= b, started
/// from the feasible point z = 0.
struct ActiveSetResult {
    Vec z;
    Vec mu;
    std::vector<bool> active;
};

ActiveSetResult active_set_qp(const Mat& h, const Vec& c, const Mat& a, const Vec& b) {
    const Index n = h.rows();
    const Index m = a.rows();
    ActiveSetResult r;
    r.z = Vec::Zero(n);
    r.mu = Vec::Zero(m);
    r.active.assign(static_cast<std::size_t>(m), false);
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());

    for (int iter = 0; iter < 50 * (n + m + 1); ++iter) {
        std::vector<Index> w;
        for (Index i = 0; i < m; ++i) {
            if (r.active[static_cast<std::size_t>(i)]) w.push_back(i);
        }
        const auto nw = static_cast<Index>(w.size());
        Mat kkt = Mat::Zero(n + nw, n + nw);
        kkt.topLeftCorner(n, n) = h;
        for (Index j = 0; j < nw; ++j) {
            kkt.block(n + j, 0, 1, n) = a.row(w[static_cast<std::size_t>(j)]);
            kkt.block(0, n + j, n, 1) = a.row(w[static_cast<std::size_t>(j)]).transpose();
        }
        Vec rhs = Vec::Zero(n + nw);
        rhs.head(n) = -(h * r.z + c);
        const Vec sol = kkt.completeOrthogonalDecomposition().solve(rhs);
        const Vec step = sol.head(n);
        if (step.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, r.z.lpNorm<Eigen::Infinity>())) {
            // h z + c + Σ μ_i a_i = 0 on the working set
            r.mu.setZero();
            Index worst = -1;
            double worst_mu = -1e-12 * scale;
            for (Index j = 0; j < nw; ++j) {
                const double mu = sol[n + j];
                r.mu[w[static_cast<std::size_t>(j)]] = mu;
                if (mu < worst_mu) {
                    worst_mu = mu;
                    worst = w[static_cast<std::size_t>(j)];
                }
            }
            if (worst < 0) return r;
            r.active[static_cast<std::size_t>(worst)] = false;
            continue;
        }
        double t = 1.0;
        Index blocking = -1;
        for (Index i = 0; i < m; ++i) {
            if (r.active[static_cast<std::size_t>(i)]) continue;
            const double ap = a.row(i).dot(step);
            if (ap > 0.0) {
                const double room = std::max(0.0, b[i] - a.row(i).dot(r.z));
                const double ti = room / ap;
                if (ti < t) {
                    t = ti;
                    blocking = i;
                }
            }
        }
        r.z += t * step;
        if (blocking >= 0) r.active[static_cast<std::size_t>(blocking)] = true;
    }
    throw NumericalError("secondary: active-set iteration limit reached");
}

}  // namespace

GainUpdate solve_update(const UpdateProblem& pr) {
    const Index ng = pr.gains.size();
    if (pr.s.cols() != ng || pr.lower.size() != ng || pr.upper.size() != ng || pr.s.rows() != pr.v.size()) {
        throw ConfigError("secondary: update problem dimensions do not match");
    }
    pr.weights.validate(static_cast<std::size_t>(pr.v.size()));
    for (Index j = 0; j < ng; ++j) {
        if (!(pr.lower[j] <= pr.upper[j]) || !std::isfinite(pr.lower[j]) || !std::isfinite(pr.upper[j])) {
            throw ConfigError("secondary: infeasible gain box for entry " + std::to_string(j));
        }
    }
    if (!(pr.alpha > 0.0 && pr.alpha <= 1.0)) throw ConfigError("secondary: trust step must lie in (0, 1]");

    GainUpdate up;
    up.objective_before = weighted_objective(pr.v, pr.weights, pr.v_nom);
    up.delta = Vec::Zero(ng);
    up.gains_new = pr.gains;
    up.objective_predicted = up.objective_before;
    up.lower_active.assign(static_cast<std::size_t>(ng), false);
    up.upper_active.assign(static_cast<std::size_t>(ng), false);
    up.current_active.assign(static_cast<std::size_t>(pr.c.rows()), false);

    std::vector<Index> cols;
    for (Index j = 0; j < ng; ++j) {
        const bool ok = pr.usable.empty() || pr.usable[static_cast<std::size_t>(j)];
        if (ok && pr.s.col(j).allFinite()) cols.push_back(j);
    }
    const auto n = static_cast<Index>(cols.size());
    if (n == 0) {
        up.no_op = true;
        return up;
    }

    const Mat s = pr.s(Eigen::all, cols);
    const Vec wv = pr.weights.w;
    const Vec dev = pr.v.array() - pr.v_nom;
    const Mat h = 2.0 * (s.transpose() * wv.asDiagonal() * s + pr.weights.rho * Mat::Identity(n, n));
    const Vec c = 2.0 * s.transpose() * (wv.asDiagonal() * dev);

    const Index mc = pr.c.rows();
    Mat a = Mat::Zero(2 * n + mc, n);
    Vec b(2 * n + mc);
    for (Index j = 0; j < n; ++j) {
        const Index g = cols[static_cast<std::size_t>(j)];
        a(j, j) = -1.0;
        b[j] = pr.gains[g] - pr.lower[g];
        a(n + j, j) = 1.0;
        b[n + j] = pr.upper[g] - pr.gains[g];
    }
    if (mc > 0) {
        a.bottomRows(mc) = pr.c(Eigen::all, cols);
        b.tail(mc) = pr.margin.cwiseMax(0.0);
    }

    const ActiveSetResult qp = active_set_qp(h, c, a, b);
    Vec z = qp.z;
    // Snap active bounds exactly onto the box.
    for (Index j = 0; j < n; ++j) {
        if (qp.active[static_cast<std::size_t>(j)]) z[j] = -b[j];
        if (qp.active[static_cast<std::size_t>(n + j)]) z[j] = b[n + j];
    }
    const Vec grad = h * z + c + a.transpose() * qp.mu;
    up.kkt_residual = grad.lpNorm<Eigen::Infinity>();
    up.multipliers = qp.mu;
    for (Index j = 0; j < n; ++j) {
        const Index g = cols[static_cast<std::size_t>(j)];
        up.delta[g] = z[j];
        up.lower_active[static_cast<std::size_t>(g)] = qp.active[static_cast<std::size_t>(j)];
        up.upper_active[static_cast<std::size_t>(g)] = qp.active[static_cast<std::size_t>(n + j)];
    }
    for (Index i = 0; i < mc; ++i) up.current_active[static_cast<std::size_t>(i)] = qp.active[static_cast<std::size_t>(2 * n + i)];

    up.gains_new = (pr.gains + pr.alpha * up.delta).cwiseMax(pr.lower).cwiseMin(pr.upper);
    for (Index g = 0; g < ng; ++g) {
        if (up.lower_active[static_cast<std::size_t>(g)] && pr.alpha == 1.0) up.gains_new[g] = pr.lower[g];
        if (up.upper_active[static_cast<std::size_t>(g)] && pr.alpha == 1.0) up.gains_new[g] = pr.upper[g];
    }
    const Vec v_pred = pr.v + pr.s * up.delta;
    up.objective_predicted = weighted_objective(v_pred, pr.weights, pr.v_nom);
    return up;
}

SecondaryHistory run_recursive(const GridSystem& grid, const Vec& p0, const Vec& guess,
                               const SecondarySettings& settings) {
    const std::size_t nb = grid.model().network.buses.size();
    settings.weights.validate(nb);
    if (settings.max_iter < 1) throw ConfigError("secondary: max_iter must be >= 1");

    SecondaryHistory hist;
    hist.layout = GainLayout::from(grid, p0);
    const GainLayout& layout = hist.layout;

    Vec p = p0;
    EquilibriumSolution eq = solve_grid_equilibrium(grid, p, guess);
    const GridModel base = grid.model_at(p0);

    auto max_dev = [&](const Vec& v) {
        return (settings.weights.w.array() * (v.array() - settings.v_nom).abs()).maxCoeff();
    };

    hist.stop_reason = "iteration limit reached";
    for (int it = 1; it <= settings.max_iter; ++it) {
        SecondaryIteration rec;
        rec.iteration = it;
        rec.snapshot = collect_measurements(grid, eq.x, p, it);
        rec.gains = layout.values(p);
        rec.objective = weighted_objective(rec.snapshot.v, settings.weights, settings.v_nom);
        rec.max_deviation = max_dev(rec.snapshot.v);
        if (rec.max_deviation <= settings.tol_v) {
            hist.iterations.push_back(std::move(rec));
            hist.converged = true;
            hist.stop_reason = "voltage tolerance met";
            break;
        }
        if (layout.size() == 0) {
            hist.iterations.push_back(std::move(rec));
            hist.stop_reason = "no virtual admittance gains to dispatch";
            break;
        }

        const Sensitivity sens = gain_sensitivity(grid, eq.x, p, layout, settings.step);
        UpdateProblem pr;
        pr.v = rec.snapshot.v;
        pr.v_nom = settings.v_nom;
        pr.s = sens.voltage;
        pr.weights = settings.weights;
        pr.gains = rec.gains;
        pr.lower = layout.lower;
        pr.upper = layout.upper;
        pr.c = sens.current;
        pr.margin.resize(sens.current.rows());
        for (Index k = 0; k < pr.margin.size(); ++k) {
            pr.margin[k] = base.gfl[static_cast<std::size_t>(k)].params.i_max - rec.snapshot.converter_i[k];
        }
        pr.usable = sens.usable;
        pr.alpha = settings.alpha;
        rec.update = solve_update(pr);

        if (rec.update.no_op || rec.update.delta.lpNorm<Eigen::Infinity>() <= 1e-6) {
            hist.stop_reason = rec.update.no_op ? "no usable sensitivity columns" : "update step below threshold";
            hist.iterations.push_back(std::move(rec));
            break;
        }

        double alpha = settings.alpha;
        bool accepted = false;
        for (int half = 0; half <= settings.max_halvings; ++half) {
            const Vec g_try = (rec.gains + alpha * rec.update.delta).cwiseMax(layout.lower).cwiseMin(layout.upper);
            Vec p_try = p;
            layout.assign(p_try, g_try);
            try {
                const auto eq_try = newton_equilibrium(grid.dae(), eq.x, p_try);
                const Observation o = observe(grid, eq_try.x, p_try);
                bool current_ok = true;
                for (Index k = 0; k < o.conv_i.size(); ++k) {
                    current_ok &= o.conv_i[k] <= base.gfl[static_cast<std::size_t>(k)].params.i_max * (1.0 + 1e-6);
                }
                if (current_ok && weighted_objective(o.v, settings.weights, settings.v_nom) <= rec.objective) {
                    p = p_try;
                    eq = eq_try;
                    accepted = true;
                    break;
                }
            } catch (const Error&) {
            }
            alpha *= 0.5;
        }
        rec.alpha = accepted ? alpha : 0.0;
        hist.iterations.push_back(std::move(rec));
        if (!accepted) {
            hist.stop_reason = "no improving step after trust-step halving";
            break;
        }
    }
    hist.final_x = eq.x;
    hist.final_p = p;
    return hist;
}

}  // namespace adnlab
