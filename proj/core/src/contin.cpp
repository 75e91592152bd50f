#include "adnlab/contin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "adnlab/errors.hpp"

namespace adnlab {

using Index = Eigen::Index;

const char* to_string(BifurcationKind kind) {
    switch (kind) {
        case BifurcationKind::snb: return "SNB";
        case BifurcationKind::hb: return "HB";
        case BifurcationKind::lib: return "LIB";
        case BifurcationKind::sib_candidate: return "SIB";
    }
    return "?";
}

namespace {

constexpr int kBoundaryBackoffs = 6;

/// Augmented view of a DaeSystem with one parameter promoted to a variable.
struct Augmented {
    const DaeSystem& sys;
    Vec p;
    std::size_t k;
    Index n;

    Augmented(const DaeSystem& s, const Vec& p0, std::size_t idx) : sys(s), p(p0), k(idx), n(s.size()) {}

    Vec params(double lambda) const {
        Vec q = p;
        q[static_cast<Index>(k)] = lambda;
        return q;
    }

    Vec join(const Vec& x, double lambda) const {
        Vec y(n + 1);
        y.head(n) = x;
        y[n] = lambda;
        return y;
    }

    Vec f(const Vec& y) const { return sys.evaluate(y.head(n), params(y[n])); }

    Mat jacobian(const Vec& y) const {
        const Vec q = params(y[n]);
        const Vec x = y.head(n);
        Mat j(n + 1, n + 1);
        j.topLeftCorner(n, n) = jacobian_fd(sys, x, q);
        j.topRightCorner(n, 1) = parameter_derivative_fd(sys, x, q, k);
        return j;
    }

    /// Unit tangent oriented so that its projection on `previous` is positive.
    Vec tangent(const Vec& y, const Vec& previous) const {
        Mat m = jacobian(y);
        m.row(n) = previous.transpose();
        Vec rhs = Vec::Zero(n + 1);
        rhs[n] = 1.0;
        Vec t = m.fullPivLu().solve(rhs);
        if (!t.allFinite() || t.norm() == 0.0) {
            throw NumericalError("continuation: tangent computation failed");
        }
        return t / t.norm();
    }

    /// Newton on [F(y) = 0; normalᵀ(y - anchor) = offset].
    std::optional<std::pair<Vec, int>> correct(Vec y, const Vec& normal, const Vec& anchor, double offset,
                                               int max_iter) const {
        for (int it = 0; it <= max_iter; ++it) {
            Vec g(n + 1);
            try {
                g.head(n) = f(y);
            } catch (const Error&) {
                return std::nullopt;
            }
            g[n] = normal.dot(y - anchor) - offset;
            if (!g.allFinite()) return std::nullopt;
            if (g.head(n).lpNorm<Eigen::Infinity>() <= kEquilibriumTol && std::abs(g[n]) <= 1e-10) {
                return std::make_pair(y, it);
            }
            if (it == max_iter) break;
            Mat m;
            try {
                m = jacobian(y);
            } catch (const Error&) {
                return std::nullopt;
            }
            m.row(n) = normal.transpose();
            Eigen::PartialPivLU<Mat> lu(m);
            const Vec d = lu.solve(-g);
            if (!d.allFinite()) return std::nullopt;
            y += d;
        }
        return std::nullopt;
    }
};

BranchPoint make_point(const DaeSystem& sys, const Vec& x, const Vec& p, double s, const Vec& tangent) {
    BranchPoint pt;
    pt.x = x;
    pt.lambda = 0.0;
    pt.s = s;
    pt.tangent = tangent;
    pt.dlambda_ds = tangent[tangent.size() - 1];
    try {
        const auto red = reduced_state_matrix(sys, x, p);
        pt.algebraic_condition = red.algebraic_condition;
        pt.spectrum = eigenvalues(red.a);
        pt.has_spectrum = true;
    } catch (const SingularityError& e) {
        pt.algebraic_condition = e.condition();
    } catch (const NumericalError&) {
    }
    if (sys.monitors) pt.limiter_activity = sys.monitors(x, p);
    return pt;
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool crosses_one(const BranchPoint& a, const BranchPoint& b, Index m) {
    return (a.limiter_activity[m] - 1.0) * (b.limiter_activity[m] - 1.0) <= 0.0 &&
           a.limiter_activity[m] != b.limiter_activity[m];
}

/// Test functions used for refinement. NaN when undefined at the point.
double test_value(const BranchPoint& pt, BifurcationKind kind, int monitor) {
    switch (kind) {
        case BifurcationKind::snb: {
            double best = NAN;
            for (const auto& z : pt.spectrum.eigenvalues) {
                if (std::abs(z.imag()) <= kOscillationFloor && (std::isnan(best) || std::abs(z.real()) < std::abs(best))) {
                    best = z.real();
                }
            }
            return best;
        }
        case BifurcationKind::hb: {
            double best = NAN;
            for (const auto& z : pt.spectrum.eigenvalues) {
                if (std::abs(z.imag()) > kOscillationFloor && (std::isnan(best) || std::abs(z.real()) < std::abs(best))) {
                    best = z.real();
                }
            }
            return best;
        }
        case BifurcationKind::lib:
            return pt.limiter_activity[monitor] - 1.0;
        case BifurcationKind::sib_candidate:
            return std::log10(pt.algebraic_condition) - std::log10(kAlgebraicConditionLimit);
    }
    return NAN;
}

std::vector<Complex> critical_eigenvalues(const BranchPoint& pt, BifurcationKind kind) {
    std::vector<Complex> out;
    if (!pt.has_spectrum) return out;
    const double target = kind == BifurcationKind::lib ? NAN : test_value(pt, kind, -1);
    for (const auto& z : pt.spectrum.eigenvalues) {
        const bool oscillatory = std::abs(z.imag()) > kOscillationFloor;
        if (kind == BifurcationKind::lib) {
            if (out.empty() || std::abs(z.real()) < std::abs(out.front().real())) out.assign(1, z);
        } else if ((kind == BifurcationKind::hb) == oscillatory && z.real() == target) {
            out.push_back(z);
        }
    }
    return out;
}

/// Upper-half-plane eigenvalue closest in frequency to `anchor`.
std::optional<Complex> pair_near(const BranchPoint& pt, double anchor) {
    std::optional<Complex> best;
    for (const auto& z : pt.spectrum.eigenvalues) {
        if (z.imag() > kOscillationFloor && (!best || std::abs(z.imag() - anchor) < std::abs(best->imag() - anchor))) {
            best = z;
        }
    }
    return best;
}

/// Frequency of the complex pair whose real part changes sign between a and b,
/// preferring the one closest to the axis. NaN when no pair qualifies.
double crossing_frequency(const BranchPoint& a, const BranchPoint& b) {
    double anchor = NAN, score = INFINITY;
    for (const auto& za : a.spectrum.eigenvalues) {
        if (!(za.imag() > kOscillationFloor)) continue;
        const auto zb = pair_near(b, za.imag());
        if (!zb || za.real() * zb->real() > 0.0) continue;
        const double sc = std::abs(za.real()) + std::abs(zb->real());
        if (sc < score) {
            score = sc;
            anchor = za.imag();
        }
    }
    return anchor;
}

}  // namespace

Branch continue_branch(const DaeSystem& sys, const EquilibriumSolution& start, const std::string& param,
                       const ContinuationSettings& settings) {
    if (!(settings.h_min > 0.0 && settings.h_min <= settings.h_init && settings.h_init <= settings.h_max)) {
        throw ConfigError("continuation: step sizes must satisfy 0 < h_min <= h_init <= h_max");
    }
    const std::size_t k = sys.params.index(param);
    Augmented aug(sys, start.p, k);
    const Index n = aug.n;

    Branch branch;
    branch.param = param;
    branch.state_names = sys.state_names;
    branch.monitor_names = sys.monitor_names;

    Vec y = aug.join(start.x, start.p[static_cast<Index>(k)]);
    if (aug.f(y).lpNorm<Eigen::Infinity>() > kEquilibriumTol * 10.0) {
        throw ConfigError("continuation: start point is not a converged equilibrium");
    }
    Vec seed = Vec::Zero(n + 1);
    seed[n] = settings.direction >= 0 ? 1.0 : -1.0;
    Vec t = aug.tangent(y, seed);

    auto push = [&](const Vec& yy, const Vec& tt, double s) {
        BranchPoint pt = make_point(sys, yy.head(n), aug.params(yy[n]), s, tt);
        pt.lambda = yy[n];
        branch.points.push_back(std::move(pt));
    };
    push(y, t, 0.0);

    double h = settings.h_init;
    double s = 0.0;
    int easy = 0;
    int tail = -1;
    branch.stop_reason = "step budget exhausted";
    for (int step = 0; step < settings.max_steps; ++step) {
        const Vec pred = y + h * t;
        auto corrected = aug.correct(pred, t, pred, 0.0, settings.max_corrector_iter);
        bool accepted = false;
        Vec t_new;
        if (corrected) {
            try {
                t_new = aug.tangent(corrected->first, t);
                accepted = t_new.dot(t) > 0.85;
            } catch (const Error&) {
                accepted = false;
            }
        }
        if (!accepted) {
            easy = 0;
            if (h <= settings.h_min) {
                branch.stop_reason = "corrector failed at the minimum step (lambda = " + std::to_string(y[n]) + ")";
                break;
            }
            h = std::max(0.5 * h, settings.h_min);
            --step;
            continue;
        }
        const Vec& y_new = corrected->first;
        if (y_new[n] > settings.p_max || y_new[n] < settings.p_min) {
            branch.stop_reason = "parameter bound reached";
            break;
        }
        s += (y_new - y).norm();
        y = y_new;
        t = t_new;
        push(y, t, s);

        if (corrected->second <= 3) {
            if (++easy >= 3) {
                h = std::min(1.3 * h, settings.h_max);
                easy = 0;
            }
        } else {
            easy = 0;
        }
        if (settings.stop_at_first) {
            if (tail < 0 && !classify_bifurcations(branch).empty()) tail = 3;
            if (tail >= 0 && tail-- == 0) {
                branch.stop_reason = "first bifurcation detected";
                break;
            }
        }
    }
    return branch;
}

std::vector<BifurcationRecord> classify_bifurcations(const Branch& branch) {
    std::vector<BifurcationRecord> out;
    const auto& pts = branch.points;
    if (pts.size() < 2) return out;
    const std::size_t segs = pts.size() - 1;

    std::vector<std::pair<std::size_t, Index>> monitor_cross;
    for (std::size_t i = 0; i < segs; ++i) {
        const auto& a = pts[i];
        const auto& b = pts[i + 1];
        for (Index m = 0; m < std::min(a.limiter_activity.size(), b.limiter_activity.size()); ++m) {
            if (crosses_one(a, b, m)) monitor_cross.emplace_back(i, m);
        }
    }
    std::vector<bool> lib_used(monitor_cross.size(), false);

    bool in_sib = pts.front().algebraic_condition > kAlgebraicConditionLimit;
    for (std::size_t i = 0; i < segs; ++i) {
        const auto& a = pts[i];
        const auto& b = pts[i + 1];
        const bool sib = b.algebraic_condition > kAlgebraicConditionLimit;
        if (sib && !in_sib) {
            BifurcationRecord r;
            r.kind = BifurcationKind::sib_candidate;
            r.lambda = b.lambda;
            r.x = b.x;
            r.tolerance = std::abs(b.lambda - a.lambda);
            r.segment = i;
            out.push_back(r);
        }
        in_sib = sib;
        if (!a.has_spectrum || !b.has_spectrum) continue;

        const int dr = b.spectrum.unstable_real() - a.spectrum.unstable_real();
        const int dc = b.spectrum.unstable_complex() - a.spectrum.unstable_complex();
        if (dr == 0 && dc == 0) continue;
        // Unstable pairs meeting on the real axis leave the unstable count unchanged.
        if (dr + dc == 0) continue;

        BifurcationRecord r;
        r.segment = i;
        r.lambda = 0.5 * (a.lambda + b.lambda);
        r.x = 0.5 * (a.x + b.x);
        r.tolerance = std::abs(b.lambda - a.lambda);

        bool lib = false;
        for (std::size_t c = 0; c < monitor_cross.size(); ++c) {
            const auto seg = monitor_cross[c].first;
            if (!lib_used[c] && seg + 2 >= i && seg <= i + 2) {
                lib_used[c] = true;
                lib = true;
                r.kind = BifurcationKind::lib;
                r.segment = seg;
                r.monitor = static_cast<int>(monitor_cross[c].second);
                r.lambda = 0.5 * (pts[seg].lambda + pts[seg + 1].lambda);
                r.x = 0.5 * (pts[seg].x + pts[seg + 1].x);
                r.tolerance = std::abs(pts[seg + 1].lambda - pts[seg].lambda);
                break;
            }
        }
        if (!lib) {
            if (dc != 0) {
                r.kind = BifurcationKind::hb;
            } else {
                bool fold = false;
                const std::size_t lo = i == 0 ? 0 : i - 1;
                const std::size_t hi = std::min(i + 1, segs - 1);
                for (std::size_t j = lo; j <= hi; ++j) {
                    if (sign_of(pts[j].dlambda_ds) * sign_of(pts[j + 1].dlambda_ds) < 0.0) fold = true;
                }
                if (!fold) continue;
                r.kind = BifurcationKind::snb;
            }
        }
        r.crossing = critical_eigenvalues(b, r.kind);
        out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const BifurcationRecord& l, const BifurcationRecord& r) { return l.segment < r.segment; });
    return out;
}

BifurcationRecord locate_bifurcation(const DaeSystem& sys, const Vec& p, const std::string& param,
                                     const BranchPoint& a, const BranchPoint& b, BifurcationKind kind,
                                     int monitor) {
    const std::size_t k = sys.params.index(param);
    Augmented aug(sys, p, k);
    const Index n = aug.n;
    const Vec ya = aug.join(a.x, a.lambda);
    const Vec yb = aug.join(b.x, b.lambda);
    const Vec normal = a.tangent;
    const double sigma_b = normal.dot(yb - ya);
    if (!(std::abs(sigma_b) > 0.0)) {
        throw ConfigError("locate: degenerate bracket");
    }

    auto probe = [&](const Vec& y) {
        BranchPoint pt = make_point(sys, y.head(n), aug.params(y[n]), 0.0, normal);
        pt.lambda = y[n];
        return pt;
    };
    auto solve_at = [&](double sigma, const Vec& guess) {
        auto res = aug.correct(guess, normal, ya, sigma, 30);
        if (!res) {
            throw ConvergenceError("locate: equilibrium re-solve failed inside the bracket", NAN, -1, "");
        }
        return res->first;
    };

    double lo = 0.0, hi = sigma_b;
    Vec ylo = ya, yhi = yb;
    BranchPoint plo = probe(ylo), phi = probe(yhi);
    // Hopf refinement follows one complex pair by frequency continuity.
    double anchor = kind == BifurcationKind::hb ? crossing_frequency(plo, phi) : NAN;
    auto value = [&](const BranchPoint& pt) {
        if (std::isnan(anchor)) return test_value(pt, kind, monitor);
        const auto z = pair_near(pt, anchor);
        if (!z) return std::numeric_limits<double>::quiet_NaN();
        anchor = z->imag();
        return z->real();
    };
    double glo = value(plo);
    double ghi = value(phi);
    if (!(glo * ghi <= 0.0)) {
        throw ConfigError(std::string("locate: ") + to_string(kind) + " test function has the same sign at both bracket ends");
    }

    const double lam_scale = std::max(1.0, std::abs(a.lambda));
    const double sig_scale = std::max(1.0, std::abs(sigma_b));
    for (int it = 0; it < 200; ++it) {
        if (std::abs(yhi[n] - ylo[n]) <= 1e-6 * lam_scale && std::abs(hi - lo) <= 1e-6 * sig_scale) break;
        const double mid = 0.5 * (lo + hi);
        const double w = (mid - lo) / (hi - lo);
        const Vec ym = solve_at(mid, (1.0 - w) * ylo + w * yhi);
        const BranchPoint pm = probe(ym);
        const double gm = value(pm);
        if (std::isnan(gm)) {
            throw NumericalError(std::string("locate: ") + to_string(kind) + " test function undefined inside the bracket");
        }
        if (gm * glo <= 0.0) {
            hi = mid;
            yhi = ym;
            ghi = gm;
        } else {
            lo = mid;
            ylo = ym;
            glo = gm;
        }
    }

    BifurcationRecord rec;
    rec.kind = kind;
    rec.monitor = monitor;
    rec.tolerance = std::abs(yhi[n] - ylo[n]);
    Vec y_star = std::abs(glo) <= std::abs(ghi) ? ylo : yhi;
    if (ghi != glo) {
        const double w = glo / (glo - ghi);
        if (w > 0.0 && w < 1.0) {
            y_star = solve_at(lo + w * (hi - lo), (1.0 - w) * ylo + w * yhi);
        }
    }
    const BranchPoint ps = probe(y_star);
    rec.lambda = y_star[n];
    rec.x = y_star.head(n);
    if (!std::isnan(anchor)) {
        if (const auto z = pair_near(ps, anchor)) {
            rec.crossing = {*z, std::conj(*z)};
            return rec;
        }
    }
    rec.crossing = critical_eigenvalues(ps, kind);
    return rec;
}

std::vector<BifurcationRecord> find_bifurcations(const DaeSystem& sys, const Vec& p, const Branch& branch) {
    auto records = classify_bifurcations(branch);
    for (auto& r : records) {
        if (r.kind == BifurcationKind::sib_candidate) continue;
        const auto& a = branch.points[r.segment];
        const auto& b = branch.points[r.segment + 1];
        try {
            const auto seg = r.segment;
            r = locate_bifurcation(sys, p, branch.param, a, b, r.kind, r.monitor);
            r.segment = seg;
        } catch (const Error&) {
            // keep the unrefined record; its tolerance is the segment width
        }
    }
    return records;
}

Boundary2D trace_boundary_2d(const DaeSystem& sys, const Vec& p, const Vec& guess, const std::string& param1,
                             const std::string& param2, const std::vector<double>& grid,
                             const ContinuationSettings& settings, const EquilibriumSolver& solver) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i]) || (i > 0 && grid[i] < grid[i - 1])) {
            throw ConfigError("boundary: grid must be finite and sorted");
        }
    }
    const auto k2 = static_cast<Index>(sys.params.index(param2));
    const auto k1 = static_cast<Index>(sys.params.index(param1));
    Boundary2D out;
    out.param1 = param1;
    out.param2 = param2;
    ContinuationSettings row_settings = settings;
    row_settings.stop_at_first = true;
    for (double v : grid) {
        BoundaryRow row;
        row.param2 = v;
        try {
            Vec q = p;
            q[k2] = v;
            auto solve = [&](const Vec& at) { return solver ? solver(at, guess) : newton_equilibrium(sys, guess, at); };
            // Rows without an operating point at the base value restart from a lighter one.
            EquilibriumSolution base;
            for (int backoff = 0;; ++backoff) {
                try {
                    base = solve(q);
                    break;
                } catch (const Error&) {
                    const double lighter = 0.5 * q[k1];
                    if (backoff >= kBoundaryBackoffs || lighter < settings.p_min) throw;
                    q[k1] = lighter;
                }
            }
            const Branch br = continue_branch(sys, base, param1, row_settings);
            const auto recs = find_bifurcations(sys, base.p, br);
            if (!recs.empty()) row.record = recs.front();
        } catch (const Error& e) {
            row.error = e.what();
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

LimitCycleResult limit_cycle_amplitude(const DaeSystem& sys, const Vec& p, const std::string& param,
                                       const BifurcationRecord& hb, double lambda_probe,
                                       const std::string& observable, const LimitCycleOptions& options) {
    const auto k = static_cast<Index>(sys.params.index(param));
    const Index obs = sys.state_index(observable);
    Vec q = p;
    q[k] = lambda_probe;
    const auto eq = newton_equilibrium(sys, hb.x, q);

    const auto red = reduced_state_matrix(sys, eq.x, q);
    Eigen::EigenSolver<Mat> es(red.a, true);
    if (es.info() != Eigen::Success) {
        throw NumericalError("limit cycle: eigen-decomposition failed");
    }
    Index crit = -1;
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
        const Complex z = es.eigenvalues()[i];
        if (z.imag() > kOscillationFloor && (crit < 0 || z.real() > es.eigenvalues()[crit].real())) crit = i;
    }
    if (crit < 0) {
        throw NumericalError("limit cycle: no oscillatory mode at the probe point");
    }
    const double omega = es.eigenvalues()[crit].imag();
    Vec dir = es.eigenvectors().col(crit).real();
    if (dir.lpNorm<Eigen::Infinity>() == 0.0) dir = es.eigenvectors().col(crit).imag();
    dir /= dir.lpNorm<Eigen::Infinity>();

    Vec x = eq.x;
    const auto dyn = sys.dynamic_indices();
    for (std::size_t j = 0; j < dyn.size(); ++j) x[dyn[j]] += options.perturbation * dir[static_cast<Index>(j)];

    const double window = 20.0 / omega;
    const double h = 2.0 * std::numbers::pi / omega / options.steps_per_period;
    LimitCycleResult res;
    double prev = -1.0;
    int settled = 0;
    double t = 0.0;
    for (int w = 0; w < options.max_windows; ++w) {
        const Trajectory tr = integrate(sys, x, q, window, h, {}, t);
        const Vec col = tr.states.col(obs);
        const double amp = 0.5 * (col.maxCoeff() - col.minCoeff());
        x = tr.at(tr.samples() - 1);
        t = tr.times[tr.samples() - 1];
        res.t_final = t;
        if (amp < options.amplitude_floor) {
            res.amplitude = 0.0;
            res.converged = true;
            return res;
        }
        if (prev > 0.0 && std::abs(amp - prev) <= options.rel_tol * amp) {
            if (++settled >= 2) {
                res.amplitude = amp;
                res.converged = true;
                return res;
            }
        } else {
            settled = 0;
        }
        prev = amp;
        res.amplitude = amp;
    }
    return res;
}

}  // namespace adnlab
