#include "adnlab/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "adnlab/errors.hpp"

namespace adnlab {

using Index = Eigen::Index;

std::size_t ParamSet::add(const std::string& name, double value) {
    if (lookup_.contains(name)) {
        throw ConfigError("duplicate parameter " + name);
    }
    const auto idx = names_.size();
    names_.push_back(name);
    lookup_.emplace(name, idx);
    values_.conservativeResize(static_cast<Index>(idx + 1));
    values_[static_cast<Index>(idx)] = value;
    return idx;
}

void ParamSet::alias(const std::string& alias, const std::string& target) {
    const auto idx = index(target);
    auto [it, inserted] = lookup_.emplace(alias, idx);
    if (!inserted && it->second != idx) {
        throw ConfigError("parameter alias " + alias + " already names another parameter");
    }
}

bool ParamSet::contains(std::string_view name) const { return lookup_.contains(std::string(name)); }

std::size_t ParamSet::index(std::string_view name) const {
    auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) {
        throw ConfigError("unknown parameter " + std::string(name));
    }
    return it->second;
}

Vec DaeSystem::evaluate(const Vec& x, const Vec& p, double t) const {
    Vec f(size());
    residual(t, x, p, f);
    return f;
}

Index DaeSystem::state_index(std::string_view name) const {
    auto it = std::find(state_names.begin(), state_names.end(), name);
    if (it == state_names.end()) {
        throw ConfigError("unknown state " + std::string(name));
    }
    return std::distance(state_names.begin(), it);
}

std::vector<Index> DaeSystem::dynamic_indices() const {
    std::vector<Index> out;
    for (Index i = 0; i < mass.size(); ++i) {
        if (mass[i] > 0.0) out.push_back(i);
    }
    return out;
}

std::vector<Index> DaeSystem::algebraic_indices() const {
    std::vector<Index> out;
    for (Index i = 0; i < mass.size(); ++i) {
        if (mass[i] == 0.0) out.push_back(i);
    }
    return out;
}

namespace {

std::string state_label(const DaeSystem& sys, Index i) {
    if (i >= 0 && static_cast<std::size_t>(i) < sys.state_names.size()) {
        return sys.state_names[static_cast<std::size_t>(i)];
    }
    return "#" + std::to_string(i);
}

bool all_finite(const Vec& v) { return v.allFinite(); }

// Evaluation that maps library errors raised by device models (for example a
// degenerate voltage during a trial step) to a non-finite result.
bool try_evaluate(const DaeSystem& sys, const Vec& x, const Vec& p, Vec& f, double t = 0.0) {
    try {
        sys.residual(t, x, p, f);
    } catch (const Error&) {
        return false;
    }
    return all_finite(f);
}

double rcond_estimate(const Eigen::PartialPivLU<Mat>& lu) { return lu.rcond(); }

}  // namespace

Mat jacobian_fd(const DaeSystem& sys, const Vec& x, const Vec& p, double t) {
    const Index n = sys.size();
    Mat jac(n, n);
    Vec xp = x;
    Vec fp(n), fm(n);
    for (Index j = 0; j < n; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
        xp[j] = x[j] + h;
        sys.residual(t, xp, p, fp);
        xp[j] = x[j] - h;
        sys.residual(t, xp, p, fm);
        xp[j] = x[j];
        jac.col(j) = (fp - fm) / (2.0 * h);
        for (Index i = 0; i < n; ++i) {
            if (!std::isfinite(jac(i, j))) {
                throw NumericalError("non-finite Jacobian entry: equation " + state_label(sys, i) +
                                     " w.r.t. state " + state_label(sys, j));
            }
        }
    }
    return jac;
}

Vec parameter_derivative_fd(const DaeSystem& sys, const Vec& x, const Vec& p, std::size_t k) {
    const auto kk = static_cast<Index>(k);
    const double h = 1e-6 * std::max(1.0, std::abs(p[kk]));
    Vec pp = p;
    pp[kk] = p[kk] + h;
    const Vec fp = sys.evaluate(x, pp);
    pp[kk] = p[kk] - h;
    const Vec fm = sys.evaluate(x, pp);
    Vec d = (fp - fm) / (2.0 * h);
    if (!all_finite(d)) {
        throw NumericalError("non-finite parameter derivative for " + sys.params.names()[k]);
    }
    return d;
}

EquilibriumSolution newton_equilibrium(const DaeSystem& sys, const Vec& x0, const Vec& p,
                                       const NewtonOptions& opt) {
    if (!all_finite(x0)) {
        throw NumericalError("newton: initial guess is not finite");
    }
    EquilibriumSolution sol;
    sol.p = p;
    Vec x = x0;
    Vec f(sys.size());
    if (!try_evaluate(sys, x, p, f)) {
        throw NumericalError("newton: residual is not finite at the initial guess");
    }
    Vec f_try(sys.size());
    for (int it = 0;; ++it) {
        const double norm_inf = f.lpNorm<Eigen::Infinity>();
        if (norm_inf <= opt.tol) {
            sol.x = x;
            sol.residual_norm = norm_inf;
            sol.iterations = it;
            return sol;
        }
        if (it == opt.max_iter) {
            Index worst = 0;
            f.cwiseAbs().maxCoeff(&worst);
            throw ConvergenceError("newton: no convergence after " + std::to_string(it) +
                                       " iterations, residual " + std::to_string(norm_inf) +
                                       ", worst equation " + state_label(sys, worst),
                                   norm_inf, worst, state_label(sys, worst));
        }
        const Mat jac = jacobian_fd(sys, x, p);
        Eigen::PartialPivLU<Mat> lu(jac);
        const double rc = rcond_estimate(lu);
        if (!(rc > 1e-15)) {
            throw SingularityError("newton: singular Jacobian (rcond " + std::to_string(rc) + ")",
                                   rc > 0.0 ? 1.0 / rc : INFINITY);
        }
        const Vec dx = lu.solve(-f);
        const double norm2 = f.norm();
        double alpha = 1.0;
        bool accepted = false;
        while (alpha >= opt.min_damping) {
            const Vec x_try = x + alpha * dx;
            if (try_evaluate(sys, x_try, p, f_try) && f_try.norm() < norm2) {
                x = x_try;
                f = f_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            Index worst = 0;
            f.cwiseAbs().maxCoeff(&worst);
            throw ConvergenceError("newton: line search failed at iteration " + std::to_string(it + 1) +
                                       ", residual " + std::to_string(norm_inf) + ", worst equation " +
                                       state_label(sys, worst),
                                   norm_inf, worst, state_label(sys, worst));
        }
    }
}

ReducedMatrix reduced_state_matrix(const Mat& jac, const Vec& mass) {
    std::vector<Index> dyn, alg;
    for (Index i = 0; i < mass.size(); ++i) {
        (mass[i] > 0.0 ? dyn : alg).push_back(i);
    }
    const auto nd = static_cast<Index>(dyn.size());
    const auto na = static_cast<Index>(alg.size());
    ReducedMatrix out;
    Mat fx = jac(dyn, dyn);
    if (na > 0) {
        const Mat gy = jac(alg, alg);
        Eigen::JacobiSVD<Mat> svd(gy);
        const auto& sv = svd.singularValues();
        const double smin = sv[na - 1];
        out.algebraic_condition = smin > 0.0 ? sv[0] / smin : INFINITY;
        if (!(out.algebraic_condition <= kAlgebraicConditionLimit)) {
            throw SingularityError("singular algebraic block (condition " +
                                       std::to_string(out.algebraic_condition) + ")",
                                   out.algebraic_condition);
        }
        const Mat fy = jac(dyn, alg);
        const Mat gx = jac(alg, dyn);
        fx -= fy * Eigen::PartialPivLU<Mat>(gy).solve(gx);
    }
    for (Index r = 0; r < nd; ++r) {
        fx.row(r) /= mass[dyn[static_cast<std::size_t>(r)]];
    }
    out.a = std::move(fx);
    return out;
}

ReducedMatrix reduced_state_matrix(const DaeSystem& sys, const Vec& x, const Vec& p) {
    return reduced_state_matrix(jacobian_fd(sys, x, p), sys.mass);
}

int SpectrumReport::unstable_real() const {
    int n = 0;
    for (const auto& z : eigenvalues) {
        if (std::abs(z.imag()) <= kOscillationFloor && z.real() > 0.0) ++n;
    }
    return n;
}

int SpectrumReport::unstable_complex() const {
    int n = 0;
    for (const auto& z : eigenvalues) {
        if (std::abs(z.imag()) > kOscillationFloor && z.real() > 0.0) ++n;
    }
    return n;
}

SpectrumReport eigenvalues(const Mat& m) {
    SpectrumReport rep;
    if (m.rows() != m.cols()) {
        throw NumericalError("eigenvalues: matrix is not square");
    }
    if (!m.allFinite()) {
        throw NumericalError("eigenvalues: matrix has non-finite entries");
    }
    if (m.rows() == 0) {
        return rep;
    }
    Eigen::EigenSolver<Mat> es(m, false);
    if (es.info() != Eigen::Success) {
        throw NumericalError("eigenvalues: QR iteration did not converge");
    }
    CVec ev = es.eigenvalues();
    std::vector<Complex> v(ev.data(), ev.data() + ev.size());
    std::sort(v.begin(), v.end(), [](const Complex& a, const Complex& b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    rep.eigenvalues = Eigen::Map<CVec>(v.data(), static_cast<Index>(v.size()));
    rep.rightmost_real = v.front().real();
    for (const auto& z : v) {
        if (std::abs(z.imag()) > kOscillationFloor) {
            rep.has_oscillatory = true;
            rep.dominant_damping = -z.real() / std::abs(z);
            rep.dominant_frequency_hz = std::abs(z.imag()) / (2.0 * std::numbers::pi);
            break;
        }
    }
    return rep;
}

Vec Trajectory::column(std::string_view name) const {
    auto it = std::find(state_names.begin(), state_names.end(), name);
    if (it == state_names.end()) {
        throw ConfigError("trajectory has no state " + std::string(name));
    }
    return states.col(std::distance(state_names.begin(), it));
}

Trajectory integrate(const DaeSystem& sys, const Vec& x0, const Vec& p, double t_end, double h,
                     const IntegrateOptions& opt, double t0) {
    if (!(h > 0.0) || !(t_end > 0.0)) {
        throw ConfigError("integrate: step and horizon must be positive");
    }
    const Index n = sys.size();
    const auto steps = std::max<long long>(1, std::llround(t_end / h));
    const double step = t_end / static_cast<double>(steps);

    Trajectory traj;
    traj.state_names = sys.state_names;
    traj.times.resize(steps + 1);
    traj.states.resize(steps + 1, n);
    traj.times[0] = t0;
    traj.states.row(0) = x0.transpose();

    Vec dyn_mask = (sys.mass.array() > 0.0).cast<double>();
    Vec x = x0;
    Vec f_old(n);
    sys.residual(t0, x, p, f_old);

    auto stage_residual = [&](double t_new, const Vec& x_new, const Vec& x_prev, const Vec& f_prev, Vec& g) {
        Vec f_new(n);
        sys.residual(t_new, x_new, p, f_new);
        for (Index i = 0; i < n; ++i) {
            if (dyn_mask[i] > 0.0) {
                g[i] = sys.mass[i] * (x_new[i] - x_prev[i]) - 0.5 * step * (f_new[i] + f_prev[i]);
            } else {
                g[i] = f_new[i];
            }
        }
        return f_new;
    };
    auto iteration_matrix = [&](double t_new, const Vec& x_new) {
        Mat jac = jacobian_fd(sys, x_new, p, t_new);
        for (Index i = 0; i < n; ++i) {
            if (dyn_mask[i] > 0.0) {
                jac.row(i) *= -0.5 * step;
                jac(i, i) += sys.mass[i];
            }
        }
        return Eigen::PartialPivLU<Mat>(jac);
    };

    Eigen::PartialPivLU<Mat> lu = iteration_matrix(t0 + step, x);
    Vec g(n);
    for (long long k = 1; k <= steps; ++k) {
        const double t_new = t0 + static_cast<double>(k) * step;
        bool converged = false;
        Vec x_new = x;
        Vec f_new(n);
        for (int attempt = 0; attempt < 2 && !converged; ++attempt) {
            if (attempt == 1) {
                x_new = x;
                lu = iteration_matrix(t_new, x_new);
            }
            for (int it = 0; it < opt.max_newton; ++it) {
                f_new = stage_residual(t_new, x_new, x, f_old, g);
                if (!g.allFinite()) break;
                if (g.lpNorm<Eigen::Infinity>() <= opt.newton_tol) {
                    converged = true;
                    break;
                }
                const Vec dx = lu.solve(-g);
                x_new += dx;
                if (dx.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + x_new.lpNorm<Eigen::Infinity>())) {
                    f_new = stage_residual(t_new, x_new, x, f_old, g);
                    converged = g.allFinite();
                    break;
                }
            }
        }
        if (!converged) {
            throw ConvergenceError("integrate: Newton failed at t = " + std::to_string(t_new) +
                                       "; try a smaller step",
                                   g.lpNorm<Eigen::Infinity>(), -1, "");
        }
        x = x_new;
        f_old = f_new;
        traj.times[k] = t_new;
        traj.states.row(k) = x.transpose();
    }
    return traj;
}

}  // namespace adnlab
