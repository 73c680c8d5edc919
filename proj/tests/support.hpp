#pragma once

#include "nanoflow/analysis.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <vector>

namespace nanoflow::support {

inline std::shared_ptr<const Mesh> unit_square(int n) {
    return std::make_shared<const Mesh>(build_rectangle(1.0, 1.0, n, n));
}

/// Random state with phi and T in (0,1) and flow unknowns in (-1,1).
inline Eigen::VectorXd random_state(const Layout& L, std::mt19937& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    Eigen::VectorXd x(L.size);
    for (int i = 0; i < L.size; ++i) x[i] = sym(rng);
    for (int i = 0; i < L.n_scalar; ++i) {
        x[L.phi + i] = unit(rng);
        x[L.T + i] = unit(rng);
    }
    return x;
}

inline Eigen::VectorXd random_direction(int n, std::mt19937& rng) {
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = sym(rng);
    return v;
}

/// Nodal interpolant of the manufactured fields; multipliers zero.
inline Eigen::VectorXd mms_interpolant(const Discretization& d, const MMSCase& mms) {
    FieldState s;
    s.phi = interpolate(d.scalar, [&](const Vec2& x) { return mms.phi(x).v; });
    s.T = interpolate(d.scalar, [&](const Vec2& x) { return mms.T(x).v; });
    s.u = interpolate_vector(d.flow.velocity, [&](const Vec2& x) { return Vec2(mms.ux(x).v, mms.uy(x).v); });
    s.p = interpolate(d.flow.pressure, [&](const Vec2& x) { return mms.p(x).v; });
    return s.pack(d.layout);
}

struct FdCheck {
    std::vector<double> eps;
    std::vector<double> rel_error;  // |central FD - J v| / |J v|
    double best = 0.0;
    double min_order = 0.0;  // smallest log-log slope between consecutive eps
};

inline FdCheck central_fd_check(const Assembler& as, const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                                const std::vector<double>& eps) {
    const SparseSystem sys = as.assemble_jacobian(x);
    const Eigen::VectorXd jv = sys.matrix * v;
    FdCheck out;
    out.eps = eps;
    for (double e : eps) {
        const Eigen::VectorXd fd = (as.assemble_residual(x + e * v) - as.assemble_residual(x - e * v)) / (2.0 * e);
        out.rel_error.push_back((fd - jv).norm() / jv.norm());
    }
    out.best = out.rel_error.front();
    out.min_order = INFINITY;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        out.best = std::min(out.best, out.rel_error[i]);
        if (i > 0) {
            const double order = std::log(out.rel_error[i - 1] / out.rel_error[i]) / std::log(eps[i - 1] / eps[i]);
            out.min_order = std::min(out.min_order, order);
        }
    }
    return out;
}

}  // namespace nanoflow::support
