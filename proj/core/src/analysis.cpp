#include "nanoflow/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace nanoflow {

namespace {

void check_exponent(int p) {
    if (p != 2 && p != 6) throw std::invalid_argument("norm exponent must be 2 or 6");
}

double ipow(double v, int p) { return p == 2 ? v * v : v * v * v * v * v * v; }

}  // namespace

ErrorNorms error_norms(const Space& space, std::span<const double> coeffs, const ReferenceField& reference, int p,
                       int quadrature_order) {
    check_exponent(p);
    if (static_cast<int>(coeffs.size()) != space.dof_count()) {
        throw std::invalid_argument("error_norms: coefficient count does not match the space");
    }
    const Mesh& mesh = space.mesh();
    const auto& quad = element_quadrature(quadrature_order);
    const int nb = space.dofs_per_cell();
    const int ncomp = space.components();
    const int stride = space.scalar_dof_count();

    std::vector<BasisEval> basis;
    for (const auto& pt : quad.points) basis.push_back(eval_basis(space.degree(), pt));

    double sum_v = 0.0, sum_g = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const ElementGeometry geo(mesh, t);
        const auto dofs = space.cell_dofs(t);
        for (int q = 0; q < quad.size(); ++q) {
            const auto& B = basis[static_cast<std::size_t>(q)];
            FieldSample e;
            for (int c = 0; c < ncomp; ++c) {
                for (int i = 0; i < nb; ++i) {
                    const auto k = static_cast<std::size_t>(i);
                    const double ci = coeffs[static_cast<std::size_t>(c * stride + dofs[k])];
                    e.value[c] += ci * B.values[k];
                    e.grad.row(c) += ci * geo.physical_grad(B.bary_grads[k]).transpose();
                }
            }
            if (reference) {
                const FieldSample r = reference(geo.map(quad.points[static_cast<std::size_t>(q)]));
                e.value -= r.value;
                e.grad -= r.grad;
            }
            if (ncomp == 1) {
                e.value.y() = 0.0;
                e.grad.row(1).setZero();
            }
            const double w = 2.0 * geo.area * quad.weights[static_cast<std::size_t>(q)];
            sum_v += w * ipow(e.value.norm(), p);
            sum_g += w * ipow(e.grad.norm(), p);
        }
    }
    const double inv = 1.0 / p;
    return {std::pow(sum_v, inv), std::pow(sum_v + sum_g, inv)};
}

double norm_Lp(const Space& space, std::span<const double> coeffs, int p) {
    return error_norms(space, coeffs, nullptr, p).Lp;
}

double norm_W1p(const Space& space, std::span<const double> coeffs, int p) {
    return error_norms(space, coeffs, nullptr, p).W1p;
}

FieldProbe::FieldProbe(const Space& space, Eigen::VectorXd coeffs)
    : space_(&space), coeffs_(std::move(coeffs)), locator_(std::make_shared<PointLocator>(space.mesh())) {
    if (coeffs_.size() != space.dof_count()) throw std::invalid_argument("FieldProbe: coefficient count mismatch");
}

FieldSample FieldProbe::operator()(const Vec2& x) const {
    const auto hit = locator_->locate(x);
    if (!hit) throw std::out_of_range("FieldProbe: point outside the mesh");
    const FeFunction f(*space_, std::span<const double>(coeffs_.data(), static_cast<std::size_t>(coeffs_.size())));
    FieldSample s;
    for (int c = 0; c < space_->components(); ++c) {
        s.value[c] = f.value(hit->triangle, hit->bary, c);
        s.grad.row(c) = f.gradient(hit->triangle, hit->bary, c).transpose();
    }
    return s;
}

ReferenceField FieldProbe::as_reference() const {
    return [probe = *this](const Vec2& x) { return probe(x); };
}

Eigen::VectorXd transfer_state(const Discretization& from, const Eigen::VectorXd& x, const Discretization& to) {
    const Layout& A = from.layout;
    const Layout& B = to.layout;
    if (x.size() != A.size) throw std::invalid_argument("transfer_state: state size mismatch");
    if ((A.lambda_phi >= 0) != (B.lambda_phi >= 0)) {
        throw std::invalid_argument("transfer_state: constraint layouts differ");
    }
    Eigen::VectorXd y = Eigen::VectorXd::Zero(B.size);
    const PointLocator locator(*from.mesh);

    auto transfer = [&](const Space& src, int src_off, const Space& dst, int dst_off) {
        const FeFunction f(src, std::span<const double>(x.data() + src_off, static_cast<std::size_t>(src.dof_count())));
        const int n_dst = dst.scalar_dof_count();
        for (int d = 0; d < n_dst; ++d) {
            const auto hit = locator.locate(dst.dof_coord(d));
            if (!hit) throw std::out_of_range("transfer_state: target node outside the source mesh");
            for (int c = 0; c < src.components(); ++c) {
                y[dst_off + c * n_dst + d] = f.value(hit->triangle, hit->bary, c);
            }
        }
    };
    transfer(from.scalar, A.phi, to.scalar, B.phi);
    transfer(from.scalar, A.T, to.scalar, B.T);
    transfer(from.flow.velocity, A.u, to.flow.velocity, B.u);
    transfer(from.flow.pressure, A.p, to.flow.pressure, B.p);
    y[B.lambda_p] = x[A.lambda_p];
    if (B.lambda_phi >= 0) y[B.lambda_phi] = x[A.lambda_phi];
    return y;
}

namespace {

using std::numbers::pi;

MMSCase trig_mms() {
    MMSCase m;
    m.flavor = MmsFlavor::trigonometric;
    m.phi = [](const Vec2& x) {
        const double sx = std::sin(pi * x.x()), cx = std::cos(pi * x.x());
        const double sy = std::sin(pi * x.y()), cy = std::cos(pi * x.y());
        Jet j;
        j.v = 0.5 + 0.25 * sx * cy;
        j.g = 0.25 * pi * Vec2(cx * cy, -sx * sy);
        j.H << -sx * cy, -cx * sy, -cx * sy, -sx * cy;
        j.H *= 0.25 * pi * pi;
        return j;
    };
    m.T = [](const Vec2& x) {
        const double sx = std::sin(pi * x.x()), cx = std::cos(pi * x.x());
        const double sy = std::sin(pi * x.y()), cy = std::cos(pi * x.y());
        Jet j;
        j.v = sx * sy + 0.5 * x.x();
        j.g = Vec2(pi * cx * sy + 0.5, pi * sx * cy);
        j.H << -sx * sy, cx * cy, cx * cy, -sx * sy;
        j.H *= pi * pi;
        return j;
    };
    // stream function sin^2(pi x) sin^2(pi y) / pi
    m.ux = [](const Vec2& x) {
        const double sx = std::sin(pi * x.x());
        const double s2x = std::sin(2 * pi * x.x()), c2x = std::cos(2 * pi * x.x());
        const double s2y = std::sin(2 * pi * x.y()), c2y = std::cos(2 * pi * x.y());
        Jet j;
        j.v = sx * sx * s2y;
        j.g = Vec2(pi * s2x * s2y, 2 * pi * sx * sx * c2y);
        j.H << 2 * pi * pi * c2x * s2y, 2 * pi * pi * s2x * c2y, 2 * pi * pi * s2x * c2y,
            -4 * pi * pi * sx * sx * s2y;
        return j;
    };
    m.uy = [](const Vec2& x) {
        const double sy = std::sin(pi * x.y());
        const double s2x = std::sin(2 * pi * x.x()), c2x = std::cos(2 * pi * x.x());
        const double s2y = std::sin(2 * pi * x.y()), c2y = std::cos(2 * pi * x.y());
        Jet j;
        j.v = -s2x * sy * sy;
        j.g = Vec2(-2 * pi * c2x * sy * sy, -pi * s2x * s2y);
        j.H << 4 * pi * pi * s2x * sy * sy, -2 * pi * pi * c2x * s2y, -2 * pi * pi * c2x * s2y,
            -2 * pi * pi * s2x * c2y;
        return j;
    };
    m.p = [](const Vec2& x) {
        const double sx = std::sin(pi * x.x()), cx = std::cos(pi * x.x());
        const double sy = std::sin(pi * x.y()), cy = std::cos(pi * x.y());
        Jet j;
        j.v = cx * cy;
        j.g = -pi * Vec2(sx * cy, cx * sy);
        j.H << -cx * cy, sx * sy, sx * sy, -cx * cy;
        j.H *= pi * pi;
        return j;
    };
    return m;
}

MMSCase poly_mms() {
    MMSCase m;
    m.flavor = MmsFlavor::polynomial;
    m.phi = [](const Vec2& x) {
        Jet j;
        j.v = 0.2 + 0.3 * x.x() * x.y() + 0.2 * x.y() * x.y();
        j.g = Vec2(0.3 * x.y(), 0.3 * x.x() + 0.4 * x.y());
        j.H << 0.0, 0.3, 0.3, 0.4;
        return j;
    };
    m.T = [](const Vec2& x) {
        Jet j;
        j.v = x.x() * (1.0 - x.x()) + 0.5 * x.y();
        j.g = Vec2(1.0 - 2.0 * x.x(), 0.5);
        j.H << -2.0, 0.0, 0.0, 0.0;
        return j;
    };
    // stream function x^2 y
    m.ux = [](const Vec2& x) {
        Jet j;
        j.v = x.x() * x.x();
        j.g = Vec2(2.0 * x.x(), 0.0);
        j.H << 2.0, 0.0, 0.0, 0.0;
        return j;
    };
    m.uy = [](const Vec2& x) {
        Jet j;
        j.v = -2.0 * x.x() * x.y();
        j.g = Vec2(-2.0 * x.y(), -2.0 * x.x());
        j.H << 0.0, -2.0, -2.0, 0.0;
        return j;
    };
    m.p = [](const Vec2& x) {
        Jet j;
        j.v = x.x() - 0.5;
        j.g = Vec2(1.0, 0.0);
        return j;
    };
    return m;
}

ReferenceField scalar_field(JetFn f) {
    return [f = std::move(f)](const Vec2& x) {
        const Jet j = f(x);
        FieldSample s;
        s.value.x() = j.v;
        s.grad.row(0) = j.g.transpose();
        return s;
    };
}

}  // namespace

MMSCase make_mms(MmsFlavor flavor) {
    return flavor == MmsFlavor::trigonometric ? trig_mms() : poly_mms();
}

ReferenceField MMSCase::phi_field() const { return scalar_field(phi); }
ReferenceField MMSCase::T_field() const { return scalar_field(T); }
ReferenceField MMSCase::p_field() const { return scalar_field(p); }
ReferenceField MMSCase::u_field() const {
    return [ux = ux, uy = uy](const Vec2& x) {
        const Jet a = ux(x), b = uy(x);
        FieldSample s;
        s.value = Vec2(a.v, b.v);
        s.grad.row(0) = a.g.transpose();
        s.grad.row(1) = b.g.transpose();
        return s;
    };
}

CaseSetup MMSCase::case_setup(const ModelParams& params, const CoefficientLaws& laws) const {
    if (params.cutoff_radius) throw std::invalid_argument("MMSCase: sources assume no cut-off");
    const std::vector<BoundaryTag> all(kAllBoundaryTags.begin(), kAllBoundaryTags.end());
    CaseSetup c;
    c.kind = CaseKind::mms;
    c.phi_dirichlet.push_back({all, [f = phi](const Vec2& x) { return f(x).v; }});
    c.T_dirichlet.push_back({all, [f = T](const Vec2& x) { return f(x).v; }});
    c.velocity_dirichlet_tags = all;
    c.velocity_value = [ux = ux, uy = uy](const Vec2& x) { return Vec2(ux(x).v, uy(x).v); };
    c.mean_phi_constraint = false;

    const Prefactors A = params.prefactors();
    const double cth = A.thermophoresis;
    c.phi_source = [=, f = phi, t = T, ux = ux, uy = uy](const Vec2& x) {
        const Jet P = f(x), Tj = t(x);
        const Vec2 u(ux(x).v, uy(x).v);
        const double h = laws.h(P.v), hp = laws.h.derivative(P.v);
        const double div_flux = P.H.trace() + cth * (hp * P.g.dot(Tj.g) + h * Tj.H.trace());
        return -A.phi_diffusion * div_flux + u.dot(P.g);
    };
    c.heat_source = [=, f = phi, t = T, ux = ux, uy = uy](const Vec2& x) {
        const Jet P = f(x), Tj = t(x);
        const Vec2 u(ux(x).v, uy(x).v);
        const double k = laws.k(P.v), kp = laws.k.derivative(P.v);
        const Vec2 j = -(P.g + cth * laws.h(P.v) * Tj.g);
        const Vec2 conv = A.heat_flux * j + laws.eta(P.v) * u;
        return -A.heat_diffusion * (kp * P.g.dot(Tj.g) + k * Tj.H.trace()) + conv.dot(Tj.g);
    };
    const Vec2 eg = params.e_g;
    c.momentum_source = [=, f = phi, t = T, ux = ux, uy = uy, pf = p](const Vec2& x) {
        const Jet P = f(x), Tj = t(x), U[2] = {ux(x), uy(x)}, Pr = pf(x);
        const Vec2 u(U[0].v, U[1].v);
        Mat2 G;
        G.row(0) = U[0].g.transpose();
        G.row(1) = U[1].g.transpose();
        const Mat2 D = G + G.transpose();
        const double mu = laws.mu(P.v), mup = laws.mu.derivative(P.v);
        const Vec2 j = -(P.g + cth * laws.h(P.v) * Tj.g);
        const Vec2 conv = A.momentum_flux * j + laws.rho(P.v) * u;
        // grad(div u), zero for the stream-function fields but kept exact
        const Vec2 grad_div(U[0].H(0, 0) + U[1].H(1, 0), U[0].H(0, 1) + U[1].H(1, 1));
        Vec2 g;
        for (int a = 0; a < 2; ++a) {
            const double div_stress = mup * D.row(a).dot(P.g) + mu * (U[a].H.trace() + grad_div[a]);
            g[a] = -A.viscosity * div_stress + conv.dot(U[a].g) + Pr.g[a] + A.buoyancy * Tj.v * eg[a];
        }
        return g;
    };
    return c;
}

double eoc(double e_coarse, double e_fine) { return std::log(e_coarse / e_fine) / std::log(2.0); }

void fill_eoc(std::vector<ErrorRecord>& records) {
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (const auto& [key, e] : records[i].errors) {
            if (i == 0) {
                records[i].eoc[key] = std::nullopt;
            } else {
                records[i].eoc[key] = eoc(records[i - 1].errors.at(key), e);
            }
        }
    }
}

ErrorRecord measure_errors(const Discretization& disc, const Eigen::VectorXd& x, const ReferenceField& phi,
                           const ReferenceField& T, const ReferenceField& u, const ReferenceField& p) {
    const Layout& L = disc.layout;
    auto view = [&](int off, int n) { return std::span<const double>(x.data() + off, static_cast<std::size_t>(n)); };
    ErrorRecord r;
    r.nt = disc.mesh->num_triangles();
    const auto ephi = error_norms(disc.scalar, view(L.phi, L.n_scalar), phi, 6);
    const auto eT = error_norms(disc.scalar, view(L.T, L.n_scalar), T, 6);
    const auto eu = error_norms(disc.flow.velocity, view(L.u, L.n_velocity), u, 2);
    const auto ep = error_norms(disc.flow.pressure, view(L.p, L.n_pressure), p, 2);
    r.errors["phi_L6"] = ephi.Lp;
    r.errors["phi_W16"] = ephi.W1p;
    r.errors["T_L6"] = eT.Lp;
    r.errors["T_W16"] = eT.W1p;
    r.errors["u_L2"] = eu.Lp;
    r.errors["u_H1"] = eu.W1p;
    r.errors["p_L2"] = ep.Lp;
    return r;
}

StudyResult eoc_study(const StudyConfig& cfg) {
    if (cfg.levels < 2) throw std::invalid_argument("levels ≥ 2 required");
    if (!cfg.coarse) throw std::invalid_argument("eoc_study: missing coarse mesh");
    if (cfg.reference == ReferenceKind::exact && !cfg.exact) {
        throw std::invalid_argument("eoc_study: exact reference requires exact fields");
    }
    if (cfg.reference == ReferenceKind::fine_grid && cfg.reference_extra_levels < 1) {
        throw std::invalid_argument("eoc_study: the reference mesh must be finer than the finest study mesh");
    }

    StudyResult out;
    std::vector<std::shared_ptr<const Discretization>> discs;
    std::vector<Eigen::VectorXd> states;
    std::shared_ptr<const Mesh> mesh = cfg.coarse;

    auto solve_on = [&](const std::shared_ptr<const Mesh>& m, const Discretization* prev,
                        const Eigen::VectorXd* prev_x) {
        auto disc = std::make_shared<const Discretization>(m, cfg.scalar_degree, cfg.setup.mean_phi_constraint);
        Assembler as(disc, cfg.params, cfg.laws, cfg.setup, cfg.assembly);
        SolveResult r;
        if (prev) {
            r = newton_solve(as, as.apply_dirichlet(transfer_state(*prev, *prev_x, *disc)), cfg.newton);
            if (!r.report.converged) r = solve_coupled(as, as.initial_state(), cfg.newton);
        } else {
            r = solve_coupled(as, as.initial_state(), cfg.newton);
        }
        if (r.report.converged && cfg.on_solve) cfg.on_solve(as, r.state);
        return std::make_pair(std::move(disc), std::move(r));
    };

    for (int level = 0; level < cfg.levels; ++level) {
        if (level > 0) mesh = std::make_shared<const Mesh>(refine_uniform(*mesh));
        if (cfg.log) *cfg.log << "level " << level << ": nt = " << mesh->num_triangles() << '\n';
        auto solved = solve_on(mesh, level ? discs.back().get() : nullptr, level ? &states.back() : nullptr);
        auto& [disc, r] = solved;
        out.reports.push_back(r.report);
        if (!r.report.converged) {
            out.message = "solve did not converge at nt = " + std::to_string(mesh->num_triangles()) + ": " +
                          r.report.message;
            break;
        }
        discs.push_back(disc);
        states.push_back(std::move(r.state));
        if (cfg.reference == ReferenceKind::exact) {
            const MMSCase& ex = *cfg.exact;
            out.records.push_back(
                measure_errors(*disc, states.back(), ex.phi_field(), ex.T_field(), ex.u_field(), ex.p_field()));
        }
    }

    if (cfg.reference == ReferenceKind::fine_grid && static_cast<int>(states.size()) == cfg.levels) {
        std::shared_ptr<const Mesh> ref_mesh = mesh;
        for (int k = 0; k < cfg.reference_extra_levels; ++k) {
            ref_mesh = std::make_shared<const Mesh>(refine_uniform(*ref_mesh));
        }
        if (cfg.log) *cfg.log << "reference: nt = " << ref_mesh->num_triangles() << '\n';
        auto solved = solve_on(ref_mesh, discs.back().get(), &states.back());
        auto& [rdisc, r] = solved;
        out.reference_report = r.report;
        if (!r.report.converged) {
            out.message = "reference solve did not converge: " + r.report.message;
        } else {
            const Layout& L = rdisc->layout;
            const Eigen::VectorXd& y = r.state;
            const FieldProbe phi(rdisc->scalar, y.segment(L.phi, L.n_scalar));
            const FieldProbe T(rdisc->scalar, y.segment(L.T, L.n_scalar));
            const FieldProbe u(rdisc->flow.velocity, y.segment(L.u, L.n_velocity));
            const FieldProbe p(rdisc->flow.pressure, y.segment(L.p, L.n_pressure));
            for (std::size_t i = 0; i < discs.size(); ++i) {
                out.records.push_back(measure_errors(*discs[i], states[i], phi.as_reference(), T.as_reference(),
                                                     u.as_reference(), p.as_reference()));
            }
        }
    }
    fill_eoc(out.records);
    out.complete = out.message.empty() && static_cast<int>(out.records.size()) == cfg.levels;
    return out;
}

void write_eoc_csv(std::ostream& os, const std::vector<ErrorRecord>& records) {
    os << "nt,phi_L6,phi_eoc,T_L6,T_eoc,u_L2,u_eoc\n";
    char buf[64];
    for (const auto& r : records) {
        os << r.nt;
        for (const char* key : {"phi_L6", "T_L6", "u_L2"}) {
            std::snprintf(buf, sizeof buf, "%.4e", r.errors.at(key));
            os << ',' << buf << ',';
            const auto it = r.eoc.find(key);
            if (it != r.eoc.end() && it->second) {
                std::snprintf(buf, sizeof buf, "%.2f", *it->second);
                os << buf;
            }
        }
        os << '\n';
    }
}

}  // namespace nanoflow
