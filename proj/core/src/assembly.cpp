#include "nanoflow/assembly.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace nanoflow {

std::string_view to_string(Block block) {
    switch (block) {
        case Block::phi: return "phi";
        case Block::T: return "T";
        case Block::u: return "u";
        case Block::p: return "p";
        case Block::lambda_p: return "lambda_p";
        case Block::lambda_phi: return "lambda_phi";
    }
    return "unknown";
}

Block Layout::block_of(int row) const {
    if (row < 0 || row >= size) throw std::out_of_range("Layout::block_of: row out of range");
    if (row < T) return Block::phi;
    if (row < u) return Block::T;
    if (row < p) return Block::u;
    if (row < lambda_p) return Block::p;
    if (row == lambda_p) return Block::lambda_p;
    return Block::lambda_phi;
}

Discretization::Discretization(std::shared_ptr<const Mesh> m, int scalar_degree, bool mean_phi_constraint)
    : mesh(std::move(m)),
      scalar(mesh, scalar_degree, 1),
      flow{Space(mesh, 2, 2), Space(mesh, 1, 1)} {
    layout.n_scalar = scalar.dof_count();
    layout.n_velocity = flow.velocity.dof_count();
    layout.n_pressure = flow.pressure.dof_count();
    layout.phi = 0;
    layout.T = layout.n_scalar;
    layout.u = 2 * layout.n_scalar;
    layout.p = layout.u + layout.n_velocity;
    layout.lambda_p = layout.p + layout.n_pressure;
    layout.size = layout.lambda_p + 1;
    if (mean_phi_constraint) layout.lambda_phi = layout.size++;
}

Eigen::VectorXd FieldState::pack(const Layout& L) const {
    if (phi.size() != L.n_scalar || T.size() != L.n_scalar || u.size() != L.n_velocity ||
        p.size() != L.n_pressure) {
        throw std::invalid_argument("FieldState::pack: sizes inconsistent with layout");
    }
    Eigen::VectorXd x(L.size);
    x.segment(L.phi, L.n_scalar) = phi;
    x.segment(L.T, L.n_scalar) = T;
    x.segment(L.u, L.n_velocity) = u;
    x.segment(L.p, L.n_pressure) = p;
    x[L.lambda_p] = lambda_p;
    if (L.lambda_phi >= 0) x[L.lambda_phi] = lambda_phi;
    return x;
}

FieldState FieldState::unpack(const Layout& L, const Eigen::VectorXd& x) {
    if (x.size() != L.size) throw std::invalid_argument("FieldState::unpack: size mismatch");
    FieldState s;
    s.phi = x.segment(L.phi, L.n_scalar);
    s.T = x.segment(L.T, L.n_scalar);
    s.u = x.segment(L.u, L.n_velocity);
    s.p = x.segment(L.p, L.n_pressure);
    s.lambda_p = x[L.lambda_p];
    s.lambda_phi = L.lambda_phi >= 0 ? x[L.lambda_phi] : 0.0;
    return s;
}

struct Assembler::Tables {
    int ns = 0;
    std::vector<double> weights;
    std::vector<Vec3> points;
    std::vector<std::array<double, 6>> s_val, v_val;
    std::vector<std::array<Vec3, 6>> s_bg, v_bg;
    std::vector<std::array<double, 3>> p_val;
};

Assembler::Assembler(std::shared_ptr<const Discretization> disc, ModelParams params, CoefficientLaws laws,
                     CaseSetup setup, AssemblyOptions options)
    : disc_(std::move(disc)),
      params_(std::move(params)),
      laws_(std::move(laws)),
      setup_(std::move(setup)),
      options_(options) {
    if (!disc_) throw std::invalid_argument("Assembler: null discretization");
    params_.validate();
    if (setup_.mean_phi_constraint != (disc_->layout.lambda_phi >= 0)) {
        throw std::invalid_argument("Assembler: mean-concentration constraint does not match the layout");
    }
    if (setup_.mean_phi_constraint && !setup_.phi_dirichlet.empty()) {
        throw std::invalid_argument("Assembler: mean constraint and Dirichlet phi are exclusive");
    }
    if (options_.threads < 1) options_.threads = 1;

    auto tables = std::make_shared<Tables>();
    const auto& quad = element_quadrature(options_.quadrature_order);
    const int sdeg = disc_->scalar.degree();
    tables->ns = basis_count(sdeg);
    tables->weights = quad.weights;
    tables->points = quad.points;
    for (const auto& pt : quad.points) {
        const auto bs = eval_basis(sdeg, pt);
        const auto bv = eval_basis(2, pt);
        const auto bp = eval_basis(1, pt);
        tables->s_val.push_back(bs.values);
        tables->s_bg.push_back(bs.bary_grads);
        tables->v_val.push_back(bv.values);
        tables->v_bg.push_back(bv.bary_grads);
        tables->p_val.push_back({bp.values[0], bp.values[1], bp.values[2]});
    }
    tables_ = tables;

    const Mesh& mesh = *disc_->mesh;
    pressure_mass_ = Eigen::VectorXd::Zero(disc_->layout.n_pressure);
    scalar_mass_ = Eigen::VectorXd::Zero(disc_->layout.n_scalar);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const double a = mesh.area(t);
        area_ += a;
        const auto sd = disc_->scalar.cell_dofs(t);
        const auto pd = disc_->flow.pressure.cell_dofs(t);
        for (int q = 0; q < quad.size(); ++q) {
            const double w = 2.0 * a * tables_->weights[static_cast<std::size_t>(q)];
            for (int i = 0; i < tables_->ns; ++i) {
                scalar_mass_[sd[static_cast<std::size_t>(i)]] += w * tables_->s_val[static_cast<std::size_t>(q)][static_cast<std::size_t>(i)];
            }
            for (int i = 0; i < 3; ++i) {
                pressure_mass_[pd[static_cast<std::size_t>(i)]] += w * tables_->p_val[static_cast<std::size_t>(q)][static_cast<std::size_t>(i)];
            }
        }
    }
    build_constraints();
    build_pattern();
}

void Assembler::set_params(const ModelParams& params) {
    params.validate();
    params_ = params;
}

void Assembler::build_constraints() {
    const Layout& L = disc_->layout;
    const Space& S = disc_->scalar;
    const Space& V = disc_->flow.velocity;
    std::map<int, double> fixed;

    auto add_scalar = [&](const std::vector<ScalarDirichlet>& specs, int offset) {
        for (const auto& spec : specs) {
            for (int d : S.boundary_dofs(spec.tags)) {
                fixed.emplace(offset + d, spec.value ? spec.value(S.dof_coord(d)) : 0.0);
            }
        }
    };
    add_scalar(setup_.phi_dirichlet, L.phi);
    add_scalar(setup_.T_dirichlet, L.T);

    const int nv = V.scalar_dof_count();
    for (int d : V.boundary_dofs(setup_.velocity_dirichlet_tags)) {
        const Vec2 val = setup_.velocity_value ? setup_.velocity_value(V.dof_coord(d)) : Vec2::Zero();
        fixed.emplace(L.u + d, val.x());
        fixed.emplace(L.u + nv + d, val.y());
    }
    for (auto tag : setup_.slip_tags) {
        const int normal = (tag == BoundaryTag::top || tag == BoundaryTag::bottom) ? 1 : 0;
        const std::array<BoundaryTag, 1> one{tag};
        for (int d : V.boundary_dofs(one)) fixed.emplace(L.u + normal * nv + d, 0.0);
    }

    dirichlet_dofs_.clear();
    dirichlet_values_.clear();
    for (const auto& [dof, val] : fixed) {
        dirichlet_dofs_.push_back(dof);
        dirichlet_values_.push_back(val);
    }
}

namespace {

int local_size(int ns) { return 2 * ns + 15; }

template <class Fn>
void for_each_cell_indices(const Discretization& d, int t, Fn&& fn) {
    const Layout& L = d.layout;
    const int ns = d.scalar.dofs_per_cell();
    const auto sd = d.scalar.cell_dofs(t);
    const auto vd = d.flow.velocity.cell_dofs(t);
    const auto pd = d.flow.pressure.cell_dofs(t);
    const int nv = d.flow.velocity.scalar_dof_count();
    std::array<int, 27> g{};
    int k = 0;
    for (int i = 0; i < ns; ++i) g[static_cast<std::size_t>(k++)] = L.phi + sd[static_cast<std::size_t>(i)];
    for (int i = 0; i < ns; ++i) g[static_cast<std::size_t>(k++)] = L.T + sd[static_cast<std::size_t>(i)];
    for (int i = 0; i < 6; ++i) g[static_cast<std::size_t>(k++)] = L.u + vd[static_cast<std::size_t>(i)];
    for (int i = 0; i < 6; ++i) g[static_cast<std::size_t>(k++)] = L.u + nv + vd[static_cast<std::size_t>(i)];
    for (int i = 0; i < 3; ++i) g[static_cast<std::size_t>(k++)] = L.p + pd[static_cast<std::size_t>(i)];
    fn(std::span<const int>(g.data(), static_cast<std::size_t>(k)));
}

double& entry(Eigen::SparseMatrix<double>& m, int row, int col) {
    const int* inner = m.innerIndexPtr();
    const int* outer = m.outerIndexPtr();
    const int* b = inner + outer[col];
    const int* e = inner + outer[col + 1];
    const int* it = std::lower_bound(b, e, row);
    if (it == e || *it != row) throw std::logic_error("sparsity pattern is missing an entry");
    return m.valuePtr()[it - inner];
}

}  // namespace

void Assembler::build_pattern() {
    const Layout& L = disc_->layout;
    const Mesh& mesh = *disc_->mesh;
    std::vector<std::vector<int>> cols(static_cast<std::size_t>(L.size));
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        for_each_cell_indices(*disc_, t, [&](std::span<const int> g) {
            for (int c : g) {
                auto& col = cols[static_cast<std::size_t>(c)];
                col.insert(col.end(), g.begin(), g.end());
            }
        });
    }
    for (int r = 0; r < L.size; ++r) cols[static_cast<std::size_t>(r)].push_back(r);
    for (int i = 0; i < L.n_pressure; ++i) {
        cols[static_cast<std::size_t>(L.lambda_p)].push_back(L.p + i);
        cols[static_cast<std::size_t>(L.p + i)].push_back(L.lambda_p);
    }
    if (L.lambda_phi >= 0) {
        for (int i = 0; i < L.n_scalar; ++i) {
            cols[static_cast<std::size_t>(L.lambda_phi)].push_back(L.phi + i);
            cols[static_cast<std::size_t>(L.phi + i)].push_back(L.lambda_phi);
        }
    }
    Eigen::VectorXi nnz(L.size);
    for (int c = 0; c < L.size; ++c) {
        auto& col = cols[static_cast<std::size_t>(c)];
        std::sort(col.begin(), col.end());
        col.erase(std::unique(col.begin(), col.end()), col.end());
        nnz[c] = static_cast<int>(col.size());
    }
    pattern_.resize(L.size, L.size);
    pattern_.reserve(nnz);
    for (int c = 0; c < L.size; ++c) {
        for (int r : cols[static_cast<std::size_t>(c)]) pattern_.insert(r, c) = 0.0;
        std::vector<int>().swap(cols[static_cast<std::size_t>(c)]);
    }
    pattern_.makeCompressed();
}

std::vector<char> Assembler::row_mask(bool with_dirichlet) const {
    const Layout& L = disc_->layout;
    std::vector<char> mask(static_cast<std::size_t>(L.size), 0);
    if (with_dirichlet) {
        for (int d : dirichlet_dofs_) mask[static_cast<std::size_t>(d)] = 1;
    }
    auto fill = [&](int from, int count) {
        std::fill_n(mask.begin() + from, count, static_cast<char>(1));
    };
    if (frozen_ & kFreezePhi) {
        fill(L.phi, L.n_scalar);
        if (L.lambda_phi >= 0) mask[static_cast<std::size_t>(L.lambda_phi)] = 1;
    }
    if (frozen_ & kFreezeT) fill(L.T, L.n_scalar);
    if (frozen_ & kFreezeFlow) fill(L.u, L.n_velocity + L.n_pressure + 1);
    return mask;
}

Eigen::VectorXd Assembler::apply_dirichlet(Eigen::VectorXd x) const {
    for (std::size_t i = 0; i < dirichlet_dofs_.size(); ++i) x[dirichlet_dofs_[i]] = dirichlet_values_[i];
    return x;
}

Eigen::VectorXd Assembler::initial_state() const {
    const Layout& L = disc_->layout;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(L.size);
    if (setup_.mean_phi_constraint) x.segment(L.phi, L.n_scalar).setConstant(params_.phi_m);
    return apply_dirichlet(std::move(x));
}

void Assembler::assemble_range(const Eigen::VectorXd& x, std::span<const int> tris, Eigen::VectorXd& res,
                               double* values) const {
    const Discretization& d = *disc_;
    const Tables& tb = *tables_;
    const Mesh& mesh = *d.mesh;
    const int ns = tb.ns;
    const int nl = local_size(ns);
    const int oT = ns;
    const int oU = 2 * ns;
    const int oP = 2 * ns + 12;

    const Prefactors A = params_.prefactors();
    const double c = A.thermophoresis;
    const Vec2 eg = params_.e_g;
    const bool use_cutoff = params_.cutoff_radius.has_value();
    const double R = use_cutoff ? *params_.cutoff_radius : 0.0;

    const int* inner = pattern_.innerIndexPtr();
    const int* outer = pattern_.outerIndexPtr();

    Eigen::VectorXd Rl(nl);
    Eigen::MatrixXd Kl(nl, nl);
    std::array<double, 6> cphi{}, cT{}, cux{}, cuy{};
    std::array<double, 3> cp{};
    std::array<Vec2, 6> gs, gv;
    std::array<Vec2, 6> jsphi, jsT, djphi, djT;
    std::array<int, 27> gidx{};

    for (int t : tris) {
        const ElementGeometry geo(mesh, t);
        for_each_cell_indices(d, t, [&](std::span<const int> g) { std::copy(g.begin(), g.end(), gidx.begin()); });
        for (int i = 0; i < ns; ++i) {
            cphi[static_cast<std::size_t>(i)] = x[gidx[static_cast<std::size_t>(i)]];
            cT[static_cast<std::size_t>(i)] = x[gidx[static_cast<std::size_t>(oT + i)]];
        }
        for (int i = 0; i < 6; ++i) {
            cux[static_cast<std::size_t>(i)] = x[gidx[static_cast<std::size_t>(oU + i)]];
            cuy[static_cast<std::size_t>(i)] = x[gidx[static_cast<std::size_t>(oU + 6 + i)]];
        }
        for (int i = 0; i < 3; ++i) cp[static_cast<std::size_t>(i)] = x[gidx[static_cast<std::size_t>(oP + i)]];

        Rl.setZero();
        if (values) Kl.setZero();

        for (std::size_t q = 0; q < tb.weights.size(); ++q) {
            const double w = 2.0 * geo.area * tb.weights[q];
            const auto& S = tb.s_val[q];
            const auto& V = tb.v_val[q];
            const auto& Q = tb.p_val[q];
            for (int i = 0; i < ns; ++i) gs[static_cast<std::size_t>(i)] = geo.physical_grad(tb.s_bg[q][static_cast<std::size_t>(i)]);
            for (int i = 0; i < 6; ++i) gv[static_cast<std::size_t>(i)] = geo.physical_grad(tb.v_bg[q][static_cast<std::size_t>(i)]);

            double phi = 0.0, T = 0.0, p = 0.0;
            Vec2 gphi = Vec2::Zero(), gT = Vec2::Zero(), u = Vec2::Zero();
            Mat2 G = Mat2::Zero();  // G(a, l) = d u_a / d x_l
            for (int i = 0; i < ns; ++i) {
                const auto k = static_cast<std::size_t>(i);
                phi += cphi[k] * S[k];
                T += cT[k] * S[k];
                gphi += cphi[k] * gs[k];
                gT += cT[k] * gs[k];
            }
            for (std::size_t i = 0; i < 6; ++i) {
                u.x() += cux[i] * V[i];
                u.y() += cuy[i] * V[i];
                G.row(0) += cux[i] * gv[i].transpose();
                G.row(1) += cuy[i] * gv[i].transpose();
            }
            for (std::size_t i = 0; i < 3; ++i) p += cp[i] * Q[i];
            const double divu = G.trace();
            const Mat2 D = G + G.transpose();

            const double h = laws_.h(phi), hp = laws_.h.derivative(phi);
            const double k = laws_.k(phi), kp = laws_.k.derivative(phi);
            const double mu = laws_.mu(phi), mup = laws_.mu.derivative(phi);
            const double eta = laws_.eta(phi), etap = laws_.eta.derivative(phi);
            const double rho = laws_.rho(phi), rhop = laws_.rho.derivative(phi);

            const Vec2 y = c * h * gT;
            const Vec2 sigma = use_cutoff ? cutoff(y, R) : y;
            const Mat2 Js = use_cutoff ? cutoff_jacobian(y, R) : Mat2::Identity();
            const Vec2 j = -(gphi + y);
            const Vec2 convT = A.heat_flux * j + eta * u;
            const Vec2 convU = A.momentum_flux * j + rho * u;

            double sphi = 0.0, f = 0.0;
            Vec2 g = Vec2::Zero();
            if (setup_.phi_source || setup_.heat_source || setup_.momentum_source) {
                const Vec2 xq = geo.map(tb.points[q]);
                if (setup_.phi_source) sphi = setup_.phi_source(xq);
                if (setup_.heat_source) f = setup_.heat_source(xq);
                if (setup_.momentum_source) g = setup_.momentum_source(xq);
            }

            const Vec2 phi_flux = A.phi_diffusion * (gphi + sigma);
            const double phi_react = u.dot(gphi) - sphi;
            const double heat_react = convT.dot(gT) - f;
            for (int i = 0; i < ns; ++i) {
                const auto ki = static_cast<std::size_t>(i);
                Rl[i] += w * (phi_flux.dot(gs[ki]) + phi_react * S[ki]);
                Rl[oT + i] += w * (A.heat_diffusion * k * gT.dot(gs[ki]) + heat_react * S[ki]);
            }
            for (int a = 0; a < 2; ++a) {
                const double force = A.buoyancy * T * eg[a] - g[a] + convU.dot(G.row(a).transpose());
                const Vec2 stress = A.viscosity * mu * D.row(a).transpose();
                for (int i = 0; i < 6; ++i) {
                    const auto ki = static_cast<std::size_t>(i);
                    Rl[oU + 6 * a + i] += w * (stress.dot(gv[ki]) + force * V[ki] - p * gv[ki][a]);
                }
            }
            for (int i = 0; i < 3; ++i) Rl[oP + i] += w * Q[static_cast<std::size_t>(i)] * divu;

            if (!values) continue;

            for (int jj = 0; jj < ns; ++jj) {
                const auto kj = static_cast<std::size_t>(jj);
                const Vec2 dy_phi = c * hp * S[kj] * gT;
                const Vec2 dy_T = c * h * gs[kj];
                jsphi[kj] = Js * dy_phi;
                jsT[kj] = Js * dy_T;
                djphi[kj] = -(gs[kj] + dy_phi);
                djT[kj] = -dy_T;
            }

            // columns: phi and T trial functions
            for (int jj = 0; jj < ns; ++jj) {
                const auto kj = static_cast<std::size_t>(jj);
                const double chi = S[kj];
                const Vec2 phi_col_flux = A.phi_diffusion * (gs[kj] + jsphi[kj]);
                const double u_dot_gchi = u.dot(gs[kj]);
                const Vec2 T_from_phi = A.heat_flux * djphi[kj] + etap * chi * u;
                const double T_from_phi_conv = T_from_phi.dot(gT);
                const double T_from_T_conv = A.heat_flux * djT[kj].dot(gT) + convT.dot(gs[kj]);
                const Vec2 phi_from_T = A.phi_diffusion * jsT[kj];
                for (int i = 0; i < ns; ++i) {
                    const auto ki = static_cast<std::size_t>(i);
                    Kl(i, jj) += w * (phi_col_flux.dot(gs[ki]) + u_dot_gchi * S[ki]);
                    Kl(i, oT + jj) += w * phi_from_T.dot(gs[ki]);
                    Kl(oT + i, jj) += w * (A.heat_diffusion * kp * chi * gT.dot(gs[ki]) + T_from_phi_conv * S[ki]);
                    Kl(oT + i, oT + jj) += w * (A.heat_diffusion * k * gs[kj].dot(gs[ki]) + T_from_T_conv * S[ki]);
                }
                const Vec2 U_from_phi = A.momentum_flux * djphi[kj] + rhop * chi * u;
                const Vec2 U_from_T = A.momentum_flux * djT[kj];
                for (int a = 0; a < 2; ++a) {
                    const Vec2 grad_ua = G.row(a).transpose();
                    const Vec2 visc = A.viscosity * mup * chi * D.row(a).transpose();
                    const double conv_phi = U_from_phi.dot(grad_ua);
                    const double conv_T = U_from_T.dot(grad_ua) + A.buoyancy * chi * eg[a];
                    for (int i = 0; i < 6; ++i) {
                        const auto ki = static_cast<std::size_t>(i);
                        Kl(oU + 6 * a + i, jj) += w * (visc.dot(gv[ki]) + conv_phi * V[ki]);
                        Kl(oU + 6 * a + i, oT + jj) += w * conv_T * V[ki];
                    }
                }
            }

            // columns: velocity trial functions
            for (int cc = 0; cc < 2; ++cc) {
                for (int jj = 0; jj < 6; ++jj) {
                    const auto kj = static_cast<std::size_t>(jj);
                    const int col = oU + 6 * cc + jj;
                    const double N = V[kj];
                    for (int i = 0; i < ns; ++i) {
                        const auto ki = static_cast<std::size_t>(i);
                        Kl(i, col) += w * N * gphi[cc] * S[ki];
                        Kl(oT + i, col) += w * eta * N * gT[cc] * S[ki];
                    }
                    const double adv = convU.dot(gv[kj]);
                    for (int a = 0; a < 2; ++a) {
                        const double react = rho * N * G(a, cc);
                        for (int i = 0; i < 6; ++i) {
                            const auto ki = static_cast<std::size_t>(i);
                            double val = A.viscosity * mu * gv[kj][a] * gv[ki][cc] + react * V[ki];
                            if (a == cc) val += A.viscosity * mu * gv[kj].dot(gv[ki]) + adv * V[ki];
                            Kl(oU + 6 * a + i, col) += w * val;
                        }
                    }
                    for (int i = 0; i < 3; ++i) Kl(oP + i, col) += w * Q[static_cast<std::size_t>(i)] * gv[kj][cc];
                }
            }

            // columns: pressure trial functions
            for (int jj = 0; jj < 3; ++jj) {
                const double Qj = Q[static_cast<std::size_t>(jj)];
                for (int a = 0; a < 2; ++a) {
                    for (int i = 0; i < 6; ++i) Kl(oU + 6 * a + i, oP + jj) -= w * Qj * gv[static_cast<std::size_t>(i)][a];
                }
            }
        }

        for (int i = 0; i < nl; ++i) {
            const int r = gidx[static_cast<std::size_t>(i)];
            res[r] += Rl[i];
        }
        if (!values) continue;
        for (int jj = 0; jj < nl; ++jj) {
            const int col = gidx[static_cast<std::size_t>(jj)];
            const int* b = inner + outer[col];
            const int* e = inner + outer[col + 1];
            for (int i = 0; i < nl; ++i) {
                const int r = gidx[static_cast<std::size_t>(i)];
                    const int* it = std::lower_bound(b, e, r);
                values[it - inner] += Kl(i, jj);
            }
        }
    }
}

SparseSystem Assembler::assemble_raw_subset(const Eigen::VectorXd& x, std::span<const int> tris,
                                            bool with_matrix) const {
    const Layout& L = disc_->layout;
    if (x.size() != L.size) throw std::invalid_argument("Assembler: state size does not match layout");
    SparseSystem sys;
    sys.layout = L;
    sys.rhs = Eigen::VectorXd::Zero(L.size);
    if (with_matrix) {
        sys.matrix = pattern_;
        std::fill_n(sys.matrix.valuePtr(), sys.matrix.nonZeros(), 0.0);
    }
    const int nthreads = std::min<int>(options_.threads, std::max<int>(1, static_cast<int>(tris.size()) / 64));
    if (nthreads <= 1) {
        assemble_range(x, tris, sys.rhs, with_matrix ? sys.matrix.valuePtr() : nullptr);
        return sys;
    }

    // Fixed chunking and in-order reduction keep the result deterministic.
    const auto nnz = static_cast<std::size_t>(with_matrix ? sys.matrix.nonZeros() : 0);
    std::vector<Eigen::VectorXd> res(static_cast<std::size_t>(nthreads), Eigen::VectorXd::Zero(L.size));
    std::vector<std::vector<double>> vals(static_cast<std::size_t>(nthreads));
    std::vector<std::thread> workers;
    const std::size_t chunk = (tris.size() + static_cast<std::size_t>(nthreads) - 1) / static_cast<std::size_t>(nthreads);
    for (int w = 0; w < nthreads; ++w) {
        const std::size_t b = std::min(tris.size(), static_cast<std::size_t>(w) * chunk);
        const std::size_t e = std::min(tris.size(), b + chunk);
        workers.emplace_back([&, w, b, e] {
            auto& v = vals[static_cast<std::size_t>(w)];
            if (with_matrix) v.assign(nnz, 0.0);
            assemble_range(x, tris.subspan(b, e - b), res[static_cast<std::size_t>(w)],
                           with_matrix ? v.data() : nullptr);
        });
    }
    for (auto& t : workers) t.join();
    for (int w = 0; w < nthreads; ++w) {
        sys.rhs += res[static_cast<std::size_t>(w)];
        if (with_matrix) {
            double* out = sys.matrix.valuePtr();
            const auto& v = vals[static_cast<std::size_t>(w)];
            for (std::size_t k = 0; k < nnz; ++k) out[k] += v[k];
        }
    }
    return sys;
}

SparseSystem Assembler::assemble_raw(const Eigen::VectorXd& x, bool with_matrix) const {
    std::vector<int> all(static_cast<std::size_t>(disc_->mesh->num_triangles()));
    std::iota(all.begin(), all.end(), 0);
    return assemble_raw_subset(x, all, with_matrix);
}

void Assembler::apply_constraints(SparseSystem& sys, const Eigen::VectorXd& x) const {
    const Layout& L = disc_->layout;
    const auto mask = row_mask();
    const bool with_matrix = sys.matrix.rows() == L.size;
    auto fixed = [&](int r) { return mask[static_cast<std::size_t>(r)] != 0; };

    // multiplier couplings
    const bool lp_active = !fixed(L.lambda_p);
    const bool lphi_active = L.lambda_phi >= 0 && !fixed(L.lambda_phi);
    if (lp_active) {
        sys.rhs[L.lambda_p] = pressure_mass_.dot(x.segment(L.p, L.n_pressure));
        for (int i = 0; i < L.n_pressure; ++i) {
            const int r = L.p + i;
            if (fixed(r)) continue;
            sys.rhs[r] += x[L.lambda_p] * pressure_mass_[i];
        }
    }
    if (lphi_active) {
        sys.rhs[L.lambda_phi] = scalar_mass_.dot(x.segment(L.phi, L.n_scalar)) - params_.phi_m * area_;
        for (int i = 0; i < L.n_scalar; ++i) {
            const int r = L.phi + i;
            if (fixed(r)) continue;
            sys.rhs[r] += x[L.lambda_phi] * scalar_mass_[i];
        }
    }

    for (int r = 0; r < L.size; ++r) {
        if (fixed(r)) sys.rhs[r] = 0.0;
    }
    const auto frozen_rows = row_mask(false);
    for (std::size_t i = 0; i < dirichlet_dofs_.size(); ++i) {
        const int d = dirichlet_dofs_[i];
        if (!frozen_rows[static_cast<std::size_t>(d)]) sys.rhs[d] = x[d] - dirichlet_values_[i];
    }

    if (!with_matrix) return;
    auto& m = sys.matrix;
    for (int col = 0; col < m.outerSize(); ++col) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, col); it; ++it) {
            if (fixed(static_cast<int>(it.row()))) it.valueRef() = it.row() == col ? 1.0 : 0.0;
        }
    }
    if (lp_active) {
        for (int i = 0; i < L.n_pressure; ++i) {
            const int r = L.p + i;
            entry(m, L.lambda_p, r) = pressure_mass_[i];
            if (!fixed(r)) entry(m, r, L.lambda_p) = pressure_mass_[i];
        }
    }
    if (lphi_active) {
        for (int i = 0; i < L.n_scalar; ++i) {
            const int r = L.phi + i;
            entry(m, L.lambda_phi, r) = scalar_mass_[i];
            if (!fixed(r)) entry(m, r, L.lambda_phi) = scalar_mass_[i];
        }
    }
}

Eigen::VectorXd Assembler::assemble_residual(const Eigen::VectorXd& x) const {
    SparseSystem sys = assemble_raw(x, false);
    apply_constraints(sys, x);
    return std::move(sys.rhs);
}

SparseSystem Assembler::assemble_jacobian(const Eigen::VectorXd& x) const {
    SparseSystem sys = assemble_raw(x, true);
    apply_constraints(sys, x);
    return sys;
}

}  // namespace nanoflow
