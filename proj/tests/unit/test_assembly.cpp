#include "nanoflow/assembly.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace nanoflow;
using support::unit_square;

namespace {

ModelParams constants_one() {
    ModelParams p;
    p.constants_one = true;
    return p;
}

ModelParams scaled() {
    ModelParams p;
    p.Re = 100;
    p.Pr = 1;
    p.Sc = 1;
    p.Sc_f = 1e4;
    p.Le = 1e4;
    p.N_BT = 0.586;
    p.beta = 5;
    return p;
}

Eigen::MatrixXd block(const Eigen::SparseMatrix<double>& m, int r0, int nr, int c0, int nc) {
    return Eigen::MatrixXd(m).block(r0, c0, nr, nc);
}

CaseSetup homogeneous() { return CaseSetup{}; }

}  // namespace

TEST(Assembly, LayoutAndBlocks) {
    const Discretization d(unit_square(2), 2, true);
    const Layout& L = d.layout;
    EXPECT_EQ(L.n_scalar, 25);
    EXPECT_EQ(L.n_velocity, 50);
    EXPECT_EQ(L.n_pressure, 9);
    EXPECT_EQ(L.size, 2 * 25 + 50 + 9 + 2);
    EXPECT_EQ(L.block_of(L.phi), Block::phi);
    EXPECT_EQ(L.block_of(L.T + 3), Block::T);
    EXPECT_EQ(L.block_of(L.u + 49), Block::u);
    EXPECT_EQ(L.block_of(L.p), Block::p);
    EXPECT_EQ(L.block_of(L.lambda_p), Block::lambda_p);
    EXPECT_EQ(L.block_of(L.lambda_phi), Block::lambda_phi);
    EXPECT_EQ(Discretization(unit_square(2), 1, false).layout.lambda_phi, -1);

    std::mt19937 rng(1);
    const Eigen::VectorXd x = support::random_state(L, rng);
    const FieldState s = FieldState::unpack(L, x);
    EXPECT_EQ(s.pack(L), x);
}

TEST(Assembly, P1ElementStiffnessOnReferenceTriangle) {
    auto mesh = std::make_shared<const Mesh>(
        std::vector<Vec2>{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)}, std::vector<std::array<int, 3>>{{0, 1, 2}},
        std::vector<BoundaryEdge>{{{0, 1}, BoundaryTag::bottom}, {{1, 2}, BoundaryTag::right}, {{2, 0}, BoundaryTag::left}});
    auto disc = std::make_shared<const Discretization>(mesh, 1, false);
    const Assembler as(disc, constants_one(), CoefficientLaws::unit(), homogeneous());
    const SparseSystem sys = as.assemble_raw(Eigen::VectorXd::Zero(disc->layout.size), true);
    Eigen::Matrix3d expect;
    expect << 1, -0.5, -0.5, -0.5, 0.5, 0, -0.5, 0, 0.5;
    const Eigen::MatrixXd K = block(sys.matrix, disc->layout.phi, 3, disc->layout.phi, 3);
    EXPECT_NEAR((K - expect).norm(), 0.0, 1e-14);
    const Eigen::MatrixXd KT = block(sys.matrix, disc->layout.T, 3, disc->layout.T, 3);
    EXPECT_NEAR((KT - expect).norm(), 0.0, 1e-14);
}

TEST(Assembly, PhiBlockAtZeroStateIsStiffness) {
    // Independent P2 stiffness matrix from the basis tables.
    auto mesh = unit_square(3);
    auto disc = std::make_shared<const Discretization>(mesh, 2, false);
    const Assembler as(disc, constants_one(), CoefficientLaws::alumina(), homogeneous());
    const SparseSystem sys = as.assemble_raw(Eigen::VectorXd::Zero(disc->layout.size), true);
    const int n = disc->layout.n_scalar;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    const Quadrature& q = element_quadrature(4);
    for (int t = 0; t < mesh->num_triangles(); ++t) {
        const ElementGeometry g(*mesh, t);
        const auto dofs = disc->scalar.cell_dofs(t);
        for (int k = 0; k < q.size(); ++k) {
            const BasisEval b = eval_basis(2, q.points[static_cast<std::size_t>(k)]);
            const double w = 2.0 * g.area * q.weights[static_cast<std::size_t>(k)];
            for (int i = 0; i < 6; ++i) {
                for (int j = 0; j < 6; ++j) {
                    K(dofs[static_cast<std::size_t>(i)], dofs[static_cast<std::size_t>(j)]) +=
                        w * g.physical_grad(b.bary_grads[static_cast<std::size_t>(i)])
                                .dot(g.physical_grad(b.bary_grads[static_cast<std::size_t>(j)]));
                }
            }
        }
    }
    EXPECT_NEAR((block(sys.matrix, disc->layout.phi, n, disc->layout.phi, n) - K).norm(), 0.0, 1e-12);
}

TEST(Assembly, ZeroResidualForConstantConcentration) {
    auto disc = std::make_shared<const Discretization>(unit_square(3), 2, false);
    for (const auto& [params, laws] : {std::pair{constants_one(), CoefficientLaws::unit()},
                                       std::pair{scaled(), CoefficientLaws::alumina()}}) {
        ModelParams p = params;
        p.beta = 0.0;
        const Assembler as(disc, p, laws, homogeneous());
        FieldState s;
        const Layout& L = disc->layout;
        s.phi = Eigen::VectorXd::Constant(L.n_scalar, 0.37);
        s.T = Eigen::VectorXd::Zero(L.n_scalar);
        s.u = Eigen::VectorXd::Zero(L.n_velocity);
        s.p = Eigen::VectorXd::Zero(L.n_pressure);
        EXPECT_LE(as.assemble_residual(s.pack(L)).lpNorm<Eigen::Infinity>(), 1e-14);
    }
}

TEST(Assembly, QuadraticStokesFlowIsReproduced) {
    // u = (x^2, -2xy) is divergence free and lies in P2; p = x - 1/2 has zero mean.
    // With phi = 0 and T = 0 the flux j vanishes, so the momentum source is
    // g = -Laplace(u) + (u . grad) u + grad p.
    auto disc = std::make_shared<const Discretization>(unit_square(4), 2, false);
    auto u = [](const Vec2& x) { return Vec2(x.x() * x.x(), -2.0 * x.x() * x.y()); };
    CaseSetup c;
    c.velocity_dirichlet_tags = {kAllBoundaryTags.begin(), kAllBoundaryTags.end()};
    c.velocity_value = u;
    c.phi_dirichlet.push_back({{kAllBoundaryTags.begin(), kAllBoundaryTags.end()}, [](const Vec2&) { return 0.0; }});
    c.T_dirichlet.push_back({{kAllBoundaryTags.begin(), kAllBoundaryTags.end()}, [](const Vec2&) { return 0.0; }});
    c.momentum_source = [](const Vec2& x) {
        const double a = x.x(), b = x.y();
        const Vec2 lap(2.0, 0.0);
        const Vec2 conv(a * a * 2.0 * a, a * a * (-2.0 * b) + (-2.0 * a * b) * (-2.0 * a));
        return Vec2(-lap + conv + Vec2(1.0, 0.0));
    };
    const Assembler as(disc, constants_one(), CoefficientLaws::unit(), c);
    const Layout& L = disc->layout;
    FieldState s;
    s.phi = Eigen::VectorXd::Zero(L.n_scalar);
    s.T = Eigen::VectorXd::Zero(L.n_scalar);
    s.u = interpolate_vector(disc->flow.velocity, u);
    s.p = interpolate(disc->flow.pressure, [](const Vec2& x) { return x.x() - 0.5; });
    const Eigen::VectorXd r = as.assemble_residual(s.pack(L));
    EXPECT_LE(r.segment(L.u, L.n_velocity).lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_LE(r.lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Assembly, ManufacturedConsistencyRate) {
    // Residual entries integrate against basis functions whose support shrinks
    // like h^2, so max |r_i| / h^2 is the pointwise consistency error.
    const MMSCase mms = make_mms(MmsFlavor::trigonometric);
    const ModelParams p = constants_one();
    for (const CoefficientLaws& laws : {CoefficientLaws::unit(), CoefficientLaws::alumina()}) {
        std::vector<double> consistency;
        for (int n : {8, 16, 32}) {
            auto disc = std::make_shared<const Discretization>(unit_square(n), 2, false);
            const Assembler as(disc, p, laws, mms.case_setup(p, laws));
            const Layout& L = disc->layout;
            const Eigen::VectorXd r = as.assemble_residual(support::mms_interpolant(*disc, mms));
            const double h = 1.0 / n;
            consistency.push_back(r.head(L.lambda_p).lpNorm<Eigen::Infinity>() / (h * h));
        }
        for (std::size_t i = 1; i < consistency.size(); ++i) {
            const double ratio = consistency[i - 1] / consistency[i];
            EXPECT_GE(ratio, 3.3);
            EXPECT_LE(ratio, 4.7);
        }
    }
}

TEST(Assembly, JacobianMatchesFiniteDifferences) {
    std::mt19937 rng(42);
    struct Mode {
        ModelParams params;
        CoefficientLaws laws;
        int degree;
    };
    ModelParams cut = scaled();
    cut.cutoff_radius = 0.5;
    ModelParams off = scaled();
    off.thermophoresis = false;
    const std::vector<Mode> modes = {{constants_one(), CoefficientLaws::unit(), 2},
                                     {constants_one(), CoefficientLaws::alumina(), 1},
                                     {scaled(), CoefficientLaws::alumina(), 2},
                                     {cut, CoefficientLaws::alumina(), 2},
                                     {off, CoefficientLaws::alumina(), 2}};
    for (const Mode& m : modes) {
        for (bool cavity : {true, false}) {
            auto disc = std::make_shared<const Discretization>(
                cavity ? std::make_shared<const Mesh>(build_rectangle(2, 1, 4, 2)) : unit_square(3), m.degree, cavity);
            const MMSCase mms = make_mms(MmsFlavor::polynomial);
            ModelParams p = m.params;
            if (!cavity) p.cutoff_radius.reset();
            const Assembler as(disc, p, m.laws, cavity ? cavity_case() : mms.case_setup(p, m.laws));
            for (int k = 0; k < 3; ++k) {
                const Eigen::VectorXd x = support::random_state(disc->layout, rng);
                const Eigen::VectorXd v = support::random_direction(disc->layout.size, rng);
                const support::FdCheck c = support::central_fd_check(as, x, v, {1e-3, 1e-4});
                EXPECT_LE(c.best, 1e-6);
                EXPECT_GE(c.min_order, 1.9) << c.rel_error[0] << " " << c.rel_error[1];
            }
        }
    }
}

TEST(Assembly, StokesBlocksSymmetric) {
    auto disc = std::make_shared<const Discretization>(std::make_shared<const Mesh>(build_rectangle(2, 1, 4, 3)), 2, true);
    const Layout& L = disc->layout;
    std::mt19937 rng(9);
    const Assembler as(disc, scaled(), CoefficientLaws::alumina(), cavity_case());
    // random concentration, zero flux driver and zero velocity: viscous + pressure coupling only
    Eigen::VectorXd x = Eigen::VectorXd::Zero(L.size);
    x.segment(L.phi, L.n_scalar).setConstant(0.1);
    x.segment(L.p, L.n_pressure) = support::random_direction(L.n_pressure, rng);
    const SparseSystem sys = as.assemble_raw(x, true);
    const Eigen::MatrixXd A = block(sys.matrix, L.u, L.n_velocity, L.u, L.n_velocity);
    EXPECT_LE((A - A.transpose()).cwiseAbs().maxCoeff(), 1e-12 * A.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd B = block(sys.matrix, L.p, L.n_pressure, L.u, L.n_velocity);
    const Eigen::MatrixXd Bt = block(sys.matrix, L.u, L.n_velocity, L.p, L.n_pressure);
    EXPECT_LE((B + Bt.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Assembly, AdditiveOverElements) {
    auto mesh = std::make_shared<const Mesh>(build_rectangle(2, 1, 6, 3));
    auto disc = std::make_shared<const Discretization>(mesh, 2, true);
    const Assembler as(disc, scaled(), CoefficientLaws::alumina(), cavity_case());
    std::mt19937 rng(5);
    const Eigen::VectorXd x = support::random_state(disc->layout, rng);
    const SparseSystem all = as.assemble_raw(x, true);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<int> a, b;
        std::bernoulli_distribution coin(0.5);
        for (int t = 0; t < mesh->num_triangles(); ++t) (coin(rng) ? a : b).push_back(t);
        const SparseSystem sa = as.assemble_raw_subset(x, a, true);
        const SparseSystem sb = as.assemble_raw_subset(x, b, true);
        const double scale = all.rhs.lpNorm<Eigen::Infinity>();
        EXPECT_LE((sa.rhs + sb.rhs - all.rhs).lpNorm<Eigen::Infinity>(), 1e-13 * scale);
        const Eigen::SparseMatrix<double> diff = sa.matrix + sb.matrix - all.matrix;
        EXPECT_LE(Eigen::MatrixXd(diff).cwiseAbs().maxCoeff(), 1e-13 * Eigen::MatrixXd(all.matrix).cwiseAbs().maxCoeff());
    }
}

TEST(Assembly, ConstraintRows) {
    auto disc = std::make_shared<const Discretization>(std::make_shared<const Mesh>(build_rectangle(2, 1, 4, 2)), 2, true);
    const Layout& L = disc->layout;
    const Assembler as(disc, scaled(), CoefficientLaws::alumina(), cavity_case());
    std::mt19937 rng(8);
    const Eigen::VectorXd x = support::random_state(L, rng);
    const SparseSystem sys = as.assemble_jacobian(x);
    const Eigen::MatrixXd J(sys.matrix);
    const auto& dofs = as.dirichlet_dofs();
    const auto& vals = as.dirichlet_values();
    ASSERT_FALSE(dofs.empty());
    for (std::size_t i = 0; i < dofs.size(); ++i) {
        const int d = dofs[i];
        EXPECT_EQ(sys.rhs[d], x[d] - vals[i]);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(L.size);
        e[d] = 1.0;
        EXPECT_EQ(Eigen::VectorXd(J.row(d).transpose()), e);
    }
    // multiplier rows
    EXPECT_NEAR(sys.rhs[L.lambda_p], as.pressure_mass().dot(x.segment(L.p, L.n_pressure)), 1e-14);
    EXPECT_NEAR(sys.rhs[L.lambda_phi], as.scalar_mass().dot(x.segment(L.phi, L.n_scalar)) - 0.1 * 2.0, 1e-14);
    EXPECT_NEAR(as.domain_area(), 2.0, 1e-14);
    EXPECT_NEAR(as.pressure_mass().sum(), 2.0, 1e-13);
    EXPECT_NEAR(as.scalar_mass().sum(), 2.0, 1e-13);

    // slip wall: normal velocity on the top wall, left/right/bottom fully fixed
    const Space& V = disc->flow.velocity;
    const int nv = V.scalar_dof_count();
    const std::array<BoundaryTag, 1> top{BoundaryTag::top};
    for (int d : V.boundary_dofs(top)) {
        EXPECT_TRUE(std::binary_search(dofs.begin(), dofs.end(), L.u + nv + d));
        const Vec2 c = V.dof_coord(d);
        const bool corner = c.x() == 0.0 || c.x() == 2.0;
        EXPECT_EQ(std::binary_search(dofs.begin(), dofs.end(), L.u + d), corner);
    }
}

TEST(Assembly, FrozenFieldsGiveIdentityRows) {
    auto disc = std::make_shared<const Discretization>(unit_square(2), 2, true);
    const Layout& L = disc->layout;
    Assembler as(disc, scaled(), CoefficientLaws::alumina(), cavity_case());
    std::mt19937 rng(3);
    const Eigen::VectorXd x = support::random_state(L, rng);
    as.set_frozen(kFreezePhi | kFreezeFlow);
    const SparseSystem sys = as.assemble_jacobian(x);
    const Eigen::MatrixXd J(sys.matrix);
    for (int r : {L.phi, L.phi + L.n_scalar - 1, L.u + 3, L.p + 1, L.lambda_p, L.lambda_phi}) {
        EXPECT_EQ(sys.rhs[r], 0.0);
        EXPECT_EQ(J.row(r).cwiseAbs().sum(), 1.0);
        EXPECT_EQ(J(r, r), 1.0);
    }
}

TEST(Assembly, ThreadedAssemblyMatchesSequential) {
    auto disc = std::make_shared<const Discretization>(std::make_shared<const Mesh>(build_rectangle(2, 1, 16, 8)), 2, true);
    std::mt19937 rng(12);
    const Eigen::VectorXd x = support::random_state(disc->layout, rng);
    const Assembler seq(disc, scaled(), CoefficientLaws::alumina(), cavity_case());
    const Assembler par(disc, scaled(), CoefficientLaws::alumina(), cavity_case(), {kDefaultQuadratureOrder, 3});
    const SparseSystem a = seq.assemble_jacobian(x);
    const SparseSystem b = par.assemble_jacobian(x);
    const SparseSystem c = par.assemble_jacobian(x);
    EXPECT_LE((a.rhs - b.rhs).lpNorm<Eigen::Infinity>(), 1e-13 * a.rhs.lpNorm<Eigen::Infinity>());
    EXPECT_EQ(b.rhs, c.rhs);
    EXPECT_EQ(Eigen::MatrixXd(b.matrix), Eigen::MatrixXd(c.matrix));
    EXPECT_EQ(seq.assemble_residual(x), seq.assemble_residual(x));
}

TEST(Assembly, RejectsInconsistentSetup) {
    auto with_mean = std::make_shared<const Discretization>(unit_square(2), 2, true);
    EXPECT_THROW(Assembler(with_mean, scaled(), CoefficientLaws::unit(), homogeneous()), std::invalid_argument);
    auto disc = std::make_shared<const Discretization>(unit_square(2), 2, false);
    const Assembler as(disc, scaled(), CoefficientLaws::unit(), homogeneous());
    EXPECT_THROW((void)as.assemble_residual(Eigen::VectorXd::Zero(3)), std::invalid_argument);
}
