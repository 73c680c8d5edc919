#include "nanoflow/solver.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace nanoflow;
using support::unit_square;

namespace {

ModelParams cavity_params() {
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

std::shared_ptr<const Discretization> cavity_disc(int nx, int ny) {
    return std::make_shared<const Discretization>(std::make_shared<const Mesh>(build_rectangle(2, 1, nx, ny)), 2, true);
}

Eigen::SparseMatrix<double> sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

}  // namespace

TEST(LinearSolve, Identity) {
    Eigen::SparseMatrix<double> I(5, 5);
    I.setIdentity();
    I.makeCompressed();
    const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(5, -2, 3);
    LinearSolveInfo info;
    EXPECT_EQ(linear_solve(I, b, nullptr, &info), b);
    EXPECT_EQ(info.backward_error, 0.0);
}

TEST(LinearSolve, HandSolvedP1System) {
    // Unit square split along (0,0)-(1,1), vertex (0,0) fixed; unknowns at
    // (1,0), (1,1), (0,1). Hand assembly from the right-angle element matrix.
    Eigen::Matrix3d K;
    K << 1, -0.5, 0, -0.5, 1, -0.5, 0, -0.5, 1;

    auto mesh = unit_square(1);
    auto disc = std::make_shared<const Discretization>(mesh, 1, false);
    ModelParams p;
    p.constants_one = true;
    const Assembler as(disc, p, CoefficientLaws::unit(), CaseSetup{});
    const Eigen::MatrixXd full(as.assemble_raw(Eigen::VectorXd::Zero(disc->layout.size), true).matrix);
    auto index_of = [&](const Vec2& x) {
        for (int i = 0; i < mesh->num_vertices(); ++i) {
            if ((mesh->vertex(i) - x).norm() == 0.0) return i;
        }
        return -1;
    };
    const std::array<int, 3> idx{index_of(Vec2(1, 0)), index_of(Vec2(1, 1)), index_of(Vec2(0, 1))};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            EXPECT_NEAR(full(disc->layout.T + idx[static_cast<std::size_t>(i)], disc->layout.T + idx[static_cast<std::size_t>(j)]),
                        K(i, j), 1e-15);
        }
    }

    auto A = sparse(K);
    A.makeCompressed();
    LinearSolveInfo info;
    const Eigen::VectorXd x = linear_solve(A, Eigen::Vector3d(1, 0, 1), nullptr, &info);
    EXPECT_NEAR((x - Eigen::Vector3d(2, 2, 2)).lpNorm<Eigen::Infinity>(), 0.0, 1e-14);
    EXPECT_LE(info.backward_error, kBackwardErrorBound);
}

TEST(LinearSolve, SaddlePointStokes) {
    auto disc = std::make_shared<const Discretization>(unit_square(6), 2, false);
    ModelParams p;
    p.constants_one = true;
    const MMSCase mms = make_mms(MmsFlavor::polynomial);
    const Assembler as(disc, p, CoefficientLaws::unit(), mms.case_setup(p, CoefficientLaws::unit()));
    const Layout& L = disc->layout;
    const SparseSystem sys = as.assemble_jacobian(Eigen::VectorXd::Zero(L.size));
    std::mt19937 rng(4);
    const Eigen::VectorXd b = support::random_direction(L.size, rng);
    LinearSolveInfo info;
    const Eigen::VectorXd x = linear_solve(sys.matrix, b, &sys.layout, &info);
    EXPECT_LE(info.backward_error, kBackwardErrorBound);
    // independent recomputation of the momentum and divergence rows
    const Eigen::VectorXd r = sys.matrix * x - b;
    const Eigen::MatrixXd dense(sys.matrix);
    const double scale = dense.cwiseAbs().rowwise().sum().maxCoeff() * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>();
    EXPECT_LE(r.segment(L.u, L.n_velocity).lpNorm<Eigen::Infinity>(), 1e-10 * scale);
    EXPECT_LE(r.segment(L.p, L.n_pressure).lpNorm<Eigen::Infinity>(), 1e-10 * scale);
    EXPECT_NEAR(backward_error(sys.matrix, x, b), info.backward_error, 1e-16);
}

TEST(LinearSolve, SingularBlockIsNamed) {
    auto disc = cavity_disc(4, 2);
    const Assembler as(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    const Layout& L = disc->layout;
    SparseSystem sys = as.assemble_jacobian(as.initial_state());
    const int bad = L.T + L.n_scalar / 2;
    for (int c = 0; c < sys.matrix.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(sys.matrix, c); it; ++it) {
            if (it.row() == bad) it.valueRef() = 0.0;
        }
    }
    try {
        (void)linear_solve(sys);
        FAIL() << "expected a SolverError";
    } catch (const SolverError& e) {
        ASSERT_TRUE(e.block());
        EXPECT_EQ(*e.block(), Block::T);
        EXPECT_NE(std::string(e.what()).find("'T'"), std::string::npos);
    }
}

TEST(LinearSolve, DimensionMismatch) {
    Eigen::SparseMatrix<double> A(3, 3);
    A.setIdentity();
    A.makeCompressed();
    EXPECT_THROW(linear_solve(A, Eigen::VectorXd::Ones(4)), std::invalid_argument);
}

TEST(LinearSolve, SolverReusedAcrossPatterns) {
    LinearSolver s;
    Eigen::Matrix3d K;
    K << 4, 1, 0, 1, 4, 1, 0, 1, 4;
    auto A = sparse(K);
    A.makeCompressed();
    const Eigen::Vector3d b(1, 2, 3);
    const Eigen::VectorXd x1 = s.solve(A, b);
    EXPECT_NEAR((K * x1 - b).norm(), 0.0, 1e-14);
    Eigen::Matrix3d K2 = K;
    K2(0, 2) = 0.5;
    auto A2 = sparse(K2);
    A2.makeCompressed();
    const Eigen::VectorXd x2 = s.solve(A2, b);
    EXPECT_NEAR((K2 * x2 - b).norm(), 0.0, 1e-14);
    EXPECT_NE(std::string(LinearSolver::backend()), "");
}

TEST(Newton, ConfigValidation) {
    NewtonConfig c;
    EXPECT_NO_THROW(c.validate());
    c.backtrack = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.abs_tol = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.max_iters = -1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Newton, LinearHeatProblemInOneStep) {
    auto disc = cavity_disc(8, 4);
    ModelParams p = cavity_params();
    p.thermophoresis = false;
    Assembler as(disc, p, CoefficientLaws::alumina(), cavity_case());
    as.set_frozen(kFreezePhi | kFreezeFlow);
    const SolveResult r = newton_solve(as, as.initial_state(), {});
    EXPECT_TRUE(r.report.converged);
    EXPECT_EQ(r.report.iterations, 1);
    EXPECT_EQ(r.report.step_lengths, std::vector<double>{1.0});
    // conduction with k(phi_m) constant: linear profile
    const Layout& L = disc->layout;
    const Eigen::VectorXd T = interpolate(disc->scalar, [](const Vec2& x) { return 1.0 - 0.5 * x.x(); });
    EXPECT_LE((r.state.segment(L.T, L.n_scalar) - T).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Newton, QuadraticTailOnManufacturedProblem) {
    auto disc = std::make_shared<const Discretization>(unit_square(8), 2, false);
    ModelParams p;
    p.constants_one = true;
    const MMSCase mms = make_mms(MmsFlavor::trigonometric);
    Assembler as(disc, p, CoefficientLaws::alumina(), mms.case_setup(p, CoefficientLaws::alumina()));
    NewtonConfig cfg;
    cfg.abs_tol = 1e-13;
    const SolveResult r = newton_solve(as, as.initial_state(), cfg);
    ASSERT_TRUE(r.report.converged);
    const auto& h = r.report.residual_history;
    ASSERT_GE(h.size(), 4u);
    int checked = 0;
    for (std::size_t k = 0; k + 1 < h.size(); ++k) {
        if (h[k] <= 1e-3 && h[k + 1] > 1e-12) {
            EXPECT_LE(h[k + 1] / (h[k] * h[k]), 1e3) << "step " << k;
            ++checked;
        }
    }
    EXPECT_GE(checked, 1);
    // log-ratio over the last two steps above the rounding floor
    std::vector<double> tail;
    for (double v : h) {
        if (v > 1e-12) tail.push_back(v);
    }
    ASSERT_GE(tail.size(), 3u);
    const std::size_t n = tail.size();
    EXPECT_GE(std::log(tail[n - 1]) / std::log(tail[n - 2]), 1.6);
}

TEST(Newton, FixedPointConvergesImmediately) {
    auto disc = cavity_disc(8, 4);
    Assembler as(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    const SolveResult first = solve_coupled(as, as.initial_state(), {});
    ASSERT_TRUE(first.report.converged);
    const SolveResult again = newton_solve(as, first.state, {});
    EXPECT_TRUE(again.report.converged);
    EXPECT_LE(again.report.iterations, 1);
    EXPECT_LE(again.report.final_residual(), 1e-10);
}

TEST(Newton, MaxItersGivesReportNotException) {
    auto disc = cavity_disc(8, 4);
    Assembler as(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    NewtonConfig cfg;
    cfg.max_iters = 1;
    SolveResult r;
    ASSERT_NO_THROW(r = newton_solve(as, as.initial_state(), cfg));
    EXPECT_FALSE(r.report.converged);
    EXPECT_EQ(r.report.iterations, 1);
    EXPECT_FALSE(r.report.message.empty());
}

TEST(Newton, ResidualHistoryMonotoneUnderDamping) {
    auto disc = cavity_disc(8, 4);
    Assembler as(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    const SolveResult r = newton_solve(as, as.initial_state(), {});
    ASSERT_TRUE(r.report.converged);
    const auto& h = r.report.residual_history;
    for (std::size_t k = 1; k < h.size(); ++k) EXPECT_LT(h[k], h[k - 1]);
    for (double b : r.report.backward_errors) EXPECT_LE(b, kBackwardErrorBound);
}

TEST(Newton, SolutionIndependentOfDampingPath) {
    auto disc = cavity_disc(8, 4);
    Assembler as(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    NewtonConfig a, b;
    b.backtrack = 0.3;
    b.armijo = 0.2;
    // a large parameter jump so that damping is active
    const Eigen::VectorXd x0 = solve_coupled(as, as.initial_state(), {}).state;
    ModelParams far = cavity_params();
    far.Re = 400;
    far.beta = 80;
    as.set_params(far);
    const SolveResult ra = newton_solve(as, x0, a);
    const SolveResult rb = newton_solve(as, x0, b);
    ASSERT_TRUE(ra.report.converged) << ra.report.message;
    ASSERT_TRUE(rb.report.converged) << rb.report.message;
    EXPECT_LT(*std::min_element(ra.report.step_lengths.begin(), ra.report.step_lengths.end()), 1.0);
    EXPECT_NE(ra.report.step_lengths, rb.report.step_lengths);
    EXPECT_LE((ra.state - rb.state).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(Newton, WarmStartRestoresFrozenMask) {
    auto disc = cavity_disc(8, 4);
    Assembler as(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    as.set_frozen(kFreezeNone);
    const SolveResult w = decoupled_warm_start(as, as.initial_state(), {});
    EXPECT_TRUE(w.report.converged);
    EXPECT_EQ(as.frozen(), static_cast<unsigned>(kFreezeNone));
    const SolveResult r = solve_coupled(as, as.initial_state(), {});
    EXPECT_TRUE(r.report.converged);
    EXPECT_GT(r.report.iterations, 0);
}

TEST(Continuation, SingleStageEqualsNewton) {
    auto disc = cavity_disc(8, 4);
    Assembler as(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    const SolveResult base = solve_coupled(as, as.initial_state(), {});
    ASSERT_TRUE(base.report.converged);
    ModelParams target = cavity_params();
    target.Re = 150;
    const ContinuationResult c = continuation_solve(as, base.state, target, 1, {});
    ASSERT_TRUE(c.converged());
    Assembler ref(disc, target, CoefficientLaws::alumina(), cavity_case());
    const SolveResult direct = newton_solve(ref, base.state, {});
    EXPECT_EQ(c.state, direct.state);
    EXPECT_EQ(c.reached.Re, 150.0);
    EXPECT_EQ(as.params().Re, 150.0);
}

TEST(Continuation, EmptyRampReturnsInitialState) {
    auto disc = cavity_disc(4, 2);
    Assembler as(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    std::mt19937 rng(1);
    const Eigen::VectorXd x = support::random_state(disc->layout, rng);
    const ContinuationResult c = continuation_solve(as, x, cavity_params(), 0, {});
    EXPECT_TRUE(c.converged());
    EXPECT_EQ(c.state, x);
    EXPECT_TRUE(c.stages.empty());
    EXPECT_THROW(continuation_solve(as, x, cavity_params(), -1, {}), std::invalid_argument);
}

TEST(Continuation, RampReachesTargetAndReportsFailure) {
    auto disc = cavity_disc(8, 4);
    Assembler as(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    const SolveResult base = solve_coupled(as, as.initial_state(), {});
    ModelParams target = cavity_params();
    target.Re = 400;
    target.beta = 8;
    const ContinuationResult c = continuation_solve(as, base.state, target, 3, {});
    ASSERT_TRUE(c.converged());
    EXPECT_EQ(c.stages.size(), 3u);
    EXPECT_EQ(c.reached.Re, 400.0);
    EXPECT_EQ(c.reached.beta, 8.0);

    Assembler again(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case());
    NewtonConfig none;
    none.max_iters = 0;
    const ContinuationResult f = continuation_solve(again, base.state, target, 3, none);
    EXPECT_FALSE(f.converged());
    EXPECT_EQ(f.failed_stage, 1);
    EXPECT_EQ(f.reached.Re, 100.0);
    EXPECT_EQ(again.params().Re, 100.0);
    EXPECT_EQ(f.state, base.state);
}
