#include "nanoflow/solver.hpp"

#include <Eigen/SparseLU>
#ifdef NANOFLOW_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>

namespace nanoflow {

namespace {

double inf_norm(const Eigen::SparseMatrix<double>& A) {
    Eigen::VectorXd rows = Eigen::VectorXd::Zero(A.rows());
    for (int c = 0; c < A.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, c); it; ++it) rows[it.row()] += std::abs(it.value());
    }
    return rows.size() ? rows.maxCoeff() : 0.0;
}

std::optional<Block> empty_line_block(const Eigen::SparseMatrix<double>& A, const Layout* layout) {
    if (!layout || layout->size != A.rows()) return std::nullopt;
    std::vector<char> row_hit(static_cast<std::size_t>(A.rows()), 0);
    std::optional<int> bad;
    for (int c = 0; c < A.outerSize(); ++c) {
        bool col_hit = false;
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, c); it; ++it) {
            if (it.value() != 0.0) {
                col_hit = true;
                row_hit[static_cast<std::size_t>(it.row())] = 1;
            }
        }
        if (!col_hit && !bad) bad = c;
    }
    for (int r = 0; r < A.rows() && !bad; ++r) {
        if (!row_hit[static_cast<std::size_t>(r)]) bad = r;
    }
    if (!bad) return std::nullopt;
    return layout->block_of(*bad);
}

[[noreturn]] void fail_singular(const Eigen::SparseMatrix<double>& A, const Layout* layout, const std::string& what) {
    const auto block = empty_line_block(A, layout);
    std::string msg = "linear solve failed: " + what;
    if (block) {
        msg += "; empty row/column in block '" + std::string(to_string(*block)) + "'";
    } else {
        msg += "; matrix is numerically singular";
    }
    throw SolverError(msg, block);
}

}  // namespace

double backward_error(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
    const double denom = inf_norm(A) * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>();
    const double r = (A * x - b).lpNorm<Eigen::Infinity>();
    return denom > 0.0 ? r / denom : r;
}

struct LinearSolver::Impl {
#ifdef NANOFLOW_HAVE_UMFPACK
    Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu;
#else
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
#endif
    std::uint64_t pattern_hash = 0;
    bool analyzed = false;

    Impl() {
#ifdef NANOFLOW_HAVE_UMFPACK
        lu.umfpackControl()(UMFPACK_ORDERING) = UMFPACK_ORDERING_CHOLMOD;
#endif
    }

    static std::uint64_t hash(const Eigen::SparseMatrix<double>& A) {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const int* p, Eigen::Index n) {
            for (Eigen::Index i = 0; i < n; ++i) h = (h ^ static_cast<std::uint32_t>(p[i])) * 1099511628211ull;
        };
        mix(A.outerIndexPtr(), A.outerSize() + 1);
        mix(A.innerIndexPtr(), A.nonZeros());
        return h;
    }

    std::string status() const {
#ifdef NANOFLOW_HAVE_UMFPACK
        const int code = lu.umfpackFactorizeReturncode();
        if (code == UMFPACK_ERROR_out_of_memory) return " (UMFPACK: out of memory)";
        return " (UMFPACK status " + std::to_string(code) + ")";
#else
        return {};
#endif
    }
};

LinearSolver::LinearSolver() : impl_(std::make_unique<Impl>()) {}
LinearSolver::~LinearSolver() = default;
LinearSolver::LinearSolver(LinearSolver&&) noexcept = default;
LinearSolver& LinearSolver::operator=(LinearSolver&&) noexcept = default;

const char* LinearSolver::backend() {
#ifdef NANOFLOW_HAVE_UMFPACK
    return "umfpack";
#else
    return "eigen-sparselu";
#endif
}

Eigen::VectorXd LinearSolver::solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                                    const Layout* layout, LinearSolveInfo* info) {
    if (A.rows() != A.cols() || A.rows() != b.size()) {
        throw std::invalid_argument("LinearSolver: dimension mismatch");
    }
    if (!A.isCompressed()) throw std::invalid_argument("LinearSolver: matrix must be compressed");
    auto& lu = impl_->lu;
    const std::uint64_t h = Impl::hash(A);
    if (!impl_->analyzed || h != impl_->pattern_hash) {
        lu.analyzePattern(A);
        impl_->pattern_hash = h;
        impl_->analyzed = lu.info() == Eigen::Success;
        if (!impl_->analyzed) fail_singular(A, layout, "symbolic analysis");
    }
    lu.factorize(A);
    if (lu.info() != Eigen::Success) fail_singular(A, layout, "factorization" + impl_->status());

    Eigen::VectorXd x = lu.solve(b);
    if (!x.allFinite()) fail_singular(A, layout, "non-finite solution");
    double berr = backward_error(A, x, b);
    int steps = 0;
    while (berr > kBackwardErrorBound && steps < 3) {
        const Eigen::VectorXd r = b - A * x;
        x += lu.solve(r);
        berr = backward_error(A, x, b);
        ++steps;
    }
    if (info) *info = {berr, steps};
    return x;
}

Eigen::VectorXd linear_solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b, const Layout* layout,
                             LinearSolveInfo* info) {
    LinearSolver solver;
    return solver.solve(A, b, layout, info);
}

void NewtonConfig::validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw std::invalid_argument("NewtonConfig: tolerances must be positive");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw std::invalid_argument("NewtonConfig: backtrack must be in (0,1)");
    if (max_iters < 0 || max_halvings < 0) throw std::invalid_argument("NewtonConfig: negative iteration limits");
}

namespace {

void fill_phi_range(const Assembler& as, const Eigen::VectorXd& x, SolveReport& rep) {
    const Layout& L = as.layout();
    const auto phi = x.segment(L.phi, L.n_scalar);
    rep.phi_min = phi.minCoeff();
    rep.phi_max = phi.maxCoeff();
}

}  // namespace

SolveResult newton_solve(const Assembler& assembler, Eigen::VectorXd x, const NewtonConfig& config) {
    config.validate();
    SolveResult out;
    SolveReport& rep = out.report;
    if (!x.allFinite()) throw std::invalid_argument("newton_solve: initial state is not finite");

    LinearSolver solver;
    Eigen::VectorXd r = assembler.assemble_residual(x);
    double norm = r.norm();
    rep.residual_history.push_back(norm);
    const double tol = std::max(config.abs_tol, config.rel_tol * norm);
    if (config.log) *config.log << "  newton 0: |F| = " << norm << '\n';

    for (int it = 0; it < config.max_iters && norm > tol; ++it) {
        if (!std::isfinite(norm)) break;
        const SparseSystem sys = assembler.assemble_jacobian(x);
        LinearSolveInfo info;
        const Eigen::VectorXd dx = solver.solve(sys.matrix, -sys.rhs, &sys.layout, &info);
        rep.backward_errors.push_back(info.backward_error);

        double step = 1.0;
        Eigen::VectorXd trial;
        double trial_norm = 0.0;
        for (int h = 0;; ++h) {
            trial = x + step * dx;
            trial_norm = assembler.assemble_residual(trial).norm();
            const bool ok = std::isfinite(trial_norm) && trial_norm <= (1.0 - config.armijo * step) * norm;
            if (ok || h >= config.max_halvings) break;
            step *= config.backtrack;
        }
        if (!std::isfinite(trial_norm)) {
            rep.message = "non-finite residual at minimum step";
            break;
        }
        x = std::move(trial);
        norm = trial_norm;
        rep.iterations = it + 1;
        rep.residual_history.push_back(norm);
        rep.step_lengths.push_back(step);
        if (config.log) {
            *config.log << "  newton " << rep.iterations << ": |F| = " << norm << "  step = " << step
                        << "  berr = " << info.backward_error << '\n';
        }
    }
    rep.converged = std::isfinite(norm) && norm <= tol;
    if (!rep.converged && rep.message.empty()) rep.message = "maximum Newton iterations reached";
    fill_phi_range(assembler, x, rep);
    out.state = std::move(x);
    return out;
}

SolveResult decoupled_warm_start(Assembler& assembler, Eigen::VectorXd x, const NewtonConfig& config) {
    const unsigned saved = assembler.frozen();
    SolveResult last;
    last.state = std::move(x);
    std::vector<unsigned> passes;
    if (!assembler.setup().phi_dirichlet.empty()) passes.push_back(kFreezeT | kFreezeFlow);
    passes.push_back(kFreezePhi | kFreezeFlow);
    passes.push_back(kFreezePhi | kFreezeT);
    SolveReport combined;
    try {
        for (unsigned mask : passes) {
            assembler.set_frozen(mask);
            last = newton_solve(assembler, std::move(last.state), config);
            combined.iterations += last.report.iterations;
            combined.residual_history.insert(combined.residual_history.end(), last.report.residual_history.begin(),
                                             last.report.residual_history.end());
            if (!last.report.converged) {
                combined.message = "decoupled pass did not converge: " + last.report.message;
                break;
            }
        }
    } catch (...) {
        assembler.set_frozen(saved);
        throw;
    }
    assembler.set_frozen(saved);
    combined.converged = last.report.converged;
    combined.phi_min = last.report.phi_min;
    combined.phi_max = last.report.phi_max;
    last.report = std::move(combined);
    return last;
}

SolveResult solve_coupled(Assembler& assembler, Eigen::VectorXd initial, const NewtonConfig& config,
                          bool warm_start) {
    if (!warm_start) return newton_solve(assembler, std::move(initial), config);
    SolveResult pre = decoupled_warm_start(assembler, std::move(initial), config);
    SolveResult out = newton_solve(assembler, std::move(pre.state), config);
    out.report.iterations += pre.report.iterations;
    return out;
}

ContinuationResult continuation_solve(Assembler& assembler, Eigen::VectorXd initial, const ModelParams& target,
                                      int steps, const NewtonConfig& config) {
    if (steps < 0) throw std::invalid_argument("continuation_solve: negative step count");
    target.validate();
    ContinuationResult out;
    out.state = std::move(initial);
    out.reached = assembler.params();
    if (steps == 0) {
        out.report.converged = true;
        out.report.message = "empty ramp";
        return out;
    }
    const ModelParams start = assembler.params();
    for (int s = 1; s <= steps; ++s) {
        const double th = static_cast<double>(s) / steps;
        ModelParams stage = target;
        if (s < steps) {
            stage.Re = start.Re + th * (target.Re - start.Re);
            stage.beta = start.beta + th * (target.beta - start.beta);
            const double inv = 1.0 / start.N_BT + th * (1.0 / target.N_BT - 1.0 / start.N_BT);
            stage.N_BT = 1.0 / inv;
        }
        assembler.set_params(stage);
        if (config.log) *config.log << "continuation stage " << s << "/" << steps << ": Re = " << stage.Re << '\n';
        SolveResult r = newton_solve(assembler, out.state, config);
        out.stages.push_back(r.report);
        out.report = r.report;
        if (!r.report.converged) {
            out.failed_stage = s;
            assembler.set_params(out.reached);
            return out;
        }
        out.state = std::move(r.state);
        out.reached = stage;
    }
    return out;
}

}  // namespace nanoflow
