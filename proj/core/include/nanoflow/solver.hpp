#pragma once

/// @file solver.hpp
/// @brief Sparse direct linear solves, damped Newton, parameter continuation.

#include "nanoflow/assembly.hpp"

#include <Eigen/SparseCore>

#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nanoflow {

/// Raised when the linear system is singular. `block()` names the first
/// block with an empty row or column when one exists.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, std::optional<Block> block)
        : std::runtime_error(what), block_(block) {}
    [[nodiscard]] std::optional<Block> block() const { return block_; }

private:
    std::optional<Block> block_;
};

struct LinearSolveInfo {
    /// ||A x - b||_inf / (||A||_inf ||x||_inf + ||b||_inf)
    double backward_error = 0.0;
    int refinement_steps = 0;
};

inline constexpr double kBackwardErrorBound = 1e-10;

/// Direct LU solver (UMFPACK when available, Eigen SparseLU otherwise).
/// The symbolic analysis is reused while the sparsity pattern is unchanged.
class LinearSolver {
public:
    LinearSolver();
    ~LinearSolver();
    LinearSolver(LinearSolver&&) noexcept;
    LinearSolver& operator=(LinearSolver&&) noexcept;

    /// Solves A x = b with up to three steps of iterative refinement until the
    /// backward error drops below kBackwardErrorBound.
    Eigen::VectorXd solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                          const Layout* layout = nullptr, LinearSolveInfo* info = nullptr);

    static const char* backend();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

Eigen::VectorXd linear_solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                             const Layout* layout = nullptr, LinearSolveInfo* info = nullptr);
inline Eigen::VectorXd linear_solve(const SparseSystem& sys, LinearSolveInfo* info = nullptr) {
    return linear_solve(sys.matrix, sys.rhs, &sys.layout, info);
}

double backward_error(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& x, const Eigen::VectorXd& b);

struct NewtonConfig {
    double abs_tol = 1e-10;
    double rel_tol = 1e-12;
    int max_iters = 30;
    /// Armijo backtracking: step *= backtrack until sufficient decrease,
    /// at most max_halvings times (minimum step backtrack^max_halvings).
    double backtrack = 0.5;
    int max_halvings = 10;
    double armijo = 1e-4;
    std::ostream* log = nullptr;

    void validate() const;
};

struct SolveReport {
    int iterations = 0;
    std::vector<double> residual_history;
    std::vector<double> step_lengths;
    std::vector<double> backward_errors;
    bool converged = false;
    double phi_min = 0.0;
    double phi_max = 0.0;
    std::string message;

    [[nodiscard]] double final_residual() const {
        return residual_history.empty() ? 0.0 : residual_history.back();
    }
};

struct SolveResult {
    Eigen::VectorXd state;
    SolveReport report;
};

/// Damped Newton on assembler.assemble_residual with the exact Jacobian.
/// Converged when ||F|| <= max(abs_tol, rel_tol * ||F(initial)||).
/// Exhausting max_iters gives a non-converged report, not an exception.
SolveResult newton_solve(const Assembler& assembler, Eigen::VectorXd initial, const NewtonConfig& config);

/// One decoupled pass before the coupled solve: phi alone (when it carries
/// Dirichlet data), then temperature with phi frozen, then the flow with
/// phi and T frozen. The assembler's frozen mask is restored on exit.
SolveResult decoupled_warm_start(Assembler& assembler, Eigen::VectorXd initial, const NewtonConfig& config);

/// Decoupled warm start (optional) followed by the coupled Newton solve.
/// The report accumulates the iterations of both phases.
SolveResult solve_coupled(Assembler& assembler, Eigen::VectorXd initial, const NewtonConfig& config,
                          bool warm_start = true);

struct ContinuationResult {
    Eigen::VectorXd state;           // last converged state
    SolveReport report;              // report of the last attempted stage
    std::vector<SolveReport> stages;
    ModelParams reached;             // parameters of the last converged stage
    int failed_stage = -1;
    [[nodiscard]] bool converged() const { return failed_stage < 0; }
};

/// Linear ramp of (Re, beta, 1/N_BT) from the assembler's current parameters
/// to `target` in `steps` stages, warm-starting each stage from the previous
/// one. All other parameters are taken from `target` at every stage. With
/// zero steps the initial state is returned unchanged.
ContinuationResult continuation_solve(Assembler& assembler, Eigen::VectorXd initial, const ModelParams& target,
                                      int steps, const NewtonConfig& config);

}  // namespace nanoflow
