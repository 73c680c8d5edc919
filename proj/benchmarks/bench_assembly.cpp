#include "nanoflow/app.hpp"

#include <benchmark/benchmark.h>

using namespace nanoflow;

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

struct Fixture {
    explicit Fixture(int n)
        : disc(std::make_shared<const Discretization>(cavity_mesh(2 * n, n), 2, true)),
          assembler(disc, cavity_params(), CoefficientLaws::alumina(), cavity_case()),
          state(assembler.initial_state()) {}
    std::shared_ptr<const Discretization> disc;
    Assembler assembler;
    Eigen::VectorXd state;
};

void BM_Residual(benchmark::State& st) {
    Fixture f(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(f.assembler.assemble_residual(f.state));
    st.counters["unknowns"] = f.disc->layout.size;
}

void BM_Jacobian(benchmark::State& st) {
    Fixture f(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(f.assembler.assemble_jacobian(f.state));
    st.counters["unknowns"] = f.disc->layout.size;
}

void BM_LinearSolve(benchmark::State& st) {
    Fixture f(static_cast<int>(st.range(0)));
    const SparseSystem sys = f.assembler.assemble_jacobian(f.state);
    LinearSolver solver;
    for (auto _ : st) benchmark::DoNotOptimize(solver.solve(sys.matrix, sys.rhs, &sys.layout));
    st.counters["unknowns"] = f.disc->layout.size;
}

}  // namespace

BENCHMARK(BM_Residual)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Jacobian)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinearSolve)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
