#include "bsdekit/losses.hpp"
#include "bsdekit/optimizer.hpp"
#include "bsdekit/pde_suite.hpp"

#include <benchmark/benchmark.h>

using namespace bsde;

namespace {

/// Loss plus gradient on the BSB problem; range(0) is the dimension.
void loss_eval(benchmark::State& state, LossKind kind) {
    const int dim = static_cast<int>(state.range(0));
    ProblemOptions po;
    po.dim = dim;
    const ProblemPtr bsb = make_problem("bsb", po);
    const auto m = std::make_shared<FeatureLinear>(dim, bsb->horizon());
    LossSpec s;
    s.kind = kind;
    s.grid = TimeGrid::over(bsb->horizon(), 50);
    s.batch = 64;
    s.fit_paths = 200;
    const Objective obj(bsb, m, s);
    const Vec theta = initial_parameters(m->param_dim(), 0);
    std::int64_t iter = 0;
    for (auto _ : state) {
        LossValue lv = obj(theta, iter++);
        benchmark::DoNotOptimize(lv.value);
    }
    state.SetItemsProcessed(state.iterations() * s.batch * 50);
}

void BM_LossEM(benchmark::State& s) { loss_eval(s, LossKind::EM); }
void BM_LossHeun(benchmark::State& s) { loss_eval(s, LossKind::Heun); }
void BM_LossPINNs(benchmark::State& s) { loss_eval(s, LossKind::PINNs); }

}  // namespace

BENCHMARK(BM_LossEM)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LossHeun)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LossPINNs)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
