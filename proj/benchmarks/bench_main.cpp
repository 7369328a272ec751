#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "spoofsim/attack.hpp"
#include "spoofsim/detectors.hpp"
#include "spoofsim/grid.hpp"
#include "spoofsim/hankel.hpp"
#include "spoofsim/harness.hpp"

using namespace spoofsim;

namespace {

std::vector<double> sinusoid(std::size_t n) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = std::sin(0.07 * static_cast<double>(i)) + 0.3;
  return s;
}

void BM_PredictNext(benchmark::State& state) {
  const auto w = hankel::HankelWindow::with_default_rows(sinusoid(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(hankel::predict_next(w, hankel::RankRule{}));
}
BENCHMARK(BM_PredictNext)->Arg(40)->Arg(100)->Arg(200);

void BM_PredictHorizon(benchmark::State& state) {
  const auto w = hankel::HankelWindow::with_default_rows(sinusoid(100));
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(hankel::predict_horizon(w, k, hankel::RankRule{}));
}
BENCHMARK(BM_PredictHorizon)->Arg(9)->Arg(30);

void BM_LowRankApprox(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd h(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) h(i, j) = nd(rng);
  for (auto _ : state) benchmark::DoNotOptimize(hankel::low_rank_approx(h, 3));
}
BENCHMARK(BM_LowRankApprox)->Arg(20)->Arg(50)->Arg(100);

void BM_SolveAttackStep(benchmark::State& state) {
  const GridModel g = grid::load_ieee24_rts();
  const Eigen::MatrixXd f = attack::compute_f_matrix(grid::reduced_jacobian(g)).f;
  attack::StepProblem pb;
  pb.effect = f.leftCols(2);
  pb.zeta = 0.01;
  pb.epsilon = 5e-4;
  pb.headroom = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(attack::solve_attack_step(pb));
}
BENCHMARK(BM_SolveAttackStep);

void BM_WlsEstimate(benchmark::State& state) {
  const GridModel g = grid::load_ieee24_rts();
  const auto model = detect::MeasurementModel::from_grid(g, 0.5);
  Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(model.h.rows(), -0.5, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(detect::wls_estimate(model, z));
}
BENCHMARK(BM_WlsEstimate);

void BM_FullScenario(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(harness::run_paper_scenario(ScenarioConfig{}));
}
BENCHMARK(BM_FullScenario)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace
BENCHMARK_MAIN();
