#include <algorithm>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "sse/fusion.hpp"
#include "sse/scenarios.hpp"
#include "test_support.hpp"

using namespace sse;

namespace {

const EstimatorBank& heat_bank() {
  static const EstimatorBank bank = [] {
    BankOptions o;
    o.rho = 1;
    return EstimatorBank::build(heat_plant().sys, o);
  }();
  return bank;
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x(i++) = d;
  return x;
}

}  // namespace

TEST(EnumerateSubsets, Examples) {
  const auto all = enumerate_subsets(3, 1);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0], SensorSet({1, 2}));
  EXPECT_EQ(all[1], SensorSet({1, 3}));
  EXPECT_EQ(all[2], SensorSet({2, 3}));
  EXPECT_EQ(enumerate_subsets(35, 1).size(), 35u);
  const auto kept = enumerate_subsets(3, 1, SensorSet({1}));
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0], SensorSet({1, 2}));
  EXPECT_EQ(kept[1], SensorSet({1, 3}));
  EXPECT_THROW(enumerate_subsets(3, 3), DimensionError);
  EXPECT_THROW(enumerate_subsets(3, -1), DimensionError);
  EXPECT_THROW(enumerate_subsets(3, 1, SensorSet({1, 2, 3})), DimensionError);
  EXPECT_THROW(enumerate_subsets(3, 1, SensorSet({4})), DimensionError);
}

TEST(EnumerateSubsets, CountsAndOrder) {
  for (int m = 1; m <= 8; ++m) {
    for (int rho = 0; rho < m; ++rho) {
      const auto s = enumerate_subsets(m, rho);
      long expected = 1;
      for (int k = 1; k <= rho; ++k) expected = expected * (m - rho + k) / k;
      EXPECT_EQ(static_cast<long>(s.size()), expected);
      EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
      for (const auto& I : s) EXPECT_EQ(I.size(), m - rho);
    }
  }
}

TEST(Fuse, Examples) {
  const std::vector<VectorXd> sym{vec({1.0}), vec({3.0}), vec({2.0})};
  EXPECT_DOUBLE_EQ(fuse(sym, SignalNorm::kInf)(0), 2.0);
  EXPECT_DOUBLE_EQ(fuse(sym, SignalNorm::kTwo)(0), 2.0);
  const std::vector<VectorXd> skew{vec({0.0}), vec({1.0}), vec({5.0})};
  EXPECT_DOUBLE_EQ(fuse(skew, SignalNorm::kInf)(0), 2.5);
  EXPECT_DOUBLE_EQ(fuse(skew, SignalNorm::kTwo)(0), 2.0);
  const std::vector<VectorXd> one{vec({-1.5, 4.0})};
  EXPECT_EQ(fuse(one, SignalNorm::kInf), one[0]);
  EXPECT_EQ(fuse(one, SignalNorm::kTwo), one[0]);
  EXPECT_THROW(fuse(std::vector<VectorXd>{}, SignalNorm::kInf), NoValidEstimators);
}

TEST(Fuse, StaysInsideHull) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<VectorXd> est;
    const int k = 1 + trial % 7;
    for (int i = 0; i < k; ++i) est.push_back(sse::testing::random_matrix(4, 1, rng, 10.0));
    for (const SignalNorm q : {SignalNorm::kTwo, SignalNorm::kInf}) {
      const VectorXd f = fuse(est, q);
      for (int c = 0; c < 4; ++c) {
        double lo = est[0](c), hi = est[0](c);
        for (const auto& e : est) lo = std::min(lo, e(c)), hi = std::max(hi, e(c));
        EXPECT_GE(f(c), lo - 1e-12);
        EXPECT_LE(f(c), hi + 1e-12);
      }
    }
  }
}

TEST(BuildBank, UgvStrictNamesVelocityOnlySubset) {
  BankOptions o;
  o.rho = 1;
  try {
    EstimatorBank::build(ugv_plant().sys, o);
    FAIL() << "expected NotDetectable";
  } catch (const NotDetectable& e) {
    EXPECT_EQ(e.subset(), "{2,3}");
    EXPECT_NEAR(e.witness().real(), 1.0, 1e-9);
  }
}

TEST(BuildBank, UgvLenientKeepsPositionSensor) {
  BankOptions o;
  o.rho = 1;
  o.mode = BankMode::kLenient;
  o.protected_sensors = SensorSet({1});
  const EstimatorBank bank = EstimatorBank::build(ugv_plant().sys, o);
  ASSERT_EQ(bank.observers().size(), 2u);
  EXPECT_EQ(bank.observers()[0].subset(), SensorSet({1, 2}));
  EXPECT_EQ(bank.observers()[1].subset(), SensorSet({1, 3}));
  EXPECT_FALSE(bank.rho_detectability().detectable);
  EXPECT_FALSE(bank.two_rho_detectability().detectable);

  // Without protection the undetectable subset is dropped and recorded.
  o.protected_sensors = SensorSet{};
  const EstimatorBank open = EstimatorBank::build(ugv_plant().sys, o);
  EXPECT_EQ(open.observers().size(), 2u);
  ASSERT_EQ(open.dropped().size(), 1u);
  EXPECT_EQ(open.dropped()[0], SensorSet({2, 3}));

  o.rho = 2;
  o.protected_sensors = SensorSet({2});
  EXPECT_THROW(EstimatorBank::build(ugv_plant().sys, o), NoViableSubsets);
}

TEST(BuildBank, HeatHasTwentyObservers) {
  const EstimatorBank& bank = heat_bank();
  EXPECT_EQ(bank.observers().size(), 20u);
  EXPECT_TRUE(bank.rho_detectability().detectable);
  EXPECT_TRUE(bank.two_rho_detectability().detectable);
  EXPECT_TRUE(bank.dropped().empty());
  for (const auto& obs : bank.observers()) EXPECT_EQ(obs.subset().size(), 19);
}

TEST(BuildBank, RejectsEmptyPairs) {
  BankOptions o;
  o.pairs.clear();
  EXPECT_THROW(EstimatorBank::build(sse::testing::scalar_system(0.5, 1, 1, 0), o),
               DimensionError);
}

TEST(BankStep, ZeroInputsGiveZeroEstimate) {
  EstimatorBank bank = heat_bank();
  for (int t = 0; t < 30; ++t) {
    const GlobalEstimate g = bank.step(VectorXd::Zero(20));
    EXPECT_EQ(g.t, t);
    EXPECT_TRUE(g.estimate.isZero(0.0));
    EXPECT_EQ(g.valid_count, 20);
    EXPECT_TRUE(g.newly_invalidated.empty());
  }
  EXPECT_THROW(bank.step(VectorXd::Zero(19)), DimensionError);
  VectorXd bad = VectorXd::Zero(20);
  bad(3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(bank.step(bad), DimensionError);
}

TEST(BankStep, AllInvalidatedRaises) {
  BankOptions o;
  o.rho = 0;
  o.pairs = {NormPair::inf_inf()};
  EstimatorBank bank = EstimatorBank::build(sse::testing::scalar_system(0.5, 1, 1, 0), o);
  EXPECT_THROW(bank.step(VectorXd::Constant(1, 1e6)), NoValidEstimators);
}

TEST(BankStep, AttackedSensorOnlyInvalidatesItsSubsets) {
  const Plant plant = heat_plant();
  const long T = 100;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SensorSet target = choose_attack_targets(plant, 1, derive_seed(seed, 1));
    const Disturbance d = uniform_disturbance(plant.sys.l(), T, derive_seed(seed, 2));
    const auto a = gaussian_attack(20, target, 1e4, T, derive_seed(seed, 3), 1);
    const SimulationTrace tr = simulate(plant.sys, d.samples, a, T);
    BankOptions o = heat_bank().options();
    o.w_bound = d.bound;
    EstimatorBank run = EstimatorBank::build(plant.sys, o);
    const EstimateTrace trace = run_bank(run, tr.y);
    ASSERT_EQ(trace.steps.size(), static_cast<std::size_t>(T));
    int invalidated = 0;
    int last = 20;
    for (const auto& g : trace.steps) {
      EXPECT_LE(g.valid_count, last);
      last = g.valid_count;
      for (const auto& I : g.newly_invalidated) {
        EXPECT_TRUE(target.is_subset_of(I)) << I.to_string();
        ++invalidated;
      }
    }
    EXPECT_GE(invalidated, 1);
    const SensorSet benign = target.complement(20);
    for (const auto& obs : run.observers()) {
      if (obs.subset() == benign) EXPECT_TRUE(obs.valid());
    }
  }
}

TEST(RunBank, TraceStructure) {
  EstimatorBank bank = heat_bank();
  EXPECT_TRUE(run_bank(bank, {}).steps.empty());
  EXPECT_EQ(bank.time(), 0);

  const Plant ugv = ugv_plant();
  BankOptions o;
  o.mode = BankMode::kLenient;
  o.protected_sensors = SensorSet({1});
  const Disturbance d = uniform_disturbance(5, 100, 4);
  o.w_bound = d.bound;
  EstimatorBank ub = EstimatorBank::build(ugv.sys, o);
  const SimulationTrace tr = simulate(ugv.sys, d.samples, zero_attack(3, 100), 100);
  const EstimateTrace trace = run_bank(ub, tr.y);
  ASSERT_EQ(trace.steps.size(), 100u);
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& g = trace.steps[t];
    EXPECT_EQ(g.t, static_cast<long>(t));
    EXPECT_EQ(g.valid_count, static_cast<int>(g.valid_observers.size()));
    EXPECT_EQ(g.local_estimates.size(), g.valid_observers.size());
  }
  EXPECT_EQ(trace.steps.back().valid_count, ub.valid_count());
}

TEST(RunBank, FusesPreUpdateEstimates) {
  const Plant ugv = ugv_plant();
  BankOptions o;
  o.mode = BankMode::kLenient;
  o.protected_sensors = SensorSet({1});
  o.fusion = SignalNorm::kTwo;
  const Disturbance d = uniform_disturbance(5, 20, 9);
  o.w_bound = d.bound;
  EstimatorBank bank = EstimatorBank::build(ugv.sys, o);
  std::vector<LocalObserver> mirror(bank.observers().begin(), bank.observers().end());
  const SimulationTrace tr = simulate(ugv.sys, d.samples, zero_attack(3, 20), 20);
  for (long t = 0; t < 20; ++t) {
    VectorXd mean = VectorXd::Zero(2);
    for (const auto& obs : mirror) mean += obs.estimate();
    mean /= static_cast<double>(mirror.size());
    const GlobalEstimate g = bank.step(tr.y[t]);
    EXPECT_LE((g.estimate - mean).cwiseAbs().maxCoeff(), 1e-12);
    for (auto& obs : mirror) obs.step(ProjectionMap(obs.subset(), 3).apply(tr.y[t]));
  }
}

TEST(EstimateTrace, CsvLayout) {
  EstimateTrace trace;
  GlobalEstimate g;
  g.t = 0;
  g.estimate = vec({1.5, -0.0});
  g.valid_count = 2;
  g.newly_invalidated = {SensorSet({1, 3}), SensorSet({2, 3})};
  trace.steps.push_back(g);
  g.t = 1;
  g.newly_invalidated.clear();
  trace.steps.push_back(g);
  std::ostringstream os;
  trace.write_csv(os, 2);
  EXPECT_EQ(os.str(),
            "t,xhat_1,xhat_2,valid_count,invalidated_subsets\n"
            "0,1.5,0,2,1 3;2 3\n"
            "1,1.5,0,2,\n");
}
