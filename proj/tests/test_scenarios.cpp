#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "sse/scenarios.hpp"
#include "test_support.hpp"

using namespace sse;

TEST(UgvPlant, MatchesMatrixExponential) {
  const double mass = 0.8, friction = 1.0, ts = 0.1;
  const Plant ugv = ugv_plant(mass, friction, ts);
  // [[Ac, b], [0, 0]] exponentiated gives A and the zero-order-hold input.
  MatrixXd aug = MatrixXd::Zero(3, 3);
  aug(0, 1) = 1.0;
  aug(1, 1) = -friction / mass;
  aug(1, 2) = 1.0 / mass;
  const MatrixXd E = (aug * ts).exp();
  EXPECT_LE((ugv.sys.A() - E.topLeftCorner(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_TRUE(ugv.input_matrix.has_value());
  EXPECT_LE((*ugv.input_matrix - E.topRightCorner(2, 1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(ugv.sys.A()(0, 1), 0.0940025, 1e-7);
  EXPECT_NEAR(ugv.sys.A()(1, 1), 0.8824969, 1e-7);

  EXPECT_EQ(ugv.sys.m(), 3);
  EXPECT_EQ(ugv.sys.l(), 5);
  MatrixXd D = MatrixXd::Zero(3, 5);
  D.rightCols(3).setIdentity();
  EXPECT_EQ(ugv.sys.D(), D);
  EXPECT_EQ(ugv.critical, SensorSet({1}));
  EXPECT_THROW(ugv_plant(0.0), DimensionError);

  for (const double m2 : {0.5, 2.0}) {
    aug(1, 1) = -friction / m2;
    aug(1, 2) = 1.0 / m2;
    EXPECT_LE((ugv_plant(m2, friction, ts).sys.A() - (aug * ts).exp().topLeftCorner(2, 2))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
  }
}

TEST(HeatPlant, ConservesConstantField) {
  const Plant heat = heat_plant();
  const LtiSystem& s = heat.sys;
  EXPECT_EQ(s.n(), 25);
  EXPECT_EQ(s.m(), 20);
  EXPECT_EQ(s.l(), 29);
  EXPECT_LE((s.A().rowwise().sum() - VectorXd::Ones(25)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(heat.critical.empty());
  EXPECT_EQ(heat.sampling_interval, 1.0);

  Eigen::EigenSolver<MatrixXd> eig(s.A());
  int unit = 0;
  for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) {
    const auto z = eig.eigenvalues()(k);
    EXPECT_NEAR(z.imag(), 0.0, 1e-9);
    if (std::abs(z.real() - 1.0) < 1e-9) {
      ++unit;
    } else {
      EXPECT_GT(z.real(), 0.0);
      EXPECT_LT(z.real(), 1.0);
    }
  }
  EXPECT_EQ(unit, 1);
  EXPECT_NEAR(spectral_radius(s.A()), 1.0, 1e-12);
  EXPECT_TRUE(chi_detectable(s, 2).detectable);
}

TEST(HeatPlant, EveryRowOfCSensesOneCell) {
  const LtiSystem s = heat_plant().sys;
  for (int i = 0; i < s.m(); ++i) {
    EXPECT_EQ(s.C().row(i).sum(), 1.0);
    EXPECT_EQ(s.C().row(i).cwiseAbs().maxCoeff(), 1.0);
  }
  EXPECT_EQ(s.B().colwise().sum().head(9), VectorXd::Ones(9).transpose());
  EXPECT_TRUE(s.B().rightCols(20).isZero(0.0));
  EXPECT_TRUE(s.D().leftCols(9).isZero(0.0));
  EXPECT_EQ(MatrixXd(s.D().rightCols(20)), MatrixXd::Identity(20, 20));
}

TEST(HeatPlant, RejectsUnstableStep) {
  EXPECT_THROW(heat_plant(0.1, 4.0, 5, 10.0), DimensionError);
  EXPECT_THROW(heat_plant(0.1, 4.0, 2), DimensionError);
}

TEST(SyntheticPlant, DeterministicAndTwoRhoDetectable) {
  const Plant a = synthetic_plant(10, 35, 1, 7);
  const Plant b = synthetic_plant(10, 35, 1, 7);
  EXPECT_EQ(a.sys.A(), b.sys.A());
  EXPECT_EQ(a.sys.C(), b.sys.C());
  EXPECT_EQ(a.sys.l(), 45);
  EXPECT_TRUE(chi_detectable(a.sys, 2).detectable);
  EXPECT_NE(synthetic_plant(10, 35, 1, 8).sys.A(), a.sys.A());
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Plant p = synthetic_plant(6, 9, 2, seed);
    EXPECT_TRUE(chi_detectable(p.sys, 4).detectable);
    EXPECT_GT(spectral_radius(p.sys.A()), 1.0);
  }
  EXPECT_TRUE(is_detectable(synthetic_plant(4, 3, 0, 2).sys.A(),
                            synthetic_plant(4, 3, 0, 2).sys.C()));
  EXPECT_THROW(synthetic_plant(4, 2, 1, 1), DimensionError);
}

TEST(DeriveSeed, StreamsAreDistinctAndStable) {
  EXPECT_EQ(derive_seed(5, 1), derive_seed(5, 1));
  EXPECT_NE(derive_seed(5, 1), derive_seed(5, 2));
  EXPECT_NE(derive_seed(5, 1), derive_seed(6, 1));
}

TEST(UniformDisturbance, WithinDeclaredBounds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Disturbance d = uniform_disturbance(9, 100, seed);
    ASSERT_EQ(d.samples.size(), 100u);
    EXPECT_LE(sse::testing::max_abs_norm(d.samples), 1.0);
    EXPECT_EQ(d.bound.inf, 1.0);
    EXPECT_DOUBLE_EQ(d.bound.two, std::sqrt(900.0));
    EXPECT_LE(sse::testing::sum_of_squares_norm(d.samples), d.bound.two);
  }
  const Disturbance a = uniform_disturbance(3, 10, 4), b = uniform_disturbance(3, 10, 4);
  for (int t = 0; t < 10; ++t) EXPECT_EQ(a.samples[t], b.samples[t]);
  EXPECT_TRUE(uniform_disturbance(3, 0, 1).samples.empty());
  EXPECT_THROW(uniform_disturbance(-1, 5, 1), DimensionError);
}

TEST(GaussianAttack, SampleSpreadAndSupport) {
  const SensorSet target({4});
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Sequence a = gaussian_attack(6, target, 1e4, 100, seed, 1);
    double sum = 0.0, sq = 0.0;
    for (const auto& v : a) {
      for (int i = 0; i < 6; ++i) {
        if (i != 3) {
          EXPECT_EQ(v(i), 0.0);
        }
      }
      sum += v(3);
      sq += v(3) * v(3);
    }
    const double mean = sum / 100.0;
    const double sd = std::sqrt((sq - 100.0 * mean * mean) / 99.0);
    EXPECT_GE(sd, 70.0);
    EXPECT_LE(sd, 130.0);
  }
  for (const auto& v : gaussian_attack(6, target, 0.0, 50, 3, 1)) EXPECT_TRUE(v.isZero(0.0));
  EXPECT_THROW(gaussian_attack(6, SensorSet({1, 2}), 1.0, 10, 1, 1), BudgetExceeded);
  EXPECT_NO_THROW(gaussian_attack(6, SensorSet({1, 2}), 1.0, 10, 1, 2));
  EXPECT_THROW(gaussian_attack(6, SensorSet({7}), 1.0, 10, 1, 1), DimensionError);
}

TEST(CustomAttack, PadsAndChecksBudget) {
  MatrixXd rows = MatrixXd::Zero(3, 4);
  rows(0, 2) = 5.0;
  rows(2, 2) = -1.0;
  const Sequence a = custom_attack(rows, 4, 6, 1);
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(a[0](2), 5.0);
  EXPECT_EQ(a[2](2), -1.0);
  for (std::size_t t = 3; t < 6; ++t) EXPECT_TRUE(a[t].isZero(0.0));
  rows(1, 0) = 1.0;
  EXPECT_THROW(custom_attack(rows, 4, 6, 1), BudgetExceeded);
  EXPECT_THROW(custom_attack(rows, 5, 6, 2), DimensionError);
  EXPECT_EQ(custom_attack(rows, 4, 2, 2).size(), 2u);
}

TEST(ChooseAttackTargets, AvoidsCriticalSensors) {
  const Plant ugv = ugv_plant();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SensorSet t = choose_attack_targets(ugv, 1, seed);
    ASSERT_EQ(t.size(), 1);
    EXPECT_FALSE(t.contains(1));
  }
  EXPECT_EQ(choose_attack_targets(ugv, 2, 0), SensorSet({2, 3}));
  EXPECT_THROW(choose_attack_targets(ugv, 3, 0), BudgetExceeded);
}

TEST(Simulate, ZeroInputsGiveZeroTrace) {
  const Plant heat = heat_plant();
  const SimulationTrace tr = simulate(heat.sys, zero_disturbance(29, 40).samples,
                                      zero_attack(20, 40), 40);
  ASSERT_EQ(tr.x.size(), 40u);
  for (long t = 0; t < 40; ++t) {
    EXPECT_TRUE(tr.x[t].isZero(0.0));
    EXPECT_TRUE(tr.y[t].isZero(0.0));
  }
}

TEST(Simulate, ImpulseResponse) {
  const LtiSystem s = sse::testing::scalar_system(0.5, 1, 1, 0);
  Sequence w(8, VectorXd::Zero(1));
  w[0](0) = 1.0;
  const SimulationTrace tr = simulate(s, w, zero_attack(1, 8), 8);
  EXPECT_EQ(tr.x[0](0), 0.0);
  for (int t = 1; t < 8; ++t) EXPECT_DOUBLE_EQ(tr.x[t](0), std::pow(0.5, t - 1));
}

TEST(Simulate, MeasurementEquationHoldsExactly) {
  const Plant ugv = ugv_plant();
  const long T = 50;
  const Disturbance d = uniform_disturbance(5, T, 1);
  const Sequence a = gaussian_attack(3, SensorSet({2}), 100.0, T, 2, 1);
  const SimulationTrace tr = simulate(ugv.sys, d.samples, a, T);
  for (long t = 0; t < T; ++t) {
    const VectorXd y = ugv.sys.C() * tr.x[t] + ugv.sys.D() * d.samples[t] + a[t];
    EXPECT_EQ(tr.y[t], y);
    if (t + 1 < T) {
      EXPECT_EQ(tr.x[t + 1], VectorXd(ugv.sys.A() * tr.x[t] + ugv.sys.B() * d.samples[t]));
    }
  }
  const SimulationTrace again = simulate(ugv.sys, d.samples, a, T);
  for (long t = 0; t < T; ++t) EXPECT_EQ(again.y[t], tr.y[t]);
  EXPECT_THROW(simulate(ugv.sys, d.samples, a, T + 1), DimensionError);
}

TEST(Simulate, KnownInputIsCompensated) {
  const Plant ugv = ugv_plant();
  const long T = 30;
  const Disturbance d = uniform_disturbance(5, T, 3);
  KnownInput u{*ugv.input_matrix, Sequence(T, VectorXd::Constant(1, 2.0))};
  const SimulationTrace with = simulate(ugv.sys, d.samples, zero_attack(3, T), T, u);
  const SimulationTrace without = simulate(ugv.sys, d.samples, zero_attack(3, T), T);
  const Sequence comp = with.compensated_measurements(ugv.sys.C());
  for (long t = 0; t < T; ++t) {
    EXPECT_LE((comp[t] - without.y[t]).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_GT(with.x.back()(0), without.x.back()(0));
}

TEST(Simulate, CsvHeader) {
  const LtiSystem s = sse::testing::scalar_system(0.5, 1, 1, 0);
  const SimulationTrace tr = simulate(s, Sequence(2, VectorXd::Ones(1)), zero_attack(1, 2), 2);
  std::ostringstream os;
  tr.write_csv(os);
  EXPECT_EQ(os.str(), "t,x_1,w_1,a_1,y_1\n0,0,1,0,0\n1,1,1,0,1\n");
}

TEST(IndistinguishablePair, TwinSensorDoubling) {
  const LtiSystem s(MatrixXd::Constant(1, 1, 2.0), MatrixXd::Constant(1, 1, 1.0),
                    MatrixXd::Constant(2, 1, 1.0), MatrixXd::Zero(2, 1));
  const IndistinguishablePair p = indistinguishable_pair(s, 1, 30);
  EXPECT_TRUE(p.blind.empty());
  EXPECT_EQ(p.attacked_first, SensorSet({1}));
  EXPECT_EQ(p.attacked_second, SensorSet({2}));
  ASSERT_EQ(p.first.y.size(), 31u);
  for (std::size_t t = 0; t < p.first.y.size(); ++t) {
    EXPECT_LE((p.first.y[t] - p.second.y[t]).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(p.first.a[t].size() - (p.first.a[t].array() == 0.0).count(), 1);
    EXPECT_LE(p.second.a[t].size() - (p.second.a[t].array() == 0.0).count(), 1);
  }
  EXPECT_EQ(p.first.w[0](0), 1.0);
  EXPECT_EQ(p.state_gap[30], std::ldexp(1.0, 29));
  EXPECT_DOUBLE_EQ(p.growth_ratio, 2.0);
  EXPECT_EQ(p.max_measurement_gap, 0.0);
}

TEST(IndistinguishablePair, ComplexModeGivesRealTrajectories) {
  const double th = 0.7;
  MatrixXd A = MatrixXd::Zero(3, 3);
  A.topLeftCorner(2, 2) << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  A.topLeftCorner(2, 2) *= 1.1;
  A(2, 2) = 0.5;
  MatrixXd C(3, 3);
  C << 1, 0, 0, 0, 1, 1, 0, 0, 1;
  MatrixXd D = MatrixXd::Zero(3, 6);
  D.rightCols(3).setIdentity();
  MatrixXd B = MatrixXd::Zero(3, 6);
  B.leftCols(3).setIdentity();
  const LtiSystem s(A, B, C, D);
  const long T = 40;
  const IndistinguishablePair p = indistinguishable_pair(s, 1, T);
  EXPECT_EQ(p.blind, SensorSet({3}));
  EXPECT_NEAR(std::abs(p.mode), 1.1, 1e-12);
  EXPECT_GT(std::abs(p.mode.imag()), 0.1);
  EXPECT_NEAR(p.direction.cwiseAbs().maxCoeff(), 1.0, 1e-15);
  EXPECT_NEAR(p.direction(2), 0.0, 1e-12);
  EXPECT_LE(p.max_measurement_gap, 1e-9 * p.max_measurement);
  EXPECT_NEAR(p.growth_ratio, 1.1, 1e-9);
  for (long t = 2; t <= T; ++t) {
    EXPECT_NEAR(p.amplitude[t] / p.amplitude[t - 1], 1.1, 1e-9);
    // The state gap rotates inside the plane; its inf-norm stays within a
    // factor sqrt(2) of the Euclidean radius 1.1^(t-1) |x(1)|.
    const double radius = std::pow(1.1, t - 1) * p.direction.norm();
    EXPECT_GE(p.state_gap[t], radius / std::sqrt(2.0) * (1 - 1e-9));
  }
  for (long t = 0; t <= T; ++t) {
    EXPECT_TRUE(p.first.a[t].isZero(0.0) || (p.first.a[t].array() != 0.0).count() <= 1);
    EXPECT_EQ(p.first.a[t](1), 0.0);
    EXPECT_EQ(p.first.a[t](2), 0.0);
    EXPECT_EQ(p.second.a[t](0), 0.0);
    EXPECT_EQ(p.second.a[t](2), 0.0);
  }
}

TEST(IndistinguishablePair, RefusesDetectablePlantsAndHandlesZeroHorizon) {
  EXPECT_THROW(indistinguishable_pair(heat_plant().sys, 1, 30), PreconditionHolds);
  const LtiSystem s(MatrixXd::Constant(1, 1, 2.0), MatrixXd::Constant(1, 1, 1.0),
                    MatrixXd::Constant(2, 1, 1.0), MatrixXd::Zero(2, 1));
  const IndistinguishablePair p = indistinguishable_pair(s, 1, 0);
  EXPECT_EQ(p.first.x.size(), 1u);
  EXPECT_EQ(p.state_gap.size(), 1u);
  EXPECT_TRUE(std::isnan(p.growth_ratio));
  EXPECT_THROW(indistinguishable_pair(s, 2, 5), DimensionError);
  std::ostringstream os;
  p.write_certificate(os);
  EXPECT_NE(os.str().find("horizon: 0\n"), std::string::npos);
}
