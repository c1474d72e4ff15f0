#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sse/errors.hpp"
#include "sse/lti.hpp"
#include "sse/matrix_io.hpp"
#include "sse/norms.hpp"

namespace sse {

struct Plant {
  LtiSystem sys;
  std::string name;
  std::optional<double> sampling_interval;
  SensorSet critical;                  // computed by critical_sensors
  std::optional<MatrixXd> input_matrix;  // known-input channel, if any
};

/// Sensors whose removal makes (A, C) lose detectability.
inline SensorSet critical_sensors(const LtiSystem& sys) {
  std::vector<int> out;
  const int m = sys.m();
  for (int i = 1; i <= m; ++i) {
    const SensorSet rest = SensorSet({i}).complement(m);
    if (!is_detectable(sys.A(), projection(rest, m).apply(sys.C()))) {
      out.push_back(i);
    }
  }
  return SensorSet(std::move(out));
}

inline Plant make_plant(LtiSystem sys, std::string name,
                        std::optional<double> ts = std::nullopt,
                        std::optional<MatrixXd> input_matrix = std::nullopt) {
  SensorSet critical = critical_sensors(sys);
  return Plant{std::move(sys), std::move(name), ts, std::move(critical),
               std::move(input_matrix)};
}

/// Point mass with viscous friction, state (position, velocity), sampled with
/// a zero-order hold on the force. One position and two velocity sensors.
inline Plant ugv_plant(double mass = 0.8, double friction = 1.0, double ts = 0.1) {
  if (!(mass > 0.0) || !(friction > 0.0) || !(ts > 0.0)) {
    throw DimensionError("ugv_plant: parameters must be positive");
  }
  const double decay = std::exp(-friction * ts / mass);
  const double reach = (1.0 - decay) * mass / friction;
  MatrixXd A(2, 2);
  A << 1.0, reach, 0.0, decay;
  MatrixXd B = MatrixXd::Zero(2, 5);
  B.leftCols(2).setIdentity();
  MatrixXd C(3, 2);
  C << 1, 0, 0, 1, 0, 1;
  MatrixXd D = MatrixXd::Zero(3, 5);
  D.rightCols(3).setIdentity();
  MatrixXd Bu(2, 1);
  Bu << (ts - reach) / friction, (1.0 - decay) / friction;
  return make_plant(LtiSystem(std::move(A), std::move(B), std::move(C), std::move(D)),
                    "ugv", ts, std::move(Bu));
}

struct GridCell {
  int row;
  int col;
  auto operator<=>(const GridCell&) const = default;
};

/// Every cell of an N x N grid except the plus-shaped block around the centre.
inline std::vector<GridCell> default_heat_sensor_cells(int N) {
  const int c = N / 2;
  std::vector<GridCell> out;
  for (int r = 0; r < N; ++r) {
    for (int k = 0; k < N; ++k) {
      const bool plus = (r == c && std::abs(k - c) <= 1) ||
                        (k == c && std::abs(r - c) <= 1);
      if (!plus) out.push_back({r, k});
    }
  }
  return out;
}

/// Interior cells (not on the boundary).
inline std::vector<GridCell> default_heat_noise_cells(int N) {
  std::vector<GridCell> out;
  for (int r = 1; r + 1 < N; ++r) {
    for (int k = 1; k + 1 < N; ++k) out.push_back({r, k});
  }
  return out;
}

/// 2-D heat equation on an N x N grid of side `length`, explicit Euler in time
/// with zero-flux (mirrored ghost cell) boundaries. State index r * N + c.
inline Plant heat_plant(double alpha = 0.1, double length = 4.0, int N = 5,
                        double ts = 1.0,
                        std::optional<std::vector<GridCell>> sensor_cells = std::nullopt,
                        std::optional<std::vector<GridCell>> noise_cells = std::nullopt) {
  if (N < 3) throw DimensionError("heat_plant: need N >= 3");
  if (!(alpha > 0.0) || !(length > 0.0) || !(ts > 0.0)) {
    throw DimensionError("heat_plant: parameters must be positive");
  }
  const double h = length / (N - 1);
  const double k = ts * alpha / (h * h);
  if (!(8.0 * k < 2.0)) {
    throw DimensionError("heat_plant: explicit Euler unstable (Ts alpha 8 / h^2 = " +
                         format_real(8.0 * k) + " >= 2)");
  }
  const auto sensors = sensor_cells.value_or(default_heat_sensor_cells(N));
  const auto noise = noise_cells.value_or(default_heat_noise_cells(N));
  const int n = N * N;
  auto index = [N](int r, int c) { return r * N + c; };
  auto mirror = [N](int i) { return i < 0 ? 1 : (i >= N ? N - 2 : i); };
  auto check_cells = [N](const std::vector<GridCell>& cells, const char* what) {
    std::vector<GridCell> sorted = cells;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw DimensionError(std::string("heat_plant: duplicate ") + what + " cell");
    }
    for (const auto& g : cells) {
      if (g.row < 0 || g.row >= N || g.col < 0 || g.col >= N) {
        throw DimensionError(std::string("heat_plant: ") + what + " cell off grid");
      }
    }
  };
  check_cells(sensors, "sensor");
  check_cells(noise, "noise");

  MatrixXd A = MatrixXd::Identity(n, n);
  const int dr[4] = {1, -1, 0, 0};
  const int dc[4] = {0, 0, 1, -1};
  for (int r = 0; r < N; ++r) {
    for (int c = 0; c < N; ++c) {
      const int i = index(r, c);
      A(i, i) -= 4.0 * k;
      for (int d = 0; d < 4; ++d) {
        A(i, index(mirror(r + dr[d]), mirror(c + dc[d]))) += k;
      }
    }
  }
  const int nw = static_cast<int>(noise.size());
  const int m = static_cast<int>(sensors.size());
  MatrixXd B = MatrixXd::Zero(n, nw + m);
  for (int j = 0; j < nw; ++j) B(index(noise[j].row, noise[j].col), j) = 1.0;
  MatrixXd C = MatrixXd::Zero(m, n);
  for (int j = 0; j < m; ++j) C(j, index(sensors[j].row, sensors[j].col)) = 1.0;
  MatrixXd D = MatrixXd::Zero(m, nw + m);
  D.rightCols(m).setIdentity();
  return make_plant(LtiSystem(std::move(A), std::move(B), std::move(C), std::move(D)),
                    "heat", ts);
}

/// 64-bit seed for an independent stream derived from (seed, stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Random plant that is 2 rho-detectable by construction: A = T diag(mu) T^T
/// with orthogonal T, stable modes in (-0.9, 0.9) and up to two unstable
/// modes (1.01, 1.03), each seen by at least max(2 rho + 1, m / 3) sensors.
/// B = [I 0], D = [0 I].
inline Plant synthetic_plant(int n = 10, int m = 35, int rho = 1,
                             std::uint64_t seed = 1) {
  if (n < 1 || m < 1 || rho < 0) {
    throw DimensionError("synthetic_plant: need n >= 1, m >= 1, rho >= 0");
  }
  if (m <= 2 * rho) throw DimensionError("synthetic_plant: need m > 2 rho");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> stable(-0.9, 0.9);

  MatrixXd G(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) G(i, j) = gauss(rng);
  }
  const MatrixXd T = Eigen::HouseholderQR<MatrixXd>(G).householderQ();

  const int unstable = std::min(n, 2);
  VectorXd mu(n);
  for (int i = 0; i < n; ++i) {
    mu(i) = i < unstable ? 1.01 + 0.02 * i : stable(rng);
  }

  const int observers = std::max(2 * rho + 1, (m + 2) / 3);
  MatrixXd M(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) M(i, j) = gauss(rng);
  }
  std::vector<int> order(m);
  for (int k = 0; k < unstable; ++k) {
    for (int i = 0; i < m; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    M.col(k).setZero();
    for (int s = 0; s < observers; ++s) {
      const double g = gauss(rng);
      M(order[s], k) = g >= 0.0 ? 1.0 + g : -1.0 + g;  // bounded away from 0
    }
  }

  MatrixXd A = T * mu.asDiagonal() * T.transpose();
  MatrixXd C = M * T.transpose();
  MatrixXd B = MatrixXd::Zero(n, n + m);
  B.leftCols(n).setIdentity();
  MatrixXd D = MatrixXd::Zero(m, n + m);
  D.rightCols(m).setIdentity();
  LtiSystem sys(std::move(A), std::move(B), std::move(C), std::move(D));
  if (!chi_detectable(sys, 2 * rho)) {
    throw NotDetectable("synthetic_plant: construction failed to be 2 rho-detectable",
                        std::complex<double>(mu(0), 0.0));
  }
  return make_plant(std::move(sys), "synthetic");
}

using Sequence = std::vector<VectorXd>;

struct Disturbance {
  Sequence samples;
  DisturbanceBound bound;
};

/// i.i.d. uniform[-1, 1] entries; declared bounds sqrt(l T) (p = 2), 1 (p = inf).
inline Disturbance uniform_disturbance(int l, long T, std::uint64_t seed) {
  if (l < 0 || T < 0) throw DimensionError("uniform_disturbance: negative size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Disturbance d;
  d.samples.reserve(T);
  for (long t = 0; t < T; ++t) {
    VectorXd w(l);
    for (int i = 0; i < l; ++i) w(i) = u(rng);
    d.samples.push_back(std::move(w));
  }
  d.bound.two = std::sqrt(static_cast<double>(l) * static_cast<double>(T));
  d.bound.inf = 1.0;
  return d;
}

inline Disturbance zero_disturbance(int l, long T) {
  Disturbance d;
  d.samples.assign(T, VectorXd::Zero(l));
  d.bound.two = 0.0;
  d.bound.inf = 0.0;
  return d;
}

inline Sequence zero_attack(int m, long T) { return Sequence(T, VectorXd::Zero(m)); }

/// i.i.d. N(0, variance) on the target sensors, zero elsewhere.
inline Sequence gaussian_attack(int m, const SensorSet& targets, double variance,
                                long T, std::uint64_t seed, int rho) {
  if (targets.size() > rho) {
    throw BudgetExceeded("gaussian_attack: " + std::to_string(targets.size()) +
                         " targets exceed the budget rho = " + std::to_string(rho));
  }
  if (targets.max_index() > m) {
    throw DimensionError("gaussian_attack: target index exceeds m");
  }
  if (!(variance >= 0.0)) throw DimensionError("gaussian_attack: variance must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, std::sqrt(variance));
  Sequence a(T, VectorXd::Zero(m));
  for (long t = 0; t < T; ++t) {
    for (int i : targets.indices()) a[t](i - 1) = variance > 0.0 ? g(rng) : 0.0;
  }
  return a;
}

/// Attack read from a T' x m matrix (row t is a(t)); rows past T' are zero.
inline Sequence custom_attack(const MatrixXd& rows, int m, long T, int rho) {
  if (rows.cols() != m) {
    throw DimensionError("custom_attack: expected " + std::to_string(m) + " columns");
  }
  int support = 0;
  for (int i = 0; i < m; ++i) support += rows.col(i).cwiseAbs().maxCoeff() > 0.0 ? 1 : 0;
  if (support > rho) {
    throw BudgetExceeded("custom_attack: " + std::to_string(support) +
                         " attacked sensors exceed rho = " + std::to_string(rho));
  }
  Sequence a(T, VectorXd::Zero(m));
  for (long t = 0; t < std::min<long>(T, rows.rows()); ++t) a[t] = rows.row(t).transpose();
  return a;
}

/// `count` distinct sensors drawn uniformly among the non-critical ones.
inline SensorSet choose_attack_targets(const Plant& plant, int count,
                                       std::uint64_t seed) {
  std::vector<int> pool = plant.critical.complement(plant.sys.m()).indices();
  if (count < 0 || count > static_cast<int>(pool.size())) {
    throw BudgetExceeded("choose_attack_targets: only " + std::to_string(pool.size()) +
                         " non-critical sensors");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(count);
  return SensorSet::from_unsorted(std::move(pool));
}

/// Known input u(t) entering as x(t+1) += matrix u(t).
struct KnownInput {
  MatrixXd matrix;
  Sequence values;
};

struct SimulationTrace {
  Sequence x, w, a, y;
  Sequence known_state;  // response to the known input alone (zeros if none)
  long horizon = 0;
  std::uint64_t seed = 0;
  DisturbanceBound w_bound;

  /// y(t) - C x_u(t): measurements with the known-input effect removed.
  Sequence compensated_measurements(const MatrixXd& C) const {
    Sequence out;
    out.reserve(y.size());
    for (std::size_t t = 0; t < y.size(); ++t) out.push_back(y[t] - C * known_state[t]);
    return out;
  }

  /// Columns t, x_*, w_*, a_*, y_*.
  void write_csv(std::ostream& os) const {
    auto header = [&os](const char* prefix, const Sequence& s) {
      const auto k = s.empty() ? 0 : s.front().size();
      for (Eigen::Index i = 1; i <= k; ++i) os << ',' << prefix << '_' << i;
    };
    os << 't';
    header("x", x);
    header("w", w);
    header("a", a);
    header("y", y);
    os << '\n';
    auto row = [&os](const VectorXd& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_real(v(i));
    };
    for (std::size_t t = 0; t < x.size(); ++t) {
      os << t;
      row(x[t]);
      row(w[t]);
      row(a[t]);
      row(y[t]);
      os << '\n';
    }
  }
};

/// x(0) = 0, y(t) = C x(t) + D w(t) + a(t), x(t+1) = A x(t) + B w(t) (+ Bu u(t)),
/// for t = 0..T-1.
inline SimulationTrace simulate(const LtiSystem& sys, const Sequence& w,
                                const Sequence& a, long T,
                                const std::optional<KnownInput>& input = std::nullopt) {
  if (static_cast<long>(w.size()) < T || static_cast<long>(a.size()) < T) {
    throw DimensionError("simulate: sequences shorter than the horizon");
  }
  if (input && (input->matrix.rows() != sys.n() ||
                static_cast<long>(input->values.size()) < T)) {
    throw DimensionError("simulate: known input has the wrong shape");
  }
  SimulationTrace tr;
  tr.horizon = T;
  VectorXd x = VectorXd::Zero(sys.n());
  VectorXd xu = VectorXd::Zero(sys.n());
  for (long t = 0; t < T; ++t) {
    if (w[t].size() != sys.l() || a[t].size() != sys.m()) {
      throw DimensionError("simulate: sample dimension mismatch at t=" + std::to_string(t));
    }
    VectorXd y = sys.C() * x;
    y += sys.D() * w[t];
    y += a[t];
    tr.x.push_back(x);
    tr.w.push_back(w[t]);
    tr.a.push_back(a[t]);
    tr.y.push_back(std::move(y));
    tr.known_state.push_back(xu);
    VectorXd next = sys.A() * x;
    next += sys.B() * w[t];
    if (input) {
      const VectorXd push = input->matrix * input->values[t];
      next += push;
      xu = sys.A() * xu + push;
    }
    x = std::move(next);
  }
  return tr;
}

/// Two executions with identical measurements whose states drift apart along
/// an unstable mode that the untouched sensors cannot see.
struct IndistinguishablePair {
  SimulationTrace first;
  SimulationTrace second;
  SensorSet blind;    // K, |K| = m - 2 rho
  SensorSet attacked_first;   // K1
  SensorSet attacked_second;  // K2
  std::complex<double> mode;  // z, |z| >= 1
  VectorXd direction;         // x(1), ||x(1)||_inf = 1
  double max_measurement_gap = 0.0;
  double max_measurement = 0.0;
  std::vector<double> state_gap;   // ||x(t) - x'(t)||_inf, t = 0..T
  std::vector<double> amplitude;   // modal coordinate norm of x(t) - x'(t)
  double growth_ratio = 0.0;       // amplitude(T) / amplitude(T-1), NaN if T < 2

  void write_certificate(std::ostream& os) const {
    os << "blind_sensors: " << blind.to_string() << '\n';
    os << "attacked_first: " << attacked_first.to_string() << '\n';
    os << "attacked_second: " << attacked_second.to_string() << '\n';
    os << "mode_real: " << format_real(mode.real()) << '\n';
    os << "mode_imag: " << format_real(mode.imag()) << '\n';
    os << "mode_abs: " << format_real(std::abs(mode)) << '\n';
    os << "horizon: " << (state_gap.empty() ? 0 : state_gap.size() - 1) << '\n';
    os << "max_measurement_gap: " << format_real(max_measurement_gap) << '\n';
    os << "max_measurement: " << format_real(max_measurement) << '\n';
    os << "final_state_gap: "
       << format_real(state_gap.empty() ? 0.0 : state_gap.back()) << '\n';
    os << "growth_ratio: " << format_real(growth_ratio) << '\n';
  }
};

namespace internal {

/// Unit null vector of [A - z I; C_K].
inline Eigen::VectorXcd mode_null_vector(const MatrixXd& A, const MatrixXd& CK,
                                         std::complex<double> z) {
  const Eigen::MatrixXcd M = pbh_matrix(A, CK, z);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M, Eigen::ComputeFullV);
  return svd.matrixV().col(M.cols() - 1);
}

}  // namespace internal

/// Builds the pair of executions for a plant that is not 2 rho-detectable,
/// sampled at t = 0..T. Throws PreconditionHolds if the plant is
/// 2 rho-detectable.
inline IndistinguishablePair indistinguishable_pair(const LtiSystem& sys, int rho, long T) {
  const int m = sys.m();
  const int n = sys.n();
  if (rho < 0 || 2 * rho > m) throw DimensionError("indistinguishable_pair: need 0 <= 2 rho <= m");
  if (T < 0) throw DimensionError("indistinguishable_pair: negative horizon");
  const auto chi = chi_detectable(sys, 2 * rho);
  if (chi) {
    throw PreconditionHolds(
        "indistinguishable_pair: the plant is " + std::to_string(2 * rho) +
        "-detectable, so no pair of executions with equal measurements and "
        "diverging states exists");
  }
  IndistinguishablePair out;
  out.blind = *chi.violating;
  out.mode = *chi.witness;
  const SensorSet rest = out.blind.complement(m);
  out.attacked_first = SensorSet(std::vector<int>(rest.indices().begin(),
                                                  rest.indices().begin() + rho));
  out.attacked_second = SensorSet(std::vector<int>(rest.indices().end() - rho,
                                                   rest.indices().end()));

  const MatrixXd CK = projection(out.blind, m).apply(sys.C());
  const MatrixXd DK = projection(out.blind, m).apply(sys.D());
  const bool real_mode = std::abs(out.mode.imag()) <= kRankTolerance * std::max(1.0, std::abs(out.mode));
  MatrixXd basis;
  VectorXd x1;
  if (real_mode) {
    out.mode = {out.mode.real(), 0.0};
    MatrixXd M(n + CK.rows(), n);
    M << sys.A() - out.mode.real() * MatrixXd::Identity(n, n), CK;
    Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeFullV);
    x1 = svd.matrixV().col(n - 1);
    basis = x1;
  } else {
    const Eigen::VectorXcd v = internal::mode_null_vector(sys.A(), CK, out.mode);
    basis.resize(n, 2);
    basis << v.real(), v.imag();
    x1 = v.real().cwiseAbs().maxCoeff() >= v.imag().cwiseAbs().maxCoeff()
             ? VectorXd(2.0 * v.real())
             : VectorXd(-2.0 * v.imag());
  }
  Eigen::Index peak = 0;
  x1.cwiseAbs().maxCoeff(&peak);
  x1 /= x1(peak);
  out.direction = x1;

  // Disturbance impulse with B delta = x(1) and D_K delta = 0.
  MatrixXd stacked(n + DK.rows(), sys.l());
  stacked << sys.B(), DK;
  VectorXd rhs = VectorXd::Zero(n + DK.rows());
  rhs.head(n) = x1;
  const VectorXd delta = stacked.completeOrthogonalDecomposition().solve(rhs);
  if ((stacked * delta - rhs).norm() > 1e-9 * std::max(1.0, rhs.norm())) {
    throw DimensionError(
        "indistinguishable_pair: the disturbance cannot place the state on the "
        "blind mode without touching the blind sensors");
  }

  const long samples = T + 1;
  Sequence w(samples, VectorXd::Zero(sys.l()));
  if (samples > 0) w[0] = delta;
  Sequence x(samples);
  VectorXd state = VectorXd::Zero(n);
  for (long t = 0; t < samples; ++t) {
    x[t] = state;
    state = sys.A() * state + sys.B() * w[t];
  }
  Sequence a(samples, VectorXd::Zero(m)), a2(samples, VectorXd::Zero(m));
  for (long t = 0; t < samples; ++t) {
    const VectorXd clean = sys.C() * x[t] + sys.D() * w[t];
    for (int i : out.attacked_first.indices()) a[t](i - 1) = -clean(i - 1);
    for (int i : out.attacked_second.indices()) a2[t](i - 1) = clean(i - 1);
  }

  auto assemble = [&](const Sequence& xs, const Sequence& ws, const Sequence& as) {
    SimulationTrace tr;
    tr.horizon = samples;
    tr.x = xs;
    tr.w = ws;
    tr.a = as;
    tr.known_state.assign(samples, VectorXd::Zero(n));
    for (long t = 0; t < samples; ++t) {
      VectorXd y = sys.C() * xs[t];
      y += sys.D() * ws[t];
      y += as[t];
      tr.y.push_back(std::move(y));
    }
    return tr;
  };
  out.first = assemble(x, w, a);
  out.second = assemble(Sequence(samples, VectorXd::Zero(n)),
                        Sequence(samples, VectorXd::Zero(sys.l())), a2);

  const auto coords = basis.completeOrthogonalDecomposition();
  for (long t = 0; t < samples; ++t) {
    out.max_measurement_gap = std::max(
        out.max_measurement_gap, (out.first.y[t] - out.second.y[t]).lpNorm<Eigen::Infinity>());
    out.max_measurement = std::max(
        {out.max_measurement, out.first.y[t].lpNorm<Eigen::Infinity>(),
         out.second.y[t].lpNorm<Eigen::Infinity>()});
    const VectorXd gap = out.first.x[t] - out.second.x[t];
    out.state_gap.push_back(gap.lpNorm<Eigen::Infinity>());
    out.amplitude.push_back(coords.solve(gap).norm());
  }
  out.growth_ratio = samples >= 3 ? out.amplitude[T] / out.amplitude[T - 1]
                                  : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace sse
