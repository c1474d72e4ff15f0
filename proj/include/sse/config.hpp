#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "sse/errors.hpp"
#include "sse/fusion.hpp"
#include "sse/lti.hpp"
#include "sse/matrix_io.hpp"
#include "sse/norms.hpp"
#include "sse/scenarios.hpp"

namespace sse {

// Run configuration (YAML). Schema:
//
//   plant:
//     kind: ugv | heat | synthetic | matrices
//     ugv:        mass, friction, ts, known_input (constant force)
//     heat:       alpha, length, grid, ts
//     synthetic:  n, m, seed
//     matrices:   A, B, C, D (matrix files, relative to the config file)
//   estimator:
//     rho: 1
//     regimes: ["2,2", "2,inf", "inf,inf"]
//     fusion: inf | 2
//     mode: strict | lenient
//     protected: auto | [1, 3]       (lenient mode; auto = critical sensors)
//   disturbance:
//     kind: uniform | none
//   attack:
//     kind: none | gaussian_bias | custom_sequence
//     variance: 10000                (gaussian_bias)
//     targets: random | [2]          (gaussian_bias)
//     count: 1                       (random targets; default rho)
//     file: attack.txt               (custom_sequence, T' x m matrix file)
//   run:
//     horizon: 100
//     trials: 100
//     seed: 1
//     workers: 1
//   output: out

struct PlantSpec {
  std::string kind = "heat";
  // ugv
  double mass = 0.8;
  double friction = 1.0;
  double known_input = 0.0;
  // heat
  double alpha = 0.1;
  double length = 4.0;
  int grid = 5;
  // ugv and heat; defaults 0.1 (ugv) and 1 (heat) when unset
  std::optional<double> ts;
  // synthetic
  int n = 10;
  int m = 35;
  std::uint64_t seed = 1;
  // matrices
  std::string A, B, C, D;

  bool operator==(const PlantSpec&) const = default;
};

struct EstimatorSpec {
  int rho = 1;
  std::vector<NormPair> regimes{NormPair::two_two(), NormPair::two_inf(),
                                NormPair::inf_inf()};
  SignalNorm fusion = SignalNorm::kInf;
  BankMode mode = BankMode::kStrict;
  std::optional<SensorSet> protected_sensors;  // nullopt = auto

  bool operator==(const EstimatorSpec&) const = default;
};

struct AttackSpec {
  std::string kind = "none";
  double variance = 1e4;
  std::optional<SensorSet> targets;  // nullopt = random
  std::optional<int> count;
  std::string file;

  bool operator==(const AttackSpec&) const = default;
};

struct RunSpec {
  long horizon = 100;
  int trials = 1;
  std::uint64_t seed = 1;
  int workers = 1;

  bool operator==(const RunSpec&) const = default;
};

struct RunConfig {
  PlantSpec plant;
  EstimatorSpec estimator;
  std::string disturbance = "uniform";
  AttackSpec attack;
  RunSpec run;
  std::string output = "out";
  std::filesystem::path base_dir;  // directory matrix paths are relative to

  bool operator==(const RunConfig&) const = default;
};

namespace internal {

inline void reject_unknown(const YAML::Node& node, const std::string& where,
                           const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ParseError(where + ": expected a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      throw ParseError(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
T read_scalar(const YAML::Node& node, const std::string& where) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ParseError(where + ": bad value");
  }
}

template <class T>
void read_into(const YAML::Node& parent, const char* key, const std::string& where,
               T& out) {
  if (const YAML::Node n = parent[key]) out = read_scalar<T>(n, where + "." + key);
}

inline SensorSet read_sensor_list(const YAML::Node& node, const std::string& where) {
  if (!node.IsSequence()) throw ParseError(where + ": expected a list of sensors");
  std::vector<int> idx;
  for (const auto& item : node) idx.push_back(read_scalar<int>(item, where));
  try {
    return SensorSet::from_unsorted(std::move(idx));
  } catch (const DimensionError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline void emit_sensors(YAML::Emitter& out, const SensorSet& s) {
  out << YAML::Flow << YAML::BeginSeq;
  for (int i : s.indices()) out << i;
  out << YAML::EndSeq;
}

}  // namespace internal

inline RunConfig parse_config(const std::string& text,
                              const std::filesystem::path& base_dir = {}) {
  using internal::read_into;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  cfg.base_dir = base_dir;
  if (!root || root.IsNull()) return cfg;
  internal::reject_unknown(root, "config",
                           {"plant", "estimator", "disturbance", "attack", "run", "output"});

  if (const YAML::Node p = root["plant"]) {
    PlantSpec& s = cfg.plant;
    if (!p.IsMap()) throw ParseError("plant: expected a mapping");
    read_into(p, "kind", "plant", s.kind);
    std::set<std::string> keys{"kind"};
    if (s.kind == "ugv") {
      keys.insert({"mass", "friction", "ts", "known_input"});
    } else if (s.kind == "heat") {
      keys.insert({"alpha", "length", "grid", "ts"});
    } else if (s.kind == "synthetic") {
      keys.insert({"n", "m", "seed"});
    } else if (s.kind == "matrices") {
      keys.insert({"A", "B", "C", "D"});
    } else {
      throw ParseError("plant.kind: expected ugv, heat, synthetic or matrices, got '" +
                       s.kind + "'");
    }
    internal::reject_unknown(p, "plant (" + s.kind + ")", keys);
    read_into(p, "mass", "plant", s.mass);
    read_into(p, "friction", "plant", s.friction);
    read_into(p, "known_input", "plant", s.known_input);
    read_into(p, "alpha", "plant", s.alpha);
    read_into(p, "length", "plant", s.length);
    read_into(p, "grid", "plant", s.grid);
    if (p["ts"]) s.ts = internal::read_scalar<double>(p["ts"], "plant.ts");
    read_into(p, "n", "plant", s.n);
    read_into(p, "m", "plant", s.m);
    read_into(p, "seed", "plant", s.seed);
    read_into(p, "A", "plant", s.A);
    read_into(p, "B", "plant", s.B);
    read_into(p, "C", "plant", s.C);
    read_into(p, "D", "plant", s.D);
    if (s.kind == "matrices" && (s.A.empty() || s.B.empty() || s.C.empty() || s.D.empty())) {
      throw ParseError("plant (matrices): A, B, C and D are all required");
    }
  }

  if (const YAML::Node e = root["estimator"]) {
    EstimatorSpec& s = cfg.estimator;
    internal::reject_unknown(e, "estimator",
                             {"rho", "regimes", "fusion", "mode", "protected"});
    read_into(e, "rho", "estimator", s.rho);
    if (s.rho < 0) throw ParseError("estimator.rho: must be >= 0");
    if (const YAML::Node r = e["regimes"]) {
      if (!r.IsSequence() || r.size() == 0) {
        throw ParseError("estimator.regimes: expected a non-empty list");
      }
      s.regimes.clear();
      for (const auto& item : r) {
        try {
          s.regimes.push_back(NormPair::parse(item.as<std::string>()));
        } catch (const std::exception& ex) {
          throw ParseError(std::string("estimator.regimes: ") + ex.what());
        }
      }
    }
    if (const YAML::Node f = e["fusion"]) {
      const auto v = internal::read_scalar<std::string>(f, "estimator.fusion");
      if (v == "2") {
        s.fusion = SignalNorm::kTwo;
      } else if (v == "inf") {
        s.fusion = SignalNorm::kInf;
      } else {
        throw ParseError("estimator.fusion: expected 2 or inf");
      }
    }
    if (const YAML::Node mnode = e["mode"]) {
      const auto v = internal::read_scalar<std::string>(mnode, "estimator.mode");
      if (v == "strict") {
        s.mode = BankMode::kStrict;
      } else if (v == "lenient") {
        s.mode = BankMode::kLenient;
      } else {
        throw ParseError("estimator.mode: expected strict or lenient");
      }
    }
    if (const YAML::Node pr = e["protected"]) {
      if (pr.IsScalar() && pr.as<std::string>() == "auto") {
        s.protected_sensors.reset();
      } else {
        s.protected_sensors = internal::read_sensor_list(pr, "estimator.protected");
      }
    }
  }

  if (const YAML::Node d = root["disturbance"]) {
    internal::reject_unknown(d, "disturbance", {"kind"});
    read_into(d, "kind", "disturbance", cfg.disturbance);
    if (cfg.disturbance != "uniform" && cfg.disturbance != "none") {
      throw ParseError("disturbance.kind: expected uniform or none");
    }
  }

  if (const YAML::Node a = root["attack"]) {
    AttackSpec& s = cfg.attack;
    if (!a.IsMap()) throw ParseError("attack: expected a mapping");
    read_into(a, "kind", "attack", s.kind);
    std::set<std::string> keys{"kind"};
    if (s.kind == "gaussian_bias") {
      keys.insert({"variance", "targets", "count"});
    } else if (s.kind == "custom_sequence") {
      keys.insert({"file"});
    } else if (s.kind != "none") {
      throw ParseError("attack.kind: expected none, gaussian_bias or custom_sequence");
    }
    internal::reject_unknown(a, "attack (" + s.kind + ")", keys);
    read_into(a, "variance", "attack", s.variance);
    if (!(s.variance >= 0.0)) throw ParseError("attack.variance: must be >= 0");
    if (const YAML::Node t = a["targets"]) {
      if (t.IsScalar() && t.as<std::string>() == "random") {
        s.targets.reset();
      } else {
        s.targets = internal::read_sensor_list(t, "attack.targets");
      }
    }
    if (a["count"]) s.count = internal::read_scalar<int>(a["count"], "attack.count");
    read_into(a, "file", "attack", s.file);
    if (s.kind == "custom_sequence" && s.file.empty()) {
      throw ParseError("attack.file: required for custom_sequence");
    }
  }

  if (const YAML::Node r = root["run"]) {
    internal::reject_unknown(r, "run", {"horizon", "trials", "seed", "workers"});
    read_into(r, "horizon", "run", cfg.run.horizon);
    read_into(r, "trials", "run", cfg.run.trials);
    read_into(r, "seed", "run", cfg.run.seed);
    read_into(r, "workers", "run", cfg.run.workers);
    if (cfg.run.horizon < 0) throw ParseError("run.horizon: must be >= 0");
    if (cfg.run.trials < 0) throw ParseError("run.trials: must be >= 0");
    if (cfg.run.workers < 1) throw ParseError("run.workers: must be >= 1");
  }

  if (const YAML::Node o = root["output"]) {
    cfg.output = internal::read_scalar<std::string>(o, "output");
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), path.parent_path());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// YAML text that parses back to an equal RunConfig (same base_dir).
inline std::string serialize_config(const RunConfig& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  const PlantSpec& p = cfg.plant;
  out << YAML::Key << "plant" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << p.kind;
  if (p.kind == "ugv") {
    out << YAML::Key << "mass" << YAML::Value << p.mass;
    out << YAML::Key << "friction" << YAML::Value << p.friction;
    if (p.ts) out << YAML::Key << "ts" << YAML::Value << *p.ts;
    out << YAML::Key << "known_input" << YAML::Value << p.known_input;
  } else if (p.kind == "heat") {
    out << YAML::Key << "alpha" << YAML::Value << p.alpha;
    out << YAML::Key << "length" << YAML::Value << p.length;
    out << YAML::Key << "grid" << YAML::Value << p.grid;
    if (p.ts) out << YAML::Key << "ts" << YAML::Value << *p.ts;
  } else if (p.kind == "synthetic") {
    out << YAML::Key << "n" << YAML::Value << p.n;
    out << YAML::Key << "m" << YAML::Value << p.m;
    out << YAML::Key << "seed" << YAML::Value << p.seed;
  } else {
    out << YAML::Key << "A" << YAML::Value << p.A;
    out << YAML::Key << "B" << YAML::Value << p.B;
    out << YAML::Key << "C" << YAML::Value << p.C;
    out << YAML::Key << "D" << YAML::Value << p.D;
  }
  out << YAML::EndMap;

  const EstimatorSpec& e = cfg.estimator;
  out << YAML::Key << "estimator" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rho" << YAML::Value << e.rho;
  out << YAML::Key << "regimes" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const NormPair r : e.regimes) out << YAML::DoubleQuoted << r.name();
  out << YAML::EndSeq;
  out << YAML::Key << "fusion" << YAML::Value << to_string(e.fusion);
  out << YAML::Key << "mode" << YAML::Value
      << (e.mode == BankMode::kStrict ? "strict" : "lenient");
  out << YAML::Key << "protected" << YAML::Value;
  if (e.protected_sensors) {
    internal::emit_sensors(out, *e.protected_sensors);
  } else {
    out << "auto";
  }
  out << YAML::EndMap;

  out << YAML::Key << "disturbance" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << cfg.disturbance;
  out << YAML::EndMap;

  const AttackSpec& a = cfg.attack;
  out << YAML::Key << "attack" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << a.kind;
  if (a.kind == "gaussian_bias") {
    out << YAML::Key << "variance" << YAML::Value << a.variance;
    out << YAML::Key << "targets" << YAML::Value;
    if (a.targets) {
      internal::emit_sensors(out, *a.targets);
    } else {
      out << "random";
    }
    if (a.count) out << YAML::Key << "count" << YAML::Value << *a.count;
  } else if (a.kind == "custom_sequence") {
    out << YAML::Key << "file" << YAML::Value << a.file;
  }
  out << YAML::EndMap;

  out << YAML::Key << "run" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "horizon" << YAML::Value << cfg.run.horizon;
  out << YAML::Key << "trials" << YAML::Value << cfg.run.trials;
  out << YAML::Key << "seed" << YAML::Value << cfg.run.seed;
  out << YAML::Key << "workers" << YAML::Value << cfg.run.workers;
  out << YAML::EndMap;

  out << YAML::Key << "output" << YAML::Value << cfg.output;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

inline std::string resolve_path(const RunConfig& cfg, const std::string& path) {
  const std::filesystem::path p(path);
  return (p.is_absolute() || cfg.base_dir.empty() ? p : cfg.base_dir / p).string();
}

/// Builds the plant described by the config.
inline Plant build_plant(const RunConfig& cfg) {
  const PlantSpec& s = cfg.plant;
  try {
    if (s.kind == "ugv") return ugv_plant(s.mass, s.friction, s.ts.value_or(0.1));
    if (s.kind == "heat") return heat_plant(s.alpha, s.length, s.grid, s.ts.value_or(1.0));
    if (s.kind == "synthetic") {
      return synthetic_plant(s.n, s.m, cfg.estimator.rho, s.seed);
    }
    if (s.kind == "matrices") {
      LtiSystem sys(load_matrix(resolve_path(cfg, s.A)), load_matrix(resolve_path(cfg, s.B)),
                    load_matrix(resolve_path(cfg, s.C)), load_matrix(resolve_path(cfg, s.D)));
      return make_plant(std::move(sys), "matrices");
    }
  } catch (const DimensionError& e) {
    throw ParseError(std::string("plant: ") + e.what());
  }
  throw ParseError("plant.kind: unknown kind '" + s.kind + "'");
}

}  // namespace sse
