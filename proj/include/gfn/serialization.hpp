#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gfn/dag.hpp"
#include "gfn/environments.hpp"
#include "gfn/errors.hpp"
#include "gfn/param.hpp"
#include "gfn/trajectory.hpp"

namespace gfn {

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

struct Tokenizer {
  std::istream& in;
  std::size_t line_no = 0;

  /// Next non-empty, non-comment line split on whitespace.
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::istringstream ss(line);
      tokens.clear();
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return true;
    }
    return false;
  }
};

inline std::uint64_t parse_uint(const std::string& s, std::size_t line) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (errno || end == s.c_str() || *end != '\0' || s[0] == '-') {
    throw ParseError("expected a non-negative integer, got '" + s + "'", line);
  }
  return v;
}

inline double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ParseError("expected a number, got '" + s + "'", line);
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Explicit-DAG text format:
//   states N
//   E from to          (one line per edge, in order)
//   R state reward     (optional terminal rewards)
// Whitespace-delimited; '#' starts a comment. Round-trips are bit exact.

struct DagFile {
  DagPtr dag;
  bool has_rewards = false;
  std::map<StateId, double> rewards;

  Environment to_environment() const {
    Environment env;
    env.name = "file";
    env.dag = dag;
    auto table = std::make_shared<std::vector<double>>(dag->num_states(), 0.0);
    for (StateId t : dag->terminating_states()) {
      if (has_rewards) {
        auto it = rewards.find(t);
        (*table)[t] = it == rewards.end() ? 0.0 : it->second;
      } else {
        (*table)[t] = 1.0;
      }
    }
    env.reward = [table](StateId s) { return (*table)[s]; };
    env.label = [](StateId s) { return std::to_string(s); };
    return env;
  }
};

inline DagFile read_dag_text(std::istream& in) {
  detail::Tokenizer tz{in};
  std::vector<std::string> tok;
  if (!tz.next(tok) || tok.size() != 2 || tok[0] != "states") {
    throw ParseError("expected header 'states N'", tz.line_no);
  }
  const std::uint64_t n = detail::parse_uint(tok[1], tz.line_no);
  if (n < 2 || n > kMaxEnvironmentStates) {
    throw ParseError("unreasonable state count", tz.line_no);
  }

  std::vector<Edge> edges;
  std::map<StateId, double> rewards;
  bool has_rewards = false;
  while (tz.next(tok)) {
    if (tok[0] == "E" && tok.size() == 3) {
      const std::uint64_t a = detail::parse_uint(tok[1], tz.line_no);
      const std::uint64_t b = detail::parse_uint(tok[2], tz.line_no);
      if (a >= n || b >= n) throw ParseError("edge endpoint out of range", tz.line_no);
      edges.push_back({static_cast<StateId>(a), static_cast<StateId>(b)});
    } else if (tok[0] == "R" && tok.size() == 3) {
      const std::uint64_t s = detail::parse_uint(tok[1], tz.line_no);
      if (s >= n) throw ParseError("reward state out of range", tz.line_no);
      const double r = detail::parse_double(tok[2], tz.line_no);
      if (!rewards.emplace(static_cast<StateId>(s), r).second) {
        throw ParseError("duplicate reward line for state " + tok[1], tz.line_no);
      }
      has_rewards = true;
    } else {
      throw ParseError("unrecognized line starting with '" + tok[0] + "'",
                       tz.line_no);
    }
  }

  DagFile f;
  try {
    f.dag = build_dag(static_cast<std::uint32_t>(n), std::move(edges));
  } catch (const DagError& e) {
    throw ParseError(std::string("invalid DAG: ") + e.what(), 0);
  }
  for (const auto& [s, r] : rewards) {
    if (!f.dag->is_terminating(s)) {
      throw ParseError("reward attached to non-terminating state " +
                       std::to_string(s));
    }
  }
  f.has_rewards = has_rewards;
  f.rewards = std::move(rewards);
  return f;
}

inline void write_dag_text(std::ostream& out, const PointedDag& dag,
                           const std::map<StateId, double>* rewards = nullptr) {
  out << "states " << dag.num_states() << "\n";
  for (const Edge& e : dag.edges()) {
    out << "E " << e.from << " " << e.to << "\n";
  }
  if (rewards) {
    for (const auto& [s, r] : *rewards) {
      out << "R " << s << " " << format_double(r) << "\n";
    }
  }
}

inline DagFile load_dag_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_dag_text(in);
}

inline void save_dag_file(const std::string& path, const PointedDag& dag,
                          const std::map<StateId, double>* rewards = nullptr) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  write_dag_text(out, dag, rewards);
}

// ---------------------------------------------------------------------------
// Flow file: one value per enumerated complete trajectory, in enumeration
// order; blank lines and '#' comments allowed.

inline TrajectoryFlow read_flow_text(std::istream& in, const TrajectorySpace& space) {
  detail::Tokenizer tz{in};
  std::vector<std::string> tok;
  std::vector<double> values;
  while (tz.next(tok)) {
    for (const std::string& t : tok) {
      values.push_back(detail::parse_double(t, tz.line_no));
    }
  }
  if (values.size() != space.size()) {
    throw ParseError("flow file has " + std::to_string(values.size()) +
                     " values but the DAG has " + std::to_string(space.size()) +
                     " complete trajectories");
  }
  return TrajectoryFlow::validated(space, std::move(values));
}

inline TrajectoryFlow load_flow_file(const std::string& path,
                                     const TrajectorySpace& space) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_flow_text(in, space);
}

// ---------------------------------------------------------------------------
// Parametrization checkpoint: a text table of `name index value` rows under a
// header binding the parametrization kind to its DAG.

inline void write_checkpoint(std::ostream& out, const Params& params) {
  const PointedDag& dag = dag_of(params);
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(dag.hash()));
  const bool frozen = std::visit(
      [](const auto& p) {
        if constexpr (requires { p.backward_frozen; }) {
          return p.backward_frozen;
        } else {
          return false;
        }
      },
      params);
  out << "gfn-checkpoint 1 " << to_string(kind_of(params)) << " " << hash << " "
      << (frozen ? 1 : 0) << "\n";

  auto dump = [&out](const char* name, const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      out << name << " " << i << " " << format_double(v[i]) << "\n";
    }
  };
  if (const auto* p = std::get_if<EdgeFlowParams>(&params)) {
    dump("log_edge_flow", p->log_edge_flow);
  } else if (const auto* p = std::get_if<ForwardParams>(&params)) {
    dump("log_state_flow", p->log_state_flow);
    dump("forward_logit", p->forward_logits);
  } else if (const auto* p = std::get_if<ForwardBackwardParams>(&params)) {
    dump("log_state_flow", p->log_state_flow);
    dump("forward_logit", p->forward_logits);
    dump("backward_logit", p->backward_logits);
  } else if (const auto* p = std::get_if<TrajectoryBalanceParams>(&params)) {
    out << "log_z 0 " << format_double(p->log_z) << "\n";
    dump("forward_logit", p->forward_logits);
    dump("backward_logit", p->backward_logits);
  }
}

inline Params read_checkpoint(std::istream& in, DagPtr dag) {
  detail::Tokenizer tz{in};
  std::vector<std::string> tok;
  if (!tz.next(tok) || tok.size() != 5 || tok[0] != "gfn-checkpoint" ||
      tok[1] != "1") {
    throw ParseError("expected checkpoint header", tz.line_no);
  }
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(dag->hash()));
  if (tok[3] != hash) {
    throw ParseError("checkpoint was written for a different DAG (hash " + tok[3] +
                     ", expected " + hash + ")");
  }
  const bool frozen = detail::parse_uint(tok[4], tz.line_no) != 0;

  ParamKind kind;
  if (tok[2] == "edge_flow") {
    kind = ParamKind::EdgeFlow;
  } else if (tok[2] == "forward") {
    kind = ParamKind::Forward;
  } else if (tok[2] == "forward_backward") {
    kind = ParamKind::ForwardBackward;
  } else if (tok[2] == "trajectory_balance") {
    kind = ParamKind::TrajectoryBalance;
  } else {
    throw ParseError("unknown parametrization kind '" + tok[2] + "'", tz.line_no);
  }

  Params params = default_params(std::move(dag), kind, frozen);
  auto table = [&params](const std::string& name) -> std::vector<double>* {
    if (auto* p = std::get_if<EdgeFlowParams>(&params)) {
      if (name == "log_edge_flow") return &p->log_edge_flow;
    } else if (auto* p = std::get_if<ForwardParams>(&params)) {
      if (name == "log_state_flow") return &p->log_state_flow;
      if (name == "forward_logit") return &p->forward_logits;
    } else if (auto* p = std::get_if<ForwardBackwardParams>(&params)) {
      if (name == "log_state_flow") return &p->log_state_flow;
      if (name == "forward_logit") return &p->forward_logits;
      if (name == "backward_logit") return &p->backward_logits;
    } else if (auto* p = std::get_if<TrajectoryBalanceParams>(&params)) {
      if (name == "forward_logit") return &p->forward_logits;
      if (name == "backward_logit") return &p->backward_logits;
    }
    return nullptr;
  };

  while (tz.next(tok)) {
    if (tok.size() != 3) throw ParseError("expected 'name index value'", tz.line_no);
    const std::uint64_t idx = detail::parse_uint(tok[1], tz.line_no);
    const double value = detail::parse_double(tok[2], tz.line_no);
    if (!std::isfinite(value)) {
      throw ParseError("parameters must be finite", tz.line_no);
    }
    if (tok[0] == "log_z") {
      auto* p = std::get_if<TrajectoryBalanceParams>(&params);
      if (!p || idx != 0) throw ParseError("unexpected log_z row", tz.line_no);
      p->log_z = value;
      continue;
    }
    std::vector<double>* t = table(tok[0]);
    if (!t) throw ParseError("unexpected table '" + tok[0] + "'", tz.line_no);
    if (idx >= t->size()) throw ParseError("index out of range", tz.line_no);
    (*t)[idx] = value;
  }
  return params;
}

inline void save_checkpoint(const std::string& path, const Params& params) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  write_checkpoint(out, params);
}

inline Params load_checkpoint(const std::string& path, DagPtr dag) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_checkpoint(in, std::move(dag));
}

// ---------------------------------------------------------------------------
// Transition-system file (input to the time-stamp wrapper): like the DAG
// format but cycles are allowed and 'A state' lines mark accepting states.

struct TransitionSystemFile {
  TransitionSystem system;
  std::map<StateId, double> rewards;  // over original accepting states

  RewardFn reward_fn() const {
    auto table = std::make_shared<std::map<StateId, double>>(rewards);
    return [table](StateId s) {
      auto it = table->find(s);
      return it == table->end() ? 1.0 : it->second;
    };
  }
};

inline TransitionSystemFile read_transition_system(std::istream& in) {
  detail::Tokenizer tz{in};
  std::vector<std::string> tok;
  if (!tz.next(tok) || tok.size() != 2 || tok[0] != "states") {
    throw ParseError("expected header 'states N'", tz.line_no);
  }
  TransitionSystemFile f;
  f.system.num_states =
      static_cast<std::uint32_t>(detail::parse_uint(tok[1], tz.line_no));
  while (tz.next(tok)) {
    if (tok[0] == "E" && tok.size() == 3) {
      f.system.transitions.push_back(
          {static_cast<StateId>(detail::parse_uint(tok[1], tz.line_no)),
           static_cast<StateId>(detail::parse_uint(tok[2], tz.line_no))});
    } else if (tok[0] == "A" && tok.size() == 2) {
      f.system.accepting.push_back(
          static_cast<StateId>(detail::parse_uint(tok[1], tz.line_no)));
    } else if (tok[0] == "R" && tok.size() == 3) {
      f.rewards[static_cast<StateId>(detail::parse_uint(tok[1], tz.line_no))] =
          detail::parse_double(tok[2], tz.line_no);
    } else {
      throw ParseError("unrecognized line starting with '" + tok[0] + "'",
                       tz.line_no);
    }
  }
  return f;
}

}  // namespace gfn
