#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gfn {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Structural problems found while validating a pointed DAG.
class DagError : public Error {
 public:
  enum class Kind {
    InvalidEdge,     // endpoint out of range, or fewer than two states
    SelfEdge,
    DuplicateEdge,
    CycleDetected,
    NotPointed,      // a state unreachable from the source or unable to reach the sink
  };
  enum class Reason { None, UnreachableFromSource, CannotReachSink };

  DagError(Kind kind, const std::string& what, std::uint32_t state = 0,
           Reason reason = Reason::None)
      : Error(what), kind(kind), state(state), reason(reason) {}

  Kind kind;
  std::uint32_t state;
  Reason reason;
};

/// Trajectory enumeration would exceed the configured cap.
class ExplosionGuard : public Error {
 public:
  ExplosionGuard(std::uint64_t count, std::uint64_t cap)
      : Error("trajectory count " + std::to_string(count) + " exceeds cap " +
              std::to_string(cap)),
        count(count),
        cap(cap) {}
  std::uint64_t count;
  std::uint64_t cap;
};

/// A transition-probability table that is not consistent with its DAG.
class PolicyError : public Error {
 public:
  explicit PolicyError(const std::string& what, std::uint32_t state = 0)
      : Error(what), state(state) {}
  std::uint32_t state;
};

/// Raised when extracting a strict policy from a summary with zero-flow states.
class ZeroStateFlowError : public Error {
 public:
  explicit ZeroStateFlowError(std::uint32_t state)
      : Error("state flow is zero at state " + std::to_string(state) +
              "; conditional probabilities there are undefined"),
        state(state) {}
  std::uint32_t state;
};

class LossError : public Error {
 public:
  enum class Kind { ZeroRewardOnTrajectory, IncompatibleParamsLoss };
  LossError(Kind kind, const std::string& what) : Error(what), kind(kind) {}
  Kind kind;
};

class TrainingError : public Error {
 public:
  TrainingError(std::uint64_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step(step) {}
  std::uint64_t step;
};

class EnvironmentError : public Error {
 public:
  enum class Kind { TooLarge, NoAcceptingReachable, BadParameter };
  EnvironmentError(Kind kind, const std::string& what) : Error(what), kind(kind) {}
  Kind kind;
};

class AnalysisError : public Error {
 public:
  enum class Kind { RewardOutOfRange, ZeroMarginal, BadCondition };
  AnalysisError(Kind kind, const std::string& what) : Error(what), kind(kind) {}
  Kind kind;
};

/// Malformed text input (DAG files, flow files, checkpoints, configs).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? ("line " + std::to_string(line) + ": " + what) : what),
        line(line) {}
  std::size_t line;
};

}  // namespace gfn
