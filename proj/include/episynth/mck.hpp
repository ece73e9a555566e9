#pragma once

// Explicit-state CTLK model checking over bundle systems under the
// observational semantics of knowledge.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "episynth/formula.hpp"
#include "episynth/kernel.hpp"

namespace episynth {

/// The reachable part of one state-determined strategy: successor sets depend
/// only on the current state. Local indices are assigned in breadth-first
/// discovery order from the initial states.
class Component {
 public:
  using SuccessorFn = std::function<std::vector<StateId>(StateId)>;

  Component(const Environment& env, std::string id, std::span<const StateId> initial,
            const SuccessorFn& successors);

  const std::string& id() const { return id_; }
  size_t size() const { return states_.size(); }
  StateId state(uint32_t local) const { return states_[local]; }
  const std::vector<StateId>& states() const { return states_; }
  const std::vector<uint32_t>& initial() const { return initial_; }
  /// -1 when the state is not reachable in this component.
  std::int32_t local(StateId s) const { return s < local_.size() ? local_[s] : -1; }
  bool reachable(StateId s) const { return local(s) >= 0; }

  std::span<const uint32_t> succ(uint32_t local) const {
    return {succ_.data() + succ_off_[local], succ_.data() + succ_off_[local + 1]};
  }
  std::span<const uint32_t> pred(uint32_t local) const {
    return {pred_.data() + pred_off_[local], pred_.data() + pred_off_[local + 1]};
  }
  /// Successors as global state ids, sorted.
  std::vector<StateId> successor_states(StateId s) const;

 private:
  std::string id_;
  std::vector<StateId> states_;
  std::vector<std::int32_t> local_;
  std::vector<uint32_t> initial_;
  std::vector<uint32_t> succ_off_, succ_, pred_off_, pred_;
};

/// A checkable system: every run follows one component, and knowledge
/// compares observations across all components.
struct BundleSystem {
  std::shared_ptr<const Environment> env;
  std::vector<Component> components;
};

/// Diagnostics for edges not justified by any environment transition and for
/// an empty component list.
std::vector<std::string> validate_bundle(const BundleSystem& sys);

struct Point {
  size_t component;
  StateId state;
  bool operator==(const Point&) const = default;
};

std::vector<Point> reachable(const BundleSystem& sys);
/// Sorted, deduplicated states reachable in some component.
std::vector<StateId> reachable_states(const BundleSystem& sys);

enum class ExecPolicy { Serial, Parallel };

/// Truth values of one formula at every reachable point.
class Labeling {
 public:
  Labeling() = default;
  explicit Labeling(std::vector<std::vector<std::uint8_t>> bits) : bits_(std::move(bits)) {}

  /// Throws UsageError if s is not reachable in component c.
  bool at(const BundleSystem& sys, size_t c, StateId s) const;
  bool at_local(size_t c, uint32_t local) const { return bits_[c][local] != 0; }
  const std::vector<std::vector<std::uint8_t>>& bits() const { return bits_; }

  /// Per environment state: 1 if true at every reachable point on that state,
  /// 0 if false at some, 2 if the state is unreachable.
  std::vector<std::uint8_t> state_truth(const BundleSystem& sys) const;

  bool operator==(const Labeling&) const = default;

 private:
  std::vector<std::vector<std::uint8_t>> bits_;
};

/// Labels every reachable point. Works bottom-up over the normalized formula:
/// temporal operators by fixpoints inside each component, K by grouping all
/// reachable points of all components by observation. Throws UsageError on
/// template variables, unknown agents or unknown variables.
///
/// For state-determined components, the runs through a point are exactly the
/// infinite paths of its component from that state, so the per-component CTL
/// fixpoints are sound and complete for the bundle semantics.
Labeling check(const BundleSystem& sys, const FormulaPtr& f,
               ExecPolicy policy = ExecPolicy::Parallel);

/// Reference implementation: naive Kleene iteration over all points and
/// pairwise scanning for knowledge. Kept for testing the optimised kernels.
Labeling check_reference(const BundleSystem& sys, const FormulaPtr& f);

/// True iff f holds at every initial point of every component.
bool models(const BundleSystem& sys, const FormulaPtr& f, ExecPolicy policy = ExecPolicy::Parallel);

enum class Tri : std::uint8_t { False = 0, True = 1, Vacuous = 2 };

/// Truth of K[agent] psi at an observation; Vacuous when the observation
/// occurs at no reachable point.
Tri holds_at_observation(const BundleSystem& sys, size_t agent, const Observation& obs,
                         const FormulaPtr& knowledge, ExecPolicy policy = ExecPolicy::Parallel);

/// Per observation key of `agent`: the shared value of a labeling over the
/// points with that observation. `labeling` must be constant on observation
/// classes (true for any K[agent] formula); otherwise throws UsageError.
std::vector<Tri> observation_table(const BundleSystem& sys, size_t agent, const Labeling& labeling);

}  // namespace episynth
