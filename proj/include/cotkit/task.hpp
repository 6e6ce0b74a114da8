#pragma once

// Compound-task core: dependency selection, state transition, aggregation and
// the recurrent solver that ties them together.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotkit/ervc.hpp"

namespace cotkit {

class Rng;

enum class TaskId { Lis, Mpc, Ervc };

std::string_view to_string(TaskId task);
/// Accepts "lis", "mpc", "ervc" (case-insensitive). Throws ContractError otherwise.
TaskId parse_task_id(std::string_view text);

/// Complexity level. `m` is only meaningful for ERVC (equation count).
struct Level {
    int n = 0;
    int m = 0;

    bool operator==(const Level&) const = default;
    auto operator<=>(const Level&) const = default;

    /// "n" for LIS/MPC, "nxm" for ERVC.
    std::string to_string() const;
    /// Inverse of to_string. Throws ContractError on malformed text.
    static Level parse(std::string_view text);
};

using Symbol = std::int64_t;
using State = std::int64_t;
/// Ordered dependency indices. Index 0 is the task's boundary state, if it defines one.
using IndexSet = std::vector<std::size_t>;

/// Inclusive range of input symbols.
struct SymbolRange {
    Symbol lo = 0;
    Symbol hi = 99;

    std::uint64_t size() const { return static_cast<std::uint64_t>(hi - lo) + 1; }
    bool contains(Symbol s) const { return s >= lo && s <= hi; }
    bool operator==(const SymbolRange&) const = default;
};

struct ProblemInstance {
    TaskId task = TaskId::Lis;
    Level level;
    /// s_1..s_N. LIS: values. MPC: availability bits (N = target position). ERVC: empty.
    std::vector<Symbol> inputs;
    std::optional<ErvcInstance> ervc;
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
};

struct CompoundStep {
    std::size_t index = 0;  // 1-based
    Symbol input_symbol = 0;
    IndexSet dependency_indices;
    std::vector<State> dependency_states;
    State state = 0;
    std::optional<State> aggregate_before;  // empty at i = 1
    State aggregate_after = 0;

    bool operator==(const CompoundStep&) const = default;
};

struct Solution {
    std::vector<CompoundStep> steps;
    State final_answer = 0;

    bool operator==(const Solution&) const = default;
};

/// How LIS breaks ties between predecessors that share the maximal state.
enum class TieBreak { MostRecent, Earliest };

/// A compound task in the form s -> (B, F, H). Functions are pure.
struct TaskDefinition {
    TaskId task = TaskId::Lis;
    SymbolRange alphabet;
    /// States admitted by the transition; `state_max` may be capped further by N (LIS).
    State state_min = 0;
    State state_max = 0;
    bool state_max_is_length = false;
    /// MPC modulus; 0 means exact (unbounded) counting.
    State modulus = 0;
    /// q_0, when the task defines a boundary state.
    std::optional<State> boundary_state;
    State empty_transition_constant = 1;

    /// B(s_1..s_N, i). `states[k]` holds q_k for k < i (states[0] is q_0 or unused).
    std::function<IndexSet(std::span<const Symbol> inputs, std::span<const State> states, std::size_t i)>
        dependency_fn;
    /// F(selected states, s_i).
    std::function<State(std::span<const State> dep_states, Symbol s)> transition_fn;
    /// H(L, q); H(nullopt, q) = q.
    std::function<State(std::optional<State> prev, State q)> aggregate_fn;
    std::function<ProblemInstance(Rng&)> sampler;

    std::size_t alphabet_size() const { return static_cast<std::size_t>(alphabet.size()); }
};

/// Dependency indices of step i (1-based) over `inputs`.
/// Throws ContractError when i is outside [1, inputs.size()].
IndexSet dependencies(const TaskDefinition& task, std::span<const Symbol> inputs, std::size_t i);

/// F(dep_states, s) with range checking. Throws RangeError for an out-of-range state.
State transition(const TaskDefinition& task, std::span<const State> dep_states, Symbol s,
                 std::size_t sequence_length = 0);

State aggregate(const TaskDefinition& task, std::optional<State> prev, State q);

/// Checks the ProblemInstance invariants against `task`. Throws ContractError.
void validate_instance(const TaskDefinition& task, const ProblemInstance& instance);

/// Runs the recurrence for i = 1..N.
Solution solve(const TaskDefinition& task, const ProblemInstance& instance);
Solution solve(const TaskDefinition& task, std::span<const Symbol> inputs);

/// Size caps for brute_force_answer.
inline constexpr std::size_t kLisOracleCap = 18;
inline constexpr std::size_t kMpcOracleCap = 20;

/// Exhaustive answer that shares no code with solve(): subset enumeration for
/// LIS, path enumeration for MPC, direct substitution of ground-truth
/// coefficients for ERVC. `modulus` reduces the MPC count (0 = exact).
/// Throws ContractError when the instance exceeds the cap.
State brute_force_answer(TaskId task, const ProblemInstance& instance, State modulus = 0);

}  // namespace cotkit
