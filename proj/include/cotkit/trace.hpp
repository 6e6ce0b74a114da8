#pragma once

// Token-level chain-of-thought traces.
//
// A sample is   question ++ join(step_blocks, "<sep>") ++ final_tokens
// where the question ends with "<sep>" and the sample ends with "<eos>".
// The token immediately before "<eos>" is always the final answer: either it
// closes the last step block, or final_tokens carries it explicitly when that
// block was dropped.
//
// LIS step:   s_i | <deps or <empty>> = s_i q_i : L_{i-1} -> L_i
// MPC step:   i , avail_i , <dep states> -> q_i
// ERVC step:  one line of the worked solution text.
// With recap disabled LIS drops "| <deps>", MPC drops ", <dep states>" and
// ERVC drops every recap section.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotkit/ervc.hpp"
#include "cotkit/task.hpp"
#include "cotkit/tasks.hpp"

namespace cotkit {

class Rng;

using Tokens = std::vector<std::string>;

inline constexpr std::string_view kSep = "<sep>";
inline constexpr std::string_view kEos = "<eos>";
inline constexpr std::string_view kEmpty = "<empty>";
inline constexpr std::string_view kArrow = "->";

std::string join_tokens(std::span<const std::string> tokens);
Tokens split_tokens(std::string_view text);

struct RecapPolicy {
    bool enabled = true;
};

struct DropoutPolicy {
    double retain_rate = 1.0;
};

struct CotTrace {
    TaskId grammar = TaskId::Lis;
    bool recap_enabled = true;
    Tokens question_tokens;
    std::vector<Tokens> step_blocks;
    /// Original 1-based step of each retained block; 0 when a parsed block matches no step.
    std::vector<std::size_t> step_indices;
    Tokens final_tokens;
    std::vector<bool> retained_mask;

    /// Full serialized sample.
    Tokens tokens() const;
    /// Everything after the question.
    Tokens target_tokens() const;
    std::size_t step_count() const { return retained_mask.size(); }

    bool operator==(const CotTrace&) const = default;
};

/// LIS/MPC question tokens for the given inputs.
Tokens render_question(TaskId grammar, std::span<const Symbol> inputs);

/// Renders a fully retained trace. Throws ContractError for ERVC (use the ERVC overload).
CotTrace render_trace(const Solution& solution, TaskId grammar, RecapPolicy recap = {});
CotTrace render_trace(const ErvcInstance& instance, const ErvcSolution& solution, RecapPolicy recap = {});
/// Solves and renders in one go.
CotTrace render_instance(const ProblemInstance& instance, const TaskOptions& options, RecapPolicy recap = {});

/// Retains each step block independently with probability retain_rate. The
/// final answer always survives; rate 0 yields the Q-A form. Every step
/// consumes exactly one draw, whatever the rate.
CotTrace apply_dropout(const CotTrace& trace, const DropoutPolicy& policy, Rng& rng);

/// Keeps the blocks of a fully retained trace where `mask` is set and fixes
/// up the final tokens. Throws ContractError on size mismatch.
CotTrace retain_steps(const CotTrace& full, const std::vector<bool>& mask);

/// Inverse of the serialization. Throws ParseError with the token offset.
/// Parsed LIS blocks are assigned to the earliest unconsumed step carrying
/// the same input symbol. When identical blocks repeat, the recovered mask
/// may differ from the original one while selecting the same tokens. An
/// ERVC trace whose blocks all fit the recap-free layout parses as recap-free.
CotTrace parse_trace(TaskId grammar, std::span<const std::string> tokens);

/// Reconstructs the problem from question tokens (including the trailing "<sep>").
ProblemInstance question_to_instance(TaskId grammar, std::span<const std::string> question_tokens);

enum class TraceErrorKind { None, Parse, WrongDependency, WrongState, WrongAggregate, WrongFinal };

std::string_view to_string(TraceErrorKind kind);

struct ValidationReport {
    bool valid = true;
    /// 1-based step of the first mismatch; 0 refers to the question itself.
    std::optional<std::size_t> first_error_step;
    TraceErrorKind error_kind = TraceErrorKind::None;
    std::string expected;
    std::string actual;
    std::string message;
};

/// Recomputes every retained step and the final answer from the question and
/// reports the first mismatch.
ValidationReport validate_trace(const TaskDefinition& task, std::span<const std::string> question_tokens,
                                const CotTrace& trace);

/// Parses `tokens` and validates them; parse failures become Parse reports.
ValidationReport validate_tokens(const TaskDefinition& task, std::span<const std::string> tokens);

}  // namespace cotkit
