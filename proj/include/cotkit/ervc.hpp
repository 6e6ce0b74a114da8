#pragma once

// Equation restoration and variable computation (ERVC): instances whose
// unknowns are integer linear functions of known variables and earlier
// unknowns, recovered from observation rows by exact Gaussian elimination.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace cotkit {

class Rng;

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

/// "3", "-2", or "7/2".
std::string format_rational(const Rational& value);

/// Fixed lexicon of variable names. Sampled without replacement.
std::span<const std::string_view> ervc_lexicon();

/// One ground-truth relation: variables[target] = sum_k coefficients[k] * variables[inputs[k]] + constant.
struct ErvcEquation {
    std::size_t target = 0;
    /// Variable indices in display order (descending c-index).
    std::vector<std::size_t> inputs;
    /// One per input, followed by the constant term.
    std::vector<std::int64_t> coefficients;

    std::size_t coefficient_count() const { return inputs.size() + 1; }
    bool operator==(const ErvcEquation&) const = default;
};

/// Variables are ordered c_1..c_n: the first `known_count` are known, the rest
/// are unknowns u_1..u_m defined by `equations` in order. The target is c_n.
struct ErvcInstance {
    std::vector<std::string> variables;
    std::size_t known_count = 0;
    std::vector<ErvcEquation> equations;
    /// Observation rows, each assigning a value to every variable (indexed like `variables`).
    std::vector<std::vector<std::int64_t>> data_points;
    /// Values of the known variables for the question.
    std::vector<std::int64_t> query_values;

    std::size_t variable_count() const { return variables.size(); }
    std::size_t equation_count() const { return equations.size(); }
    std::size_t target() const { return variables.size() - 1; }
    bool operator==(const ErvcInstance&) const = default;
};

/// Input variables of equation j (0-based) in the chain topology:
///   j = 0:  all knowns;
///   j > 0:  u_{j-1} plus every known except the last.
/// Each set stays affinely independent over the observation rows, so every
/// per-equation system is square and non-singular whenever [knowns | 1] is.
std::vector<std::size_t> ervc_equation_inputs(std::size_t known_count, std::size_t equation);

/// Samples an instance with n variables and m equations. Coefficients in
/// [1, 5], constants in [0, 9], known values in [1, 9]. Singular observation
/// draws are resampled; throws GenerationError once the retry budget is spent
/// and ContractError unless 1 <= m < n <= lexicon size.
ErvcInstance ervc_generate(int n, int m, Rng& rng);

/// Checks every ErvcInstance invariant exactly. Throws ContractError.
void ervc_check(const ErvcInstance& instance);

struct EliminationEvent {
    enum class Kind {
        Swap,            // rows `row_a` and `row_b` exchanged
        ScaleSubtract,   // row_b := factor_a * row_a - factor_b * row_b
        ColumnDone,      // elimination below the pivot of `row_a` finished
        BackSubstitute,  // unknown `row_a` solved
    };

    Kind kind = Kind::Swap;
    std::size_t row_a = 0;
    std::size_t row_b = 0;
    Rational factor_a;
    Rational factor_b;
    /// Rows (coefficients followed by right-hand side) after the event.
    std::vector<std::vector<Rational>> rows;
    /// BackSubstitute: solved value.
    Rational value;
};

/// Elimination record for one relation.
struct RelationSolution {
    std::size_t equation = 0;
    /// Observation rows used, as indices into data_points.
    std::vector<std::size_t> data_rows;
    /// Augmented system [coefficients | rhs] before elimination.
    std::vector<std::vector<Rational>> initial_rows;
    std::vector<EliminationEvent> events;
    /// K_1..K_c, constant last.
    std::vector<Rational> coefficients;
};

struct ErvcSolution {
    std::vector<RelationSolution> relations;
    /// Full assignment at the query: knowns then computed unknowns.
    std::vector<Rational> values;
    Rational final_answer;
};

/// Recovers every relation from the observation rows by fraction-free Gaussian
/// elimination with partial pivoting (largest |pivot|, ties to the lower row),
/// back-substitutes, then evaluates the unknowns at the query values. Uses only
/// the observable parts of `instance` (names, rows, query, equation inputs),
/// never the ground-truth coefficients.
ErvcSolution ervc_solve(const ErvcInstance& instance);

/// Solves one augmented square system, recording events. Throws std::logic_error when singular.
RelationSolution eliminate(std::vector<std::vector<Rational>> rows);

}  // namespace cotkit
