#pragma once

// Plain-text ERVC question and solution templates (word-level tokens).

#include <span>
#include <string>
#include <vector>

#include "cotkit/ervc.hpp"

namespace cotkit::detail {

struct ErvcLine {
    std::vector<std::string> tokens;
    bool recap = false;
};

std::vector<std::string> ervc_question_tokens(const ErvcInstance& instance);

std::vector<ErvcLine> ervc_solution_lines(const ErvcInstance& instance, const ErvcSolution& solution);

/// Rebuilds the observable part of an instance (names, rows, query, chain
/// structure) from question tokens. Ground-truth coefficients are left empty.
/// Throws ParseError.
ErvcInstance ervc_instance_from_question(std::span<const std::string> tokens);

}  // namespace cotkit::detail
