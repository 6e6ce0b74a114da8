#include "cotkit/ervc.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <set>
#include <stdexcept>

#include "cotkit/errors.hpp"
#include "cotkit/rng.hpp"

namespace cotkit {

namespace {

constexpr std::array<std::string_view, 28> kLexicon = {
    "Condor", "Cheetah", "Leopard", "Rhino",   "Koala",   "Black_Bear", "Zebra",   "Giraffe", "Panda",  "Otter",
    "Walrus", "Bison",   "Moose",   "Falcon",  "Heron",   "Gazelle",    "Jaguar",  "Lynx",    "Meerkat", "Ostrich",
    "Penguin", "Raccoon", "Tapir",  "Wombat",  "Yak",     "Hyena",      "Ibex",    "Lemur",
};

constexpr int kMaxDataRetries = 1000;

std::int64_t checked_mul_add(std::int64_t acc, std::int64_t a, std::int64_t b) {
    std::int64_t product = 0;
    if (__builtin_mul_overflow(a, b, &product) || __builtin_add_overflow(acc, product, &acc))
        throw RangeError("ERVC value overflows 64 bits");
    return acc;
}

std::int64_t evaluate(const ErvcEquation& eq, const std::vector<std::int64_t>& values) {
    std::int64_t total = eq.coefficients.back();
    for (std::size_t k = 0; k < eq.inputs.size(); ++k) total = checked_mul_add(total, eq.coefficients[k], values[eq.inputs[k]]);
    return total;
}

// Rank test by plain rational elimination.
bool nonsingular(std::vector<std::vector<Rational>> m) {
    const std::size_t size = m.size();
    for (std::size_t c = 0; c < size; ++c) {
        std::size_t pivot = c;
        while (pivot < size && m[pivot][c] == 0) ++pivot;
        if (pivot == size) return false;
        std::swap(m[pivot], m[c]);
        for (std::size_t r = c + 1; r < size; ++r) {
            if (m[r][c] == 0) continue;
            const Rational f = m[r][c] / m[c][c];
            for (std::size_t k = c; k < size; ++k) m[r][k] -= f * m[c][k];
        }
    }
    return true;
}

std::vector<std::vector<Rational>> design_rows(const ErvcInstance& instance, const std::vector<std::size_t>& inputs,
                                               std::size_t count, bool with_rhs, std::size_t target) {
    std::vector<std::vector<Rational>> rows;
    for (std::size_t r = 0; r < count; ++r) {
        const auto& point = instance.data_points[r];
        std::vector<Rational> row;
        for (std::size_t v : inputs) row.emplace_back(point[v]);
        row.emplace_back(1);
        if (with_rhs) row.emplace_back(point[target]);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::string format_rational(const Rational& value) {
    const BigInt num = boost::multiprecision::numerator(value);
    const BigInt den = boost::multiprecision::denominator(value);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

std::span<const std::string_view> ervc_lexicon() { return kLexicon; }

std::vector<std::size_t> ervc_equation_inputs(std::size_t known_count, std::size_t equation) {
    std::vector<std::size_t> inputs;
    if (equation == 0) {
        for (std::size_t k = known_count; k-- > 0;) inputs.push_back(k);
    } else {
        inputs.push_back(known_count + equation - 1);
        for (std::size_t k = known_count - 1; k-- > 0;) inputs.push_back(k);
    }
    return inputs;
}

ErvcInstance ervc_generate(int n, int m, Rng& rng) {
    if (m < 1 || m >= n) throw ContractError("ERVC needs 1 <= m < n");
    if (static_cast<std::size_t>(n) > kLexicon.size())
        throw ContractError("ERVC n exceeds lexicon size " + std::to_string(kLexicon.size()));

    ErvcInstance instance;
    const auto total = static_cast<std::size_t>(n);
    const auto known = static_cast<std::size_t>(n - m);

    // Partial Fisher-Yates over the lexicon.
    std::vector<std::size_t> order(kLexicon.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t k = 0; k < total; ++k) {
        const auto pick = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k),
                                                                    static_cast<std::int64_t>(order.size() - 1)));
        std::swap(order[k], order[pick]);
        instance.variables.emplace_back(kLexicon[order[k]]);
    }
    instance.known_count = known;

    for (std::size_t j = 0; j < static_cast<std::size_t>(m); ++j) {
        ErvcEquation eq;
        eq.target = known + j;
        eq.inputs = ervc_equation_inputs(known, j);
        for (std::size_t k = 0; k < eq.inputs.size(); ++k) eq.coefficients.push_back(rng.uniform_int(1, 5));
        eq.coefficients.push_back(rng.uniform_int(0, 9));
        instance.equations.push_back(std::move(eq));
    }

    const std::size_t rows = known + 1;
    for (int attempt = 0; attempt < kMaxDataRetries; ++attempt) {
        instance.data_points.assign(rows, std::vector<std::int64_t>(total, 0));
        for (auto& point : instance.data_points) {
            for (std::size_t k = 0; k < known; ++k) point[k] = rng.uniform_int(1, 9);
        }
        instance.query_values.clear();
        for (std::size_t k = 0; k < known; ++k) instance.query_values.push_back(rng.uniform_int(1, 9));

        try {
            for (auto& point : instance.data_points) {
                for (const auto& eq : instance.equations) point[eq.target] = evaluate(eq, point);
            }
            std::vector<std::int64_t> query(total, 0);
            std::copy(instance.query_values.begin(), instance.query_values.end(), query.begin());
            for (const auto& eq : instance.equations) query[eq.target] = evaluate(eq, query);
        } catch (const RangeError&) {
            continue;
        }

        std::vector<std::size_t> knowns(known);
        std::iota(knowns.begin(), knowns.end(), 0);
        if (nonsingular(design_rows(instance, knowns, rows, false, 0))) {
            ervc_check(instance);
            return instance;
        }
    }
    throw GenerationError("ERVC " + std::to_string(n) + "x" + std::to_string(m) +
                          ": no non-singular observation set within the retry budget");
}

void ervc_check(const ErvcInstance& instance) {
    const std::size_t n = instance.variables.size();
    const std::size_t m = instance.equations.size();
    if (n < 2 || m < 1 || instance.known_count + m != n) throw ContractError("ERVC shape needs 1 <= m < n");
    if (std::set<std::string>(instance.variables.begin(), instance.variables.end()).size() != n)
        throw ContractError("ERVC variable names must be distinct");
    if (instance.query_values.size() != instance.known_count) throw ContractError("ERVC query assigns every known");

    std::size_t needed = 0;
    for (std::size_t j = 0; j < m; ++j) {
        const auto& eq = instance.equations[j];
        if (eq.target != instance.known_count + j) throw ContractError("ERVC equation targets out of chain order");
        if (eq.inputs != ervc_equation_inputs(instance.known_count, j))
            throw ContractError("ERVC equation inputs do not follow the chain topology");
        if (eq.coefficients.size() != eq.coefficient_count()) throw ContractError("ERVC coefficient count mismatch");
        needed = std::max(needed, eq.coefficient_count());
    }
    if (instance.data_points.size() != needed)
        throw ContractError("ERVC needs exactly " + std::to_string(needed) + " data points");
    for (const auto& point : instance.data_points) {
        if (point.size() != n) throw ContractError("ERVC data point must assign every variable");
        for (const auto& eq : instance.equations) {
            if (evaluate(eq, point) != point[eq.target]) throw ContractError("ERVC data point violates an equation");
        }
    }
    for (const auto& eq : instance.equations) {
        if (!nonsingular(design_rows(instance, eq.inputs, eq.coefficient_count(), false, 0)))
            throw ContractError("ERVC equation system is singular");
    }
}

RelationSolution eliminate(std::vector<std::vector<Rational>> rows) {
    RelationSolution relation;
    relation.initial_rows = rows;
    const std::size_t size = rows.size();
    for (const auto& row : rows) {
        if (row.size() != size + 1) throw std::logic_error("eliminate: system is not square");
    }

    for (std::size_t c = 0; c < size; ++c) {
        std::size_t pivot = c;
        for (std::size_t r = c + 1; r < size; ++r) {
            if (abs(rows[r][c]) > abs(rows[pivot][c])) pivot = r;
        }
        if (rows[pivot][c] == 0) throw std::logic_error("eliminate: singular system");
        if (pivot != c) {
            std::swap(rows[c], rows[pivot]);
            EliminationEvent event;
            event.kind = EliminationEvent::Kind::Swap;
            event.row_a = c;
            event.row_b = pivot;
            event.rows = rows;
            relation.events.push_back(std::move(event));
        }
        bool changed = false;
        for (std::size_t r = c + 1; r < size; ++r) {
            if (rows[r][c] == 0) continue;
            EliminationEvent event;
            event.kind = EliminationEvent::Kind::ScaleSubtract;
            event.row_a = c;
            event.row_b = r;
            event.factor_a = rows[r][c];
            event.factor_b = rows[c][c];
            for (std::size_t k = 0; k <= size; ++k) rows[r][k] = event.factor_a * rows[c][k] - event.factor_b * rows[r][k];
            event.rows = rows;
            relation.events.push_back(std::move(event));
            changed = true;
        }
        if (changed) {
            EliminationEvent event;
            event.kind = EliminationEvent::Kind::ColumnDone;
            event.row_a = c;
            event.rows = rows;
            relation.events.push_back(std::move(event));
        }
    }

    relation.coefficients.assign(size, Rational(0));
    for (std::size_t i = size; i-- > 0;) {
        Rational rest = rows[i][size];
        for (std::size_t j = i + 1; j < size; ++j) rest -= rows[i][j] * relation.coefficients[j];
        relation.coefficients[i] = rest / rows[i][i];
        EliminationEvent event;
        event.kind = EliminationEvent::Kind::BackSubstitute;
        event.row_a = i;
        event.value = relation.coefficients[i];
        relation.events.push_back(std::move(event));
    }
    return relation;
}

ErvcSolution ervc_solve(const ErvcInstance& instance) {
    const std::size_t n = instance.variables.size();
    const std::size_t known = instance.known_count;
    if (known == 0 || known >= n || instance.query_values.size() != known)
        throw ContractError("ERVC instance shape is invalid");

    ErvcSolution solution;
    solution.values.assign(n, Rational(0));
    for (std::size_t k = 0; k < known; ++k) solution.values[k] = instance.query_values[k];

    for (std::size_t j = 0; j + known < n; ++j) {
        const std::vector<std::size_t> inputs = ervc_equation_inputs(known, j);
        const std::size_t target = known + j;
        const std::size_t count = inputs.size() + 1;
        if (instance.data_points.size() < count) throw ContractError("ERVC instance has too few data points");

        RelationSolution relation = eliminate(design_rows(instance, inputs, count, true, target));
        relation.equation = j;
        relation.data_rows.resize(count);
        std::iota(relation.data_rows.begin(), relation.data_rows.end(), 0);

        Rational value = relation.coefficients.back();
        for (std::size_t k = 0; k < inputs.size(); ++k) value += relation.coefficients[k] * solution.values[inputs[k]];
        solution.values[target] = value;
        solution.relations.push_back(std::move(relation));
    }
    solution.final_answer = solution.values[n - 1];
    return solution;
}

}  // namespace cotkit
