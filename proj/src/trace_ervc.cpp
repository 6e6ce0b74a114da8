#include <charconv>
#include <cstdint>
#include <string_view>

#include "cotkit/errors.hpp"
#include "cotkit/trace.hpp"
#include "ervc_text.hpp"

namespace cotkit::detail {

namespace {

using Rows = std::vector<std::vector<Rational>>;

void append(Tokens& out, std::string_view words) {
    std::size_t pos = 0;
    while (pos < words.size()) {
        const std::size_t end = std::min(words.find(' ', pos), words.size());
        if (end > pos) out.emplace_back(words.substr(pos, end - pos));
        pos = end + 1;
    }
}
void append(Tokens& out, const std::string& word) { append(out, std::string_view(word)); }
void append(Tokens& out, const char* words) { append(out, std::string_view(words)); }
void append(Tokens& out, const Rational& value) { out.push_back(format_rational(value)); }
void append(Tokens& out, std::int64_t value) { out.push_back(std::to_string(value)); }
void append(Tokens& out, std::size_t value) { out.push_back(std::to_string(value)); }
void append(Tokens& out, const Tokens& more) { out.insert(out.end(), more.begin(), more.end()); }

class Lines {
public:
    template <class... Parts>
    void add(Parts&&... parts) {
        push(false, std::forward<Parts>(parts)...);
    }
    template <class... Parts>
    void recap(Parts&&... parts) {
        push(true, std::forward<Parts>(parts)...);
    }
    std::vector<ErvcLine> take() { return std::move(lines_); }

private:
    template <class... Parts>
    void push(bool is_recap, Parts&&... parts) {
        ErvcLine line;
        line.recap = is_recap;
        (append(line.tokens, std::forward<Parts>(parts)), ...);
        lines_.push_back(std::move(line));
    }
    std::vector<ErvcLine> lines_;
};

std::string var(std::size_t index) { return "c_" + std::to_string(index + 1); }
std::string coef(std::size_t index) { return "K_" + std::to_string(index + 1); }
std::string data_label(std::size_t row) { return "data_" + std::to_string(row + 1); }

// "a and b", "a , b and c"
Tokens and_list(const std::vector<std::string>& items) {
    Tokens out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (k > 0) out.emplace_back(k + 1 == items.size() ? "and" : ",");
        out.push_back(items[k]);
    }
    return out;
}

// "[ c_2 , c_1 ]"
Tokens bracket_list(const std::vector<std::string>& items) {
    Tokens out{"["};
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (k > 0) out.emplace_back(",");
        out.push_back(items[k]);
    }
    out.emplace_back("]");
    return out;
}

// "3 * K_1 + 1 * K_2 = 12"; zero terms are omitted.
Tokens format_row(const std::vector<Rational>& row) {
    Tokens out;
    const std::size_t unknowns = row.size() - 1;
    for (std::size_t k = 0; k < unknowns; ++k) {
        if (row[k] == 0) continue;
        if (out.empty()) {
            out.push_back(format_rational(row[k]));
        } else {
            out.emplace_back(row[k] > 0 ? "+" : "-");
            out.push_back(format_rational(abs(row[k])));
        }
        out.emplace_back("*");
        out.push_back(coef(k));
    }
    if (out.empty()) out.emplace_back("0");
    out.emplace_back("=");
    out.push_back(format_rational(row.back()));
    return out;
}

std::vector<Rational> scaled(const std::vector<Rational>& row, const Rational& factor) {
    std::vector<Rational> out;
    out.reserve(row.size());
    for (const auto& v : row) out.push_back(v * factor);
    return out;
}

// "c_2 = K_1 * c_1 + K_2"
Tokens symbolic_equation(std::size_t target, const std::vector<std::size_t>& inputs) {
    Tokens out{var(target), "="};
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        append(out, coef(k) + " * " + var(inputs[k]) + " +");
    }
    out.push_back(coef(inputs.size()));
    return out;
}

// "c_2 = 3 * c_1 + 3"
Tokens concrete_equation(std::size_t target, const std::vector<std::size_t>& inputs,
                         const std::vector<Rational>& coefficients) {
    Tokens out{var(target), "="};
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        append(out, coefficients[k]);
        append(out, "* " + var(inputs[k]) + " +");
    }
    append(out, coefficients.back());
    return out;
}

void render_elimination(Lines& lines, const RelationSolution& relation) {
    lines.add("Solve the system of equations using Gaussian Elimination :");
    lines.add("Initialize :");
    for (std::size_t r = 0; r < relation.initial_rows.size(); ++r)
        lines.add("Equation", r + 1, ":", format_row(relation.initial_rows[r]));

    Rows current = relation.initial_rows;
    const std::size_t size = current.size();
    for (const auto& event : relation.events) {
        using Kind = EliminationEvent::Kind;
        switch (event.kind) {
            case Kind::Swap:
                lines.add("Swap Equation", event.row_a + 1, "with Equation", event.row_b + 1, ":");
                lines.add("Equation", event.row_a + 1, ":", format_row(event.rows[event.row_a]));
                lines.add("Equation", event.row_b + 1, ":", format_row(event.rows[event.row_b]));
                break;
            case Kind::ScaleSubtract:
                lines.add("Multiply Equation", event.row_a + 1, "by", event.factor_a, "and subtract", event.factor_b,
                          "times Equation", event.row_b + 1, ":");
                lines.add("( Equation", event.row_a + 1, ") *", event.factor_a, ":",
                          format_row(scaled(current[event.row_a], event.factor_a)));
                lines.add("( Equation", event.row_b + 1, ") *", event.factor_b, ":",
                          format_row(scaled(current[event.row_b], event.factor_b)));
                lines.add("New Equation", event.row_b + 1, ":", format_row(event.rows[event.row_b]));
                break;
            case Kind::ColumnDone:
                lines.recap("Recap updated equations :");
                for (std::size_t r = 0; r < size; ++r) lines.recap("Equation", r + 1, ":", format_row(event.rows[r]));
                break;
            case Kind::BackSubstitute: {
                const std::size_t i = event.row_a;
                const auto& row = current[i];
                const Rational& pivot = row[i];
                const Rational& rhs = row[size];
                lines.add("Solve for", coef(i), ":");
                Tokens symbolic{format_rational(pivot), "*", coef(i), "=", format_rational(rhs)};
                Tokens numeric = symbolic;
                Rational rest = rhs;
                bool has_terms = false;
                for (std::size_t j = i + 1; j < size; ++j) {
                    if (row[j] == 0) continue;
                    has_terms = true;
                    append(symbolic, "-");
                    append(symbolic, row[j]);
                    append(symbolic, "* " + coef(j));
                    const Rational term = row[j] * relation.coefficients[j];
                    append(numeric, "-");
                    append(numeric, term);
                    rest -= term;
                }
                lines.add(symbolic);
                if (has_terms) {
                    append(numeric, "=");
                    append(numeric, rest);
                    lines.add(numeric);
                }
                lines.add(coef(i), "=", rest, "/", pivot, "=", event.value);
                break;
            }
        }
        if (!event.rows.empty()) current = event.rows;
    }
}

class Cursor {
public:
    explicit Cursor(std::span<const std::string> tokens) : tokens_(tokens) {}

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ >= tokens_.size(); }
    const std::string& peek() const {
        if (done()) throw ParseError(pos_, "unexpected end of question");
        return tokens_[pos_];
    }
    const std::string& next() {
        const std::string& t = peek();
        ++pos_;
        return t;
    }
    void expect(std::string_view words) {
        Tokens wanted;
        append(wanted, words);
        for (const auto& w : wanted) {
            if (next() != w) throw ParseError(pos_ - 1, "expected '" + w + "'");
        }
    }
    std::int64_t integer() {
        const std::string& t = next();
        std::int64_t value = 0;
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
        if (ec != std::errc{} || ptr != t.data() + t.size()) throw ParseError(pos_ - 1, "expected an integer");
        return value;
    }

private:
    std::span<const std::string> tokens_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::string> ervc_question_tokens(const ErvcInstance& instance) {
    const std::size_t n = instance.variables.size();
    Tokens out;
    append(out, "Data :");
    for (std::size_t r = 0; r < instance.data_points.size(); ++r) {
        append(out, data_label(r) + " :");
        for (std::size_t v = n; v-- > 0;) {
            append(out, instance.variables[v] + " =");
            append(out, instance.data_points[r][v]);
            out.emplace_back(v == 0 ? "." : ",");
        }
    }
    append(out, "Question : Assume all relations between variables are linear combinations . If");
    for (std::size_t k = 0; k < instance.known_count; ++k) {
        append(out, "the number of " + instance.variables[k] + " equals");
        append(out, instance.query_values[k]);
        out.emplace_back(",");
    }
    append(out, "then what is the number of " + instance.variables[n - 1] + " ?");
    out.emplace_back(kSep);
    return out;
}

std::vector<ErvcLine> ervc_solution_lines(const ErvcInstance& instance, const ErvcSolution& solution) {
    const std::size_t n = instance.variables.size();
    const std::size_t known = instance.known_count;
    const std::size_t m = n - known;
    Lines lines;

    lines.add("Solution :");
    lines.add("Defining Variables");
    lines.add("Known Variables :");
    for (std::size_t k = 0; k < known; ++k)
        lines.add(instance.variables[k], "as", var(k), "=", instance.query_values[k]);
    lines.add("Unknown Variables :");
    for (std::size_t k = known; k + 1 < n; ++k) lines.add("Intermediate Variable :", instance.variables[k], "as", var(k));
    lines.add("Target Variable :", instance.variables[n - 1], "as", var(n - 1));

    lines.add("Restoring Relations");
    std::vector<std::string> all_vars;
    for (std::size_t v = n; v-- > 0;) all_vars.push_back(var(v));
    Tokens listing;
    for (std::size_t r = 0; r < instance.data_points.size(); ++r) {
        if (r > 0) listing.emplace_back(",");
        append(listing, bracket_list(all_vars));
    }
    lines.add("List all variable names in each data point :", listing);
    lines.add("Deduplicate them :", bracket_list(all_vars));
    lines.add("There is 1 distinct group , implying", m, m == 1 ? "distinct linear relationship" : "distinct linear relationships",
              "to be determined .");
    lines.add("Examining each relationship :");

    for (const auto& relation : solution.relations) {
        const std::size_t target = known + relation.equation;
        const std::vector<std::size_t> inputs = ervc_equation_inputs(known, relation.equation);
        const std::size_t count = inputs.size() + 1;

        lines.add("Relation", relation.equation + 1, ":");
        lines.add("Exploring relation for", var(target), ":");
        lines.add("There are", count, "variables in the data beginning with", var(target), ": Hence ,", count,
                  "coefficients are required , and at least", count, "data points are needed .");
        std::vector<std::string> coef_names;
        for (std::size_t k = 0; k < count; ++k) coef_names.push_back(coef(k));
        lines.add("Let the coefficients on the right side of the equation be", and_list(coef_names), ".");
        std::vector<std::string> relation_vars{var(target)};
        for (std::size_t v : inputs) relation_vars.push_back(var(v));
        lines.recap("Recap variables :", bracket_list(relation_vars));
        lines.add("Define the equation of relation", relation.equation + 1, ":");
        lines.add(symbolic_equation(target, inputs));

        std::vector<std::string> row_names;
        for (std::size_t r : relation.data_rows) row_names.push_back(data_label(r));
        lines.add("Using data points", and_list(row_names), ":");
        for (std::size_t e = 0; e < relation.data_rows.size(); ++e) {
            const auto& point = instance.data_points[relation.data_rows[e]];
            Tokens observed{data_label(relation.data_rows[e]), ":", var(target), "=", std::to_string(point[target])};
            Tokens substituted{"Equation", std::to_string(e + 1), ":", std::to_string(point[target]), "="};
            for (std::size_t k = 0; k < inputs.size(); ++k) {
                append(observed, ", " + var(inputs[k]) + " =");
                append(observed, point[inputs[k]]);
                append(substituted, coef(k) + " *");
                append(substituted, point[inputs[k]]);
                substituted.emplace_back("+");
            }
            substituted.push_back(coef(inputs.size()));
            lines.add(observed);
            lines.add(substituted);
        }

        render_elimination(lines, relation);

        lines.recap("Recap the equation :");
        lines.recap(symbolic_equation(target, inputs));
        Tokens estimated;
        for (std::size_t k = 0; k < count; ++k) {
            if (k > 0) estimated.emplace_back(",");
            append(estimated, coef(k) + " =");
            append(estimated, relation.coefficients[k]);
        }
        lines.add("Estimated coefficients :", estimated);
        lines.add("Final equation :", concrete_equation(target, inputs, relation.coefficients));
    }

    lines.add("Calculation with Restored Relations :");
    for (const auto& relation : solution.relations) {
        const std::size_t target = known + relation.equation;
        const std::vector<std::size_t> inputs = ervc_equation_inputs(known, relation.equation);
        lines.add("Using the equation", concrete_equation(target, inputs, relation.coefficients), ":");
        Tokens known_values;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (k > 0) known_values.emplace_back(",");
            append(known_values, var(inputs[k]) + " =");
            append(known_values, solution.values[inputs[k]]);
        }
        lines.add("Known variables :", known_values);

        Tokens products{var(target), "="};
        Tokens sums{"="};
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            append(products, relation.coefficients[k]);
            products.emplace_back("*");
            append(products, solution.values[inputs[k]]);
            products.emplace_back("+");
            append(sums, relation.coefficients[k] * solution.values[inputs[k]]);
            sums.emplace_back("+");
        }
        append(products, relation.coefficients.back());
        append(sums, relation.coefficients.back());
        lines.add(products, sums, "=", solution.values[target]);
    }

    lines.recap("Recap Target Variable :");
    lines.recap(instance.variables[n - 1], "(", var(n - 1), ") =", solution.final_answer);
    lines.add("Conclusion : The number of", instance.variables[n - 1], "equals", solution.final_answer);
    return lines.take();
}

ErvcInstance ervc_instance_from_question(std::span<const std::string> tokens) {
    Cursor cur(tokens);
    ErvcInstance instance;
    cur.expect("Data :");

    std::vector<std::vector<std::int64_t>> rows;
    std::vector<std::string> names_desc;
    while (!cur.done() && cur.peek() != "Question") {
        const std::size_t row = rows.size();
        if (cur.next() != data_label(row)) throw ParseError(cur.pos() - 1, "expected '" + data_label(row) + "'");
        cur.expect(":");
        std::vector<std::int64_t> values;
        std::size_t column = 0;
        while (true) {
            const std::size_t at = cur.pos();
            const std::string name = cur.next();
            if (row == 0) {
                names_desc.push_back(name);
            } else if (column >= names_desc.size() || names_desc[column] != name) {
                throw ParseError(at, "data rows must list the same variables in the same order");
            }
            cur.expect("=");
            values.push_back(cur.integer());
            ++column;
            const std::string& punct = cur.next();
            if (punct == ".") break;
            if (punct != ",") throw ParseError(cur.pos() - 1, "expected ',' or '.'");
        }
        if (values.size() != names_desc.size()) throw ParseError(cur.pos() - 1, "data row is missing variables");
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw ParseError(cur.pos(), "no data rows");
    const std::size_t n = names_desc.size();

    cur.expect("Question : Assume all relations between variables are linear combinations . If");
    std::vector<std::string> known_names;
    while (cur.peek() == "the") {
        cur.expect("the number of");
        known_names.push_back(cur.next());
        cur.expect("equals");
        instance.query_values.push_back(cur.integer());
        cur.expect(",");
    }
    cur.expect("then what is the number of");
    const std::size_t target_at = cur.pos();
    const std::string target_name = cur.next();
    cur.expect("?");
    if (cur.next() != kSep) throw ParseError(cur.pos() - 1, "expected <sep>");
    if (!cur.done()) throw ParseError(cur.pos(), "trailing tokens after question");

    if (known_names.empty() || known_names.size() >= n) throw ParseError(target_at, "question must fix 1..n-1 knowns");
    instance.variables.assign(names_desc.rbegin(), names_desc.rend());
    instance.known_count = known_names.size();
    for (std::size_t k = 0; k < known_names.size(); ++k) {
        if (instance.variables[k] != known_names[k]) throw ParseError(target_at, "known variables out of order");
    }
    if (instance.variables[n - 1] != target_name) throw ParseError(target_at, "target is not the last variable");

    for (const auto& values : rows) instance.data_points.emplace_back(values.rbegin(), values.rend());
    for (std::size_t j = 0; j + instance.known_count < n; ++j) {
        ErvcEquation eq;
        eq.target = instance.known_count + j;
        eq.inputs = ervc_equation_inputs(instance.known_count, j);
        instance.equations.push_back(std::move(eq));
    }
    return instance;
}

}  // namespace cotkit::detail
