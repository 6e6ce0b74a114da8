#include "cotkit/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <exception>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "cotkit/errors.hpp"
#include "cotkit/rng.hpp"

namespace cotkit {

namespace {

std::string num(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.17g", v);
    return buffer;
}

std::vector<Symbol> record_inputs(TaskId task, const DatasetRecord& record) {
    return question_to_instance(task, record.question).inputs;
}

std::string join_ints(std::span<const std::int64_t> values, std::size_t count) {
    std::string out;
    for (std::size_t k = 0; k < count; ++k) {
        if (k > 0) out.push_back(' ');
        out += std::to_string(values[k]);
    }
    return out;
}

// Runs body(t) for t in [0, count) on up to `jobs` threads, rethrowing the first error.
template <typename Body>
void parallel_for(std::size_t count, unsigned jobs, Body body) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(jobs, count));
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
        try {
            for (std::size_t t = w; t < count; t += workers) body(t);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

bool check_prefix_substructure(const TaskDefinition& task, std::span<const Symbol> long_input, std::size_t n3) {
    if (n3 > long_input.size()) throw ContractError("prefix length exceeds the input length");
    if (n3 == 0) return true;
    const Solution full = solve(task, long_input);
    const Solution prefix = solve(task, long_input.first(n3));
    for (std::size_t i = 0; i < n3; ++i) {
        if (prefix.steps[i].state != full.steps[i].state) return false;
    }
    return true;
}

Rational coverage_probability(std::uint64_t m2, std::uint64_t m3, std::uint64_t k, int n3) {
    if (m3 == 0) throw ContractError("coverage needs m3 >= 1");
    if (k == 0) throw ContractError("coverage needs k >= 1");
    if (n3 < 0) throw ContractError("coverage needs n3 >= 0");
    const BigInt denominator = BigInt(m3) * boost::multiprecision::pow(BigInt(k), static_cast<unsigned>(n3));
    if (BigInt(m2) > denominator)
        throw ContractError("m2 exceeds m3 * k^n3, so the coverage probability would exceed 1");
    return Rational(BigInt(m2), denominator);
}

std::uint64_t input_alphabet_size(const DatasetSpec& spec) {
    switch (spec.task) {
        case TaskId::Lis: return spec.options.lis_range.size();
        case TaskId::Mpc: return 2;
        case TaskId::Ervc: break;
    }
    throw ContractError("coverage is defined for symbol-sequence tasks (LIS, MPC), not ERVC");
}

CoverageReport prefix_coverage(const Dataset& dataset, std::optional<int> n3, std::optional<std::uint64_t> k_override) {
    const DatasetSpec& spec = dataset.manifest.spec;
    CoverageReport report;
    report.k = k_override ? *k_override : input_alphabet_size(spec);
    if (spec.task == TaskId::Ervc) throw ContractError("coverage is defined for LIS and MPC datasets");

    if (n3) {
        report.n3 = *n3;
    } else {
        std::set<int> eval_ns;
        for (const auto& r : dataset.eval) eval_ns.insert(r.level.n);
        if (eval_ns.size() != 1) throw ContractError("eval split has several levels; choose n3 explicitly");
        report.n3 = *eval_ns.begin();
    }

    std::set<std::vector<Symbol>> long_prefixes;
    for (const auto& r : dataset.train) {
        if (r.level.n <= report.n3) continue;
        ++report.m2;
        auto inputs = record_inputs(spec.task, r);
        inputs.resize(static_cast<std::size_t>(report.n3));
        long_prefixes.insert(std::move(inputs));
    }
    if (report.m2 == 0) throw ContractError("no train level is longer than n3 = " + std::to_string(report.n3));

    for (const auto& r : dataset.eval) {
        if (r.level.n != report.n3) continue;
        ++report.m3;
        if (long_prefixes.count(record_inputs(spec.task, r)) != 0) ++report.matched_prefixes;
    }
    if (report.m3 == 0) throw ContractError("no eval records at n3 = " + std::to_string(report.n3));
    report.p_cover = coverage_probability(report.m2, report.m3, report.k, report.n3);
    return report;
}

double kl_divergence(const std::map<std::string, double>& p_counts, const std::map<std::string, double>& q_counts,
                     double smoothing) {
    if (!(smoothing >= 0.0)) throw ContractError("smoothing must be non-negative");
    std::set<std::string> support;
    for (const auto& [key, c] : p_counts) support.insert(key);
    for (const auto& [key, c] : q_counts) support.insert(key);
    double p_total = 0.0;
    double q_total = 0.0;
    for (const auto& key : support) {
        auto p = p_counts.find(key);
        auto q = q_counts.find(key);
        p_total += (p == p_counts.end() ? 0.0 : p->second) + smoothing;
        q_total += (q == q_counts.end() ? 0.0 : q->second) + smoothing;
    }
    if (p_total <= 0.0 || q_total <= 0.0) throw ContractError("KL needs non-empty histograms");
    double kl = 0.0;
    for (const auto& key : support) {
        auto p = p_counts.find(key);
        auto q = q_counts.find(key);
        const double pp = ((p == p_counts.end() ? 0.0 : p->second) + smoothing) / p_total;
        const double qq = ((q == q_counts.end() ? 0.0 : q->second) + smoothing) / q_total;
        if (pp > 0.0) {
            if (qq <= 0.0) return std::numeric_limits<double>::infinity();
            kl += pp * std::log(pp / qq);
        }
    }
    return std::max(kl, 0.0);
}

KlEstimate estimate_kl(const Dataset& dataset, const CoverageReport& coverage, double smoothing) {
    if (dataset.train.empty() || dataset.eval.empty()) throw ContractError("KL estimation needs both splits");
    const DatasetSpec& spec = dataset.manifest.spec;
    const TaskDefinition prefix_task = make_task(spec.task, Level{coverage.n3, 0}, spec.options);
    const auto n3 = static_cast<std::size_t>(coverage.n3);

    std::map<std::string, double> train_answers;
    std::map<std::string, double> eval_answers;
    for (const auto& r : dataset.train) train_answers[r.answer()] += 1.0;
    for (const auto& r : dataset.eval) eval_answers[r.answer()] += 1.0;

    auto state_prefix = [&](const DatasetRecord& r) {
        auto inputs = record_inputs(spec.task, r);
        inputs.resize(n3);
        const Solution s = solve(prefix_task, inputs);
        std::vector<State> states;
        for (const auto& step : s.steps) states.push_back(step.state);
        return join_ints(states, states.size());
    };
    std::map<std::string, double> train_prefixes;
    std::map<std::string, double> eval_prefixes;
    for (const auto& r : dataset.train) {
        if (r.level.n > coverage.n3) train_prefixes[state_prefix(r)] += 1.0;
    }
    for (const auto& r : dataset.eval) {
        if (r.level.n == coverage.n3) eval_prefixes[state_prefix(r)] += 1.0;
    }

    KlEstimate kl;
    kl.smoothing = smoothing;
    kl.kl_qa = kl_divergence(eval_answers, train_answers, smoothing);
    kl.kl_qcot = kl_divergence(eval_prefixes, train_prefixes, smoothing);
    kl.bound = (1.0 - coverage.p_cover_value()) * kl.kl_qa;
    if (coverage.p_cover == 1) kl.bound = 0.0;
    return kl;
}

double drop_accuracy(double epsilon, unsigned l) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("epsilon must lie in [0, 1]");
    return std::pow(1.0 - epsilon, static_cast<double>(l));
}

std::vector<double> rope_angles(int d_model) {
    if (d_model < 2 || d_model % 2 != 0) throw ContractError("d_model must be even and at least 2");
    std::vector<double> theta;
    for (int j = 0; j < d_model / 2; ++j) theta.push_back(std::pow(10000.0, -2.0 * j / d_model));
    return theta;
}

double rope_score(std::span<const double> query, std::span<const double> key, std::span<const double> theta, double d) {
    if (query.size() != key.size() || query.size() != 2 * theta.size())
        throw ContractError("query, key and angle sizes disagree");
    double score = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double c = std::cos(d * theta[j]);
        const double s = std::sin(d * theta[j]);
        const double k0 = c * key[2 * j] - s * key[2 * j + 1];
        const double k1 = s * key[2 * j] + c * key[2 * j + 1];
        score += query[2 * j] * k0 + query[2 * j + 1] * k1;
    }
    return score;
}

double rope_score_complex(std::span<const double> query, std::span<const double> key, std::span<const double> theta,
                          double d) {
    if (query.size() != key.size() || query.size() != 2 * theta.size())
        throw ContractError("query, key and angle sizes disagree");
    std::complex<double> total = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const std::complex<double> h = std::conj(std::complex<double>(query[2 * j], query[2 * j + 1])) *
                                       std::complex<double>(key[2 * j], key[2 * j + 1]);
        total += h * std::polar(1.0, d * theta[j]);
    }
    return total.real();
}

std::optional<std::size_t> decay_threshold(std::span<const double> max_abs, double epsilon) {
    std::size_t d = max_abs.size();
    while (d > 0 && max_abs[d - 1] < epsilon) --d;
    // The last sample is still above threshold, so no d is certified within range.
    if (d == max_abs.size()) return std::nullopt;
    return d;
}

std::vector<double> decade_envelope(std::span<const double> max_abs) {
    std::vector<double> envelope;
    std::size_t lo = 0;
    std::size_t hi = 1;
    while (lo < max_abs.size()) {
        const std::size_t end = std::min(hi, max_abs.size());
        envelope.push_back(*std::max_element(max_abs.begin() + static_cast<std::ptrdiff_t>(lo),
                                             max_abs.begin() + static_cast<std::ptrdiff_t>(end)));
        lo = hi;
        hi *= 10;
    }
    return envelope;
}

DecayProfile attention_decay_profile(const DecayConfig& config) {
    if (config.trials == 0) throw ContractError("attention profile needs at least one trial");
    if (!(config.epsilon > 0.0)) throw ContractError("epsilon must be positive");
    DecayProfile profile;
    profile.d_model = config.d_model;
    profile.theta = rope_angles(config.d_model);
    profile.max_abs.assign(config.d_max + 1, 0.0);
    profile.epsilon = config.epsilon;
    profile.mode = config.mode;
    profile.trials = config.trials;

    const auto width = static_cast<std::size_t>(config.d_model);
    auto unit = [&](Rng& rng) {
        std::vector<double> v(width);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (auto& x : v) {
                x = rng.normal();
                norm += x * x;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
        return v;
    };
    for (std::size_t t = 0; t < config.trials; ++t) {
        Rng rng(derive_seed(config.seed, kTagAttention, t));
        const std::vector<double> query = unit(rng);
        const std::vector<double> key = config.mode == PairMode::Matched ? query : unit(rng);
        for (std::size_t d = 0; d <= config.d_max; ++d) {
            const double a = std::abs(rope_score(query, key, profile.theta, static_cast<double>(d)));
            profile.max_abs[d] = std::max(profile.max_abs[d], a);
        }
    }
    profile.tau = decay_threshold(profile.max_abs, config.epsilon);
    return profile;
}

GradientSimReport gradient_alignment_sim(const GradientSimConfig& config) {
    if (config.dim < 1) throw ContractError("dim must be at least 1");
    if (config.sample_size < config.dim + 1) throw ContractError("sample_size must be at least dim + 1");
    if (config.trials < 1) throw ContractError("trials must be at least 1");
    if (config.irrelevant_dim < 0) throw ContractError("irrelevant_dim must be non-negative");
    if (!(config.noise_sigma >= 0.0)) throw ContractError("noise_sigma must be non-negative");

    const int dim = config.dim;
    const int extra = config.irrelevant_dim > 0 ? config.irrelevant_dim : std::max(1, dim / 2);
    const int n = config.sample_size;
    constexpr int kMaxResamples = 100;

    struct Trial {
        double short_alignment = 0.0;
        double long_alignment = 0.0;
        double irrelevant_norm = 0.0;
        std::size_t resamples = 0;
    };
    std::vector<Trial> trials(config.trials);

    parallel_for(config.trials, config.jobs, [&](std::size_t t) {
        for (int attempt = 0; attempt <= kMaxResamples; ++attempt) {
            Rng rng(derive_seed(config.seed, kTagGradient, t, static_cast<std::uint64_t>(attempt)));
            Eigen::VectorXd w_true(dim);
            for (int k = 0; k < dim; ++k) w_true(k) = rng.normal();
            Eigen::MatrixXd design(n, dim + extra);
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < dim + extra; ++c) design(r, c) = rng.normal();
            }
            Eigen::VectorXd y = design.leftCols(dim) * w_true;
            for (int r = 0; r < n; ++r) y(r) += config.noise_sigma * rng.normal();

            const Eigen::MatrixXd relevant = design.leftCols(dim);
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> short_fit(relevant);
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> long_fit(design);
            if (short_fit.rank() < dim || long_fit.rank() < std::min(n, dim + extra)) continue;

            const Eigen::VectorXd w_short = config.step_fraction * short_fit.solve(y);
            const Eigen::VectorXd w_long_full = long_fit.solve(y);
            const Eigen::VectorXd w_long = config.step_fraction * w_long_full;

            // Population gradient with identity covariance: g = -2 (w* - w), so
            // <g, w* - w> = -2 |w* - w|^2, where w* is zero on the irrelevant block.
            Trial& out = trials[t];
            out.short_alignment = -2.0 * (w_true - w_short).squaredNorm();
            out.long_alignment = -2.0 * ((w_true - w_long.head(dim)).squaredNorm() + w_long.tail(extra).squaredNorm());
            out.irrelevant_norm = w_long_full.tail(extra).norm();
            out.resamples = static_cast<std::size_t>(attempt);
            return;
        }
        throw GenerationError("gradient simulation: design stayed rank-deficient after resampling");
    });

    GradientSimReport report;
    report.trials = config.trials;
    report.dim = dim;
    report.irrelevant_dim = extra;
    report.sample_size = n;
    report.noise_sigma = config.noise_sigma;
    report.step_fraction = config.step_fraction;
    const double count = static_cast<double>(config.trials);
    double gap_sum = 0.0;
    for (const auto& t : trials) {
        report.mean_short += t.short_alignment / count;
        report.mean_long += t.long_alignment / count;
        gap_sum += t.short_alignment - t.long_alignment;
        report.max_irrelevant_norm = std::max(report.max_irrelevant_norm, t.irrelevant_norm);
        report.resamples += t.resamples;
    }
    report.gap = gap_sum / count;
    if (config.trials > 1) {
        double ss = 0.0;
        for (const auto& t : trials) {
            const double dev = t.short_alignment - t.long_alignment - report.gap;
            ss += dev * dev;
        }
        report.gap_stderr = std::sqrt(ss / (count - 1.0)) / std::sqrt(count);
        report.ci_defined = true;
        report.ci_low = report.gap - 1.96 * report.gap_stderr;
        report.ci_high = report.gap + 1.96 * report.gap_stderr;
    }
    return report;
}

std::string coverage_csv(const CoverageReport& c, const KlEstimate& kl) {
    std::ostringstream out;
    out << "n3,m2,m3,k,p_cover,p_cover_value,matched_prefixes,kl_qa,kl_qcot,bound,smoothing\n";
    out << c.n3 << ',' << c.m2 << ',' << c.m3 << ',' << c.k << ',' << format_rational(c.p_cover) << ','
        << num(c.p_cover_value()) << ',' << c.matched_prefixes << ',' << num(kl.kl_qa) << ',' << num(kl.kl_qcot) << ','
        << num(kl.bound) << ',' << num(kl.smoothing) << '\n';
    return out.str();
}

std::string drop_csv(double epsilon, unsigned l_min, unsigned l_max) {
    if (l_min > l_max) throw ContractError("empty l range");
    std::ostringstream out;
    out << "epsilon,l,accuracy\n";
    for (unsigned l = l_min; l <= l_max; ++l) out << num(epsilon) << ',' << l << ',' << num(drop_accuracy(epsilon, l)) << '\n';
    return out.str();
}

std::string decay_csv(const DecayProfile& profile) {
    std::ostringstream out;
    out << "d,max_abs_score\n";
    for (std::size_t d = 0; d < profile.max_abs.size(); ++d) out << d << ',' << num(profile.max_abs[d]) << '\n';
    return out.str();
}

std::string decay_summary_csv(const DecayProfile& profile) {
    std::ostringstream out;
    out << "d_model,d_max,trials,mode,epsilon,tau\n";
    out << profile.d_model << ',' << (profile.max_abs.empty() ? 0 : profile.max_abs.size() - 1) << ',' << profile.trials
        << ',' << (profile.mode == PairMode::Matched ? "matched" : "independent") << ',' << num(profile.epsilon) << ','
        << (profile.tau ? std::to_string(*profile.tau) : std::string("not_found")) << '\n';
    return out.str();
}

std::string gradient_csv(const GradientSimReport& r) {
    std::ostringstream out;
    out << "trials,dim,irrelevant_dim,sample_size,noise_sigma,step_fraction,mean_short,mean_long,gap,gap_stderr,"
           "ci_defined,ci_low,ci_high,max_irrelevant_norm,resamples\n";
    out << r.trials << ',' << r.dim << ',' << r.irrelevant_dim << ',' << r.sample_size << ',' << num(r.noise_sigma) << ','
        << num(r.step_fraction) << ',' << num(r.mean_short) << ',' << num(r.mean_long) << ',' << num(r.gap) << ','
        << num(r.gap_stderr) << ',' << (r.ci_defined ? "true" : "false") << ','
        << (r.ci_defined ? num(r.ci_low) : std::string("nan")) << ','
        << (r.ci_defined ? num(r.ci_high) : std::string("nan")) << ',' << num(r.max_irrelevant_norm) << ','
        << r.resamples << '\n';
    return out.str();
}

}  // namespace cotkit
