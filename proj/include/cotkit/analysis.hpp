#pragma once

// Numerics for length generalization: prefix substructure, coverage
// probability and the KL bound, CoT-drop accuracy, rotary attention decay and
// the irrelevant-feature gradient simulation.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotkit/dataset.hpp"
#include "cotkit/ervc.hpp"
#include "cotkit/task.hpp"

namespace cotkit {

/// True iff solving the first n3 inputs reproduces the first n3 states of the
/// full solve. n3 = length is the degenerate full prefix. Throws ContractError
/// when n3 exceeds the input length.
bool check_prefix_substructure(const TaskDefinition& task, std::span<const Symbol> long_input, std::size_t n3);

/// m2 / (m3 * k^n3), exactly. Throws ContractError when m3 or k is 0 or when
/// m2 > m3 * k^n3 (the probability would exceed 1).
Rational coverage_probability(std::uint64_t m2, std::uint64_t m3, std::uint64_t k, int n3);

struct CoverageReport {
    std::uint64_t m2 = 0;
    std::uint64_t m3 = 0;
    std::uint64_t k = 0;
    int n3 = 0;
    Rational p_cover;
    /// Eval items at n3 whose input prefix (hence state prefix) occurs in some long train item.
    std::uint64_t matched_prefixes = 0;

    double p_cover_value() const { return p_cover.convert_to<double>(); }
};

/// Size of the task's input alphabet: LIS value range, MPC {0, 1}.
/// Throws ContractError for ERVC, which has no symbol-wise input alphabet.
std::uint64_t input_alphabet_size(const DatasetSpec& spec);

/// Picks the single eval level unless `n3` is given. m2 counts train records
/// longer than n3, m3 eval records at n3. Throws ContractError when no train
/// level is longer than n3 or the eval level is ambiguous.
CoverageReport prefix_coverage(const Dataset& dataset, std::optional<int> n3 = std::nullopt,
                               std::optional<std::uint64_t> k_override = std::nullopt);

/// D(P || Q) in nats between two count histograms, each smoothed by adding
/// `smoothing` to every outcome of the union support before normalizing.
double kl_divergence(const std::map<std::string, double>& p_counts, const std::map<std::string, double>& q_counts,
                     double smoothing);

struct KlEstimate {
    /// Final-answer distribution, eval against train.
    double kl_qa = 0.0;
    /// Length-n3 state-prefix distribution, eval against long train items.
    double kl_qcot = 0.0;
    /// (1 - p_cover) * kl_qa.
    double bound = 0.0;
    double smoothing = 1e-6;
};

KlEstimate estimate_kl(const Dataset& dataset, const CoverageReport& coverage, double smoothing = 1e-6);

/// (1 - epsilon)^l. Throws ContractError unless epsilon lies in [0, 1].
double drop_accuracy(double epsilon, unsigned l);

/// theta_j = 10000^(-2j / d_model) for j < d_model / 2. Throws ContractError
/// unless d_model is even and at least 2.
std::vector<double> rope_angles(int d_model);

/// A(d) = <R_m q, R_{m+d} k> with R a block-diagonal rotation by theta_j.
double rope_score(std::span<const double> query, std::span<const double> key, std::span<const double> theta, double d);

/// The same score as Re sum_j h_j e^{i d theta_j}, h_j = conj(q_j) k_j.
double rope_score_complex(std::span<const double> query, std::span<const double> key, std::span<const double> theta,
                          double d);

enum class PairMode {
    /// Query and key are independent uniform unit vectors.
    Independent,
    /// Key equals query, the self-similarity case.
    Matched,
};

struct DecayConfig {
    int d_model = 64;
    std::size_t d_max = 10000;
    std::size_t trials = 100;
    double epsilon = 1e-3;
    PairMode mode = PairMode::Independent;
    std::uint64_t seed = 0;
};

struct DecayProfile {
    int d_model = 0;
    std::vector<double> theta;
    /// max over pairs of |A(d)| for d = 0..d_max.
    std::vector<double> max_abs;
    double epsilon = 0.0;
    PairMode mode = PairMode::Independent;
    std::size_t trials = 0;
    /// Smallest d with max_abs[d'] < epsilon for every d' >= d up to d_max.
    std::optional<std::size_t> tau;
};

DecayProfile attention_decay_profile(const DecayConfig& config);

/// tau for an already computed profile at another threshold.
std::optional<std::size_t> decay_threshold(std::span<const double> max_abs, double epsilon);

/// max |A(d)| over d in [0, 1), [1, 10), [10, 100), ... up to d_max.
std::vector<double> decade_envelope(std::span<const double> max_abs);

struct GradientSimConfig {
    int dim = 8;
    /// Width of the irrelevant block; 0 picks max(1, dim / 2).
    int irrelevant_dim = 0;
    int sample_size = 16;
    double noise_sigma = 0.5;
    std::size_t trials = 2000;
    /// Iterate w = step_fraction * w_fit, starting from w = 0.
    double step_fraction = 0.5;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
};

struct GradientSimReport {
    std::size_t trials = 0;
    int dim = 0;
    int irrelevant_dim = 0;
    int sample_size = 0;
    double noise_sigma = 0.0;
    double step_fraction = 0.0;
    /// Mean of <g_s, w* - w_s> and <g_1, w* - w_1>.
    double mean_short = 0.0;
    double mean_long = 0.0;
    /// mean_short - mean_long; positive when the irrelevant block weakens the signal.
    double gap = 0.0;
    double gap_stderr = 0.0;
    /// 95% normal-approximation interval gap +- 1.96 * stderr; undefined for one trial.
    bool ci_defined = false;
    double ci_low = 0.0;
    double ci_high = 0.0;
    /// Largest norm of the fitted irrelevant weights over all trials.
    double max_irrelevant_norm = 0.0;
    /// Rank-deficient designs redrawn.
    std::size_t resamples = 0;
};

/// Per trial: draws w* and features from N(0, 1), targets y = X w* + sigma * noise,
/// fits both models by least squares, and evaluates the population gradient of
/// the squared loss (identity feature covariance) at the intermediate iterate.
/// Throws ContractError unless dim >= 1, sample_size >= dim + 1, trials >= 1.
GradientSimReport gradient_alignment_sim(const GradientSimConfig& config);

// CSV reports. Doubles are printed with 17 significant digits.
std::string coverage_csv(const CoverageReport& coverage, const KlEstimate& kl);
std::string drop_csv(double epsilon, unsigned l_min, unsigned l_max);
std::string decay_csv(const DecayProfile& profile);
std::string decay_summary_csv(const DecayProfile& profile);
std::string gradient_csv(const GradientSimReport& report);

}  // namespace cotkit
