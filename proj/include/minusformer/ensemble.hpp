#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "minusformer/rng.hpp"

namespace minusformer {

/// L blocks sharing weight alpha whose estimation errors are jointly normal
/// with variance nu and pairwise covariance mu.
struct EnsembleSpec {
    std::size_t n_blocks = 8;
    double alpha = 1.0;
    double nu = 1.0;
    double mu = 0.5;

    std::size_t half_count() const { return n_blocks / 2; }
    /// +1 for odd L, -1 for even L.
    int parity_sign() const { return n_blocks % 2 == 1 ? 1 : -1; }

    /// Throws NotPSD unless nu > 0 and 0 <= mu <= nu (the equicorrelated
    /// construction needs both square roots real).
    void validate() const;
};

struct NoiseSpec {
    double xi = 0.0;  // label-noise std
};

/// Rows of the L-variate normal with covariance nu*I + mu*(J - I), built as
/// e_l = sqrt(mu) z + sqrt(nu - mu) w_l. Row-major [trials, L].
std::vector<double> sample_block_errors(const EnsembleSpec& spec, std::size_t trials, SeededRng& rng);

enum class AggregateMode { subtract, add };
std::string to_string(AggregateMode mode);

/// Closed forms for the 1/hbar-normalized aggregate:
///   subtract: (2/hbar) a^2 (nu - mu)
///   add:      (2/hbar) a^2 nu + (4 - 2/hbar) a^2 mu
/// Throws OddL.
double analytic_aggregate_variance(const EnsembleSpec& spec, AggregateMode mode);
/// (4/L) a^2 (nu + mu)
double theorem_bound(const EnsembleSpec& spec);

struct VarianceEstimate {
    double empirical_var = 0.0;              // normalized aggregate
    double empirical_var_unnormalized = 0.0;  // same draws without the 1/hbar factor
    double analytic_var = 0.0;
    double theorem_bound = 0.0;
    /// Standard error of a Gaussian sample variance at the analytic value.
    double std_error = 0.0;
};

/// Monte-Carlo variance of (alpha/hbar)(sum_odd e - sum_even e) or
/// (alpha/hbar) sum e. Requires even L; throws OddL.
VarianceEstimate aggregate_variance(const EnsembleSpec& spec, AggregateMode mode, std::size_t trials,
                                    SeededRng& rng);

/// Both sides of Var + Bias^2 + xi^2 = E[(Yhat - Y)^2] + 2 E[eps (Yhat - Ytrue)]
/// evaluated on sampled labels Y = truth + eps.
struct BiasVarianceRecord {
    double variance = 0.0;
    double bias_sq = 0.0;
    double noise_sq = 0.0;
    double training_mse = 0.0;
    double cross_term = 0.0;  // 2 E[eps (Yhat - Ytrue)]
    double test_side = 0.0;
    double training_side = 0.0;
    double residual = 0.0;  // test_side - training_side
    double cross_term_std_error = 0.0;
    double training_side_std_error = 0.0;
    /// |residual| <= 3 * training_side_std_error
    bool holds = false;
};

BiasVarianceRecord bias_variance_identity(std::span<const double> estimates, double truth, NoiseSpec noise,
                                          SeededRng& rng);

struct SimulationRow {
    EnsembleSpec spec;
    AggregateMode mode = AggregateMode::subtract;
    std::size_t trials = 0;
    VarianceEstimate estimate;
    bool pass = false;
};

/// Runs subtract and add aggregation (common random numbers) for every
/// (L, mu) pair. A subtract row passes when its empirical variance is within
/// 3 standard errors of the closed form, strictly below the theorem bound
/// and strictly below the add-mode empirical variance; an add row passes
/// when within 3 standard errors of its own closed form.
std::vector<SimulationRow> run_theorem_grid(std::span<const std::size_t> blocks, std::span<const double> mus,
                                            double alpha, double nu, std::size_t trials, std::uint64_t seed);

/// Columns: L,alpha,nu,mu,mode,trials,empirical_var,analytic_var,bound,pass
void write_simulation_csv(std::ostream& os, const std::vector<SimulationRow>& rows);

}  // namespace minusformer
