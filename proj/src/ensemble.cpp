#include "minusformer/ensemble.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "minusformer/errors.hpp"

namespace minusformer {

namespace {

// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double mean_of(std::span<const double> v) {
    CompensatedSum s;
    for (double x : v) s.add(x);
    return s.value() / static_cast<double>(v.size());
}

// Population variance, two-pass.
double variance_of(std::span<const double> v) {
    const double m = mean_of(v);
    CompensatedSum s;
    for (double x : v) s.add((x - m) * (x - m));
    return s.value() / static_cast<double>(v.size());
}

void require_even(const EnsembleSpec& spec) {
    if (spec.n_blocks < 2 || spec.n_blocks % 2 != 0) {
        throw OddL("aggregation needs an even block count >= 2, got " + std::to_string(spec.n_blocks));
    }
}

}  // namespace

void EnsembleSpec::validate() const {
    if (n_blocks == 0) throw NotPSD("n_blocks must be positive");
    if (!(nu > 0.0)) throw NotPSD("nu must be positive");
    if (!(mu >= 0.0 && mu <= nu)) throw NotPSD("equicorrelated sampling needs 0 <= mu <= nu");
    if (nu + static_cast<double>(n_blocks - 1) * mu < 0.0) throw NotPSD("covariance is not positive semi-definite");
}

std::vector<double> sample_block_errors(const EnsembleSpec& spec, std::size_t trials, SeededRng& rng) {
    spec.validate();
    const std::size_t L = spec.n_blocks;
    const double common = std::sqrt(spec.mu);
    const double own = std::sqrt(spec.nu - spec.mu);
    std::vector<double> out(trials * L);
    for (std::size_t t = 0; t < trials; ++t) {
        const double z = rng.normal();
        for (std::size_t l = 0; l < L; ++l) out[t * L + l] = common * z + own * rng.normal();
    }
    return out;
}

std::string to_string(AggregateMode mode) { return mode == AggregateMode::subtract ? "subtract" : "add"; }

double analytic_aggregate_variance(const EnsembleSpec& spec, AggregateMode mode) {
    require_even(spec);
    const double h = static_cast<double>(spec.half_count());
    const double a2 = spec.alpha * spec.alpha;
    if (mode == AggregateMode::subtract) return 2.0 / h * a2 * (spec.nu - spec.mu);
    return 2.0 / h * a2 * spec.nu + (4.0 - 2.0 / h) * a2 * spec.mu;
}

double theorem_bound(const EnsembleSpec& spec) {
    return 4.0 / static_cast<double>(spec.n_blocks) * spec.alpha * spec.alpha * (spec.nu + spec.mu);
}

VarianceEstimate aggregate_variance(const EnsembleSpec& spec, AggregateMode mode, std::size_t trials,
                                    SeededRng& rng) {
    require_even(spec);
    spec.validate();
    const std::size_t L = spec.n_blocks;
    const double h = static_cast<double>(spec.half_count());
    const auto errors = sample_block_errors(spec, trials, rng);

    // Blocks are numbered 1..L; odd-numbered blocks carry +, even-numbered -.
    std::vector<double> agg(trials);
    for (std::size_t t = 0; t < trials; ++t) {
        double s = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            const double e = errors[t * L + l];
            s += (mode == AggregateMode::add || l % 2 == 0) ? e : -e;
        }
        agg[t] = spec.alpha * s;
    }
    VarianceEstimate est;
    est.empirical_var_unnormalized = variance_of(agg);
    est.empirical_var = est.empirical_var_unnormalized / (h * h);
    est.analytic_var = analytic_aggregate_variance(spec, mode);
    est.theorem_bound = theorem_bound(spec);
    est.std_error = est.analytic_var * std::sqrt(2.0 / static_cast<double>(trials - 1));
    return est;
}

BiasVarianceRecord bias_variance_identity(std::span<const double> estimates, double truth, NoiseSpec noise,
                                          SeededRng& rng) {
    const std::size_t n = estimates.size();
    if (n < 2) throw SeriesTooShort("bias-variance identity needs at least 2 trials");
    std::vector<double> eps(n), sq_err(n), cross(n), train(n);
    for (std::size_t i = 0; i < n; ++i) {
        eps[i] = noise.xi * rng.normal();
        const double label = truth + eps[i];
        sq_err[i] = (estimates[i] - label) * (estimates[i] - label);
        cross[i] = 2.0 * eps[i] * (estimates[i] - truth);
        train[i] = sq_err[i] + cross[i];
    }
    BiasVarianceRecord r;
    r.variance = variance_of(estimates);
    const double bias = mean_of(estimates) - truth;
    r.bias_sq = bias * bias;
    r.noise_sq = noise.xi * noise.xi;
    r.training_mse = mean_of(sq_err);
    r.cross_term = mean_of(cross);
    r.test_side = r.variance + r.bias_sq + r.noise_sq;
    r.training_side = r.training_mse + r.cross_term;
    r.residual = r.test_side - r.training_side;
    const double root_n = std::sqrt(static_cast<double>(n));
    r.cross_term_std_error = std::sqrt(variance_of(cross)) / root_n;
    r.training_side_std_error = std::sqrt(variance_of(train)) / root_n;
    r.holds = std::abs(r.residual) <= 3.0 * r.training_side_std_error + 1e-12 * std::abs(r.test_side);
    return r;
}

std::vector<SimulationRow> run_theorem_grid(std::span<const std::size_t> blocks, std::span<const double> mus,
                                            double alpha, double nu, std::size_t trials, std::uint64_t seed) {
    std::vector<SimulationRow> rows;
    const SeededRng root(seed);
    for (std::size_t L : blocks) {
        for (double mu : mus) {
            const EnsembleSpec spec{L, alpha, nu, mu};
            const std::uint64_t key = L * 1000003ULL + static_cast<std::uint64_t>(std::llround(mu * 1e6));
            SeededRng rng_sub = root.derive(key);
            SeededRng rng_add = root.derive(key);
            SimulationRow sub{spec, AggregateMode::subtract, trials,
                              aggregate_variance(spec, AggregateMode::subtract, trials, rng_sub), false};
            SimulationRow add{spec, AggregateMode::add, trials,
                              aggregate_variance(spec, AggregateMode::add, trials, rng_add), false};
            const auto& s = sub.estimate;
            const auto& a = add.estimate;
            sub.pass = std::abs(s.empirical_var - s.analytic_var) <= 3.0 * s.std_error &&
                       s.empirical_var < s.theorem_bound && s.empirical_var < a.empirical_var;
            add.pass = std::abs(a.empirical_var - a.analytic_var) <= 3.0 * a.std_error;
            rows.push_back(sub);
            rows.push_back(add);
        }
    }
    return rows;
}

void write_simulation_csv(std::ostream& os, const std::vector<SimulationRow>& rows) {
    os << "L,alpha,nu,mu,mode,trials,empirical_var,analytic_var,bound,pass\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%s,%zu,%.10g,%.10g,%.10g,%s\n", r.spec.n_blocks,
                      r.spec.alpha, r.spec.nu, r.spec.mu, to_string(r.mode).c_str(), r.trials,
                      r.estimate.empirical_var, r.estimate.analytic_var, r.estimate.theorem_bound,
                      r.pass ? "true" : "false");
        os << buf;
    }
}

}  // namespace minusformer
