#pragma once

#include <cstdint>
#include <vector>

#include "rng.hpp"

namespace bdm {

// Analytic densities for the classical sampling baseline: a diagonal Gaussian
// or a finite mixture of them.
struct GaussianComponent {
    std::vector<double> mean;
    std::vector<double> var;  // per-coordinate variance, > 0
    double weight = 1.0;
};

struct AnalyticDensity {
    std::vector<GaussianComponent> components;  // one entry = plain Gaussian

    int dimension() const;
    void validate() const;
    double log_density(const std::vector<double>& y) const;
};

AnalyticDensity gaussian(std::vector<double> mean, std::vector<double> var);
AnalyticDensity mixture(std::vector<GaussianComponent> components);

// Exact gradient of log density at y.
std::vector<double> grad_log_density(const AnalyticDensity& d, const std::vector<double>& y);

struct LangevinConfig {
    int steps = 2500;
    int chains = 4000;
    double step_a = 0.1;        // eps_t = a * (b + t)^(-decay)
    double step_b = 10.0;
    double step_decay = 0.55;
    double burn_in = 0.5;       // fraction of steps discarded per chain
    uint64_t seed = 0;
};

struct LangevinResult {
    std::vector<double> samples;  // post-burn-in states, n_samples x dim row-major
    size_t n_samples = 0;
    int dim = 0;
    std::vector<double> mean;     // per-coordinate moments
    std::vector<double> variance;
};

// Additive-gradient posterior sampling: each update sums the two score fields
//   dy = eps_t/2 * (grad log p_data(y) + grad log p_prior(y)) + N(0, eps_t I).
// Chains start from the data-driven density and run independently.
LangevinResult langevin_infer(const AnalyticDensity& prior, const AnalyticDensity& data_driven,
                              const LangevinConfig& cfg);

}  // namespace bdm
