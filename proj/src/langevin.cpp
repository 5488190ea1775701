#include "langevin.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "common.hpp"

namespace bdm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double component_log_density(const GaussianComponent& c, const std::vector<double>& y) {
    double acc = 0.0;
    for (size_t d = 0; d < y.size(); ++d) {
        const double r = y[d] - c.mean[d];
        acc += -0.5 * (r * r / c.var[d] + std::log(c.var[d]) + kLog2Pi);
    }
    return acc;
}

}  // namespace

int AnalyticDensity::dimension() const {
    return components.empty() ? 0 : static_cast<int>(components.front().mean.size());
}

void AnalyticDensity::validate() const {
    if (components.empty()) {
        throw InvalidArgumentError("AnalyticDensity: no components");
    }
    const size_t dim = components.front().mean.size();
    double wsum = 0.0;
    for (const auto& c : components) {
        if (c.mean.size() != dim || c.var.size() != dim) {
            throw ShapeMismatchError("AnalyticDensity: component dimensions differ");
        }
        if (!(c.weight > 0.0)) {
            throw InvalidArgumentError("AnalyticDensity: weights must be positive");
        }
        for (double v : c.var) {
            if (!(v > 0.0)) throw InvalidArgumentError("AnalyticDensity: variances must be positive");
        }
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) {
        throw InvalidArgumentError("AnalyticDensity: weights sum to " + std::to_string(wsum) +
                                   ", expected 1");
    }
}

double AnalyticDensity::log_density(const std::vector<double>& y) const {
    // log-sum-exp over components
    double best = -1e308;
    std::vector<double> logs(components.size());
    for (size_t k = 0; k < components.size(); ++k) {
        logs[k] = std::log(components[k].weight) + component_log_density(components[k], y);
        best = std::max(best, logs[k]);
    }
    double acc = 0.0;
    for (double l : logs) acc += std::exp(l - best);
    return best + std::log(acc);
}

AnalyticDensity gaussian(std::vector<double> mean, std::vector<double> var) {
    AnalyticDensity d;
    d.components.push_back({std::move(mean), std::move(var), 1.0});
    d.validate();
    return d;
}

AnalyticDensity mixture(std::vector<GaussianComponent> components) {
    AnalyticDensity d;
    d.components = std::move(components);
    d.validate();
    return d;
}

std::vector<double> grad_log_density(const AnalyticDensity& d, const std::vector<double>& y) {
    d.validate();
    if (static_cast<int>(y.size()) != d.dimension()) {
        throw ShapeMismatchError("grad_log_density: point dimension " + std::to_string(y.size()) +
                                 " != density dimension " + std::to_string(d.dimension()));
    }
    std::vector<double> g(y.size(), 0.0);
    if (d.components.size() == 1) {
        const auto& c = d.components.front();
        for (size_t k = 0; k < y.size(); ++k) g[k] = -(y[k] - c.mean[k]) / c.var[k];
        return g;
    }
    // Responsibility-weighted component scores, stabilized by the max log.
    std::vector<double> logs(d.components.size());
    double best = -1e308;
    for (size_t k = 0; k < d.components.size(); ++k) {
        logs[k] = std::log(d.components[k].weight) + component_log_density(d.components[k], y);
        best = std::max(best, logs[k]);
    }
    double norm = 0.0;
    for (double l : logs) norm += std::exp(l - best);
    for (size_t k = 0; k < d.components.size(); ++k) {
        const double resp = std::exp(logs[k] - best) / norm;
        const auto& c = d.components[k];
        for (size_t j = 0; j < y.size(); ++j) {
            g[j] += resp * (-(y[j] - c.mean[j]) / c.var[j]);
        }
    }
    return g;
}

LangevinResult langevin_infer(const AnalyticDensity& prior, const AnalyticDensity& data_driven,
                              const LangevinConfig& cfg) {
    prior.validate();
    data_driven.validate();
    if (prior.dimension() != data_driven.dimension()) {
        throw ShapeMismatchError("langevin_infer: density dimensions differ");
    }
    if (cfg.chains < 1) throw InvalidArgumentError("langevin_infer: need at least one chain");
    if (cfg.steps < 0) throw InvalidArgumentError("langevin_infer: steps must be >= 0");

    const int dim = prior.dimension();
    const int burn = static_cast<int>(cfg.steps * cfg.burn_in);
    LangevinResult result;
    result.dim = dim;
    result.mean.assign(dim, 0.0);
    result.variance.assign(dim, 0.0);
    if (cfg.steps == 0) return result;

    result.samples.reserve(static_cast<size_t>(cfg.chains) * (cfg.steps - burn) * dim);
    std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);

    for (int chain = 0; chain < cfg.chains; ++chain) {
        rng::Sequence rng(cfg.seed, rng::Stream::langevin, static_cast<uint64_t>(chain));
        // Start from the data-driven density (its first component's moments).
        std::vector<double> y(dim);
        const auto& c0 = data_driven.components.front();
        for (int d = 0; d < dim; ++d) y[d] = c0.mean[d] + std::sqrt(c0.var[d]) * rng.normal();

        for (int t = 0; t < cfg.steps; ++t) {
            const double eps = cfg.step_a * std::pow(cfg.step_b + t, -cfg.step_decay);
            const auto g_data = grad_log_density(data_driven, y);
            const auto g_prior = grad_log_density(prior, y);
            const double noise_scale = std::sqrt(eps);
            for (int d = 0; d < dim; ++d) {
                y[d] += 0.5 * eps * (g_data[d] + g_prior[d]) + noise_scale * rng.normal();
                if (!std::isfinite(y[d])) {
                    throw NumericError("langevin_infer: chain diverged at step " +
                                       std::to_string(t));
                }
            }
            if (t >= burn) {
                result.samples.insert(result.samples.end(), y.begin(), y.end());
                ++result.n_samples;
                for (int d = 0; d < dim; ++d) {
                    sum[d] += y[d];
                    sum_sq[d] += y[d] * y[d];
                }
            }
        }
    }

    const double n = static_cast<double>(result.n_samples);
    if (n > 0) {
        for (int d = 0; d < dim; ++d) {
            result.mean[d] = sum[d] / n;
            result.variance[d] = sum_sq[d] / n - result.mean[d] * result.mean[d];
        }
    }
    return result;
}

}  // namespace bdm
