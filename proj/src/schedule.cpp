#include "schedule.hpp"

#include <cmath>
#include <string>

#include "common.hpp"

namespace bdm {

NoiseSchedule build_linear_schedule(double beta0, double betaT, int steps) {
    if (!(beta0 > 0.0) || !(betaT < 1.0) || beta0 > betaT) {
        throw InvalidArgumentError("build_linear_schedule: need 0 < beta0 <= betaT < 1, got beta0=" +
                                   std::to_string(beta0) + " betaT=" + std::to_string(betaT));
    }
    if (steps < 1) {
        throw InvalidArgumentError("build_linear_schedule: need steps >= 1, got " +
                                   std::to_string(steps));
    }

    NoiseSchedule s;
    s.steps = steps;
    s.beta0 = beta0;
    s.betaT = betaT;
    s.beta.assign(static_cast<size_t>(steps) + 1, 0.0);
    s.alpha.assign(static_cast<size_t>(steps) + 1, 1.0);
    s.alpha_bar.assign(static_cast<size_t>(steps) + 1, 1.0);
    s.sigma.assign(static_cast<size_t>(steps) + 1, 0.0);

    for (int t = 1; t <= steps; ++t) {
        const double frac = steps > 1 ? static_cast<double>(t - 1) / (steps - 1) : 0.0;
        s.beta[t] = beta0 + frac * (betaT - beta0);
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        s.sigma[t] = std::sqrt(s.beta[t]);
    }
    return s;
}

PointCloud forward_diffuse(const PointCloud& y0, int t, const PointCloud& noise,
                           const NoiseSchedule& sched) {
    if (t < 0 || t > sched.steps) {
        throw OutOfRangeError("forward_diffuse: timestep " + std::to_string(t) +
                              " outside [0, " + std::to_string(sched.steps) + "]");
    }
    if (t == 0) return y0;
    require_same_shape(y0, noise, "forward_diffuse");

    const double ab = sched.alpha_bar[t];
    const double signal = std::sqrt(ab);
    const double spread = std::sqrt(1.0 - ab);
    PointCloud out(y0.n, y0.dim);
    for (size_t i = 0; i < y0.points.size(); ++i) {
        out.points[i] = signal * y0.points[i] + spread * noise.points[i];
    }
    return out;
}

PointCloud iterative_forward_chain(const PointCloud& y0, int t, rng::Sequence& rng,
                                   const NoiseSchedule& sched) {
    if (t < 0 || t > sched.steps) {
        throw OutOfRangeError("iterative_forward_chain: timestep " + std::to_string(t) +
                              " outside [0, " + std::to_string(sched.steps) + "]");
    }
    PointCloud y = y0;
    for (int s = 1; s <= t; ++s) {
        const double keep = std::sqrt(sched.alpha[s]);
        const double add = std::sqrt(sched.beta[s]);
        for (double& v : y.points) {
            v = keep * v + add * rng.normal();
        }
    }
    return y;
}

}  // namespace bdm
