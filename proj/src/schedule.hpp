#pragma once

#include <cstdint>
#include <vector>

#include "pointcloud.hpp"
#include "rng.hpp"

namespace bdm {

// Variance schedule for the discrete forward/reverse process. Arrays are
// 1-indexed by timestep (index 0 is a placeholder so beta[t] means beta_t);
// alpha_bar[0] == 1 by convention (t = 0 is clean data).
struct NoiseSchedule {
    int steps = 0;           // T
    double beta0 = 0.0;      // configured endpoints, kept for serialization
    double betaT = 0.0;
    std::vector<double> beta;       // beta[1..T], ascending
    std::vector<double> alpha;      // 1 - beta_t
    std::vector<double> alpha_bar;  // running product of alpha, alpha_bar[0] = 1
    std::vector<double> sigma;      // sqrt(beta_t), reverse-step noise scale
};

// Linear interpolation between the endpoints; T == 1 uses beta0 alone.
NoiseSchedule build_linear_schedule(double beta0, double betaT, int steps);

// Closed-form corruption: sqrt(abar_t) y0 + sqrt(1 - abar_t) noise. t = 0
// returns y0 unchanged.
PointCloud forward_diffuse(const PointCloud& y0, int t, const PointCloud& noise,
                           const NoiseSchedule& sched);

// Step-by-step Markov corruption. Statistical oracle for forward_diffuse;
// not used on any production path.
PointCloud iterative_forward_chain(const PointCloud& y0, int t, rng::Sequence& rng,
                                   const NoiseSchedule& sched);

}  // namespace bdm
