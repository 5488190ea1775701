#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "pointcloud.hpp"
#include "rng.hpp"

namespace bdm {

enum class ShapeFamily : int { circle = 0, square = 1, star = 2, ellipse = 3 };

constexpr int kFamilyCount = 4;
constexpr int kHistBins = 16;
constexpr double kHistRange = 0.6;     // radii live in [0, ~0.52] after jitter
constexpr int kConditionDim = kHistBins + kFamilyCount + 1;
constexpr double kDefaultJitter = 0.005;
constexpr double kDefaultHistNoise = 0.02;

const char* family_name(ShapeFamily f);
ShapeFamily family_from_name(const std::string& name);

// Parameters of one sampled shape instance.
struct ShapeSpec {
    ShapeFamily family = ShapeFamily::circle;
    double scale = 1.0;      // [0.5, 1.0]
    double rotation = 0.0;   // [0, 2pi)
    int star_arms = 5;       // [4, 8], star only
    double aspect = 1.0;     // [0.4, 1.0], ellipse only
};

// Low-dimensional observation standing in for the image: a noisy radial
// histogram plus the family indicator. Rotation is deliberately unobservable,
// so reconstruction from a Condition alone is ill-posed.
struct Condition {
    std::array<double, kHistBins> radial_histogram{};  // nonnegative, sums to 1
    std::array<double, kFamilyCount> family_onehot{};
    double noise_level = kDefaultHistNoise;

    std::array<double, kConditionDim> to_vector() const;
    static Condition from_vector(const double* v, size_t len);
};

struct DatasetBundle {
    std::vector<PointCloud> standalone;                          // S_l
    std::vector<std::pair<Condition, PointCloud>> paired;        // S_s
    std::vector<std::pair<Condition, PointCloud>> test;
    std::vector<ShapeSpec> standalone_specs;
    std::vector<ShapeSpec> paired_specs;
    std::vector<ShapeSpec> test_specs;
    uint64_t seed = 0;
};

// Uniform boundary sampling, scale/rotate, recenter to zero centroid, rescale
// to max radius 0.5, then per-point jitter. N >= 8 unless jitter tests pass 0.
PointCloud gen_shape(const ShapeSpec& spec, int n_points, rng::Sequence& rng,
                     double jitter = kDefaultJitter);

ShapeSpec random_spec(rng::Sequence& rng);

Condition gen_condition(const PointCloud& y0, const ShapeSpec& spec, rng::Sequence& rng,
                        double hist_noise = kDefaultHistNoise);

// pairs_overlap: paired instances reuse the leading standalone shapes (fresh
// conditions); otherwise the paired set is generated disjoint from S_l.
DatasetBundle make_datasets(int n_shapes, double pair_fraction, int n_points, uint64_t seed,
                            bool pairs_overlap = false, int n_test = 200,
                            double jitter = kDefaultJitter,
                            double hist_noise = kDefaultHistNoise);

}  // namespace bdm
