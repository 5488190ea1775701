#include "toydata.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "common.hpp"

namespace bdm {

namespace {

constexpr double kPi = 3.141592653589793238462643383279;
constexpr double kStarInnerRadius = 0.45;

// Point on the unit-size boundary curve at arc-length fraction u in [0, 1).
void boundary_point(const ShapeSpec& spec, double u, double* out) {
    switch (spec.family) {
        case ShapeFamily::circle: {
            const double th = 2.0 * kPi * u;
            out[0] = std::cos(th);
            out[1] = std::sin(th);
            return;
        }
        case ShapeFamily::square: {
            // Perimeter parameterization of the square [-1,1]^2, side by side.
            const double s = 4.0 * u;
            const int side = std::min(3, static_cast<int>(s));
            const double f = s - side;
            switch (side) {
                case 0: out[0] = -1.0 + 2.0 * f; out[1] = -1.0; return;
                case 1: out[0] = 1.0; out[1] = -1.0 + 2.0 * f; return;
                case 2: out[0] = 1.0 - 2.0 * f; out[1] = 1.0; return;
                default: out[0] = -1.0; out[1] = 1.0 - 2.0 * f; return;
            }
        }
        case ShapeFamily::star: {
            // Smooth lobed star r(th) oscillating between the inner and outer
            // radius `arms` times. The radial density piles up at both
            // extremes, so the radii histogram is bimodal.
            const double th = 2.0 * kPi * u;
            const double mid = 0.5 * (1.0 + kStarInnerRadius);
            const double amp = 0.5 * (1.0 - kStarInnerRadius);
            const double r = mid + amp * std::cos(spec.star_arms * th);
            out[0] = r * std::cos(th);
            out[1] = r * std::sin(th);
            return;
        }
        case ShapeFamily::ellipse: {
            const double th = 2.0 * kPi * u;
            out[0] = std::cos(th);
            out[1] = spec.aspect * std::sin(th);
            return;
        }
    }
    throw InvalidArgumentError("gen_shape: unknown shape family " +
                               std::to_string(static_cast<int>(spec.family)));
}

}  // namespace

const char* family_name(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::circle: return "circle";
        case ShapeFamily::square: return "square";
        case ShapeFamily::star: return "star";
        case ShapeFamily::ellipse: return "ellipse";
    }
    return "unknown";
}

ShapeFamily family_from_name(const std::string& name) {
    for (int i = 0; i < kFamilyCount; ++i) {
        if (name == family_name(static_cast<ShapeFamily>(i))) return static_cast<ShapeFamily>(i);
    }
    throw InvalidArgumentError("unknown shape family '" + name + "'");
}

std::array<double, kConditionDim> Condition::to_vector() const {
    std::array<double, kConditionDim> v{};
    std::copy(radial_histogram.begin(), radial_histogram.end(), v.begin());
    std::copy(family_onehot.begin(), family_onehot.end(), v.begin() + kHistBins);
    v[kConditionDim - 1] = noise_level;
    return v;
}

Condition Condition::from_vector(const double* v, size_t len) {
    if (len != kConditionDim) {
        throw ShapeMismatchError("Condition::from_vector: expected " +
                                 std::to_string(kConditionDim) + " entries, got " +
                                 std::to_string(len));
    }
    Condition c;
    std::copy(v, v + kHistBins, c.radial_histogram.begin());
    std::copy(v + kHistBins, v + kHistBins + kFamilyCount, c.family_onehot.begin());
    c.noise_level = v[kConditionDim - 1];
    return c;
}

PointCloud gen_shape(const ShapeSpec& spec, int n_points, rng::Sequence& rng, double jitter) {
    if (n_points < 1) {
        throw InvalidArgumentError("gen_shape: need at least 1 point");
    }
    PointCloud cloud(n_points, 2);
    const double c = std::cos(spec.rotation), s = std::sin(spec.rotation);
    // Stratified boundary coverage: equal spacing with a random phase. This
    // keeps the sample centroid of symmetric families at zero, so centering
    // does not displace the shape.
    const double phase = rng.uniform() * (1.0 - 1e-12);
    for (int i = 0; i < n_points; ++i) {
        double u = (i + phase) / n_points;
        if (u >= 1.0) u -= 1.0;
        double p[2];
        boundary_point(spec, u, p);
        const double x = spec.scale * p[0], y = spec.scale * p[1];
        cloud.at(i, 0) = c * x - s * y;
        cloud.at(i, 1) = s * x + c * y;
    }

    double cx = 0.0, cy = 0.0;
    for (int i = 0; i < n_points; ++i) {
        cx += cloud.at(i, 0);
        cy += cloud.at(i, 1);
    }
    cx /= n_points;
    cy /= n_points;
    double max_r = 0.0;
    for (int i = 0; i < n_points; ++i) {
        cloud.at(i, 0) -= cx;
        cloud.at(i, 1) -= cy;
        max_r = std::max(max_r, std::hypot(cloud.at(i, 0), cloud.at(i, 1)));
    }
    if (max_r <= 0.0) {
        throw NumericError("gen_shape: degenerate shape collapsed to a point");
    }
    const double rescale = 0.5 / max_r;
    for (double& v : cloud.points) v *= rescale;

    if (jitter > 0.0) {
        for (double& v : cloud.points) v += jitter * rng.normal();
    }
    return cloud;
}

ShapeSpec random_spec(rng::Sequence& rng) {
    ShapeSpec spec;
    spec.family = static_cast<ShapeFamily>(rng.below(kFamilyCount));
    spec.scale = 0.5 + 0.5 * rng.uniform();
    spec.rotation = 2.0 * kPi * rng.uniform();
    spec.star_arms = 4 + static_cast<int>(rng.below(5));
    spec.aspect = 0.4 + 0.6 * rng.uniform();
    return spec;
}

Condition gen_condition(const PointCloud& y0, const ShapeSpec& spec, rng::Sequence& rng,
                        double hist_noise) {
    Condition cond;
    const double bin_width = kHistRange / kHistBins;
    for (int i = 0; i < y0.n; ++i) {
        double r2 = 0.0;
        for (int d = 0; d < y0.dim; ++d) r2 += y0.at(i, d) * y0.at(i, d);
        const double r = std::sqrt(r2);
        const int bin = std::min(kHistBins - 1, static_cast<int>(r / bin_width));
        cond.radial_histogram[bin] += 1.0;
    }
    for (double& h : cond.radial_histogram) h /= y0.n;

    if (hist_noise > 0.0) {
        for (double& h : cond.radial_histogram) {
            h = std::max(0.0, h + hist_noise * rng.normal());
        }
    }
    double sum = 0.0;
    for (double h : cond.radial_histogram) sum += h;
    if (sum <= 0.0) {
        throw NumericError("gen_condition: histogram mass vanished after corruption");
    }
    for (double& h : cond.radial_histogram) h /= sum;

    cond.family_onehot[static_cast<int>(spec.family)] = 1.0;
    cond.noise_level = hist_noise;
    return cond;
}

DatasetBundle make_datasets(int n_shapes, double pair_fraction, int n_points, uint64_t seed,
                            bool pairs_overlap, int n_test, double jitter, double hist_noise) {
    if (!(pair_fraction > 0.0) || pair_fraction > 1.0) {
        throw InvalidArgumentError("make_datasets: pair_fraction must lie in (0, 1], got " +
                                   std::to_string(pair_fraction));
    }
    if (n_shapes < 1) {
        throw InvalidArgumentError("make_datasets: need n_shapes >= 1");
    }

    DatasetBundle bundle;
    bundle.seed = seed;
    // Per-instance streams derived from the seed; instance i is identical no
    // matter how many instances precede it.
    auto instance_rng = [&](uint64_t index) {
        return rng::Sequence(rng::splitmix64(seed ^ (0xa076u + index * 0x9e3779b97f4a7c15ull)),
                             rng::Stream::data);
    };

    bundle.standalone.reserve(n_shapes);
    for (int i = 0; i < n_shapes; ++i) {
        auto r = instance_rng(static_cast<uint64_t>(i));
        ShapeSpec spec = random_spec(r);
        bundle.standalone_specs.push_back(spec);
        bundle.standalone.push_back(gen_shape(spec, n_points, r, jitter));
    }

    const int n_pairs = static_cast<int>(std::ceil(pair_fraction * n_shapes));
    bundle.paired.reserve(n_pairs);
    for (int i = 0; i < n_pairs; ++i) {
        auto r = instance_rng(0x70000000ull + static_cast<uint64_t>(i));
        if (pairs_overlap) {
            const ShapeSpec& spec = bundle.standalone_specs[i];
            bundle.paired_specs.push_back(spec);
            bundle.paired.emplace_back(gen_condition(bundle.standalone[i], spec, r, hist_noise),
                                       bundle.standalone[i]);
        } else {
            ShapeSpec spec = random_spec(r);
            bundle.paired_specs.push_back(spec);
            PointCloud cloud = gen_shape(spec, n_points, r, jitter);
            bundle.paired.emplace_back(gen_condition(cloud, spec, r, hist_noise),
                                       std::move(cloud));
        }
    }

    bundle.test.reserve(n_test);
    for (int i = 0; i < n_test; ++i) {
        auto r = instance_rng(0xe0000000ull + static_cast<uint64_t>(i));
        ShapeSpec spec = random_spec(r);
        bundle.test_specs.push_back(spec);
        PointCloud cloud = gen_shape(spec, n_points, r, jitter);
        bundle.test.emplace_back(gen_condition(cloud, spec, r, hist_noise), std::move(cloud));
    }
    return bundle;
}

}  // namespace bdm
