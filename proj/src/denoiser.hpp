#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pointcloud.hpp"
#include "schedule.hpp"
#include "toydata.hpp"

namespace bdm {

// Network widths. Encoder maps the per-point input to kEnc2 features, a max
// pool over points forms the global feature, and the decoder maps the
// concatenated (point, global) features back to a per-point noise estimate.
constexpr int kTimeEmbedDim = 32;
constexpr int kCondEmbedDim = 32;
constexpr int kEnc1 = 128;
constexpr int kEnc2 = 128;
constexpr int kDec1 = 128;
constexpr int kDec2 = 64;

struct Affine {
    int in = 0, out = 0;
    std::vector<double> w;  // out x in, row-major
    std::vector<double> b;  // out

    void resize(int in_, int out_) {
        in = in_;
        out = out_;
        w.assign(static_cast<size_t>(in_) * out_, 0.0);
        b.assign(out_, 0.0);
    }
    // y = W x + b. Four independent accumulators per row break the serial
    // dependence of the dot product; the summation order is fixed, so results
    // stay reproducible.
    void apply(const double* x, double* y) const {
        const int tail = in & ~3;
        for (int r = 0; r < out; ++r) {
            const double* row = w.data() + static_cast<size_t>(r) * in;
            double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
            int c = 0;
            for (; c < tail; c += 4) {
                a0 += row[c] * x[c];
                a1 += row[c + 1] * x[c + 1];
                a2 += row[c + 2] * x[c + 2];
                a3 += row[c + 3] * x[c + 3];
            }
            double acc = b[r] + (a0 + a1) + (a2 + a3);
            for (; c < in; ++c) acc += row[c] * x[c];
            y[r] = acc;
        }
    }
};

// Named view into one parameter tensor; order over a params object is fixed
// and shared by gradients, the optimizer, and serialization.
struct TensorRef {
    std::string name;
    std::vector<double>* data;
};

struct ConstTensorRef {
    std::string name;
    const std::vector<double>* data;
};

// Permutation-equivariant eps-prediction network. The conditional variant
// carries a condition embedding plus a learned null embedding used for
// condition dropout and the guidance baseline.
struct DenoiserParams {
    bool conditional = false;
    int dim = 2;

    Affine enc1;        // [dim + time (+ cond)] -> kEnc1
    Affine enc2;        // kEnc1 -> kEnc2
    Affine dec1;        // 2*kEnc2 -> kDec1
    Affine dec2;        // kDec1 -> kDec2
    Affine dec3;        // kDec2 -> dim
    Affine cond_embed;  // kConditionDim -> kCondEmbedDim (conditional only)
    std::vector<double> null_embed;  // kCondEmbedDim (conditional only)

    int input_dim() const { return dim + kTimeEmbedDim + (conditional ? kCondEmbedDim : 0); }
    std::vector<TensorRef> tensors();
    std::vector<ConstTensorRef> tensors() const;
    size_t parameter_count() const;
};

DenoiserParams init_denoiser(bool conditional, int dim, uint64_t seed);

// Condition input for a conditional network: either a real condition or the
// learned null embedding. Unconditional networks take neither.
struct CondInput {
    enum class Kind { none, value, null_token } kind = Kind::none;
    const Condition* value = nullptr;

    static CondInput none() { return {}; }
    static CondInput of(const Condition& c) { return {Kind::value, &c}; }
    static CondInput null_token() { return {Kind::null_token, nullptr}; }
};

void time_embedding(int t, double* out);  // kTimeEmbedDim entries

// eps estimate for y_t at timestep t. Exactly equivariant under point
// permutation by construction.
PointCloud predict_noise(const DenoiserParams& params, const PointCloud& y_t, int t,
                         const CondInput& cond);

// Frozen encoders from both parents plus a trainable decoder copy. The prior
// encoder features enter the reconstruction path through per-layer affine
// projections whose weights and biases start at exactly zero, so a freshly
// initialized merge reproduces the reconstruction network bit for bit.
struct MergedParams {
    DenoiserParams recon;      // encoder + embeddings frozen; decoder trains
    Affine prior_enc1;         // frozen copies of the prior encoder
    Affine prior_enc2;
    Affine fuse1;              // kEnc1 -> kEnc1, zero-initialized
    Affine fuse2;              // kEnc2 -> kEnc2, zero-initialized

    std::vector<TensorRef> trainable();   // decoder copy + fusion projections
    std::vector<TensorRef> tensors();     // everything, for serialization
    std::vector<ConstTensorRef> tensors() const;
    std::vector<ConstTensorRef> frozen() const;  // encoders + embeddings
};

MergedParams init_merged(const DenoiserParams& prior, const DenoiserParams& recon);

PointCloud predict_noise_merged(const MergedParams& m, const PointCloud& y_t, int t,
                                const CondInput& cond);

// Deterministic loss core: mean squared eps-prediction error over N*dim
// entries at a fixed (t, eps), with exact parameter gradients written into
// `grads` (same tensor layout as `params`). Used by ddpm_loss, training and
// the finite-difference checks.
double loss_and_grad(const DenoiserParams& params, const PointCloud& y0, const CondInput& cond,
                     int t, const PointCloud& eps, const NoiseSchedule& sched,
                     DenoiserParams* grads);

double loss_and_grad_merged(const MergedParams& m, const PointCloud& y0, const CondInput& cond,
                            int t, const PointCloud& eps, const NoiseSchedule& sched,
                            MergedParams* grads);

struct LossSample {
    double loss = 0.0;
    int t = 0;
    DenoiserParams grads;
};

// Samples t uniform in [1, T] and eps ~ N(0, I), then evaluates the loss core.
LossSample ddpm_loss(const DenoiserParams& params, const PointCloud& y0, const CondInput& cond,
                     rng::Sequence& rng, const NoiseSchedule& sched);

struct TrainConfig {
    int steps = 4000;
    int batch = 16;
    double lr = 1e-3;
    double lr_floor = 1e-5;      // warmup starts here
    double warmup_frac = 0.02;   // fraction of steps spent ramping up
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double cond_dropout = 0.1;   // conditional training only
    double ema_decay = 0.999;    // weight averaging for the returned params; 0 = off
    int threads = 1;
    uint64_t seed = 1;
};

struct TrainTrace {
    std::vector<double> loss;      // per-step batch loss
    std::vector<double> loss_ema;  // decay 0.99
};

DenoiserParams train_prior(const std::vector<PointCloud>& standalone, const TrainConfig& cfg,
                           const NoiseSchedule& sched, TrainTrace* trace = nullptr);

DenoiserParams train_reconstruction(const std::vector<std::pair<Condition, PointCloud>>& paired,
                                    const TrainConfig& cfg, const NoiseSchedule& sched,
                                    TrainTrace* trace = nullptr);

MergedParams train_merged(const DenoiserParams& prior, const DenoiserParams& recon,
                          const std::vector<std::pair<Condition, PointCloud>>& paired,
                          const TrainConfig& cfg, const NoiseSchedule& sched,
                          TrainTrace* trace = nullptr);

// FNV-1a over the raw tensor bytes in fixed order; used for the frozen-weight
// invariants and the serialized container.
uint64_t content_hash(const std::vector<ConstTensorRef>& tensors);

}  // namespace bdm
