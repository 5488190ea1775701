#include "denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <thread>
#include <type_traits>

#include "common.hpp"

namespace bdm {

namespace {

void check_cond_input(const DenoiserParams& params, const CondInput& cond, const char* what) {
    if (params.conditional && cond.kind == CondInput::Kind::none) {
        throw InvalidArgumentError(std::string(what) + ": conditional network needs a condition");
    }
    if (!params.conditional && cond.kind != CondInput::Kind::none) {
        throw InvalidArgumentError(std::string(what) + ": unconditional network given a condition");
    }
    if (cond.kind == CondInput::Kind::value && cond.value == nullptr) {
        throw InvalidArgumentError(std::string(what) + ": null condition pointer");
    }
}

// Smooth gelu-style gate; the derivative needs the pre-activation, which the
// workspace keeps alongside the outputs.
inline double act(double x) {
    return x / (1.0 + std::exp(-1.702 * x));
}

inline double act_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-1.702 * x));
    return s + 1.702 * x * s * (1.0 - s);
}

// Coordinate channels are scaled so unit-normalized shapes (max radius 0.5)
// occupy the nonlinearity's active range.
constexpr double kCoordGain = 4.0;

void init_affine(Affine& a, int in, int out, rng::Sequence& rng) {
    a.resize(in, out);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : a.w) v = scale * rng.normal();
}

// Activations for one cloud, laid out per point.
struct Workspace {
    int n = 0;
    int in_dim = 0;
    std::vector<double> x;    // n x in_dim
    std::vector<double> a1;   // n x kEnc1, pre-activations
    std::vector<double> h1;   // n x kEnc1
    std::vector<double> a2;   // n x kEnc2
    std::vector<double> h2;   // n x kEnc2 (post fusion for the merged net)
    std::vector<double> g;    // kEnc2
    std::vector<int> amax;    // kEnc2
    std::vector<double> a3;   // n x kDec1
    std::vector<double> h3;   // n x kDec1
    std::vector<double> a4;   // n x kDec2
    std::vector<double> h4;   // n x kDec2
    std::vector<double> out;  // n x dim
    // merged-only extras
    std::vector<double> p1;      // n x kEnc1, prior encoder layer 1
    std::vector<double> p2;      // n x kEnc2
    std::vector<double> h2_raw;  // n x kEnc2, recon activation pre-injection

    void resize(int n_, int in_dim_, int dim) {
        n = n_;
        in_dim = in_dim_;
        x.assign(static_cast<size_t>(n) * in_dim, 0.0);
        a1.assign(static_cast<size_t>(n) * kEnc1, 0.0);
        h1.assign(static_cast<size_t>(n) * kEnc1, 0.0);
        a2.assign(static_cast<size_t>(n) * kEnc2, 0.0);
        h2.assign(static_cast<size_t>(n) * kEnc2, 0.0);
        g.assign(kEnc2, 0.0);
        amax.assign(kEnc2, 0);
        a3.assign(static_cast<size_t>(n) * kDec1, 0.0);
        h3.assign(static_cast<size_t>(n) * kDec1, 0.0);
        a4.assign(static_cast<size_t>(n) * kDec2, 0.0);
        h4.assign(static_cast<size_t>(n) * kDec2, 0.0);
        out.assign(static_cast<size_t>(n) * dim, 0.0);
    }
};

// Builds the per-point input rows [coords, time embedding, condition
// embedding] for a conditional or unconditional input layout.
void fill_inputs(const DenoiserParams& params, const PointCloud& y_t, int t,
                 const CondInput& cond, Workspace& ws) {
    const int dim = y_t.dim;
    const int in_dim = params.input_dim();
    ws.resize(y_t.n, in_dim, dim);

    double temb[kTimeEmbedDim];
    time_embedding(t, temb);

    double ce[kCondEmbedDim];
    if (params.conditional) {
        if (cond.kind == CondInput::Kind::null_token) {
            std::copy(params.null_embed.begin(), params.null_embed.end(), ce);
        } else {
            const auto vec = cond.value->to_vector();
            params.cond_embed.apply(vec.data(), ce);
        }
    }

    for (int i = 0; i < y_t.n; ++i) {
        double* row = ws.x.data() + static_cast<size_t>(i) * in_dim;
        for (int d = 0; d < dim; ++d) row[d] = kCoordGain * y_t.at(i, d);
        std::copy(temb, temb + kTimeEmbedDim, row + dim);
        if (params.conditional) std::copy(ce, ce + kCondEmbedDim, row + dim + kTimeEmbedDim);
    }
}

void encoder_forward(const Affine& enc1, const Affine& enc2, Workspace& ws) {
    for (int i = 0; i < ws.n; ++i) {
        const double* x = ws.x.data() + static_cast<size_t>(i) * ws.in_dim;
        double* a1 = ws.a1.data() + static_cast<size_t>(i) * kEnc1;
        double* h1 = ws.h1.data() + static_cast<size_t>(i) * kEnc1;
        double* a2 = ws.a2.data() + static_cast<size_t>(i) * kEnc2;
        double* h2 = ws.h2.data() + static_cast<size_t>(i) * kEnc2;
        enc1.apply(x, a1);
        for (int c = 0; c < kEnc1; ++c) h1[c] = act(a1[c]);
        enc2.apply(h1, a2);
        for (int c = 0; c < kEnc2; ++c) h2[c] = act(a2[c]);
    }
}

// Max over points per channel; ties go to the lowest point index.
void pool_forward(Workspace& ws) {
    for (int c = 0; c < kEnc2; ++c) {
        double best = ws.h2[c];
        int arg = 0;
        for (int i = 1; i < ws.n; ++i) {
            const double v = ws.h2[static_cast<size_t>(i) * kEnc2 + c];
            if (v > best) {
                best = v;
                arg = i;
            }
        }
        ws.g[c] = best;
        ws.amax[c] = arg;
    }
}

void decoder_forward(const DenoiserParams& params, Workspace& ws) {
    const int dim = params.dim;
    double u[2 * kEnc2];
    std::copy(ws.g.begin(), ws.g.end(), u + kEnc2);
    for (int i = 0; i < ws.n; ++i) {
        const double* h2 = ws.h2.data() + static_cast<size_t>(i) * kEnc2;
        double* a3 = ws.a3.data() + static_cast<size_t>(i) * kDec1;
        double* h3 = ws.h3.data() + static_cast<size_t>(i) * kDec1;
        double* a4 = ws.a4.data() + static_cast<size_t>(i) * kDec2;
        double* h4 = ws.h4.data() + static_cast<size_t>(i) * kDec2;
        std::copy(h2, h2 + kEnc2, u);
        params.dec1.apply(u, a3);
        for (int c = 0; c < kDec1; ++c) h3[c] = act(a3[c]);
        params.dec2.apply(h3, a4);
        for (int c = 0; c < kDec2; ++c) h4[c] = act(a4[c]);
        params.dec3.apply(h4, ws.out.data() + static_cast<size_t>(i) * dim);
    }
}

void forward(const DenoiserParams& params, const PointCloud& y_t, int t, const CondInput& cond,
             Workspace& ws) {
    fill_inputs(params, y_t, t, cond, ws);
    encoder_forward(params.enc1, params.enc2, ws);
    pool_forward(ws);
    decoder_forward(params, ws);
}

void forward_merged(const MergedParams& m, const PointCloud& y_t, int t, const CondInput& cond,
                    Workspace& ws) {
    fill_inputs(m.recon, y_t, t, cond, ws);

    // Prior encoder sees the unconditional input layout: coords + time.
    const int prior_in = m.prior_enc1.in;
    ws.p1.assign(static_cast<size_t>(ws.n) * kEnc1, 0.0);
    ws.p2.assign(static_cast<size_t>(ws.n) * kEnc2, 0.0);
    ws.h2_raw.assign(static_cast<size_t>(ws.n) * kEnc2, 0.0);
    std::vector<double> xu(prior_in);
    for (int i = 0; i < ws.n; ++i) {
        const double* xc = ws.x.data() + static_cast<size_t>(i) * ws.in_dim;
        std::copy(xc, xc + prior_in, xu.begin());  // coords + time embedding prefix
        double* p1 = ws.p1.data() + static_cast<size_t>(i) * kEnc1;
        double* p2 = ws.p2.data() + static_cast<size_t>(i) * kEnc2;
        m.prior_enc1.apply(xu.data(), p1);
        for (int c = 0; c < kEnc1; ++c) p1[c] = act(p1[c]);
        m.prior_enc2.apply(p1, p2);
        for (int c = 0; c < kEnc2; ++c) p2[c] = act(p2[c]);
    }

    // Reconstruction encoder with layerwise injection of projected prior
    // features. Zero projections leave the path untouched.
    double f1[kEnc1], inj[kEnc2];
    for (int i = 0; i < ws.n; ++i) {
        const double* x = ws.x.data() + static_cast<size_t>(i) * ws.in_dim;
        double* a1 = ws.a1.data() + static_cast<size_t>(i) * kEnc1;
        double* h1 = ws.h1.data() + static_cast<size_t>(i) * kEnc1;
        double* a2 = ws.a2.data() + static_cast<size_t>(i) * kEnc2;
        double* h2 = ws.h2.data() + static_cast<size_t>(i) * kEnc2;
        double* h2_raw = ws.h2_raw.data() + static_cast<size_t>(i) * kEnc2;
        const double* p1 = ws.p1.data() + static_cast<size_t>(i) * kEnc1;
        const double* p2 = ws.p2.data() + static_cast<size_t>(i) * kEnc2;

        m.recon.enc1.apply(x, a1);
        for (int c = 0; c < kEnc1; ++c) h1[c] = act(a1[c]);
        m.fuse1.apply(p1, f1);
        for (int c = 0; c < kEnc1; ++c) h1[c] += f1[c];

        m.recon.enc2.apply(h1, a2);
        for (int c = 0; c < kEnc2; ++c) h2_raw[c] = act(a2[c]);
        m.fuse2.apply(p2, inj);
        for (int c = 0; c < kEnc2; ++c) h2[c] = h2_raw[c] + inj[c];
    }

    pool_forward(ws);
    decoder_forward(m.recon, ws);
}

// dL/dout -> decoder gradients and per-point dL/dh2 (pool route included).
// Shared by the plain and merged backward passes.
void decoder_backward(const DenoiserParams& params, const Workspace& ws,
                      const std::vector<double>& dout, DenoiserParams& grads,
                      std::vector<double>& dh2) {
    const int dim = params.dim;
    dh2.assign(static_cast<size_t>(ws.n) * kEnc2, 0.0);
    std::vector<double> dg(kEnc2, 0.0);

    double u[2 * kEnc2];
    double dh4[kDec2], da4[kDec2], dh3[kDec1], da3[kDec1], du[2 * kEnc2];
    std::copy(ws.g.begin(), ws.g.end(), u + kEnc2);
    for (int i = 0; i < ws.n; ++i) {
        const double* h2 = ws.h2.data() + static_cast<size_t>(i) * kEnc2;
        const double* a3 = ws.a3.data() + static_cast<size_t>(i) * kDec1;
        const double* h3 = ws.h3.data() + static_cast<size_t>(i) * kDec1;
        const double* a4 = ws.a4.data() + static_cast<size_t>(i) * kDec2;
        const double* h4 = ws.h4.data() + static_cast<size_t>(i) * kDec2;
        const double* dout_i = dout.data() + static_cast<size_t>(i) * dim;
        std::copy(h2, h2 + kEnc2, u);

        // dec3
        std::fill(dh4, dh4 + kDec2, 0.0);
        for (int r = 0; r < dim; ++r) {
            const double d = dout_i[r];
            double* wrow = grads.dec3.w.data() + static_cast<size_t>(r) * kDec2;
            const double* prow = params.dec3.w.data() + static_cast<size_t>(r) * kDec2;
            grads.dec3.b[r] += d;
            for (int c = 0; c < kDec2; ++c) {
                wrow[c] += d * h4[c];
                dh4[c] += prow[c] * d;
            }
        }
        for (int c = 0; c < kDec2; ++c) da4[c] = dh4[c] * act_grad(a4[c]);

        // dec2
        std::fill(dh3, dh3 + kDec1, 0.0);
        for (int r = 0; r < kDec2; ++r) {
            const double d = da4[r];
            double* wrow = grads.dec2.w.data() + static_cast<size_t>(r) * kDec1;
            const double* prow = params.dec2.w.data() + static_cast<size_t>(r) * kDec1;
            grads.dec2.b[r] += d;
            for (int c = 0; c < kDec1; ++c) {
                wrow[c] += d * h3[c];
                dh3[c] += prow[c] * d;
            }
        }
        for (int c = 0; c < kDec1; ++c) da3[c] = dh3[c] * act_grad(a3[c]);

        // dec1
        std::fill(du, du + 2 * kEnc2, 0.0);
        for (int r = 0; r < kDec1; ++r) {
            const double d = da3[r];
            double* wrow = grads.dec1.w.data() + static_cast<size_t>(r) * 2 * kEnc2;
            const double* prow = params.dec1.w.data() + static_cast<size_t>(r) * 2 * kEnc2;
            grads.dec1.b[r] += d;
            for (int c = 0; c < 2 * kEnc2; ++c) {
                wrow[c] += d * u[c];
                du[c] += prow[c] * d;
            }
        }
        double* dh2_i = dh2.data() + static_cast<size_t>(i) * kEnc2;
        for (int c = 0; c < kEnc2; ++c) {
            dh2_i[c] += du[c];
            dg[c] += du[kEnc2 + c];
        }
    }
    // Pooled gradient routes to the argmax point per channel.
    for (int c = 0; c < kEnc2; ++c) {
        dh2[static_cast<size_t>(ws.amax[c]) * kEnc2 + c] += dg[c];
    }
}

}  // namespace

void time_embedding(int t, double* out) {
    constexpr int half = kTimeEmbedDim / 2;
    constexpr double ln_max_period = 9.210340371976184;  // ln(10000)
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-ln_max_period * k / (half - 1));
        out[k] = std::sin(t * freq);
        out[half + k] = std::cos(t * freq);
    }
}

std::vector<TensorRef> DenoiserParams::tensors() {
    std::vector<TensorRef> v = {
        {"enc1.w", &enc1.w}, {"enc1.b", &enc1.b}, {"enc2.w", &enc2.w}, {"enc2.b", &enc2.b},
        {"dec1.w", &dec1.w}, {"dec1.b", &dec1.b}, {"dec2.w", &dec2.w}, {"dec2.b", &dec2.b},
        {"dec3.w", &dec3.w}, {"dec3.b", &dec3.b},
    };
    if (conditional) {
        v.push_back({"cond_embed.w", &cond_embed.w});
        v.push_back({"cond_embed.b", &cond_embed.b});
        v.push_back({"null_embed", &null_embed});
    }
    return v;
}

std::vector<ConstTensorRef> DenoiserParams::tensors() const {
    auto mut = const_cast<DenoiserParams*>(this)->tensors();
    std::vector<ConstTensorRef> v;
    v.reserve(mut.size());
    for (auto& t : mut) v.push_back({t.name, t.data});
    return v;
}

size_t DenoiserParams::parameter_count() const {
    size_t n = 0;
    for (const auto& t : tensors()) n += t.data->size();
    return n;
}

DenoiserParams init_denoiser(bool conditional, int dim, uint64_t seed) {
    if (dim < 1) throw InvalidArgumentError("init_denoiser: dim must be >= 1");
    DenoiserParams p;
    p.conditional = conditional;
    p.dim = dim;
    rng::Sequence rng(seed, rng::Stream::init);
    init_affine(p.enc1, p.input_dim(), kEnc1, rng);
    init_affine(p.enc2, kEnc1, kEnc2, rng);
    init_affine(p.dec1, 2 * kEnc2, kDec1, rng);
    init_affine(p.dec2, kDec1, kDec2, rng);
    init_affine(p.dec3, kDec2, dim, rng);
    if (conditional) {
        init_affine(p.cond_embed, kConditionDim, kCondEmbedDim, rng);
        p.null_embed.resize(kCondEmbedDim);
        for (double& v : p.null_embed) v = 0.1 * rng.normal();
    }
    return p;
}

PointCloud predict_noise(const DenoiserParams& params, const PointCloud& y_t, int t,
                         const CondInput& cond) {
    check_cond_input(params, cond, "predict_noise");
    if (y_t.dim != params.dim) {
        throw ShapeMismatchError("predict_noise: cloud dim " + std::to_string(y_t.dim) +
                                 " != network dim " + std::to_string(params.dim));
    }
    thread_local Workspace ws;
    forward(params, y_t, t, cond, ws);
    PointCloud out(y_t.n, y_t.dim);
    out.points = ws.out;
    return out;
}

std::vector<TensorRef> MergedParams::trainable() {
    return {
        {"dec1.w", &recon.dec1.w}, {"dec1.b", &recon.dec1.b},
        {"dec2.w", &recon.dec2.w}, {"dec2.b", &recon.dec2.b},
        {"dec3.w", &recon.dec3.w}, {"dec3.b", &recon.dec3.b},
        {"fuse1.w", &fuse1.w},     {"fuse1.b", &fuse1.b},
        {"fuse2.w", &fuse2.w},     {"fuse2.b", &fuse2.b},
    };
}

std::vector<TensorRef> MergedParams::tensors() {
    auto v = recon.tensors();
    v.push_back({"prior_enc1.w", &prior_enc1.w});
    v.push_back({"prior_enc1.b", &prior_enc1.b});
    v.push_back({"prior_enc2.w", &prior_enc2.w});
    v.push_back({"prior_enc2.b", &prior_enc2.b});
    v.push_back({"fuse1.w", &fuse1.w});
    v.push_back({"fuse1.b", &fuse1.b});
    v.push_back({"fuse2.w", &fuse2.w});
    v.push_back({"fuse2.b", &fuse2.b});
    return v;
}

std::vector<ConstTensorRef> MergedParams::tensors() const {
    auto mut = const_cast<MergedParams*>(this)->tensors();
    std::vector<ConstTensorRef> v;
    v.reserve(mut.size());
    for (auto& t : mut) v.push_back({t.name, t.data});
    return v;
}

std::vector<ConstTensorRef> MergedParams::frozen() const {
    return {
        {"enc1.w", &recon.enc1.w},       {"enc1.b", &recon.enc1.b},
        {"enc2.w", &recon.enc2.w},       {"enc2.b", &recon.enc2.b},
        {"cond_embed.w", &recon.cond_embed.w},
        {"cond_embed.b", &recon.cond_embed.b},
        {"null_embed", &recon.null_embed},
        {"prior_enc1.w", &prior_enc1.w}, {"prior_enc1.b", &prior_enc1.b},
        {"prior_enc2.w", &prior_enc2.w}, {"prior_enc2.b", &prior_enc2.b},
    };
}

MergedParams init_merged(const DenoiserParams& prior, const DenoiserParams& recon) {
    if (prior.conditional) throw InvalidArgumentError("init_merged: prior must be unconditional");
    if (!recon.conditional) {
        throw InvalidArgumentError("init_merged: reconstruction model must be conditional");
    }
    if (prior.dim != recon.dim) {
        throw ShapeMismatchError("init_merged: prior and reconstruction dims differ");
    }
    MergedParams m;
    m.recon = recon;
    m.prior_enc1 = prior.enc1;
    m.prior_enc2 = prior.enc2;
    m.fuse1.resize(kEnc1, kEnc1);
    m.fuse2.resize(kEnc2, kEnc2);
    return m;
}

PointCloud predict_noise_merged(const MergedParams& m, const PointCloud& y_t, int t,
                                const CondInput& cond) {
    check_cond_input(m.recon, cond, "predict_noise_merged");
    if (y_t.dim != m.recon.dim) {
        throw ShapeMismatchError("predict_noise_merged: cloud dim mismatch");
    }
    thread_local Workspace ws;
    forward_merged(m, y_t, t, cond, ws);
    PointCloud out(y_t.n, y_t.dim);
    out.points = ws.out;
    return out;
}

double loss_and_grad(const DenoiserParams& params, const PointCloud& y0, const CondInput& cond,
                     int t, const PointCloud& eps, const NoiseSchedule& sched,
                     DenoiserParams* grads) {
    check_cond_input(params, cond, "ddpm_loss");
    const PointCloud y_t = forward_diffuse(y0, t, eps, sched);

    thread_local Workspace ws;
    forward(params, y_t, t, cond, ws);

    const size_t entries = y0.points.size();
    double loss = 0.0;
    thread_local std::vector<double> dout;
    dout.assign(entries, 0.0);
    for (size_t k = 0; k < entries; ++k) {
        const double r = ws.out[k] - eps.points[k];
        loss += r * r;
        dout[k] = 2.0 * r / static_cast<double>(entries);
    }
    loss /= static_cast<double>(entries);
    if (grads == nullptr) return loss;

    thread_local std::vector<double> dh2;
    decoder_backward(params, ws, dout, *grads, dh2);

    // Encoder backward; collect the condition-embedding gradient if present.
    const int in_dim = ws.in_dim;
    std::vector<double> dce(kCondEmbedDim, 0.0);
    double da2[kEnc2], dh1[kEnc1], da1[kEnc1];
    for (int i = 0; i < ws.n; ++i) {
        const double* a1v = ws.a1.data() + static_cast<size_t>(i) * kEnc1;
        const double* h1 = ws.h1.data() + static_cast<size_t>(i) * kEnc1;
        const double* a2v = ws.a2.data() + static_cast<size_t>(i) * kEnc2;
        const double* x = ws.x.data() + static_cast<size_t>(i) * in_dim;
        const double* dh2_i = dh2.data() + static_cast<size_t>(i) * kEnc2;

        for (int c = 0; c < kEnc2; ++c) da2[c] = dh2_i[c] * act_grad(a2v[c]);
        std::fill(dh1, dh1 + kEnc1, 0.0);
        for (int r = 0; r < kEnc2; ++r) {
            const double d = da2[r];
            double* wrow = grads->enc2.w.data() + static_cast<size_t>(r) * kEnc1;
            const double* prow = params.enc2.w.data() + static_cast<size_t>(r) * kEnc1;
            grads->enc2.b[r] += d;
            for (int c = 0; c < kEnc1; ++c) {
                wrow[c] += d * h1[c];
                dh1[c] += prow[c] * d;
            }
        }
        for (int c = 0; c < kEnc1; ++c) da1[c] = dh1[c] * act_grad(a1v[c]);
        for (int r = 0; r < kEnc1; ++r) {
            const double d = da1[r];
            double* wrow = grads->enc1.w.data() + static_cast<size_t>(r) * in_dim;
            grads->enc1.b[r] += d;
            for (int c = 0; c < in_dim; ++c) wrow[c] += d * x[c];
        }
        if (params.conditional) {
            // d(input) restricted to the condition-embedding slice.
            const int off = params.dim + kTimeEmbedDim;
            for (int r = 0; r < kEnc1; ++r) {
                const double d = da1[r];
                const double* prow = params.enc1.w.data() + static_cast<size_t>(r) * in_dim;
                for (int c = 0; c < kCondEmbedDim; ++c) dce[c] += d * prow[off + c];
            }
        }
    }

    if (params.conditional) {
        if (cond.kind == CondInput::Kind::null_token) {
            for (int c = 0; c < kCondEmbedDim; ++c) grads->null_embed[c] += dce[c];
        } else {
            const auto vec = cond.value->to_vector();
            for (int r = 0; r < kCondEmbedDim; ++r) {
                double* wrow = grads->cond_embed.w.data() + static_cast<size_t>(r) * kConditionDim;
                grads->cond_embed.b[r] += dce[r];
                for (int c = 0; c < kConditionDim; ++c) wrow[c] += dce[r] * vec[c];
            }
        }
    }
    return loss;
}

double loss_and_grad_merged(const MergedParams& m, const PointCloud& y0, const CondInput& cond,
                            int t, const PointCloud& eps, const NoiseSchedule& sched,
                            MergedParams* grads) {
    check_cond_input(m.recon, cond, "loss_and_grad_merged");
    const PointCloud y_t = forward_diffuse(y0, t, eps, sched);

    thread_local Workspace ws;
    forward_merged(m, y_t, t, cond, ws);

    const size_t entries = y0.points.size();
    double loss = 0.0;
    thread_local std::vector<double> dout;
    dout.assign(entries, 0.0);
    for (size_t k = 0; k < entries; ++k) {
        const double r = ws.out[k] - eps.points[k];
        loss += r * r;
        dout[k] = 2.0 * r / static_cast<double>(entries);
    }
    loss /= static_cast<double>(entries);
    if (grads == nullptr) return loss;

    thread_local std::vector<double> df2;
    decoder_backward(m.recon, ws, dout, grads->recon, df2);

    // Injection gradients: fuse2 directly off df2; fuse1 through the frozen
    // second encoder layer.
    double da2[kEnc2], df1[kEnc1];
    for (int i = 0; i < ws.n; ++i) {
        const double* df2_i = df2.data() + static_cast<size_t>(i) * kEnc2;
        const double* p2 = ws.p2.data() + static_cast<size_t>(i) * kEnc2;
        const double* p1 = ws.p1.data() + static_cast<size_t>(i) * kEnc1;
        const double* a2v = ws.a2.data() + static_cast<size_t>(i) * kEnc2;

        for (int r = 0; r < kEnc2; ++r) {
            const double d = df2_i[r];
            double* wrow = grads->fuse2.w.data() + static_cast<size_t>(r) * kEnc2;
            grads->fuse2.b[r] += d;
            for (int c = 0; c < kEnc2; ++c) wrow[c] += d * p2[c];
        }

        for (int c = 0; c < kEnc2; ++c) da2[c] = df2_i[c] * act_grad(a2v[c]);
        std::fill(df1, df1 + kEnc1, 0.0);
        for (int r = 0; r < kEnc2; ++r) {
            const double d = da2[r];
            const double* prow = m.recon.enc2.w.data() + static_cast<size_t>(r) * kEnc1;
            for (int c = 0; c < kEnc1; ++c) df1[c] += prow[c] * d;
        }
        for (int r = 0; r < kEnc1; ++r) {
            const double d = df1[r];
            double* wrow = grads->fuse1.w.data() + static_cast<size_t>(r) * kEnc1;
            grads->fuse1.b[r] += d;
            for (int c = 0; c < kEnc1; ++c) wrow[c] += d * p1[c];
        }
    }
    return loss;
}

LossSample ddpm_loss(const DenoiserParams& params, const PointCloud& y0, const CondInput& cond,
                     rng::Sequence& rng, const NoiseSchedule& sched) {
    LossSample out;
    out.t = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(sched.steps)));
    PointCloud eps(y0.n, y0.dim);
    for (double& v : eps.points) v = rng.normal();
    out.grads = params;
    for (auto& tref : out.grads.tensors()) std::fill(tref.data->begin(), tref.data->end(), 0.0);
    out.loss = loss_and_grad(params, y0, cond, out.t, eps, sched, &out.grads);
    return out;
}

uint64_t content_hash(const std::vector<ConstTensorRef>& tensors) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix_bytes = [&h](const void* p, size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& t : tensors) {
        mix_bytes(t.name.data(), t.name.size());
        mix_bytes(t.data->data(), t.data->size() * sizeof(double));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

class Adam {
public:
    explicit Adam(const std::vector<TensorRef>& params) {
        for (const auto& t : params) {
            m_.emplace_back(t.data->size(), 0.0);
            v_.emplace_back(t.data->size(), 0.0);
        }
    }

    void step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
              const TrainConfig& cfg, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t_);
        for (size_t k = 0; k < params.size(); ++k) {
            auto& p = *params[k].data;
            const auto& g = *grads[k].data;
            auto& m = m_[k];
            auto& v = v_[k];
            for (size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                const double mh = m[i] / bc1;
                const double vh = v[i] / bc2;
                p[i] -= lr * mh / (std::sqrt(vh) + cfg.adam_eps);
            }
        }
    }

private:
    std::vector<std::vector<double>> m_, v_;
    int t_ = 0;
};

double lr_at(const TrainConfig& cfg, int step) {
    const int warm = std::max(1, static_cast<int>(cfg.warmup_frac * cfg.steps));
    if (step < warm) {
        const double f = static_cast<double>(step) / warm;
        return cfg.lr_floor + f * (cfg.lr - cfg.lr_floor);
    }
    const double f = static_cast<double>(step - warm) / std::max(1, cfg.steps - warm);
    return cfg.lr * (1.0 - f);
}

// One training draw: which sample, which timestep, dropped condition or not,
// and a dedicated noise stream key.
struct Draw {
    int index = 0;
    int t = 1;
    bool drop = false;
};

constexpr uint64_t kMaxBatchKey = 4096;

PointCloud sample_eps(uint64_t seed, int step, int slot, int n, int dim) {
    PointCloud eps(n, dim);
    const uint64_t key = static_cast<uint64_t>(step) * kMaxBatchKey + slot;
    for (size_t k = 0; k < eps.points.size(); ++k) {
        eps.points[k] = rng::normal(seed, rng::Stream::train, key, k);
    }
    return eps;
}

// Runs fn(slot) for slot in [0, count) across cfg.threads workers. Slots are
// independent; results land in per-slot buffers so the reduction order (and
// therefore every output bit) is thread-count invariant.
void parallel_slots(int count, int threads, const std::function<void(int)>& fn) {
    const int n_threads = std::max(1, std::min(threads, count));
    if (n_threads == 1) {
        for (int s = 0; s < count; ++s) fn(s);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int w = 0; w < n_threads; ++w) {
        pool.emplace_back([&, w]() {
            for (int s = w; s < count; s += n_threads) fn(s);
        });
    }
    for (auto& th : pool) th.join();
}

template <typename Params, typename LossFn>
void train_loop(Params& params, std::vector<TensorRef> trainable, int dataset_size,
                const TrainConfig& cfg, const NoiseSchedule& sched, TrainTrace* trace,
                const LossFn& sample_loss) {
    if (dataset_size < 1) throw InvalidArgumentError("training: empty dataset");
    if (cfg.steps < 0 || cfg.batch < 1) {
        throw InvalidArgumentError("training: steps must be >= 0 and batch >= 1");
    }

    Adam adam(trainable);

    // Per-slot gradient accumulators, same tensor layout as the params.
    std::vector<Params> slot_grads(cfg.batch, params);
    std::vector<std::vector<TensorRef>> slot_refs;
    for (auto& sg : slot_grads) {
        slot_refs.push_back([&sg]() {
            if constexpr (std::is_same_v<Params, MergedParams>) {
                return sg.trainable();
            } else {
                return sg.tensors();
            }
        }());
    }
    Params total = params;
    std::vector<TensorRef> total_refs = [&total]() {
        if constexpr (std::is_same_v<Params, MergedParams>) {
            return total.trainable();
        } else {
            return total.tensors();
        }
    }();

    std::vector<double> losses(cfg.batch, 0.0);
    double ema = 0.0;
    bool ema_init = false;

    // Weight averaging: e += (1-d)(p-e) is exact at the fixed point, so
    // tensors that never move stay bit-identical to their initialization.
    Params averaged = params;
    std::vector<TensorRef> avg_refs = [&averaged]() {
        if constexpr (std::is_same_v<Params, MergedParams>) {
            return averaged.tensors();
        } else {
            return averaged.tensors();
        }
    }();
    std::vector<TensorRef> param_refs = [&params]() {
        if constexpr (std::is_same_v<Params, MergedParams>) {
            return params.tensors();
        } else {
            return params.tensors();
        }
    }();

    for (int step = 0; step < cfg.steps; ++step) {
        rng::Sequence control(cfg.seed, rng::Stream::train, static_cast<uint64_t>(step));
        std::vector<Draw> draws(cfg.batch);
        for (auto& d : draws) {
            d.index = static_cast<int>(control.below(static_cast<uint64_t>(dataset_size)));
            d.t = 1 + static_cast<int>(control.below(static_cast<uint64_t>(sched.steps)));
            d.drop = control.uniform() < cfg.cond_dropout;
        }

        parallel_slots(cfg.batch, cfg.threads, [&](int slot) {
            for (auto& tref : slot_refs[slot]) {
                std::fill(tref.data->begin(), tref.data->end(), 0.0);
            }
            losses[slot] = sample_loss(draws[slot], step, slot, slot_grads[slot]);
        });

        double batch_loss = 0.0;
        for (double l : losses) batch_loss += l;
        batch_loss /= cfg.batch;
        if (!std::isfinite(batch_loss)) {
            throw NumericError("training diverged at step " + std::to_string(step) +
                               " (non-finite loss)");
        }

        for (size_t k = 0; k < total_refs.size(); ++k) {
            auto& acc = *total_refs[k].data;
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int slot = 0; slot < cfg.batch; ++slot) {
                const auto& part = *slot_refs[slot][k].data;
                for (size_t i = 0; i < acc.size(); ++i) acc[i] += part[i];
            }
            const double inv = 1.0 / cfg.batch;
            for (double& v : acc) v *= inv;
        }

        adam.step(trainable, total_refs, cfg, lr_at(cfg, step));

        if (cfg.ema_decay > 0.0) {
            const double take = 1.0 - cfg.ema_decay;
            for (size_t k = 0; k < avg_refs.size(); ++k) {
                auto& e = *avg_refs[k].data;
                const auto& p = *param_refs[k].data;
                for (size_t i = 0; i < e.size(); ++i) e[i] += take * (p[i] - e[i]);
            }
        }

        if (!ema_init) {
            ema = batch_loss;
            ema_init = true;
        } else {
            ema = 0.99 * ema + 0.01 * batch_loss;
        }
        if (trace != nullptr) {
            trace->loss.push_back(batch_loss);
            trace->loss_ema.push_back(ema);
        }
    }

    if (cfg.ema_decay > 0.0 && cfg.steps > 0) {
        for (size_t k = 0; k < avg_refs.size(); ++k) {
            *param_refs[k].data = *avg_refs[k].data;
        }
    }
}

}  // namespace

DenoiserParams train_prior(const std::vector<PointCloud>& standalone, const TrainConfig& cfg,
                           const NoiseSchedule& sched, TrainTrace* trace) {
    if (standalone.empty()) throw InvalidArgumentError("train_prior: empty dataset");
    DenoiserParams params = init_denoiser(false, standalone.front().dim, cfg.seed);
    train_loop(
        params, params.tensors(), static_cast<int>(standalone.size()), cfg, sched, trace,
        [&](const Draw& d, int step, int slot, DenoiserParams& grads) {
            const PointCloud& y0 = standalone[d.index];
            const PointCloud eps = sample_eps(cfg.seed, step, slot, y0.n, y0.dim);
            return loss_and_grad(params, y0, CondInput::none(), d.t, eps, sched, &grads);
        });
    return params;
}

DenoiserParams train_reconstruction(const std::vector<std::pair<Condition, PointCloud>>& paired,
                                    const TrainConfig& cfg, const NoiseSchedule& sched,
                                    TrainTrace* trace) {
    if (paired.empty()) throw InvalidArgumentError("train_reconstruction: empty dataset");
    DenoiserParams params = init_denoiser(true, paired.front().second.dim, cfg.seed);
    train_loop(
        params, params.tensors(), static_cast<int>(paired.size()), cfg, sched, trace,
        [&](const Draw& d, int step, int slot, DenoiserParams& grads) {
            const auto& [cond, y0] = paired[d.index];
            const CondInput ci = d.drop ? CondInput::null_token() : CondInput::of(cond);
            const PointCloud eps = sample_eps(cfg.seed, step, slot, y0.n, y0.dim);
            return loss_and_grad(params, y0, ci, d.t, eps, sched, &grads);
        });
    return params;
}

MergedParams train_merged(const DenoiserParams& prior, const DenoiserParams& recon,
                          const std::vector<std::pair<Condition, PointCloud>>& paired,
                          const TrainConfig& cfg, const NoiseSchedule& sched, TrainTrace* trace) {
    if (paired.empty()) throw InvalidArgumentError("train_merged: empty dataset");
    MergedParams m = init_merged(prior, recon);
    const uint64_t frozen_before = content_hash(m.frozen());
    train_loop(
        m, m.trainable(), static_cast<int>(paired.size()), cfg, sched, trace,
        [&](const Draw& d, int step, int slot, MergedParams& grads) {
            const auto& [cond, y0] = paired[d.index];
            // Merged finetuning always sees the real condition.
            const PointCloud eps = sample_eps(cfg.seed, step, slot, y0.n, y0.dim);
            return loss_and_grad_merged(m, y0, CondInput::of(cond), d.t, eps, sched, &grads);
        });
    if (content_hash(m.frozen()) != frozen_before) {
        throw NumericError("train_merged: frozen tensors changed during training");
    }
    return m;
}

}  // namespace bdm
