#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "patsvd/svd.hpp"
#include "patsvd/phantom.hpp"
#include "patsvd/util.hpp"

namespace patsvd {

/// Dense CHW tensor of doubles.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, 0.0) {}

    double* plane(int ch) { return v.data() + size_t(ch) * h * w; }
    const double* plane(int ch) const { return v.data() + size_t(ch) * h * w; }
    size_t size() const { return v.size(); }
};

namespace nn {

struct Conv {
    int in_c = 0, out_c = 0, k = 3; // square kernel, zero padding (k-1)/2
    std::vector<double> w;          // [out_c][in_c][k][k]
    std::vector<double> b;          // [out_c]

    void init(int in_channels, int out_channels, int kernel) {
        in_c = in_channels;
        out_c = out_channels;
        k = kernel;
        w.assign(size_t(out_c) * in_c * k * k, 0.0);
        b.assign(out_c, 0.0);
    }

    size_t num_params() const { return w.size() + b.size(); }
};

inline Tensor conv_forward(const Conv& cv, const Tensor& in) {
    const int pad = (cv.k - 1) / 2;
    Tensor out(cv.out_c, in.h, in.w);
    const int H = in.h, W = in.w;
    for (int oc = 0; oc < cv.out_c; ++oc) {
        double* op = out.plane(oc);
        const double bias = cv.b[oc];
        for (int i = 0; i < H * W; ++i) op[i] = bias;
        for (int ic = 0; ic < cv.in_c; ++ic) {
            const double* ip = in.plane(ic);
            const double* wbase = &cv.w[(size_t(oc) * cv.in_c + ic) * cv.k * cv.k];
            for (int ky = 0; ky < cv.k; ++ky) {
                const int dy = ky - pad;
                const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                for (int kx = 0; kx < cv.k; ++kx) {
                    const int dx = kx - pad;
                    const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                    const double wv = wbase[ky * cv.k + kx];
                    for (int y = y0; y < y1; ++y) {
                        double* orow = op + size_t(y) * W;
                        const double* irow = ip + size_t(y + dy) * W + dx;
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

/// Gradients of a conv layer; returns grad w.r.t. the input and accumulates
/// parameter gradients into gw/gb (same layout as Conv::w / Conv::b).
inline Tensor conv_backward(const Conv& cv, const Tensor& in, const Tensor& gout,
                            std::vector<double>& gw, std::vector<double>& gb) {
    const int pad = (cv.k - 1) / 2;
    const int H = in.h, W = in.w;
    Tensor gin(cv.in_c, H, W);
    for (int oc = 0; oc < cv.out_c; ++oc) {
        const double* gp = gout.plane(oc);
        double acc = 0.0;
        for (int i = 0; i < H * W; ++i) acc += gp[i];
        gb[oc] += acc;
        for (int ic = 0; ic < cv.in_c; ++ic) {
            const double* ip = in.plane(ic);
            double* gip = gin.plane(ic);
            double* gwbase = &gw[(size_t(oc) * cv.in_c + ic) * cv.k * cv.k];
            const double* wbase = &cv.w[(size_t(oc) * cv.in_c + ic) * cv.k * cv.k];
            for (int ky = 0; ky < cv.k; ++ky) {
                const int dy = ky - pad;
                const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                for (int kx = 0; kx < cv.k; ++kx) {
                    const int dx = kx - pad;
                    const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                    const double wv = wbase[ky * cv.k + kx];
                    double wg = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* grow = gp + size_t(y) * W;
                        const double* irow = ip + size_t(y + dy) * W + dx;
                        double* girow = gip + size_t(y + dy) * W + dx;
                        for (int x = x0; x < x1; ++x) {
                            wg += grow[x] * irow[x];
                            girow[x] += wv * grow[x];
                        }
                    }
                    gwbase[ky * cv.k + kx] += wg;
                }
            }
        }
    }
    return gin;
}

inline void relu_inplace(Tensor& t) {
    for (double& x : t.v) x = x > 0.0 ? x : 0.0;
}

inline void relu_backward_inplace(Tensor& g, const Tensor& preact) {
    for (size_t i = 0; i < g.v.size(); ++i)
        if (preact.v[i] <= 0.0) g.v[i] = 0.0;
}

inline Tensor avgpool2_forward(const Tensor& in) {
    Tensor out(in.c, in.h / 2, in.w / 2);
    for (int ch = 0; ch < in.c; ++ch) {
        const double* ip = in.plane(ch);
        double* op = out.plane(ch);
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                const size_t i = size_t(2 * y) * in.w + 2 * x;
                op[size_t(y) * out.w + x] =
                    0.25 * (ip[i] + ip[i + 1] + ip[i + in.w] + ip[i + in.w + 1]);
            }
    }
    return out;
}

inline Tensor avgpool2_backward(const Tensor& gout) {
    Tensor gin(gout.c, gout.h * 2, gout.w * 2);
    for (int ch = 0; ch < gout.c; ++ch) {
        const double* gp = gout.plane(ch);
        double* ip = gin.plane(ch);
        for (int y = 0; y < gout.h; ++y)
            for (int x = 0; x < gout.w; ++x) {
                const double g = 0.25 * gp[size_t(y) * gout.w + x];
                const size_t i = size_t(2 * y) * gin.w + 2 * x;
                ip[i] = ip[i + 1] = ip[i + gin.w] = ip[i + gin.w + 1] = g;
            }
    }
    return gin;
}

inline Tensor upsample2_forward(const Tensor& in) {
    Tensor out(in.c, in.h * 2, in.w * 2);
    for (int ch = 0; ch < in.c; ++ch) {
        const double* ip = in.plane(ch);
        double* op = out.plane(ch);
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                op[size_t(y) * out.w + x] = ip[size_t(y / 2) * in.w + x / 2];
    }
    return out;
}

inline Tensor upsample2_backward(const Tensor& gout) {
    Tensor gin(gout.c, gout.h / 2, gout.w / 2);
    for (int ch = 0; ch < gout.c; ++ch) {
        const double* gp = gout.plane(ch);
        double* ip = gin.plane(ch);
        for (int y = 0; y < gout.h; ++y)
            for (int x = 0; x < gout.w; ++x)
                ip[size_t(y / 2) * gin.w + x / 2] += gp[size_t(y) * gout.w + x];
    }
    return gin;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

} // namespace nn

/// Encoder-decoder ("U-net") image-to-image network on N x N single-channel
/// images, all in double precision with hand-written backprop.
///
/// widths = per-level channel counts; each level is two 3x3 conv + ReLU
/// blocks, levels are joined by 2x average pooling / nearest-neighbor
/// upsampling with skip concatenations, and a linear 1x1 conv produces the
/// output. An empty `widths` degenerates to a single linear 1x1 conv
/// (used by the analytic gradient tests).
class UNet {
public:
    struct Config {
        int input_size = 32;
        std::vector<int> widths = {16, 32, 64};
    };

    UNet() = default;

    explicit UNet(const Config& cfg) : cfg_(cfg) {
        const int levels = int(cfg.widths.size());
        if (levels > 0) {
            if (cfg.input_size % (1 << (levels - 1)) != 0)
                throw std::invalid_argument("UNet: input size must be divisible by 2^(levels-1)");
            if ((cfg.input_size >> (levels - 1)) < 2)
                throw std::invalid_argument("UNet: too many levels for this input size");
            for (int l = 0; l < levels; ++l) {
                nn::Conv a, b;
                a.init(l == 0 ? 1 : cfg.widths[l - 1], cfg.widths[l], 3);
                b.init(cfg.widths[l], cfg.widths[l], 3);
                layers_.push_back(a);
                layers_.push_back(b);
            }
            for (int l = levels - 2; l >= 0; --l) {
                nn::Conv up, merge;
                up.init(cfg.widths[l + 1], cfg.widths[l], 3);
                merge.init(2 * cfg.widths[l], cfg.widths[l], 3);
                layers_.push_back(up);
                layers_.push_back(merge);
            }
            nn::Conv fin;
            fin.init(cfg.widths[0], 1, 1);
            layers_.push_back(fin);
        } else {
            nn::Conv fin;
            fin.init(1, 1, 1);
            layers_.push_back(fin);
        }
    }

    const Config& config() const { return cfg_; }
    int input_size() const { return cfg_.input_size; }

    size_t num_params() const {
        size_t n = 0;
        for (const auto& l : layers_) n += l.num_params();
        return n;
    }

    /// He-style fan-in-scaled uniform initialization, seed-controlled.
    void init_weights(uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        for (auto& l : layers_) {
            const double bound = std::sqrt(6.0 / double(size_t(l.in_c) * l.k * l.k));
            for (double& w : l.w) w = bound * unit(rng);
            for (double& b : l.b) b = 0.0;
        }
    }

    std::vector<double> flatten_params() const {
        std::vector<double> p;
        p.reserve(num_params());
        for (const auto& l : layers_) {
            p.insert(p.end(), l.w.begin(), l.w.end());
            p.insert(p.end(), l.b.begin(), l.b.end());
        }
        return p;
    }

    void set_params(const std::vector<double>& p) {
        if (p.size() != num_params())
            throw std::invalid_argument("UNet::set_params: parameter count mismatch");
        size_t off = 0;
        for (auto& l : layers_) {
            std::copy(p.begin() + off, p.begin() + off + l.w.size(), l.w.begin());
            off += l.w.size();
            std::copy(p.begin() + off, p.begin() + off + l.b.size(), l.b.begin());
            off += l.b.size();
        }
    }

    /// Everything the backward pass needs from a forward evaluation.
    struct Cache {
        std::vector<Tensor> conv_in;     // input of each conv, by layer index
        std::vector<Tensor> conv_preact; // pre-activation output of each conv
    };

    Tensor forward(const Tensor& in, Cache* cache = nullptr) const {
        if (in.c != 1 || in.h != cfg_.input_size || in.w != cfg_.input_size)
            throw std::invalid_argument("UNet::forward: input shape mismatch");
        const int levels = int(cfg_.widths.size());
        if (cache) {
            cache->conv_in.assign(layers_.size(), {});
            cache->conv_preact.assign(layers_.size(), {});
        }
        auto conv_relu = [&](int li, Tensor t) {
            if (cache) cache->conv_in[li] = t;
            Tensor o = nn::conv_forward(layers_[li], t);
            if (cache) cache->conv_preact[li] = o;
            nn::relu_inplace(o);
            return o;
        };
        if (levels == 0) {
            if (cache) cache->conv_in[0] = in;
            return nn::conv_forward(layers_[0], in);
        }
        std::vector<Tensor> skips(std::max(0, levels - 1));
        Tensor t = in;
        for (int l = 0; l < levels; ++l) {
            t = conv_relu(2 * l, std::move(t));
            t = conv_relu(2 * l + 1, std::move(t));
            if (l < levels - 1) {
                skips[l] = t;
                t = nn::avgpool2_forward(t);
            }
        }
        int li = 2 * levels;
        for (int l = levels - 2; l >= 0; --l) {
            t = nn::upsample2_forward(t);
            t = conv_relu(li++, std::move(t));
            t = nn::concat_channels(t, skips[l]);
            t = conv_relu(li++, std::move(t));
        }
        const int fin = int(layers_.size()) - 1;
        if (cache) cache->conv_in[fin] = t;
        return nn::conv_forward(layers_[fin], t);
    }

    /// Parameter gradients in flatten_params() layout.
    struct Gradients {
        std::vector<std::vector<double>> gw, gb;

        void init(const std::vector<nn::Conv>& layers) {
            gw.resize(layers.size());
            gb.resize(layers.size());
            for (size_t i = 0; i < layers.size(); ++i) {
                gw[i].assign(layers[i].w.size(), 0.0);
                gb[i].assign(layers[i].b.size(), 0.0);
            }
        }

        std::vector<double> flatten() const {
            std::vector<double> p;
            for (size_t i = 0; i < gw.size(); ++i) {
                p.insert(p.end(), gw[i].begin(), gw[i].end());
                p.insert(p.end(), gb[i].begin(), gb[i].end());
            }
            return p;
        }

        void axpy(double scale, const Gradients& other) {
            for (size_t i = 0; i < gw.size(); ++i) {
                for (size_t j = 0; j < gw[i].size(); ++j) gw[i][j] += scale * other.gw[i][j];
                for (size_t j = 0; j < gb[i].size(); ++j) gb[i][j] += scale * other.gb[i][j];
            }
        }
    };

    Gradients make_gradients() const {
        Gradients g;
        g.init(layers_);
        return g;
    }

    /// Reverse-mode pass; `gout` is dLoss/dOutput. Accumulates parameter
    /// gradients into `grads` and returns dLoss/dInput.
    Tensor backward(const Cache& cache, const Tensor& gout, Gradients& grads) const {
        const int levels = int(cfg_.widths.size());
        const int fin = int(layers_.size()) - 1;
        Tensor g = nn::conv_backward(layers_[fin], cache.conv_in[fin], gout, grads.gw[fin], grads.gb[fin]);
        if (levels == 0) return g;

        auto conv_relu_back = [&](int li, Tensor gr) {
            nn::relu_backward_inplace(gr, cache.conv_preact[li]);
            return nn::conv_backward(layers_[li], cache.conv_in[li], gr, grads.gw[li], grads.gb[li]);
        };

        std::vector<Tensor> skip_grads(std::max(0, levels - 1));
        // decoder, reverse application order: level 0 was applied last
        for (int l = 0; l <= levels - 2; ++l) {
            const int merge_li = 2 * levels + 2 * (levels - 2 - l) + 1;
            const int up_li = merge_li - 1;
            Tensor gm = conv_relu_back(merge_li, std::move(g));
            // split the concat: first widths[l] channels from the up conv, rest is the skip
            const int wch = cfg_.widths[l];
            Tensor g_up(wch, gm.h, gm.w), g_skip(wch, gm.h, gm.w);
            std::copy(gm.v.begin(), gm.v.begin() + g_up.size(), g_up.v.begin());
            std::copy(gm.v.begin() + g_up.size(), gm.v.end(), g_skip.v.begin());
            skip_grads[l] = std::move(g_skip);
            g = conv_relu_back(up_li, std::move(g_up));
            g = nn::upsample2_backward(g);
        }
        // encoder, bottom level back to the top
        for (int l = levels - 1; l >= 0; --l) {
            g = conv_relu_back(2 * l + 1, std::move(g));
            g = conv_relu_back(2 * l, std::move(g));
            if (l > 0) {
                g = nn::avgpool2_backward(g);
                const Tensor& sg = skip_grads[l - 1];
                for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += sg.v[i];
            }
        }
        return g;
    }

    const std::vector<nn::Conv>& layers() const { return layers_; }
    std::vector<nn::Conv>& layers() { return layers_; }

private:
    Config cfg_;
    std::vector<nn::Conv> layers_;
};

inline Tensor image_from_vector(const Vector& z, int n) {
    if (z.size() != n * n) throw std::invalid_argument("image_from_vector: length mismatch");
    Tensor t(1, n, n);
    for (int i = 0; i < n * n; ++i) t.v[i] = z[i];
    return t;
}

inline Vector vector_from_image(const Tensor& t) {
    Vector z(t.h * t.w);
    for (int i = 0; i < t.h * t.w; ++i) z[i] = t.v[i];
    return z;
}

/// Plain network forward pass on a coefficient image, no projection.
inline Vector network_forward(const UNet& net, const Vector& z) {
    return vector_from_image(net.forward(image_from_vector(z, net.input_size())));
}

/// Projected network: Phi_a(z) = P_a (U_a z); its range is orthogonal to the
/// kept singular subspace.
inline Vector projected_forward(const UNet& net, const SvdFactors& f, const TruncationPolicy& policy,
                                const Vector& z) {
    return complement_project(f, policy, network_forward(net, z));
}

/// Full reconstructor R_a(y) = B_a y + Phi_a(B_a y).
inline Vector reconstruct(const UNet& net, const SvdFactors& f, const TruncationPolicy& policy,
                          const Vector& y) {
    const Vector b = tsvd_apply(f, policy, y);
    return b + projected_forward(net, f, policy, b);
}

struct TrainConfig {
    int epochs = 70;
    double learning_rate = 0.01;
    double momentum = 0.99;
    int batch_size = 8;
    uint64_t seed = 0;
};

/// Mean over the batch of || x_n - (B_a y_n + P_a U_a B_a y_n) ||^2 and its
/// gradient w.r.t. all network parameters. `tsvd_inputs` are the precomputed
/// B_a y_n; the projection is linear and self-adjoint, so its backward pass
/// reuses the forward projector.
inline double loss_and_gradient(const UNet& net, const SvdFactors& f, const TruncationPolicy& policy,
                                const std::vector<const Vector*>& targets,
                                const std::vector<const Vector*>& tsvd_inputs,
                                UNet::Gradients& grads) {
    if (targets.empty() || targets.size() != tsvd_inputs.size())
        throw std::invalid_argument("loss_and_gradient: batch empty or mismatched");
    const int n = net.input_size();
    const double inv_batch = 1.0 / double(targets.size());
    double loss = 0.0;
    for (size_t s = 0; s < targets.size(); ++s) {
        const Vector& x = *targets[s];
        const Vector& z = *tsvd_inputs[s];
        UNet::Cache cache;
        const Tensor out = net.forward(image_from_vector(z, n), &cache);
        const Vector recon = z + complement_project(f, policy, vector_from_image(out));
        const Vector resid = recon - x;
        const double sample_loss = resid.squaredNorm();
        if (!std::isfinite(sample_loss))
            throw std::runtime_error("loss_and_gradient: non-finite loss at batch sample " +
                                     std::to_string(s));
        loss += sample_loss * inv_batch;
        // d loss / d (network output) = 2/B * P_a resid  (P_a self-adjoint)
        const Vector gvec = 2.0 * inv_batch * complement_project(f, policy, resid);
        net.backward(cache, image_from_vector(gvec, n), grads);
    }
    return loss;
}

struct TrainResult {
    UNet net;
    std::vector<double> epoch_loss;
};

/// SGD with classical (heavy-ball) momentum over shuffled mini-batches:
///   velocity <- mu * velocity - lr * grad;  weights <- weights + velocity.
/// Deterministic for a fixed seed.
inline TrainResult train(const Dataset& dataset, const SvdFactors& f, const TruncationPolicy& policy,
                         const UNet::Config& arch, const TrainConfig& cfg) {
    if (dataset.role != Role::train)
        throw std::invalid_argument("train: dataset role must be 'train'");
    if (dataset.rho != 0.0)
        throw std::invalid_argument("train: training data must be noise-free");
    if (dataset.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

    TrainResult result;
    result.net = UNet(arch);
    result.net.init_weights(derive_seed(cfg.seed, "init", 0));

    // B_a y_n is fixed throughout training; precompute once.
    std::vector<Vector> tsvd_in(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) tsvd_in[i] = tsvd_apply(f, policy, dataset.y[i]);

    std::vector<double> velocity(result.net.num_params(), 0.0);
    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 rng(derive_seed(cfg.seed, "shuffle", uint64_t(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
            std::vector<const Vector*> xs, zs;
            for (size_t i = start; i < stop; ++i) {
                xs.push_back(&dataset.x[order[i]]);
                zs.push_back(&tsvd_in[order[i]]);
            }
            UNet::Gradients grads = result.net.make_gradients();
            double loss;
            try {
                loss = loss_and_gradient(result.net, f, policy, xs, zs, grads);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("train: divergence at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batches) + ": " + e.what());
            }
            epoch_loss += loss;
            ++batches;
            std::vector<double> flat = grads.flatten();
            std::vector<double> params = result.net.flatten_params();
            for (size_t i = 0; i < params.size(); ++i) {
                velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * flat[i];
                params[i] += velocity[i];
            }
            result.net.set_params(params);
        }
        result.epoch_loss.push_back(epoch_loss / double(std::max(1, batches)));
        if (!std::isfinite(result.epoch_loss.back()))
            throw std::runtime_error("train: divergence at epoch " + std::to_string(epoch));
    }
    return result;
}

struct GradientCheckReport {
    double max_relative_deviation = 0.0;
    bool pass = false;
};

/// Compares the reverse-mode gradient of 0.5 * || net(input) ||^2 against
/// central finite differences on `samples` randomly chosen parameter
/// coordinates.
inline GradientCheckReport gradient_check(const UNet& net, const Vector& input, double tolerance,
                                          int samples = 50, uint64_t seed = 7,
                                          double step = 1e-5) {
    const int n = net.input_size();
    UNet::Cache cache;
    const Tensor out = net.forward(image_from_vector(input, n), &cache);
    UNet::Gradients grads = net.make_gradients();
    net.backward(cache, out, grads); // dL/dout = out for L = 0.5 ||out||^2
    const std::vector<double> analytic = grads.flatten();

    UNet probe = net;
    std::vector<double> params = net.flatten_params();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, params.size() - 1);

    auto loss_at = [&](const std::vector<double>& p) {
        probe.set_params(p);
        const Tensor o = probe.forward(image_from_vector(input, n));
        double l = 0.0;
        for (double v : o.v) l += v * v;
        return 0.5 * l;
    };

    GradientCheckReport rep;
    for (int s = 0; s < samples; ++s) {
        const size_t i = pick(rng);
        std::vector<double> p = params;
        p[i] = params[i] + step;
        const double lp = loss_at(p);
        p[i] = params[i] - step;
        const double lm = loss_at(p);
        const double fd = (lp - lm) / (2.0 * step);
        const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
        rep.max_relative_deviation =
            std::max(rep.max_relative_deviation, std::abs(fd - analytic[i]) / scale);
    }
    rep.pass = rep.max_relative_deviation <= tolerance;
    return rep;
}

} // namespace patsvd
