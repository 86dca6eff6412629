#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>
#include <vector>

#include "birdsong/core.hpp"
#include "birdsong/image.hpp"
#include "birdsong/rng.hpp"

namespace birdsong {

/// Channels-last 3-D tensor (height, width, channels), flat storage.
struct Tensor {
    std::size_t h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::size_t h_, std::size_t w_, std::size_t c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), v(h_ * w_ * c_, fill) {}

    double& at(std::size_t y, std::size_t x, std::size_t ch) { return v[(y * w + x) * c + ch]; }
    double at(std::size_t y, std::size_t x, std::size_t ch) const { return v[(y * w + x) * c + ch]; }
    std::size_t size() const { return v.size(); }
};

namespace nn {

/// C[M x N] += A[M x K] * B[K x N], row-major.
inline void gemm_accumulate(const double* a, const double* b, double* c, std::size_t m,
                            std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a_row = a + i * k;
        double* c_row = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a_row[p];
            if (av == 0.0) continue;
            const double* b_row = b + p * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
        }
    }
}

/// C[K x N] += A^T[K x M] * B[M x N] where A is [M x K] row-major.
inline void gemm_at_b_accumulate(const double* a, const double* b, double* c, std::size_t m,
                                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a_row = a + i * k;
        const double* b_row = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a_row[p];
            if (av == 0.0) continue;
            double* c_row = c + p * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
        }
    }
}

/// Valid-padding convolution, stride 1. Weights are stored as a
/// [k*k*in_c x out_c] matrix so forward and both backward passes are GEMMs
/// against the im2col patch matrix.
struct Conv2D {
    std::size_t in_h = 0, in_w = 0, in_c = 0, out_c = 0, k = 3;
    std::vector<double> weights;  // [(ky*k + kx)*in_c + ci][co]
    std::vector<double> bias;     // [co]

    std::size_t out_h() const { return in_h - k + 1; }
    std::size_t out_w() const { return in_w - k + 1; }
    std::size_t patch_len() const { return k * k * in_c; }

    void init(std::size_t ih, std::size_t iw, std::size_t ic, std::size_t oc, std::size_t ksize,
              Rng& rng) {
        in_h = ih;
        in_w = iw;
        in_c = ic;
        out_c = oc;
        k = ksize;
        if (in_h < k || in_w < k) throw ShapeMismatch("conv input smaller than kernel");
        const double limit = std::sqrt(6.0 / static_cast<double>(patch_len()));  // He-uniform
        weights.resize(patch_len() * out_c);
        for (auto& w : weights) w = (2.0 * rng.next_double() - 1.0) * limit;
        bias.assign(out_c, 0.0);
    }

    void im2col(const Tensor& x, std::vector<double>& cols) const {
        const std::size_t oh = out_h(), ow = out_w(), plen = patch_len();
        cols.assign(oh * ow * plen, 0.0);
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double* dst = cols.data() + (oy * ow + ox) * plen;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const double* src = &x.v[((oy + ky) * x.w + ox) * x.c];
                    std::copy(src, src + k * in_c, dst + ky * k * in_c);
                }
            }
    }

    Tensor forward(const Tensor& x, std::vector<double>& cols) const {
        if (x.h != in_h || x.w != in_w || x.c != in_c)
            throw ShapeMismatch("conv input shape mismatch");
        im2col(x, cols);
        Tensor y(out_h(), out_w(), out_c);
        for (std::size_t p = 0; p < out_h() * out_w(); ++p)
            std::copy(bias.begin(), bias.end(), y.v.begin() + static_cast<std::ptrdiff_t>(p * out_c));
        gemm_accumulate(cols.data(), weights.data(), y.v.data(), out_h() * out_w(), patch_len(),
                        out_c);
        return y;
    }

    /// Accumulates dW/db into grad buffers and returns dL/dx. `cols` must be
    /// the im2col of the same forward input.
    Tensor backward(const std::vector<double>& cols, const Tensor& dy, std::vector<double>& dw,
                    std::vector<double>& db) const {
        const std::size_t patches = out_h() * out_w(), plen = patch_len();

        gemm_at_b_accumulate(cols.data(), dy.v.data(), dw.data(), patches, plen, out_c);
        for (std::size_t p = 0; p < patches; ++p)
            for (std::size_t co = 0; co < out_c; ++co) db[co] += dy.v[p * out_c + co];

        // dXcol = dY * W^T, then scatter back (col2im)
        std::vector<double> wt(out_c * plen);
        for (std::size_t q = 0; q < plen; ++q)
            for (std::size_t co = 0; co < out_c; ++co) wt[co * plen + q] = weights[q * out_c + co];
        std::vector<double> dcols(patches * plen, 0.0);
        gemm_accumulate(dy.v.data(), wt.data(), dcols.data(), patches, out_c, plen);

        Tensor dx(in_h, in_w, in_c);
        for (std::size_t oy = 0; oy < out_h(); ++oy)
            for (std::size_t ox = 0; ox < out_w(); ++ox) {
                const double* src = dcols.data() + (oy * out_w() + ox) * plen;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    double* dst = &dx.v[((oy + ky) * in_w + ox) * in_c];
                    const double* s = src + ky * k * in_c;
                    for (std::size_t i = 0; i < k * in_c; ++i) dst[i] += s[i];
                }
            }
        return dx;
    }
};

inline void relu_inplace(Tensor& x) {
    for (auto& v : x.v) v = std::max(v, 0.0);
}

/// dL/dx for y = relu(x), given x (pre-activation) and dy.
inline void relu_backward_inplace(const Tensor& pre, Tensor& dy) {
    for (std::size_t i = 0; i < dy.v.size(); ++i)
        if (pre.v[i] <= 0.0) dy.v[i] = 0.0;
}

/// 2x2 max pooling, stride 2, valid (trailing odd row/column dropped).
struct MaxPool2 {
    static Tensor forward(const Tensor& x) {
        Tensor y(x.h / 2, x.w / 2, x.c);
        for (std::size_t oy = 0; oy < y.h; ++oy)
            for (std::size_t ox = 0; ox < y.w; ++ox)
                for (std::size_t ch = 0; ch < x.c; ++ch) {
                    double m = x.at(2 * oy, 2 * ox, ch);
                    m = std::max(m, x.at(2 * oy, 2 * ox + 1, ch));
                    m = std::max(m, x.at(2 * oy + 1, 2 * ox, ch));
                    m = std::max(m, x.at(2 * oy + 1, 2 * ox + 1, ch));
                    y.at(oy, ox, ch) = m;
                }
        return y;
    }

    /// Routes gradient to the (first, in scan order) max element of each
    /// window.
    static Tensor backward(const Tensor& x, const Tensor& dy) {
        Tensor dx(x.h, x.w, x.c);
        for (std::size_t oy = 0; oy < dy.h; ++oy)
            for (std::size_t ox = 0; ox < dy.w; ++ox)
                for (std::size_t ch = 0; ch < x.c; ++ch) {
                    std::size_t best_y = 2 * oy, best_x = 2 * ox;
                    double best = x.at(best_y, best_x, ch);
                    for (std::size_t dy2 = 0; dy2 < 2; ++dy2)
                        for (std::size_t dx2 = 0; dx2 < 2; ++dx2) {
                            const double v = x.at(2 * oy + dy2, 2 * ox + dx2, ch);
                            if (v > best) {
                                best = v;
                                best_y = 2 * oy + dy2;
                                best_x = 2 * ox + dx2;
                            }
                        }
                    dx.at(best_y, best_x, ch) += dy.at(oy, ox, ch);
                }
        return dx;
    }
};

struct Dense {
    std::size_t in_dim = 0, out_dim = 0;
    std::vector<double> weights;  // [in][out]
    std::vector<double> bias;

    void init(std::size_t in, std::size_t out, bool glorot, Rng& rng) {
        in_dim = in;
        out_dim = out;
        const double denom = glorot ? static_cast<double>(in + out) : static_cast<double>(in);
        const double limit = std::sqrt(6.0 / denom);
        weights.resize(in * out);
        for (auto& w : weights) w = (2.0 * rng.next_double() - 1.0) * limit;
        bias.assign(out, 0.0);
    }

    std::vector<double> forward(const std::vector<double>& x) const {
        std::vector<double> y(bias);
        gemm_accumulate(x.data(), weights.data(), y.data(), 1, in_dim, out_dim);
        return y;
    }

    std::vector<double> backward(const std::vector<double>& x, const std::vector<double>& dy,
                                 std::vector<double>& dw, std::vector<double>& db) const {
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double xi = x[i];
            if (xi != 0.0) {
                double* dw_row = dw.data() + i * out_dim;
                for (std::size_t j = 0; j < out_dim; ++j) dw_row[j] += xi * dy[j];
            }
        }
        for (std::size_t j = 0; j < out_dim; ++j) db[j] += dy[j];

        std::vector<double> dx(in_dim, 0.0);
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double* w_row = weights.data() + i * out_dim;
            double s = 0.0;
            for (std::size_t j = 0; j < out_dim; ++j) s += w_row[j] * dy[j];
            dx[i] = s;
        }
        return dx;
    }
};

inline std::vector<double> softmax(std::vector<double> logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (auto& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : logits) v /= sum;
    return logits;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace nn

enum class FinalActivation { softmax, sigmoid };

/// Architecture knobs. The default is the paper stack at 64x64; the smaller
/// configurations exist for gradient-check harnesses.
struct CnnConfig {
    std::size_t input_size = kImageSize;
    std::size_t kernel = 3;
    std::size_t conv1_filters = 32;
    std::size_t conv2_filters = 64;
    std::size_t dense_units = 128;
    std::size_t n_classes = 2;
    FinalActivation final_activation = FinalActivation::softmax;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;

    void match(std::size_t n) {
        if (m.size() != n) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
        }
    }
};

/// conv(k,f1) -> relu -> maxpool2 -> conv(k,f2) -> relu -> maxpool2 ->
/// flatten -> dense(d, relu) -> dense(n_classes) -> softmax (or per-class
/// sigmoid). All parameters live here, together with the Adam moments.
struct CnnModel {
    CnnConfig config;
    nn::Conv2D conv1, conv2;
    nn::Dense dense1, dense2;
    AdamState adam_conv1_w, adam_conv1_b, adam_conv2_w, adam_conv2_b;
    AdamState adam_dense1_w, adam_dense1_b, adam_dense2_w, adam_dense2_b;
    std::uint64_t adam_step = 0;

    static CnnModel create(const CnnConfig& cfg, std::uint64_t seed) {
        CnnModel model;
        model.config = cfg;
        Rng rng(derive_seed(seed, "cnn.init"));

        model.conv1.init(cfg.input_size, cfg.input_size, 1, cfg.conv1_filters, cfg.kernel, rng);
        const std::size_t p1 = model.conv1.out_h() / 2;
        if (p1 < cfg.kernel) throw ShapeMismatch("input too small for the layer stack");
        model.conv2.init(p1, p1, cfg.conv1_filters, cfg.conv2_filters, cfg.kernel, rng);
        const std::size_t p2 = model.conv2.out_h() / 2;
        if (p2 == 0) throw ShapeMismatch("input too small for the layer stack");

        model.dense1.init(p2 * p2 * cfg.conv2_filters, cfg.dense_units, false, rng);
        model.dense2.init(cfg.dense_units, cfg.n_classes, true, rng);
        return model;
    }

    std::size_t flat_dim() const { return dense1.in_dim; }

    struct Cache {
        Tensor x0, a1, p1, a2, p2;          // pre-activations and pool outputs
        std::vector<double> cols1, cols2;   // im2col scratch
        std::vector<double> flat, h1, logits;
    };

    std::vector<double> forward_one(const Tensor& x, Cache& cache) const {
        cache.x0 = x;
        cache.a1 = conv1.forward(x, cache.cols1);
        Tensor r1 = cache.a1;
        nn::relu_inplace(r1);
        cache.p1 = nn::MaxPool2::forward(r1);

        cache.a2 = conv2.forward(cache.p1, cache.cols2);
        Tensor r2 = cache.a2;
        nn::relu_inplace(r2);
        cache.p2 = nn::MaxPool2::forward(r2);

        cache.flat = cache.p2.v;
        cache.h1 = dense1.forward(cache.flat);
        for (auto& v : cache.h1) v = std::max(v, 0.0);
        cache.logits = dense2.forward(cache.h1);

        if (config.final_activation == FinalActivation::softmax)
            return nn::softmax(cache.logits);
        std::vector<double> out(cache.logits.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = nn::sigmoid(cache.logits[i]);
        return out;
    }

    Tensor image_to_tensor(const ClipImage& img) const {
        if (img.pixels.rows != config.input_size || img.pixels.cols != config.input_size)
            throw ShapeMismatch("image does not match the model input size");
        Tensor t(config.input_size, config.input_size, 1);
        t.v = img.pixels.data;
        return t;
    }
};

/// Probability matrix [batch x n_classes]. Softmax rows sum to 1; in sigmoid
/// mode per-class activations are normalized by their sum so downstream
/// voting still receives a distribution.
inline Matrix cnn_forward(const CnnModel& model, const std::vector<ClipImage>& batch) {
    Matrix out(batch.size(), model.config.n_classes, 0.0);
    CnnModel::Cache cache;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto probs = model.forward_one(model.image_to_tensor(batch[i]), cache);
        if (model.config.final_activation == FinalActivation::sigmoid) {
            double sum = 0.0;
            for (double p : probs) sum += p;
            if (sum > 0.0)
                for (auto& p : probs) p /= sum;
        }
        for (std::size_t c = 0; c < probs.size(); ++c) out(i, c) = probs[c];
    }
    return out;
}

namespace nn {

/// Per-parameter-group gradient buffer matching CnnModel's layout.
struct GradBuffer {
    std::vector<double> conv1_w, conv1_b, conv2_w, conv2_b;
    std::vector<double> dense1_w, dense1_b, dense2_w, dense2_b;

    explicit GradBuffer(const CnnModel& m)
        : conv1_w(m.conv1.weights.size(), 0.0),
          conv1_b(m.conv1.bias.size(), 0.0),
          conv2_w(m.conv2.weights.size(), 0.0),
          conv2_b(m.conv2.bias.size(), 0.0),
          dense1_w(m.dense1.weights.size(), 0.0),
          dense1_b(m.dense1.bias.size(), 0.0),
          dense2_w(m.dense2.weights.size(), 0.0),
          dense2_b(m.dense2.bias.size(), 0.0) {}

    void add(const GradBuffer& o) {
        auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        };
        acc(conv1_w, o.conv1_w);
        acc(conv1_b, o.conv1_b);
        acc(conv2_w, o.conv2_w);
        acc(conv2_b, o.conv2_b);
        acc(dense1_w, o.dense1_w);
        acc(dense1_b, o.dense1_b);
        acc(dense2_w, o.dense2_w);
        acc(dense2_b, o.dense2_b);
    }

    void scale(double s) {
        for (auto* vec : {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense1_w, &dense1_b, &dense2_w,
                          &dense2_b})
            for (auto& v : *vec) v *= s;
    }
};

/// Cross-entropy (softmax) or summed binary cross-entropy (sigmoid) against
/// a one-hot label; gradients flow back through the whole stack into `grads`.
inline double backward_one(const CnnModel& model, const Tensor& x, int label, GradBuffer& grads) {
    CnnModel::Cache cache;
    const auto probs = model.forward_one(x, cache);
    const std::size_t n = probs.size();
    const auto lbl = static_cast<std::size_t>(label);

    double loss = 0.0;
    std::vector<double> dlogits(n);
    constexpr double eps = 1e-12;
    if (model.config.final_activation == FinalActivation::softmax) {
        loss = -std::log(std::max(probs[lbl], eps));
        for (std::size_t c = 0; c < n; ++c) dlogits[c] = probs[c] - (c == lbl ? 1.0 : 0.0);
    } else {
        for (std::size_t c = 0; c < n; ++c) {
            const double y = c == lbl ? 1.0 : 0.0;
            loss -= y * std::log(std::max(probs[c], eps)) +
                    (1.0 - y) * std::log(std::max(1.0 - probs[c], eps));
            dlogits[c] = probs[c] - y;
        }
    }

    auto dh1 = model.dense2.backward(cache.h1, dlogits, grads.dense2_w, grads.dense2_b);
    for (std::size_t i = 0; i < dh1.size(); ++i)
        if (cache.h1[i] <= 0.0) dh1[i] = 0.0;  // relu on dense1 output

    auto dflat = model.dense1.backward(cache.flat, dh1, grads.dense1_w, grads.dense1_b);

    Tensor dp2(cache.p2.h, cache.p2.w, cache.p2.c);
    dp2.v = std::move(dflat);
    Tensor r2 = cache.a2;
    relu_inplace(r2);
    Tensor da2 = MaxPool2::backward(r2, dp2);
    relu_backward_inplace(cache.a2, da2);

    Tensor dp1 = model.conv2.backward(cache.cols2, da2, grads.conv2_w, grads.conv2_b);
    Tensor r1 = cache.a1;
    relu_inplace(r1);
    Tensor da1 = MaxPool2::backward(r1, dp1);
    relu_backward_inplace(cache.a1, da1);

    model.conv1.backward(cache.cols1, da1, grads.conv1_w, grads.conv1_b);
    return loss;
}

inline void adam_update(std::vector<double>& params, const std::vector<double>& grads,
                        AdamState& state, std::uint64_t step, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    state.match(params.size());
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace nn

/// Mean batch gradients. Samples are processed in fixed micro-chunks of 8
/// whose partial sums are combined in index order, so the result does not
/// depend on the worker count.
inline nn::GradBuffer cnn_batch_gradients(const CnnModel& model, const std::vector<Tensor>& batch,
                                          const std::vector<int>& labels, double& mean_loss,
                                          std::size_t jobs = 1) {
    constexpr std::size_t kChunk = 8;
    const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;
    std::vector<nn::GradBuffer> chunk_grads(n_chunks, nn::GradBuffer(model));
    std::vector<double> chunk_loss(n_chunks, 0.0);

    auto run_chunk = [&](std::size_t ci) {
        const std::size_t lo = ci * kChunk;
        const std::size_t hi = std::min(lo + kChunk, batch.size());
        for (std::size_t i = lo; i < hi; ++i)
            chunk_loss[ci] += nn::backward_one(model, batch[i], labels[i], chunk_grads[ci]);
    };

    if (jobs <= 1 || n_chunks <= 1) {
        for (std::size_t ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
    } else {
        std::vector<std::thread> workers;
        std::atomic<std::size_t> next{0};
        const std::size_t n_workers = std::min(jobs, n_chunks);
        for (std::size_t t = 0; t < n_workers; ++t)
            workers.emplace_back([&] {
                for (std::size_t ci = next.fetch_add(1); ci < n_chunks; ci = next.fetch_add(1))
                    run_chunk(ci);
            });
        for (auto& w : workers) w.join();
    }

    nn::GradBuffer total(model);
    double loss = 0.0;
    for (std::size_t ci = 0; ci < n_chunks; ++ci) {
        total.add(chunk_grads[ci]);
        loss += chunk_loss[ci];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    total.scale(inv);
    mean_loss = loss * inv;
    return total;
}

/// One optimizer step on a mini-batch: mean cross-entropy loss, full
/// backprop, bias-corrected Adam update. Returns the pre-update loss.
inline double cnn_train_step(CnnModel& model, const std::vector<ClipImage>& batch,
                             const std::vector<int>& labels, double lr, std::size_t jobs = 1) {
    if (batch.empty()) throw EmptyTrainingSet("cnn_train_step with empty batch");
    if (batch.size() != labels.size()) throw LengthMismatch("batch/label size mismatch");

    std::vector<Tensor> tensors;
    tensors.reserve(batch.size());
    for (const auto& img : batch) tensors.push_back(model.image_to_tensor(img));

    double loss = 0.0;
    const auto grads = cnn_batch_gradients(model, tensors, labels, loss, jobs);
    if (!std::isfinite(loss)) throw NonFiniteLoss("loss diverged");

    const std::uint64_t step = ++model.adam_step;
    nn::adam_update(model.conv1.weights, grads.conv1_w, model.adam_conv1_w, step, lr);
    nn::adam_update(model.conv1.bias, grads.conv1_b, model.adam_conv1_b, step, lr);
    nn::adam_update(model.conv2.weights, grads.conv2_w, model.adam_conv2_w, step, lr);
    nn::adam_update(model.conv2.bias, grads.conv2_b, model.adam_conv2_b, step, lr);
    nn::adam_update(model.dense1.weights, grads.dense1_w, model.adam_dense1_w, step, lr);
    nn::adam_update(model.dense1.bias, grads.dense1_b, model.adam_dense1_b, step, lr);
    nn::adam_update(model.dense2.weights, grads.dense2_w, model.adam_dense2_w, step, lr);
    nn::adam_update(model.dense2.bias, grads.dense2_b, model.adam_dense2_b, step, lr);
    return loss;
}

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

/// Mean loss (no update) over a set; used for validation.
inline double cnn_eval_loss(const CnnModel& model, const std::vector<ClipImage>& images,
                            const std::vector<int>& labels, double* accuracy = nullptr) {
    double loss = 0.0;
    std::size_t correct = 0;
    CnnModel::Cache cache;
    constexpr double eps = 1e-12;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto probs = model.forward_one(model.image_to_tensor(images[i]), cache);
        const auto lbl = static_cast<std::size_t>(labels[i]);
        if (model.config.final_activation == FinalActivation::softmax) {
            loss -= std::log(std::max(probs[lbl], eps));
        } else {
            for (std::size_t c = 0; c < probs.size(); ++c) {
                const double y = c == lbl ? 1.0 : 0.0;
                loss -= y * std::log(std::max(probs[c], eps)) +
                        (1.0 - y) * std::log(std::max(1.0 - probs[c], eps));
            }
        }
        std::size_t arg = 0;
        for (std::size_t c = 1; c < probs.size(); ++c)
            if (probs[c] > probs[arg]) arg = c;
        if (arg == lbl) ++correct;
    }
    if (accuracy)
        *accuracy = images.empty() ? 0.0 : static_cast<double>(correct) / images.size();
    return images.empty() ? 0.0 : loss / static_cast<double>(images.size());
}

/// Shuffled mini-batch training with early stopping: when validation loss
/// fails to improve for more than `patience` consecutive epochs, training
/// stops and the best-validation weights are restored. With an empty
/// validation set the epoch training loss stands in for the validation loss.
inline TrainHistory cnn_train(CnnModel& model, const std::vector<ClipImage>& train_images,
                              const std::vector<int>& train_labels,
                              const std::vector<ClipImage>& val_images,
                              const std::vector<int>& val_labels, std::size_t epochs,
                              std::size_t patience, std::uint64_t seed, double lr = 1e-3,
                              std::size_t batch_size = 32, std::size_t jobs = 1) {
    if (train_images.empty()) throw EmptyTrainingSet("cnn_train with no training images");
    if (train_images.size() != train_labels.size())
        throw LengthMismatch("train image/label count mismatch");

    TrainHistory history;
    Rng shuffle_rng(derive_seed(seed, "cnn.shuffle"));
    double best_val = std::numeric_limits<double>::infinity();
    CnnModel best_model = model;
    std::size_t bad_epochs = 0;

    std::vector<std::size_t> order(train_images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.next_below(i))]);

        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(start + batch_size, order.size());
            std::vector<ClipImage> batch;
            std::vector<int> labels;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_images[order[i]]);
                labels.push_back(train_labels[order[i]]);
            }
            epoch_loss += cnn_train_step(model, batch, labels, lr, jobs);
            ++n_batches;
        }
        epoch_loss /= static_cast<double>(n_batches);

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss;
        if (val_images.empty()) {
            stats.val_loss = epoch_loss;
            stats.val_accuracy = 0.0;
        } else {
            stats.val_loss = cnn_eval_loss(model, val_images, val_labels, &stats.val_accuracy);
        }
        history.epochs.push_back(stats);

        if (stats.val_loss < best_val) {
            best_val = stats.val_loss;
            best_model = model;
            history.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs > patience) {
                history.stopped_early = true;
                break;
            }
        }
    }

    model = std::move(best_model);
    return history;
}

}  // namespace birdsong
