#pragma once

#include "advbench/ops.hpp"
#include "advbench/rng.hpp"

namespace advbench::models {

using autodiff::Shape;
using autodiff::Tensor;

/// x [batch, in] * W [in, out] + b [out], bias broadcast across rows.
inline Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b) {
    if (x.rank() != 2 || W.rank() != 2 || x.dim(1) != W.dim(0) || b.size() != W.dim(1))
        throw std::invalid_argument("affine: incompatible shapes x=" + autodiff::shape_str(x.shape()) +
                                    " W=" + autodiff::shape_str(W.shape()) +
                                    " b=" + autodiff::shape_str(b.shape()));
    const std::size_t batch = x.dim(0), in = x.dim(1), out = W.dim(1);
    std::vector<double> y(batch * out);
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t j = 0; j < out; ++j) {
            double acc = b.data()[j];
            for (std::size_t k = 0; k < in; ++k) acc += x.data()[r * in + k] * W.data()[k * out + j];
            y[r * out + j] = acc;
        }
    return autodiff::make_op(
        "affine", {batch, out}, std::move(y), {x, W, b},
        [xn = x.node(), wn = W.node(), bn = b.node(), batch, in, out](autodiff::Node& o) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t r = 0; r < batch; ++r)
                    for (std::size_t j = 0; j < out; ++j) {
                        const double g = o.grad[r * out + j];
                        if (g == 0.0) continue;
                        for (std::size_t k = 0; k < in; ++k) xn->grad[r * in + k] += g * wn->data[k * out + j];
                    }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (std::size_t r = 0; r < batch; ++r)
                    for (std::size_t k = 0; k < in; ++k) {
                        const double xv = xn->data[r * in + k];
                        if (xv == 0.0) continue;
                        for (std::size_t j = 0; j < out; ++j) wn->grad[k * out + j] += xv * o.grad[r * out + j];
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t r = 0; r < batch; ++r)
                    for (std::size_t j = 0; j < out; ++j) bn->grad[j] += o.grad[r * out + j];
            }
        });
}

/// 3x3 valid convolution, stride 1. x [b, ic, h, w], K [oc, ic, 3, 3],
/// bias [oc] -> [b, oc, h-2, w-2]. Direct loops; desk scale.
inline Tensor conv2d_3x3(const Tensor& x, const Tensor& K, const Tensor& b) {
    if (x.rank() != 4 || K.rank() != 4 || K.dim(2) != 3 || K.dim(3) != 3 || x.dim(1) != K.dim(1) ||
        b.size() != K.dim(0) || x.dim(2) < 3 || x.dim(3) < 3)
        throw std::invalid_argument("conv2d: incompatible shapes x=" + autodiff::shape_str(x.shape()) +
                                    " K=" + autodiff::shape_str(K.shape()));
    const std::size_t batch = x.dim(0), ic = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oc = K.dim(0), oh = h - 2, ow = w - 2;
    auto xat = [ic, h, w](std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
        return ((n * ic + c) * h + i) * w + j;
    };
    auto kat = [ic](std::size_t o_, std::size_t c, std::size_t i, std::size_t j) {
        return ((o_ * ic + c) * 3 + i) * 3 + j;
    };
    auto oat = [oc, oh, ow](std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
        return ((n * oc + c) * oh + i) * ow + j;
    };
    std::vector<double> y(batch * oc * oh * ow);
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o_ = 0; o_ < oc; ++o_)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = b.data()[o_];
                    for (std::size_t c = 0; c < ic; ++c)
                        for (std::size_t di = 0; di < 3; ++di)
                            for (std::size_t dj = 0; dj < 3; ++dj)
                                acc += x.data()[xat(n, c, i + di, j + dj)] * K.data()[kat(o_, c, di, dj)];
                    y[oat(n, o_, i, j)] = acc;
                }
    return autodiff::make_op(
        "conv2d", {batch, oc, oh, ow}, std::move(y), {x, K, b},
        [=, xn = x.node(), kn = K.node(), bn = b.node()](autodiff::Node& og) {
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t o_ = 0; o_ < oc; ++o_)
                    for (std::size_t i = 0; i < oh; ++i)
                        for (std::size_t j = 0; j < ow; ++j) {
                            const double g = og.grad[oat(n, o_, i, j)];
                            if (g == 0.0) continue;
                            if (bn->requires_grad) {
                                bn->ensure_grad();
                                bn->grad[o_] += g;
                            }
                            for (std::size_t c = 0; c < ic; ++c)
                                for (std::size_t di = 0; di < 3; ++di)
                                    for (std::size_t dj = 0; dj < 3; ++dj) {
                                        if (xn->requires_grad) {
                                            xn->ensure_grad();
                                            xn->grad[xat(n, c, i + di, j + dj)] += g * kn->data[kat(o_, c, di, dj)];
                                        }
                                        if (kn->requires_grad) {
                                            kn->ensure_grad();
                                            kn->grad[kat(o_, c, di, dj)] += g * xn->data[xat(n, c, i + di, j + dj)];
                                        }
                                    }
                        }
        });
}

enum class LayerKind { affine, conv2d, relu, flatten };

struct Layer {
    LayerKind kind;
    Tensor weight;  // affine [in, out]; conv2d [oc, ic, 3, 3]
    Tensor bias;    // affine [out]; conv2d [oc]
};

/// Differentiable feed-forward classifier: a flat list of layers mapping
/// [batch, ...input_shape] to logits [batch, num_classes].
struct Classifier {
    std::vector<Layer> layers;
    Shape input_shape;  // per-sample shape
    std::size_t classes = 0;

    std::size_t num_classes() const { return classes; }

    void check_input(const Tensor& x) const {
        bool ok = x.rank() == input_shape.size() + 1;
        for (std::size_t i = 0; ok && i < input_shape.size(); ++i) ok = x.dim(i + 1) == input_shape[i];
        if (!ok)
            throw std::invalid_argument("forward: input " + autodiff::shape_str(x.shape()) +
                                        " does not match model input " + autodiff::shape_str(input_shape));
    }

    Tensor forward(const Tensor& x) const {
        check_input(x);
        Tensor h = x;
        for (const auto& layer : layers) h = apply(layer, h);
        return h;
    }

    /// Per-layer outputs (post activation), used by LID feature extraction.
    std::vector<Tensor> forward_activations(const Tensor& x) const {
        check_input(x);
        std::vector<Tensor> acts;
        Tensor h = x;
        for (const auto& layer : layers) {
            h = apply(layer, h);
            if (layer.kind != LayerKind::flatten) acts.push_back(h);
        }
        return acts;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> ps;
        for (const auto& layer : layers)
            if (layer.kind == LayerKind::affine || layer.kind == LayerKind::conv2d) {
                ps.push_back(layer.weight);
                ps.push_back(layer.bias);
            }
        return ps;
    }

    std::vector<int> predict(const Tensor& x) const { return autodiff::argmax_rows(forward(x)); }

    /// Deep copy with independent parameter buffers.
    Classifier clone() const {
        Classifier c;
        c.input_shape = input_shape;
        c.classes = classes;
        for (const auto& layer : layers) {
            Layer l{layer.kind, {}, {}};
            if (layer.weight.defined()) l.weight = layer.weight.detached(true);
            if (layer.bias.defined()) l.bias = layer.bias.detached(true);
            c.layers.push_back(std::move(l));
        }
        return c;
    }

private:
    static Tensor apply(const Layer& layer, const Tensor& h) {
        switch (layer.kind) {
            case LayerKind::affine:
                return affine(h, layer.weight, layer.bias);
            case LayerKind::conv2d:
                return conv2d_3x3(h, layer.weight, layer.bias);
            case LayerKind::relu:
                return autodiff::relu(h);
            case LayerKind::flatten:
                return autodiff::reshape(h, {h.dim(0), h.size() / h.dim(0)});
        }
        throw std::logic_error("unreachable layer kind");
    }
};

namespace detail {
inline Tensor init_matrix(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(autodiff::numel(shape));
    for (auto& v : w) v = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(w), true);
}
}  // namespace detail

/// MLP over flattened input: flatten -> (affine, relu)* -> affine.
inline Classifier make_mlp(const Shape& input_shape, const std::vector<std::size_t>& hidden,
                           std::size_t classes, Rng& rng) {
    Classifier m;
    m.input_shape = input_shape;
    m.classes = classes;
    m.layers.push_back({LayerKind::flatten, {}, {}});
    std::size_t in = autodiff::numel(input_shape);
    for (std::size_t h : hidden) {
        m.layers.push_back({LayerKind::affine, detail::init_matrix({in, h}, in, rng),
                            detail::init_matrix({h}, in, rng)});
        m.layers.push_back({LayerKind::relu, {}, {}});
        in = h;
    }
    m.layers.push_back({LayerKind::affine, detail::init_matrix({in, classes}, in, rng),
                        detail::init_matrix({classes}, in, rng)});
    return m;
}

/// Tiny CNN: (conv2d 3x3 valid, relu)* -> flatten -> affine.
inline Classifier make_cnn(const Shape& input_shape, const std::vector<std::size_t>& conv_channels,
                           std::size_t classes, Rng& rng) {
    if (input_shape.size() != 3)
        throw std::invalid_argument("make_cnn: input shape must be {channels, h, w}");
    Classifier m;
    m.input_shape = input_shape;
    m.classes = classes;
    std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    for (std::size_t oc : conv_channels) {
        const std::size_t fan_in = c * 9;
        m.layers.push_back({LayerKind::conv2d, detail::init_matrix({oc, c, 3, 3}, fan_in, rng),
                            detail::init_matrix({oc}, fan_in, rng)});
        m.layers.push_back({LayerKind::relu, {}, {}});
        c = oc;
        h -= 2;
        w -= 2;
    }
    m.layers.push_back({LayerKind::flatten, {}, {}});
    const std::size_t flat = c * h * w;
    m.layers.push_back({LayerKind::affine, detail::init_matrix({flat, classes}, flat, rng),
                        detail::init_matrix({classes}, flat, rng)});
    return m;
}

/// Copy rows of the first axis into a fresh tensor (no tape participation).
inline Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
    const std::size_t stride = t.size() / t.dim(0);
    Shape shape = t.shape();
    shape[0] = idx.size();
    std::vector<double> out(idx.size() * stride);
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(idx[r] * stride), stride,
                    out.begin() + static_cast<std::ptrdiff_t>(r * stride));
    return Tensor(std::move(shape), std::move(out));
}

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size() || truth.empty())
        throw std::invalid_argument("accuracy: size mismatch or empty labels");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace advbench::models
