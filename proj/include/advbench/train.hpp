#pragma once

#include <functional>
#include <optional>

#include "advbench/classifier.hpp"
#include "advbench/errors.hpp"

namespace advbench::models {

enum class Optimizer { sgd, sgd_momentum };

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::sgd_momentum;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (learning_rate < 0.0) throw ConfigError("train: learning_rate must be nonnegative");
    }
};

struct TrainReport {
    std::vector<double> epoch_loss;      // mean loss per epoch
    std::vector<double> epoch_accuracy;  // eval accuracy per epoch
    double final_accuracy = 0.0;
};

/// Computes the minibatch loss; defenses substitute adversarial variants.
/// `stream` is a per-run RNG dedicated to the hook so that hooks which draw
/// nothing leave the training trajectory untouched.
using BatchLossHook = std::function<autodiff::Tensor(Classifier&, const Tensor& bx,
                                                     const std::vector<int>& by, Rng& stream)>;

using EpochHook = std::function<void(Classifier&, std::size_t epoch)>;

namespace detail {

inline void check_labels(const std::vector<int>& ys, std::size_t classes) {
    for (int y : ys)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw std::invalid_argument("train: label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(classes) + ")");
}

struct SgdState {
    std::vector<std::vector<double>> velocity;
};

inline void sgd_step(std::vector<Tensor>& params, SgdState& state, const TrainConfig& cfg) {
    if (state.velocity.empty())
        for (const auto& p : params) state.velocity.emplace_back(p.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const auto g = p.grad();
        for (std::size_t j = 0; j < p.size(); ++j) {
            double step;
            if (cfg.optimizer == Optimizer::sgd_momentum) {
                state.velocity[i][j] = 0.9 * state.velocity[i][j] + g[j];
                step = state.velocity[i][j];
            } else {
                step = g[j];
            }
            p.data()[j] -= cfg.learning_rate * step;
            if (!std::isfinite(p.data()[j]))
                throw RuntimeFailure("train: parameter became non-finite during the update step");
        }
        p.zero_grad();
    }
}

}  // namespace detail

/// Minibatch training loop. Deterministic: batches are shuffled from a
/// stream derived from cfg.seed, so equal seeds give identical parameter
/// bytes.
inline TrainReport train(Classifier& model, const Tensor& xs, const std::vector<int>& ys,
                         const TrainConfig& cfg, const Tensor* eval_x = nullptr,
                         const std::vector<int>* eval_y = nullptr,
                         const BatchLossHook& batch_loss = {}, const EpochHook& after_epoch = {}) {
    cfg.validate();
    if (!xs.defined() || xs.dim(0) == 0 || ys.empty()) throw std::invalid_argument("train: empty dataset");
    if (xs.dim(0) != ys.size()) throw std::invalid_argument("train: images/labels size mismatch");
    detail::check_labels(ys, model.num_classes());

    Rng shuffle_rng = derive_rng(cfg.seed, "train/shuffle");
    Rng hook_rng = derive_rng(cfg.seed, "train/hook");

    const std::size_t n = xs.dim(0);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    auto params = model.parameters();
    detail::SgdState opt_state;
    TrainReport report;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            std::vector<std::size_t> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(stop));
            Tensor bx = take_rows(xs, batch_idx);
            std::vector<int> by(batch_idx.size());
            for (std::size_t i = 0; i < batch_idx.size(); ++i) by[i] = ys[batch_idx[i]];

            Tensor loss = batch_loss ? batch_loss(model, bx, by, hook_rng)
                                     : autodiff::cross_entropy(model.forward(bx), by);
            if (!std::isfinite(loss.item()))
                throw RuntimeFailure("train: NaN/Inf loss at epoch " + std::to_string(epoch));
            autodiff::backward(loss);
            detail::sgd_step(params, opt_state, cfg);
            loss_sum += loss.item();
            ++batches;
        }
        report.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
        const Tensor& ex = eval_x ? *eval_x : xs;
        const std::vector<int>& ey = eval_y ? *eval_y : ys;
        report.epoch_accuracy.push_back(accuracy(model.predict(ex), ey));
        if (after_epoch) after_epoch(model, epoch);
    }
    report.final_accuracy = report.epoch_accuracy.back();
    return report;
}

}  // namespace advbench::models
