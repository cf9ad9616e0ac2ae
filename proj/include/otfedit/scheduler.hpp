// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "otfedit/error.hpp"
#include "otfedit/tensor.hpp"

namespace otf {

//
// Deterministic DDIM (eta = 0) sampling and inversion.
//
// A schedule is an ascending grid of integer timesteps 0 = t_0 < t_1 < ... < t_N
// with a cumulative signal-retention coefficient alpha_bar(t_i) per point.
// Timestep 0 is the clean latent. Sampling walks the grid downwards, inversion
// walks it upwards; both apply the same two-term DDIM transfer.
//

template <typename Scalar>
class DiffusionSchedule {
public:
    DiffusionSchedule(std::vector<int> grid, std::vector<Scalar> alpha_bar)
        : grid_(std::move(grid)), alpha_bar_(std::move(alpha_bar)) {
        if (grid_.size() < 2) {
            throw GridError("schedule needs at least one step (two grid points)");
        }
        if (grid_.size() != alpha_bar_.size()) {
            throw GridError("schedule grid and alpha_bar lengths differ");
        }
        if (grid_.front() != 0) {
            throw GridError("schedule grid must start at the clean timestep 0");
        }
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const Scalar a = alpha_bar_[i];
            if (!std::isfinite(static_cast<double>(a)) || !(a > Scalar(0)) || a > Scalar(1)) {
                throw GridError("alpha_bar(" + std::to_string(grid_[i]) + ") outside (0, 1]");
            }
            if (i > 0) {
                if (grid_[i] <= grid_[i - 1]) {
                    throw GridError("schedule timesteps must be strictly increasing");
                }
                if (!(alpha_bar_[i] < alpha_bar_[i - 1])) {
                    throw GridError("alpha_bar must be strictly decreasing in timestep (violated at t=" +
                                    std::to_string(grid_[i]) + ")");
                }
            }
        }
    }

    int num_steps() const { return static_cast<int>(grid_.size()) - 1; }
    int max_timestep() const { return grid_.back(); }

    // Ascending grid, clean point first.
    std::span<const int> grid() const { return grid_; }
    std::span<const Scalar> alpha_bars() const { return alpha_bar_; }

    std::vector<int> sampling_order() const { return {grid_.rbegin(), grid_.rend()}; }
    std::vector<int> inversion_order() const { return grid_; }

    bool contains(int timestep) const { return find(timestep) >= 0; }

    int index_of(int timestep) const {
        const int idx = find(timestep);
        if (idx < 0) {
            throw GridError("timestep " + std::to_string(timestep) + " is not on the schedule grid");
        }
        return idx;
    }

    Scalar alpha_bar(int timestep) const { return alpha_bar_[index_of(timestep)]; }

    template <typename Other>
    DiffusionSchedule<Other> cast() const {
        std::vector<Other> a(alpha_bar_.begin(), alpha_bar_.end());
        return DiffusionSchedule<Other>(grid_, std::move(a));
    }

private:
    int find(int timestep) const {
        const auto it = std::lower_bound(grid_.begin(), grid_.end(), timestep);
        if (it == grid_.end() || *it != timestep) return -1;
        return static_cast<int>(it - grid_.begin());
    }

    std::vector<int> grid_;
    std::vector<Scalar> alpha_bar_;
};

// Training-time noise schedule of a latent diffusion checkpoint.
struct TrainingSchedule {
    std::vector<double> alpha_bar;  // indexed by training timestep 0..T-1
    int steps_offset = 1;
    bool set_alpha_to_one = false;
};

enum class BetaSchedule { linear, scaled_linear };

inline std::vector<double> training_alpha_bar(int num_train_timesteps, double beta_start, double beta_end,
                                              BetaSchedule kind) {
    if (num_train_timesteps < 2) throw GridError("need at least two training timesteps");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || !(beta_start < beta_end)) {
        throw GridError("betas must satisfy 0 < beta_start < beta_end < 1");
    }
    std::vector<double> alpha_bar(num_train_timesteps);
    double prod = 1.0;
    const double n = num_train_timesteps - 1;
    for (int i = 0; i < num_train_timesteps; ++i) {
        double beta = 0.0;
        if (kind == BetaSchedule::linear) {
            beta = beta_start + (beta_end - beta_start) * i / n;
        } else {
            const double s = std::sqrt(beta_start) + (std::sqrt(beta_end) - std::sqrt(beta_start)) * i / n;
            beta = s * s;
        }
        prod *= 1.0 - beta;
        alpha_bar[i] = prod;
    }
    return alpha_bar;
}

// Evenly subsamples the training grid into `num_steps` model timesteps
// t_i = (i-1)*ratio + steps_offset, plus the clean point 0. The clean point
// takes alpha_bar = 1 when set_alpha_to_one, otherwise the training alpha_bar[0].
template <typename Scalar = double>
DiffusionSchedule<Scalar> make_schedule(const TrainingSchedule& train, int num_steps) {
    const int total = static_cast<int>(train.alpha_bar.size());
    if (num_steps < 1) throw GridError("num_steps must be positive");
    if (num_steps > total) throw GridError("num_steps exceeds the training grid");
    if (train.steps_offset < 1) throw GridError("steps_offset must be >= 1 so the clean point stays distinct");
    const int ratio = total / num_steps;
    std::vector<int> grid{0};
    std::vector<Scalar> alpha{static_cast<Scalar>(train.set_alpha_to_one ? 1.0 : train.alpha_bar.front())};
    for (int i = 1; i <= num_steps; ++i) {
        const int t = (i - 1) * ratio + train.steps_offset;
        if (t >= total) throw GridError("steps_offset pushes the grid past the training range");
        grid.push_back(t);
        alpha.push_back(static_cast<Scalar>(train.alpha_bar[t]));
    }
    return DiffusionSchedule<Scalar>(std::move(grid), std::move(alpha));
}

template <typename Scalar>
struct LatentState {
    LatentTensor<Scalar> latent;
    int timestep = 0;
};

namespace detail {

template <typename Scalar>
void check_epsilon(const LatentTensor<Scalar>& latent, const LatentTensor<Scalar>& epsilon) {
    if (!(epsilon.shape() == latent.shape())) {
        throw ShapeError("epsilon shape " + epsilon.shape().to_string() + " != latent shape " +
                         latent.shape().to_string());
    }
    if (!epsilon.all_finite()) throw NumericError("epsilon has non-finite entries");
}

// x_to = sqrt(a_to) * x0 + sqrt(1 - a_to) * eps,  x0 = (x_from - sqrt(1 - a_from) * eps) / sqrt(a_from)
template <typename Scalar>
LatentTensor<Scalar> ddim_transfer(const LatentTensor<Scalar>& x, const LatentTensor<Scalar>& eps, Scalar a_from,
                                   Scalar a_to) {
    using std::sqrt;
    const auto x0 = (x.values() - sqrt(Scalar(1) - a_from) * eps.values()) / sqrt(a_from);
    typename LatentTensor<Scalar>::Storage out = sqrt(a_to) * x0 + sqrt(Scalar(1) - a_to) * eps.values();
    return LatentTensor<Scalar>(x.shape(), std::move(out));
}

}  // namespace detail

// One deterministic DDIM step towards the clean end of the grid.
template <typename Scalar>
LatentState<Scalar> ddim_step(const LatentState<Scalar>& state, const LatentTensor<Scalar>& epsilon,
                              const DiffusionSchedule<Scalar>& schedule, int target_timestep) {
    const int from = schedule.index_of(state.timestep);
    const int to = schedule.index_of(target_timestep);
    if (to != from - 1) {
        throw GridError("ddim_step: " + std::to_string(state.timestep) + " -> " + std::to_string(target_timestep) +
                        " is not one step down the grid");
    }
    detail::check_epsilon(state.latent, epsilon);
    return {detail::ddim_transfer(state.latent, epsilon, schedule.alpha_bar(state.timestep),
                                  schedule.alpha_bar(target_timestep)),
            target_timestep};
}

// One DDIM inversion step towards the noise end of the grid. Exact inverse of
// ddim_step when both see the same epsilon.
template <typename Scalar>
LatentState<Scalar> ddim_inverse_step(const LatentState<Scalar>& state, const LatentTensor<Scalar>& epsilon,
                                      const DiffusionSchedule<Scalar>& schedule, int target_timestep) {
    const int from = schedule.index_of(state.timestep);
    const int to = schedule.index_of(target_timestep);
    if (to != from + 1) {
        throw GridError("ddim_inverse_step: " + std::to_string(state.timestep) + " -> " +
                        std::to_string(target_timestep) + " is not one step up the grid");
    }
    detail::check_epsilon(state.latent, epsilon);
    return {detail::ddim_transfer(state.latent, epsilon, schedule.alpha_bar(state.timestep),
                                  schedule.alpha_bar(target_timestep)),
            target_timestep};
}

// predictor(latent, timestep, conditioning) -> epsilon
template <typename P, typename Scalar>
concept NoisePredictorFor = requires(P p, const LatentTensor<Scalar>& x, int t, const Conditioning<Scalar>& c) {
    { p(x, t, c) } -> std::convertible_to<LatentTensor<Scalar>>;
};

// Observes every intermediate state; the default does nothing.
struct NoStepObserver {
    template <typename State>
    void operator()(int /*step*/, const State& /*state*/) const {}
};

namespace detail {

template <typename Scalar, typename Predictor>
LatentTensor<Scalar> query(Predictor& predictor, const LatentTensor<Scalar>& x, int step, int t,
                           const Conditioning<Scalar>& cond) {
    try {
        return predictor(x, t, cond);
    } catch (const PredictorError&) {
        throw;
    } catch (const std::exception& e) {
        throw PredictorError(step, t, e.what());
    }
}

}  // namespace detail

// Clean latent from the noise end of the grid. The predictor is queried at the
// current timestep before each step down.
template <typename Scalar, typename Predictor, typename Observer = NoStepObserver>
    requires NoisePredictorFor<Predictor, Scalar>
LatentState<Scalar> run_sampling(const LatentState<Scalar>& initial, const Conditioning<Scalar>& conditioning,
                                 Predictor&& predictor, const DiffusionSchedule<Scalar>& schedule,
                                 Observer&& observer = {}) {
    if (initial.timestep != schedule.max_timestep()) {
        throw GridError("run_sampling must start at the max timestep " + std::to_string(schedule.max_timestep()));
    }
    const auto grid = schedule.grid();
    LatentState<Scalar> state = initial;
    for (int i = schedule.num_steps(), step = 0; i >= 1; --i, ++step) {
        const auto eps = detail::query(predictor, state.latent, step, grid[i], conditioning);
        try {
            state = ddim_step(state, eps, schedule, grid[i - 1]);
        } catch (const NumericError& e) {
            throw PredictorError(step, grid[i], e.what());
        } catch (const ShapeError& e) {
            throw PredictorError(step, grid[i], e.what());
        }
        observer(step, state);
    }
    return state;
}

// Noise latent from a clean latent. The predictor is evaluated with the
// current latent at the next (higher) timestep, which is what makes inversion
// approximate for input-dependent predictors.
template <typename Scalar, typename Predictor, typename Observer = NoStepObserver>
    requires NoisePredictorFor<Predictor, Scalar>
LatentState<Scalar> run_inversion(const LatentState<Scalar>& clean, const Conditioning<Scalar>& conditioning,
                                  Predictor&& predictor, const DiffusionSchedule<Scalar>& schedule,
                                  Observer&& observer = {}) {
    if (clean.timestep != 0) throw GridError("run_inversion must start at the clean timestep 0");
    const auto grid = schedule.grid();
    LatentState<Scalar> state = clean;
    for (int i = 0; i < schedule.num_steps(); ++i) {
        const auto eps = detail::query(predictor, state.latent, i, grid[i + 1], conditioning);
        try {
            state = ddim_inverse_step(state, eps, schedule, grid[i + 1]);
        } catch (const NumericError& e) {
            throw PredictorError(i, grid[i + 1], e.what());
        } catch (const ShapeError& e) {
            throw PredictorError(i, grid[i + 1], e.what());
        }
        observer(i, state);
    }
    return state;
}

}  // namespace otf
