#include "sourceswap/ddim.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sourceswap {

NoiseSchedule NoiseSchedule::linear_beta(std::size_t steps, double beta_start, double beta_end,
                                         std::size_t train_steps) {
    if (steps == 0) throw InvalidArgument("schedule needs at least one step");
    if (train_steps < 2) throw InvalidArgument("linear beta schedule needs >= 2 training steps");
    if (steps > train_steps) {
        throw InvalidArgument("cannot stride " + std::to_string(train_steps) +
                              " training steps into " + std::to_string(steps) + " steps");
    }
    if (!(beta_start > 0.0 && beta_end >= beta_start && beta_end < 1.0)) {
        throw InvalidArgument("betas must satisfy 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> cumulative(train_steps);
    double prod = 1.0;
    for (std::size_t j = 0; j < train_steps; ++j) {
        const double beta = beta_start + (beta_end - beta_start) * static_cast<double>(j) /
                                             static_cast<double>(train_steps - 1);
        prod *= 1.0 - beta;
        cumulative[j] = prod;
    }

    NoiseSchedule s;
    s.kind_ = Kind::LinearBeta;
    s.beta_start_ = beta_start;
    s.beta_end_ = beta_end;
    s.train_steps_ = train_steps;
    s.alpha_bar_.push_back(1.0);
    s.train_timestep_.push_back(0);
    for (std::size_t i = 1; i <= steps; ++i) {
        const std::size_t idx = i * train_steps / steps - 1;
        s.alpha_bar_.push_back(cumulative[idx]);
        s.train_timestep_.push_back(static_cast<std::uint32_t>(idx));
    }
    s.validate();
    return s;
}

NoiseSchedule NoiseSchedule::from_alpha_bars(std::vector<double> alpha_bars) {
    if (alpha_bars.empty()) throw InvalidArgument("schedule needs at least one step");
    NoiseSchedule s;
    s.kind_ = Kind::Explicit;
    s.train_steps_ = alpha_bars.size();
    s.alpha_bar_.push_back(1.0);
    s.train_timestep_.push_back(0);
    for (std::size_t i = 0; i < alpha_bars.size(); ++i) {
        s.alpha_bar_.push_back(alpha_bars[i]);
        s.train_timestep_.push_back(static_cast<std::uint32_t>(i));
    }
    s.validate();
    return s;
}

void NoiseSchedule::validate() const {
    for (std::size_t i = 1; i < alpha_bar_.size(); ++i) {
        const double a = alpha_bar_[i];
        if (!(a > 0.0 && a < 1.0)) {
            throw InvalidArgument("alpha_bar at step " + std::to_string(i) + " is outside (0, 1)");
        }
        if (!(a < alpha_bar_[i - 1])) {
            throw InvalidArgument("alpha_bar must be strictly decreasing (step " +
                                  std::to_string(i) + ")");
        }
    }
}

std::string NoiseSchedule::summary_json() const {
    nlohmann::json j;
    j["steps"] = steps();
    if (kind_ == Kind::LinearBeta) {
        j["kind"] = "linear_beta";
        j["beta_start"] = beta_start_;
        j["beta_end"] = beta_end_;
        j["train_steps"] = train_steps_;
    } else {
        j["kind"] = "explicit";
        j["alpha_bar"] = std::vector<double>(alpha_bar_.begin() + 1, alpha_bar_.end());
    }
    return j.dump();
}

LatentGrid ZeroDenoiser::predict(const LatentGrid& z, const Timestep&, ConditioningRef) {
    return LatentGrid(z.channels(), z.height(), z.width());
}

LatentGrid GaussianOracleDenoiser::predict(const LatentGrid& z, const Timestep& t, ConditioningRef) {
    const double scale = std::sqrt(1.0 - t.alpha_bar);
    LatentGrid out = z;
    for (double& v : out.values()) v *= scale;
    return out;
}

LatentGrid CallbackDenoiser::predict(const LatentGrid& z, const Timestep& t, ConditioningRef cond) {
    return fn_(z, t, cond);
}

std::unique_ptr<Denoiser> analytic_gaussian_denoiser() {
    return std::make_unique<GaussianOracleDenoiser>();
}

namespace {

Timestep timestep_at(const NoiseSchedule& schedule, std::size_t i) {
    return {i, schedule.train_timestep(i), schedule.alpha_bar(i)};
}

LatentGrid predict_checked(Denoiser& denoiser, const LatentGrid& z, const Timestep& t,
                           ConditioningRef cond) {
    LatentGrid eps;
    try {
        eps = denoiser.predict(z, t, cond);
    } catch (const std::exception& e) {
        throw DenoiserFailure(t.index, e.what());
    }
    if (!eps.same_shape(z)) {
        throw DenoiserFailure(t.index, "prediction shape does not match input");
    }
    if (!all_finite(eps)) throw DenoiserFailure(t.index, "prediction contains NaN or Inf");
    return eps;
}

// One deterministic DDIM move from alpha_bar `from` to `to` given eps.
void ddim_step(LatentGrid& z, const LatentGrid& eps, double from, double to) {
    const double sqrt_from = std::sqrt(from);
    const double sigma_from = std::sqrt(1.0 - from);
    const double sqrt_to = std::sqrt(to);
    const double sigma_to = std::sqrt(1.0 - to);
    auto zv = z.values();
    const auto ev = eps.values();
    for (std::size_t i = 0; i < zv.size(); ++i) {
        const double x0 = (zv[i] - sigma_from * ev[i]) / sqrt_from;
        zv[i] = sqrt_to * x0 + sigma_to * ev[i];
    }
}

}  // namespace

LatentGrid ddim_sample(const LatentGrid& z_T, Denoiser& denoiser, const NoiseSchedule& schedule,
                       ConditioningRef cond) {
    require_finite(z_T, "ddim_sample");
    LatentGrid z = z_T;
    for (std::size_t i = schedule.steps(); i >= 1; --i) {
        const LatentGrid eps = predict_checked(denoiser, z, timestep_at(schedule, i), cond);
        ddim_step(z, eps, schedule.alpha_bar(i), schedule.alpha_bar(i - 1));
    }
    return z;
}

Trajectory ddim_invert(const LatentGrid& z_0, Denoiser& denoiser, const NoiseSchedule& schedule,
                       ConditioningRef cond) {
    require_finite(z_0, "ddim_invert");
    Trajectory trajectory;
    trajectory.reserve(schedule.steps() + 1);
    trajectory.push_back(z_0);
    for (std::size_t i = 0; i < schedule.steps(); ++i) {
        LatentGrid z = trajectory.back();
        const LatentGrid eps = predict_checked(denoiser, z, timestep_at(schedule, i), cond);
        ddim_step(z, eps, schedule.alpha_bar(i), schedule.alpha_bar(i + 1));
        trajectory.push_back(std::move(z));
    }
    return trajectory;
}

LatentGrid add_noise(const LatentGrid& z_0, const LatentGrid& noise, double alpha_bar) {
    if (!z_0.same_shape(noise)) throw ShapeMismatch("add_noise: noise shape differs from latent");
    if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw InvalidArgument("alpha_bar must be in (0, 1]");
    const double a = std::sqrt(alpha_bar);
    const double s = std::sqrt(1.0 - alpha_bar);
    LatentGrid out = z_0;
    auto ov = out.values();
    const auto nv = noise.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = a * ov[i] + s * nv[i];
    return out;
}

}  // namespace sourceswap
