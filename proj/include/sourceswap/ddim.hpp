#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sourceswap/lattice.hpp"

namespace sourceswap {

/// Discretized diffusion schedule over inference steps 0..T.
///
/// alpha_bar(0) is pinned to 1 so the first inversion step is well defined;
/// alpha_bar(1..T) is strictly decreasing inside (0, 1). Each step also keeps
/// the training-timestep it was strided from, which is what a real backend
/// expects to be told.
class NoiseSchedule {
public:
    enum class Kind { LinearBeta, Explicit };

    /// Linear betas over train_steps training steps, cumulative product, then
    /// strided uniformly: step i takes training index floor(i*train_steps/T) - 1.
    static NoiseSchedule linear_beta(std::size_t steps, double beta_start = 8.5e-4,
                                     double beta_end = 1.2e-2, std::size_t train_steps = 1000);

    /// alpha_bars[i] is the value for step i + 1.
    static NoiseSchedule from_alpha_bars(std::vector<double> alpha_bars);

    std::size_t steps() const noexcept { return alpha_bar_.size() - 1; }
    double alpha_bar(std::size_t step) const { return alpha_bar_.at(step); }
    std::uint32_t train_timestep(std::size_t step) const { return train_timestep_.at(step); }

    Kind kind() const noexcept { return kind_; }
    double beta_start() const noexcept { return beta_start_; }
    double beta_end() const noexcept { return beta_end_; }
    std::size_t train_steps() const noexcept { return train_steps_; }

    /// Compact JSON description, echoed into provenance records.
    std::string summary_json() const;

private:
    NoiseSchedule() = default;
    void validate() const;

    Kind kind_ = Kind::Explicit;
    double beta_start_ = 0.0;
    double beta_end_ = 0.0;
    std::size_t train_steps_ = 0;
    std::vector<double> alpha_bar_;            // index 0..T
    std::vector<std::uint32_t> train_timestep_;  // index 0..T
};

inline constexpr std::size_t kPairConstructionSteps = 50;
inline constexpr std::size_t kInferenceSteps = 20;

struct Timestep {
    std::size_t index = 0;          ///< inference step, 0..T
    std::uint32_t train_step = 0;   ///< timestep in the backend's training grid
    double alpha_bar = 1.0;
};

/// Opaque handle the backend resolves to a prompt or embedding.
struct ConditioningRef {
    std::uint64_t token = 0;
    bool operator==(const ConditioningRef&) const = default;
};

/// Noise predictor. Implementations must return a grid shaped like the input
/// and be deterministic for fixed inputs.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual LatentGrid predict(const LatentGrid& z, const Timestep& t, ConditioningRef cond) = 0;
    virtual std::string id() const = 0;
    /// True when the prediction at a pixel depends only on that pixel.
    virtual bool pointwise() const { return false; }
};

/// Predicts zero noise everywhere.
class ZeroDenoiser final : public Denoiser {
public:
    LatentGrid predict(const LatentGrid& z, const Timestep&, ConditioningRef) override;
    std::string id() const override { return "zero"; }
    bool pointwise() const override { return true; }
};

/// Bayes-optimal predictor for z_0 ~ N(0, I): eps = sqrt(1 - alpha_bar) * z.
class GaussianOracleDenoiser final : public Denoiser {
public:
    LatentGrid predict(const LatentGrid& z, const Timestep& t, ConditioningRef) override;
    std::string id() const override { return "gaussian-oracle"; }
    bool pointwise() const override { return true; }
};

/// Wraps any callable; used by the Python bindings and tests.
class CallbackDenoiser final : public Denoiser {
public:
    using Fn = std::function<LatentGrid(const LatentGrid&, const Timestep&, ConditioningRef)>;
    CallbackDenoiser(Fn fn, std::string id, bool pointwise = false)
        : fn_(std::move(fn)), id_(std::move(id)), pointwise_(pointwise) {}
    LatentGrid predict(const LatentGrid& z, const Timestep& t, ConditioningRef cond) override;
    std::string id() const override { return id_; }
    bool pointwise() const override { return pointwise_; }

private:
    Fn fn_;
    std::string id_;
    bool pointwise_;
};

std::unique_ptr<Denoiser> analytic_gaussian_denoiser();

/// Raised when the denoiser throws or breaks its shape contract.
class DenoiserFailure : public Error {
public:
    DenoiserFailure(std::size_t step, const std::string& what)
        : Error("denoiser failed at step " + std::to_string(step) + ": " + what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// z_0 .. z_T.
using Trajectory = std::vector<LatentGrid>;

/// Deterministic (eta = 0) DDIM sampling from z_T down to z_0.
LatentGrid ddim_sample(const LatentGrid& z_T, Denoiser& denoiser, const NoiseSchedule& schedule,
                       ConditioningRef cond = {});

/// DDIM inversion from z_0, reusing eps(z_t, t) for the step to t + 1.
Trajectory ddim_invert(const LatentGrid& z_0, Denoiser& denoiser, const NoiseSchedule& schedule,
                       ConditioningRef cond = {});

/// Forward noising: sqrt(a) * z_0 + sqrt(1 - a) * noise.
LatentGrid add_noise(const LatentGrid& z_0, const LatentGrid& noise, double alpha_bar);

}  // namespace sourceswap
