#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "sourceswap/ddim.hpp"
#include "support.hpp"

using namespace sourceswap;
using testing::l2;
using testing::random_grid;

namespace {

double rel_err(const LatentGrid& a, const LatentGrid& b) {
    LatentGrid d = a;
    for (std::size_t i = 0; i < d.size(); ++i) d.values()[i] -= b.values()[i];
    return l2(d) / l2(b);
}

// Cumulative product of linearly spaced (1 - beta), evaluated directly.
double alpha_bar_direct(std::size_t idx, double b0 = 8.5e-4, double b1 = 1.2e-2, std::size_t n = 1000) {
    double p = 1.0;
    for (std::size_t j = 0; j <= idx; ++j) p *= 1.0 - (b0 + (b1 - b0) * double(j) / double(n - 1));
    return p;
}

}  // namespace

TEST_CASE("linear beta schedule strides the training grid") {
    const NoiseSchedule s = NoiseSchedule::linear_beta(50);
    CHECK(s.steps() == 50);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.train_timestep(1) == 19);
    CHECK(s.train_timestep(50) == 999);
    for (std::size_t i = 1; i <= 50; ++i) {
        CHECK(std::abs(s.alpha_bar(i) - alpha_bar_direct(i * 20 - 1)) < 1e-14);
        CHECK(s.alpha_bar(i) < s.alpha_bar(i - 1));
    }
    const NoiseSchedule full = NoiseSchedule::linear_beta(1000);
    CHECK(full.train_timestep(1) == 0);
    CHECK(std::abs(full.alpha_bar(1) - (1.0 - 8.5e-4)) < 1e-15);
    CHECK_THROWS_AS(NoiseSchedule::linear_beta(0), InvalidArgument);
    CHECK_THROWS_AS(NoiseSchedule::linear_beta(1001), InvalidArgument);
}

TEST_CASE("explicit schedules are validated") {
    CHECK_NOTHROW(NoiseSchedule::from_alpha_bars({0.9, 0.5, 0.1}));
    CHECK_THROWS_AS(NoiseSchedule::from_alpha_bars({0.9, 0.9}), InvalidArgument);
    CHECK_THROWS_AS(NoiseSchedule::from_alpha_bars({0.5, 0.7}), InvalidArgument);
    CHECK_THROWS_AS(NoiseSchedule::from_alpha_bars({1.0}), InvalidArgument);
    CHECK_THROWS_AS(NoiseSchedule::from_alpha_bars({0.5, 0.0}), InvalidArgument);
    CHECK_THROWS_AS(NoiseSchedule::from_alpha_bars({}), InvalidArgument);
    const std::string js = NoiseSchedule::from_alpha_bars({0.9, 0.5}).summary_json();
    CHECK(js.find("explicit") != std::string::npos);
}

TEST_CASE("Gaussian oracle prediction") {
    GaussianOracleDenoiser d;
    LatentGrid z(1, 1, 2, std::vector<double>{2.0, -1.0});
    const LatentGrid e = d.predict(z, {3, 0, 0.5}, {});
    CHECK(std::abs(e.values()[0] - 1.41421356237) < 1e-10);
    CHECK(e.same_shape(z));
    const LatentGrid zero = d.predict(z, {0, 0, 1.0}, {});
    CHECK(zero.values()[0] == 0.0);
    CHECK(zero.values()[1] == 0.0);
}

TEST_CASE("Gaussian oracle matches a Monte-Carlo posterior mean") {
    // Regression slope of eps on z_t equals E[eps | z_t] / z_t for jointly Gaussian variables.
    const double a = 0.37;
    std::mt19937_64 eng(17);
    std::normal_distribution<double> nd;
    const int n = 100000;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < n; ++i) {
        const double z0 = nd(eng), eps = nd(eng);
        const double zt = std::sqrt(a) * z0 + std::sqrt(1 - a) * eps;
        sxy += zt * eps;
        sxx += zt * zt;
    }
    const double slope = sxy / sxx;
    const double se = std::sqrt(a / sxx);
    GaussianOracleDenoiser d;
    const double predicted = d.predict(LatentGrid(1, 1, 1, 1.0), {1, 0, a}, {}).values()[0];
    CHECK(std::abs(slope - predicted) < 3 * se);
}

TEST_CASE("zero denoiser scales exactly") {
    ZeroDenoiser d;
    const LatentGrid z0 = random_grid(4, 8, 8, 1);
    for (std::size_t T : {1u, 10u, 50u, 1000u}) {
        const NoiseSchedule s = NoiseSchedule::linear_beta(T);
        const Trajectory tr = ddim_invert(z0, d, s);
        REQUIRE(tr.size() == T + 1);
        const double scale = std::sqrt(s.alpha_bar(T));
        for (std::size_t i = 0; i < z0.size(); ++i)
            CHECK(std::abs(tr.back().values()[i] - scale * z0.values()[i]) <= 1e-12 * std::abs(z0.values()[i]) + 1e-300);
        const LatentGrid back = ddim_sample(tr.back(), d, s);
        CHECK(rel_err(back, z0) <= 1e-12);
        const LatentGrid direct = ddim_sample(z0, d, s);
        for (std::size_t i = 0; i < z0.size(); ++i)
            CHECK(std::abs(direct.values()[i] - z0.values()[i] / scale) <= 1e-12 * std::abs(direct.values()[i]));
    }
}

TEST_CASE("constant grids stay constant through the zero denoiser") {
    ZeroDenoiser d;
    const NoiseSchedule s = NoiseSchedule::linear_beta(10);
    const Trajectory tr = ddim_invert(LatentGrid(2, 4, 4, 0.7), d, s);
    for (const LatentGrid& z : tr) {
        const double v0 = z.values()[0];
        for (double v : z.values()) CHECK(v == v0);
    }
}

TEST_CASE("Gaussian oracle sampling is the product of per-step factors") {
    GaussianOracleDenoiser d;
    const NoiseSchedule s = NoiseSchedule::linear_beta(50);
    const LatentGrid zT = random_grid(2, 6, 6, 4);
    double prod = 1.0;
    for (std::size_t t = 50; t >= 1; --t) {
        const double at = s.alpha_bar(t), ap = s.alpha_bar(t - 1);
        prod *= std::sqrt(ap) * std::sqrt(at) + std::sqrt(1 - ap) * std::sqrt(1 - at);
    }
    const LatentGrid z0 = ddim_sample(zT, d, s);
    for (std::size_t i = 0; i < zT.size(); ++i)
        CHECK(std::abs(z0.values()[i] - prod * zT.values()[i]) < 1e-12 * (1 + std::abs(zT.values()[i])));
}

TEST_CASE("single step applies the update once") {
    const NoiseSchedule s = NoiseSchedule::from_alpha_bars({0.6});
    CallbackDenoiser d(
        [](const LatentGrid& z, const Timestep& t, ConditioningRef) {
            CHECK(t.index == 1);
            CHECK(t.alpha_bar == 0.6);
            LatentGrid e = z;
            for (double& v : e.values()) v = 0.25;
            return e;
        },
        "const");
    const LatentGrid zT(1, 1, 1, 2.0);
    const double x0 = (2.0 - std::sqrt(0.4) * 0.25) / std::sqrt(0.6);
    CHECK(std::abs(ddim_sample(zT, d, s).values()[0] - x0) < 1e-15);
}

TEST_CASE("Gaussian oracle round-trip error shrinks as steps double") {
    GaussianOracleDenoiser d;
    const LatentGrid z0 = random_grid(4, 8, 8, 2);
    double prev = 1e300;
    for (std::size_t T : {25u, 50u, 100u, 200u, 400u}) {
        const NoiseSchedule s = NoiseSchedule::linear_beta(T);
        const double e = rel_err(ddim_sample(ddim_invert(z0, d, s).back(), d, s), z0);
        CHECK(e < prev);
        CHECK(e > 0.0);
        prev = e;
    }
}

TEST_CASE("masked z_T changes leave the outside untouched for pointwise denoisers") {
    GaussianOracleDenoiser d;
    const NoiseSchedule s = NoiseSchedule::linear_beta(50);
    const LatentGrid zT = random_grid(4, 16, 16, 9);
    const BinaryMask m = testing::random_mask(16, 16, 9);
    LatentGrid perturbed = zT;
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i : m.set_indices()) perturbed.plane(c)[i] += 1.0;
    const LatentGrid a = ddim_sample(zT, d, s), b = ddim_sample(perturbed, d, s);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < 256; ++i)
            if (!m.test(i)) CHECK(std::abs(a.plane(c)[i] - b.plane(c)[i]) <= 1e-10);
}

TEST_CASE("denoiser failures carry the step index") {
    const NoiseSchedule s = NoiseSchedule::linear_beta(10);
    CallbackDenoiser thrower(
        [](const LatentGrid& z, const Timestep& t, ConditioningRef) -> LatentGrid {
            if (t.index == 7) throw std::runtime_error("boom");
            return LatentGrid(z.channels(), z.height(), z.width());
        },
        "thrower");
    try {
        ddim_sample(LatentGrid(1, 2, 2, 1.0), thrower, s);
        FAIL("expected DenoiserFailure");
    } catch (const DenoiserFailure& e) {
        CHECK(e.step() == 7);
        CHECK(std::string(e.what()).find("boom") != std::string::npos);
    }
    CallbackDenoiser wrong_shape(
        [](const LatentGrid&, const Timestep&, ConditioningRef) { return LatentGrid(1, 3, 3); }, "bad");
    CHECK_THROWS_AS(ddim_invert(LatentGrid(1, 2, 2, 1.0), wrong_shape, s), DenoiserFailure);
    CallbackDenoiser nan(
        [](const LatentGrid& z, const Timestep&, ConditioningRef) {
            LatentGrid e = z;
            e.values()[0] = std::nan("");
            return e;
        },
        "nan");
    CHECK_THROWS_AS(ddim_sample(LatentGrid(1, 2, 2, 1.0), nan, s), DenoiserFailure);
}

TEST_CASE("conditioning is forwarded to the denoiser") {
    const NoiseSchedule s = NoiseSchedule::linear_beta(3);
    std::size_t calls = 0;
    CallbackDenoiser d(
        [&](const LatentGrid& z, const Timestep&, ConditioningRef cond) {
            CHECK(cond.token == 42);
            ++calls;
            return LatentGrid(z.channels(), z.height(), z.width());
        },
        "cond");
    ddim_invert(LatentGrid(1, 2, 2, 1.0), d, s, {42});
    ddim_sample(LatentGrid(1, 2, 2, 1.0), d, s, {42});
    CHECK(calls == 6);
}

TEST_CASE("add_noise") {
    const LatentGrid z(1, 1, 1, 2.0), n(1, 1, 1, -1.0);
    CHECK(std::abs(add_noise(z, n, 0.25).values()[0] - (1.0 - std::sqrt(0.75))) < 1e-15);
    CHECK(add_noise(z, n, 1.0).values()[0] == 2.0);
    CHECK_THROWS_AS(add_noise(z, LatentGrid(1, 1, 2), 0.5), ShapeMismatch);
    CHECK_THROWS_AS(add_noise(z, n, 0.0), InvalidArgument);
}
