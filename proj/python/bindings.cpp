#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sourceswap/ddim.hpp"
#include "sourceswap/evalkit.hpp"
#include "sourceswap/perturb.hpp"
#include "sourceswap/pipeline.hpp"
#include "sourceswap/rng.hpp"
#include "sourceswap/wire.hpp"

namespace py = pybind11;
using namespace sourceswap;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

template <class Grid>
Grid to_grid(const F64Array& a) {
    if (a.ndim() != 3) throw InvalidArgument("expected a (channels, height, width) array");
    const auto c = std::size_t(a.shape(0)), h = std::size_t(a.shape(1)), w = std::size_t(a.shape(2));
    return Grid(c, h, w, std::vector<double>(a.data(), a.data() + a.size()));
}

template <class Tag>
F64Array from_grid(const Grid3<Tag>& g) {
    F64Array out({g.channels(), g.height(), g.width()});
    std::copy(g.values().begin(), g.values().end(), out.mutable_data());
    return out;
}

BinaryMask to_mask(const BoolArray& a) {
    if (a.ndim() != 2) throw InvalidArgument("expected a (height, width) mask");
    std::vector<std::uint8_t> bits(a.data(), a.data() + a.size());
    return BinaryMask(std::size_t(a.shape(0)), std::size_t(a.shape(1)), std::move(bits));
}

BoolArray from_mask(const BinaryMask& m) {
    BoolArray out({m.height(), m.width()});
    bool* dst = out.mutable_data();
    for (std::size_t i = 0; i < m.size(); ++i) dst[i] = m.test(i);
    return out;
}

std::unique_ptr<Denoiser> make_denoiser(const std::string& name) {
    if (name == "zero") return std::make_unique<ZeroDenoiser>();
    if (name == "gaussian-oracle") return std::make_unique<GaussianOracleDenoiser>();
    throw InvalidArgument("unknown denoiser '" + name + "' (expected zero or gaussian-oracle)");
}

py::bytes as_bytes(const wire::Bytes& b) { return {reinterpret_cast<const char*>(b.data()), b.size()}; }

}  // namespace

PYBIND11_MODULE(_sourceswap, m) {
    m.doc() = "Native core of the sourceswap toolkit";
    py::register_exception<Error>(m, "Error", PyExc_ValueError);

    m.def(
        "split_frequency",
        [](const F64Array& z, double stop) {
            const LatentGrid g = to_grid<LatentGrid>(z);
            const FrequencySplit parts = split_frequency(g, make_lpf(g.height(), g.width(), stop));
            return py::make_tuple(from_grid(parts.low), from_grid(parts.high));
        },
        py::arg("z"), py::arg("stop_frequency") = kDefaultStopFrequency, "Returns (low, high) with low + high == z.");

    m.def(
        "lpf_response", [](double r, double stop) { return make_lpf(2, 2, stop).response_at_radius(r); },
        py::arg("radius"), py::arg("stop_frequency") = kDefaultStopFrequency,
        "Low-pass response at a Nyquist-normalized radius.");

    m.def(
        "perturb",
        [](const F64Array& z, const BoolArray& mask, const std::string& mode, std::uint64_t seed, double stop) {
            const PerturbParams p{parse_perturb_mode(mode), seed, stop};
            return from_grid(perturb_initial_noise(to_grid<LatentGrid>(z), to_mask(mask), p));
        },
        py::arg("z"), py::arg("mask"), py::arg("mode") = "high-only", py::arg("seed") = 0,
        py::arg("stop_frequency") = kDefaultStopFrequency,
        "Shuffles the chosen noise component inside the mask.");

    m.def(
        "ddim_invert",
        [](const F64Array& z0, std::size_t steps, const std::string& denoiser) {
            auto d = make_denoiser(denoiser);
            return from_grid(ddim_invert(to_grid<LatentGrid>(z0), *d, NoiseSchedule::linear_beta(steps)).back());
        },
        py::arg("z0"), py::arg("steps") = 50, py::arg("denoiser") = "gaussian-oracle",
        "Deterministic inversion to z_T.");

    m.def(
        "ddim_sample",
        [](const F64Array& zT, std::size_t steps, const std::string& denoiser) {
            auto d = make_denoiser(denoiser);
            return from_grid(ddim_sample(to_grid<LatentGrid>(zT), *d, NoiseSchedule::linear_beta(steps)));
        },
        py::arg("zT"), py::arg("steps") = 50, py::arg("denoiser") = "gaussian-oracle",
        "Deterministic sampling from z_T to z_0.");

    m.def(
        "synthesize_pair",
        [](const F64Array& image, const BoolArray& mask, const std::string& mode, std::uint64_t seed,
           std::size_t steps, const std::string& denoiser, double stop) {
            IdentityCodec codec;
            auto d = make_denoiser(denoiser);
            const PairArtifacts art = synthesize_pair(to_grid<Image>(image), to_mask(mask), codec, *d,
                                                      NoiseSchedule::linear_beta(steps),
                                                      {parse_perturb_mode(mode), seed, stop});
            return from_grid(art.perturbed);
        },
        py::arg("image"), py::arg("mask"), py::arg("mode") = "high-only", py::arg("seed") = 0,
        py::arg("steps") = 50, py::arg("denoiser") = "gaussian-oracle",
        py::arg("stop_frequency") = kDefaultStopFrequency,
        "Invert, perturb and resample an image with the identity codec.");

    m.def(
        "size_filter",
        [](const BoolArray& mask) {
            const BinaryMask bm = to_mask(mask);
            const SizeFilterResult r = size_filter(bm, bm.height(), bm.width());
            return py::make_tuple(r.accepted(), r.reason);
        },
        py::arg("mask"), "Returns (accepted, reason) for the mask's bounding box.");

    m.def(
        "boundary_region",
        [](const BoolArray& mask, std::size_t dilate_radius, std::size_t margin) {
            return from_mask(boundary_region(to_mask(mask), dilate_radius, margin));
        },
        py::arg("mask"), py::arg("dilate_radius"), py::arg("rect_margin") = 0);

    m.def(
        "region_metric",
        [](const F64Array& source, const F64Array& result, const BoolArray& mask, const std::string& metric,
           std::optional<std::size_t> dilate_radius, std::size_t margin) {
            RegionParams p;
            p.metric = metric;
            p.dilate_radius = dilate_radius;
            p.rect_margin = margin;
            const RegionScore s = region_metric(to_grid<Image>(source), to_grid<Image>(result), to_mask(mask), p);
            return py::make_tuple(s.value, s.region_pixel_count);
        },
        py::arg("source"), py::arg("result"), py::arg("mask"), py::arg("metric") = "mse",
        py::arg("dilate_radius") = py::none(), py::arg("rect_margin") = 0,
        "Returns (value, region_pixel_count) for mse or ssim.");

    m.def("derive_seed", &derive_seed, py::arg("run_seed"), py::arg("id"));

    m.def(
        "frame_message",
        [](int type, const py::bytes& payload) {
            if (type < 0 || type > 255 || !wire::is_known_type(std::uint8_t(type)))
                throw InvalidArgument("unknown message type " + std::to_string(type));
            const std::string p = payload;
            const wire::Bytes bytes(p.begin(), p.end());
            return as_bytes(wire::frame_message(static_cast<wire::MsgType>(type), bytes));
        },
        py::arg("type"), py::arg("payload") = py::bytes());

    m.def(
        "parse_frame",
        [](const py::bytes& data) -> py::object {
            const std::string s = data;
            const wire::Bytes bytes(s.begin(), s.end());
            const auto parsed = wire::try_parse_frame(bytes);
            if (!parsed) return py::none();
            return py::make_tuple(int(parsed->message.type), as_bytes(parsed->message.payload), parsed->consumed);
        },
        py::arg("data"), "Returns (type, payload, consumed), or None when more bytes are needed.");
}
