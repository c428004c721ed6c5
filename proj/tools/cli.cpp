#include "cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "sourceswap/bridge.hpp"
#include "sourceswap/evalkit.hpp"
#include "sourceswap/image_io.hpp"
#include "sourceswap/pipeline.hpp"
#include "sourceswap/refine.hpp"
#include "sourceswap/wire.hpp"

namespace sourceswap::cli {

using nlohmann::json;

namespace {

struct BackendSettings {
    std::string address;
    std::string codec = "identity";
    std::string denoiser = "auto";
    std::size_t steps = kPairConstructionSteps;
    std::uint64_t cond = 0;
    double timeout_s = 120.0;
};

struct Settings {
    bool json = false;

    struct {
        std::string manifest, out;
        std::uint64_t seed = 0;
        std::string mode = "high-only";
        double stop_freq = kDefaultStopFrequency;
        std::size_t jobs = 0;  // 0: logical cores
        BackendSettings backend;
    } make_pairs;

    struct {
        std::string input, mask, out;
        std::uint64_t seed = 0;
        std::string mode = "high-only";
        double stop_freq = kDefaultStopFrequency;
    } perturb;

    struct {
        std::string image, out;
        BackendSettings backend;
    } invert;

    struct {
        std::string latent, out;
        BackendSettings backend;
    } sample;

    struct {
        std::string reference, source, mask, out, intermediates;
        std::size_t k = kDefaultRefineRounds;
        std::string op = "diffusion";
        bool latent_chaining = false;
        BackendSettings backend;
    } refine;

    struct {
        std::string source, result, mask, list, id = "pair", out;
        std::string metric = "mse";
        long long dilate_radius = -1;
        std::size_t rect_margin = 0;
        std::string backend;
        double timeout_s = 120.0;
    } eval;

    struct {
        std::string pairs, out;
        std::uint64_t seed = 0;
        std::size_t steps = 1000;
        std::string codec = "identity";
        std::string backend;
        std::string augment;
        std::size_t box_margin = 0;
        double timeout_s = 120.0;
    } assemble;

    struct {
        std::string backend, fixtures;
        double timeout_s = 10.0;
    } selftest;
};

void add_backend_options(CLI::App* sub, BackendSettings& b, std::size_t default_steps) {
    b.steps = default_steps;
    sub->add_option("--backend", b.address, "Bridge address (unix:/path or tcp:host:port)");
    sub->add_option("--codec", b.codec, "identity | avgpool-N | bridge")->capture_default_str();
    sub->add_option("--denoiser", b.denoiser,
                    "auto | zero | gaussian-oracle | bridge (auto: bridge when --backend is set)")
        ->capture_default_str();
    sub->add_option("--steps", b.steps, "DDIM steps")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--cond", b.cond, "Conditioning token passed to the denoiser")->capture_default_str();
    sub->add_option("--timeout", b.timeout_s, "Bridge reply timeout in seconds")->capture_default_str();
}

std::unique_ptr<CLI::App> build_app(Settings& s) {
    auto app = std::make_unique<CLI::App>("Pseudo-pair synthesis and evaluation tools", "sourceswap");
    app->set_config("--config", "", "Config file (key = value lines, [command] sections)");
    app->add_flag("--json", s.json, "Print a machine-readable run summary on stdout");
    app->require_subcommand(1);
    app->fallthrough();

    auto* mp = app->add_subcommand("make-pairs", "Build pseudo pairs for every manifest entry");
    mp->add_option("--manifest", s.make_pairs.manifest, "JSON-lines manifest")->required();
    mp->add_option("--out", s.make_pairs.out, "Output directory")->required();
    mp->add_option("--seed", s.make_pairs.seed, "Run seed")->capture_default_str();
    mp->add_option("--mode", s.make_pairs.mode, "high-only | low-only | all | resample-gaussian")
        ->capture_default_str();
    mp->add_option("--stop-freq", s.make_pairs.stop_freq, "Low-pass stop frequency")->capture_default_str();
    mp->add_option("--jobs", s.make_pairs.jobs, "Worker threads (0: one per logical core)")
        ->capture_default_str();
    add_backend_options(mp, s.make_pairs.backend, kPairConstructionSteps);

    auto* pt = app->add_subcommand("perturb", "Perturb an initial-noise tensor inside a mask");
    pt->add_option("--input", s.perturb.input, "z_T tensor file")->required();
    pt->add_option("--mask", s.perturb.mask, "Mask PNG (pixel or latent resolution)")->required();
    pt->add_option("--out", s.perturb.out, "Output tensor file")->required();
    pt->add_option("--seed", s.perturb.seed, "Permutation seed")->capture_default_str();
    pt->add_option("--mode", s.perturb.mode, "high-only | low-only | all | resample-gaussian")
        ->capture_default_str();
    pt->add_option("--stop-freq", s.perturb.stop_freq, "Low-pass stop frequency")->capture_default_str();

    auto* iv = app->add_subcommand("invert", "Encode an image and run DDIM inversion to z_T");
    iv->add_option("--image", s.invert.image, "Input PNG")->required();
    iv->add_option("--out", s.invert.out, "Output tensor file")->required();
    add_backend_options(iv, s.invert.backend, kPairConstructionSteps);

    auto* sp = app->add_subcommand("sample", "DDIM-sample from z_T and decode");
    sp->add_option("--latent", s.sample.latent, "z_T tensor file")->required();
    sp->add_option("--out", s.sample.out, "Output PNG")->required();
    add_backend_options(sp, s.sample.backend, kPairConstructionSteps);

    auto* rf = app->add_subcommand("refine", "Apply a swap operator for k rounds");
    rf->add_option("--reference", s.refine.reference, "Reference PNG")->required();
    rf->add_option("--source", s.refine.source, "Source PNG")->required();
    rf->add_option("--mask", s.refine.mask, "Mask PNG")->required();
    rf->add_option("--out", s.refine.out, "Output PNG")->required();
    rf->add_option("--k", s.refine.k, "Rounds")->capture_default_str()->check(CLI::PositiveNumber);
    rf->add_option("--operator", s.refine.op, "identity | diffusion")->capture_default_str();
    rf->add_option("--intermediates", s.refine.intermediates, "Directory for per-round images");
    rf->add_flag("--latent-chaining", s.refine.latent_chaining,
                 "Keep latents between rounds instead of decoding and re-encoding");
    add_backend_options(rf, s.refine.backend, kInferenceSteps);

    auto* ev = app->add_subcommand("eval-region", "Score results over the boundary region");
    ev->add_option("--source", s.eval.source, "Source PNG");
    ev->add_option("--result", s.eval.result, "Result PNG");
    ev->add_option("--mask", s.eval.mask, "Fine mask PNG");
    ev->add_option("--id", s.eval.id, "Row id for a single pair")->capture_default_str();
    ev->add_option("--list", s.eval.list, "JSON-lines of {id, source, result, mask}");
    ev->add_option("--out", s.eval.out, "Report path stem (.csv and .json are added)")->required();
    ev->add_option("--metric", s.eval.metric, "mse | ssim | a bridge metric such as lpips")
        ->capture_default_str();
    ev->add_option("--dilate-radius", s.eval.dilate_radius, "Mask dilation radius (-1: 2% of min side)")
        ->capture_default_str();
    ev->add_option("--rect-margin", s.eval.rect_margin, "Rectangle margin")->capture_default_str();
    ev->add_option("--backend", s.eval.backend, "Bridge address for non-built-in metrics");
    ev->add_option("--timeout", s.eval.timeout_s, "Bridge reply timeout in seconds")->capture_default_str();

    auto* at = app->add_subcommand("assemble-train", "Assemble training samples from pair records");
    at->add_option("--pairs", s.assemble.pairs, "pairs.jsonl from make-pairs")->required();
    at->add_option("--out", s.assemble.out, "Output directory")->required();
    at->add_option("--seed", s.assemble.seed, "Run seed")->capture_default_str();
    at->add_option("--steps", s.assemble.steps, "Timestep range T; t is drawn from 0..T")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    at->add_option("--codec", s.assemble.codec, "identity | avgpool-N | bridge")->capture_default_str();
    at->add_option("--backend", s.assemble.backend, "Bridge address for --codec bridge");
    at->add_option("--augment", s.assemble.augment, "e.g. blur,zoom-in:1.1,perspective,elastic");
    at->add_option("--box-margin", s.assemble.box_margin, "Margin of the box mask")->capture_default_str();
    at->add_option("--timeout", s.assemble.timeout_s, "Bridge reply timeout in seconds")->capture_default_str();

    auto* st = app->add_subcommand("protocol-selftest", "Check the wire protocol and a bridge peer");
    st->add_option("--backend", s.selftest.backend, "Peer to test; default is an in-process loopback");
    st->add_option("--fixtures", s.selftest.fixtures, "Directory with golden .hex fixtures");
    st->add_option("--timeout", s.selftest.timeout_s, "Reply timeout in seconds")->capture_default_str();
    return app;
}

json effective_config(const CLI::App& sub) {
    json j = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string& name = opt->get_lnames().front();
        if (name == "help") continue;
        if (opt->get_items_expected_max() == 0) {
            j[name] = opt->count() > 0;
        } else if (opt->count() > 0) {
            const auto& r = opt->results();
            j[name] = r.size() == 1 ? json(r.front()) : json(r);
        } else if (!opt->get_default_str().empty()) {
            j[name] = opt->get_default_str();
        }
    }
    return j;
}

std::shared_ptr<bridge::BridgeSession> open_session(const std::string& address, double timeout_s) {
    bridge::SessionOptions options;
    options.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
    auto session = std::make_shared<bridge::BridgeSession>(bridge::connect_address(address), options);
    session->handshake(R"({"client":"sourceswap"})");
    return session;
}

Backend make_backend(const BackendSettings& b) {
    std::shared_ptr<bridge::BridgeSession> session;
    const bool need_session =
        b.codec == "bridge" || b.denoiser == "bridge" || (b.denoiser == "auto" && !b.address.empty());
    if (need_session) {
        if (b.address.empty()) throw InvalidArgument("--backend is required for bridge codec/denoiser");
        session = open_session(b.address, b.timeout_s);
    }
    Backend backend;
    backend.codec = b.codec == "bridge" ? std::make_unique<bridge::RemoteCodec>(session)
                                        : make_builtin_codec(b.codec);
    if (b.denoiser == "bridge" || (b.denoiser == "auto" && session)) {
        backend.denoiser = std::make_unique<bridge::RemoteDenoiser>(session);
    } else if (b.denoiser == "auto" || b.denoiser == "gaussian-oracle") {
        backend.denoiser = std::make_unique<GaussianOracleDenoiser>();
    } else if (b.denoiser == "zero") {
        backend.denoiser = std::make_unique<ZeroDenoiser>();
    } else {
        throw InvalidArgument("unknown denoiser '" + b.denoiser + "'");
    }
    return backend;
}

void write_sidecar(const std::string& out_path, const json& config) {
    std::ofstream out(out_path + ".config.json", std::ios::binary | std::ios::trunc);
    out << config.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + out_path + ".config.json");
}

struct CommandResult {
    int code = kExitOk;
    json summary = json::object();
};

CommandResult cmd_make_pairs(const Settings& s, const json& config, std::ostream& err) {
    const auto& o = s.make_pairs;
    IngestResult ingested = ingest(o.manifest);
    fs::create_directories(o.out);
    write_rejects(ingested.rejects, fs::path(o.out) / "rejects.jsonl");
    for (const auto& r : ingested.rejects) {
        err << "rejected manifest line " << r.line_number << ": " << r.reason << '\n';
    }

    MakePairsOptions options;
    options.out_dir = o.out;
    options.run_seed = o.seed;
    options.mode = parse_perturb_mode(o.mode);
    options.stop_frequency = o.stop_freq;
    options.jobs = o.jobs != 0 ? o.jobs : std::max(1u, std::thread::hardware_concurrency());
    options.effective_config = config;
    const NoiseSchedule schedule = NoiseSchedule::linear_beta(o.backend.steps);
    const MakePairsSummary summary =
        make_pairs(ingested.manifest, schedule, [&] { return make_backend(o.backend); }, options);

    CommandResult res;
    json skipped = json::array();
    for (const auto& sk : summary.skipped) {
        err << "skipped " << sk.id << ": " << sk.reason << '\n';
        skipped.push_back({{"id", sk.id}, {"reason", sk.reason}});
    }
    json rejects = json::array();
    for (const auto& r : ingested.rejects) {
        rejects.push_back({{"line", r.line_number}, {"reason", r.reason}});
    }
    const auto missing = missing_artifacts(summary.records);
    for (const auto& m : missing) err << "missing artifact " << m << '\n';
    res.summary = {{"records", summary.records.size()},
                   {"skipped", skipped},
                   {"rejects", rejects},
                   {"pairs", summary.pairs_path.string()},
                   {"missing_artifacts", missing}};
    if (!summary.skipped.empty() || !ingested.rejects.empty()) res.code = kExitPartial;
    if (!missing.empty() || summary.records.empty()) res.code = kExitFatal;
    return res;
}

CommandResult cmd_perturb(const Settings& s, const json& config) {
    const auto& o = s.perturb;
    const LatentGrid z = wire::read_tensor_file(o.input);
    const BinaryMask mask = resample_to_latent(load_mask_png(o.mask), z.height(), z.width());
    const PerturbParams params{parse_perturb_mode(o.mode), o.seed, o.stop_freq};
    const PerturbOutcome outcome = perturb_initial_noise_detailed(z, mask, params);
    wire::write_tensor_file(o.out, outcome.perturbed);
    write_sidecar(o.out, config);
    CommandResult res;
    res.summary = {{"out", o.out},
                   {"masked_pixels", mask.popcount()},
                   {"path_disagreement", outcome.path_disagreement}};
    return res;
}

CommandResult cmd_invert(const Settings& s, const json& config) {
    const auto& o = s.invert;
    Backend backend = make_backend(o.backend);
    const NoiseSchedule schedule = NoiseSchedule::linear_beta(o.backend.steps);
    const LatentGrid z0 = backend.codec->encode(load_image_png(o.image));
    const Trajectory traj = ddim_invert(z0, *backend.denoiser, schedule, {o.backend.cond});
    wire::write_tensor_file(o.out, traj.back());
    write_sidecar(o.out, config);
    CommandResult res;
    res.summary = {{"out", o.out}, {"steps", schedule.steps()}};
    return res;
}

CommandResult cmd_sample(const Settings& s, const json& config) {
    const auto& o = s.sample;
    Backend backend = make_backend(o.backend);
    const NoiseSchedule schedule = NoiseSchedule::linear_beta(o.backend.steps);
    const LatentGrid zT = wire::read_tensor_file(o.latent);
    const LatentGrid z0 = ddim_sample(zT, *backend.denoiser, schedule, {o.backend.cond});
    save_image_png(backend.codec->decode(z0), o.out);
    write_sidecar(o.out, config);
    CommandResult res;
    res.summary = {{"out", o.out}, {"steps", schedule.steps()}};
    return res;
}

CommandResult cmd_refine(const Settings& s, const json& config) {
    const auto& o = s.refine;
    const Image reference = load_image_png(o.reference);
    const Image source = load_image_png(o.source);
    const BinaryMask mask = load_mask_png(o.mask);

    std::unique_ptr<SwapOperator> op;
    if (o.op == "identity") {
        op = std::make_unique<IdentitySwap>();
    } else if (o.op == "diffusion") {
        Backend backend = make_backend(o.backend);
        op = std::make_unique<DiffusionSwap>(std::move(backend.codec), std::move(backend.denoiser),
                                             NoiseSchedule::linear_beta(o.backend.steps),
                                             ConditioningRef{o.backend.cond});
    } else {
        throw InvalidArgument("unknown operator '" + o.op + "'");
    }

    RefineOptions options;
    options.rounds = o.k;
    options.keep_intermediates = !o.intermediates.empty();
    options.latent_chaining = o.latent_chaining;
    const RefineResult result = refine(*op, reference, source, mask, options);
    save_image_png(result.output, o.out);
    write_sidecar(o.out, config);

    json rounds = json::array();
    for (std::size_t i = 0; i < result.round_seconds.size(); ++i) {
        json r = {{"round", i + 1}, {"seconds", result.round_seconds[i]}};
        if (options.keep_intermediates) {
            const fs::path p = fs::path(o.intermediates) / ("round" + std::to_string(i + 1) + ".png");
            fs::create_directories(p.parent_path());
            save_image_png(result.intermediates[i], p);
            r["image"] = p.string();
        }
        rounds.push_back(std::move(r));
    }
    CommandResult res;
    res.summary = {{"out", o.out}, {"k", o.k}, {"operator", op->id()}, {"rounds", rounds}};
    return res;
}

CommandResult cmd_eval(const Settings& s, std::ostream& err) {
    const auto& o = s.eval;
    struct Job {
        std::string id, source, result, mask;
    };
    std::vector<Job> jobs;
    if (!o.list.empty()) {
        std::ifstream in(o.list);
        if (!in) throw IoError("cannot open " + o.list);
        std::string line;
        const fs::path root = fs::path(o.list).parent_path();
        auto resolve = [&](const std::string& p) {
            return fs::path(p).is_absolute() ? p : (root / p).string();
        };
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const json j = json::parse(line);
            jobs.push_back({j.at("id").get<std::string>(), resolve(j.at("source").get<std::string>()),
                            resolve(j.at("result").get<std::string>()),
                            resolve(j.at("mask").get<std::string>())});
        }
    } else {
        if (o.source.empty() || o.result.empty() || o.mask.empty()) {
            throw InvalidArgument("eval-region needs --list or all of --source, --result, --mask");
        }
        jobs.push_back({o.id, o.source, o.result, o.mask});
    }

    std::shared_ptr<bridge::BridgeSession> session;
    if (!is_builtin_metric(o.metric)) {
        if (o.backend.empty()) throw InvalidArgument("metric '" + o.metric + "' needs --backend");
        session = open_session(o.backend, o.timeout_s);
    }
    RegionParams params;
    params.metric = o.metric;
    if (o.dilate_radius >= 0) params.dilate_radius = static_cast<std::size_t>(o.dilate_radius);
    params.rect_margin = o.rect_margin;

    std::vector<EvalRow> rows;
    std::size_t failures = 0;
    for (const auto& job : jobs) {
        try {
            const RegionScore score = region_metric(load_image_png(job.source), load_image_png(job.result),
                                                    load_mask_png(job.mask), params, session.get());
            rows.push_back({job.id, score.region_pixel_count, score.value, score.metric_id});
        } catch (const std::exception& e) {
            err << "pair " << job.id << ": " << e.what() << '\n';
            ++failures;
        }
    }
    if (rows.empty()) throw Error("no pair could be scored");
    const EvalReport report = emit_report(std::move(rows), o.out);
    CommandResult res;
    res.summary = report_json(report)["aggregates"];
    res.summary["failed"] = failures;
    res.summary["csv"] = o.out + ".csv";
    res.summary["json"] = o.out + ".json";
    if (failures > 0 || report.excluded > 0) res.code = kExitPartial;
    return res;
}

CommandResult cmd_assemble(const Settings& s, const json& config, std::ostream& err) {
    const auto& o = s.assemble;
    const std::vector<PairRecord> pairs = read_pair_records(o.pairs);
    if (pairs.empty()) throw InvalidArgument("no pair records in " + o.pairs);
    std::unique_ptr<LatentCodec> codec;
    if (o.codec == "bridge") {
        if (o.backend.empty()) throw InvalidArgument("--codec bridge needs --backend");
        codec = std::make_unique<bridge::RemoteCodec>(open_session(o.backend, o.timeout_s));
    } else {
        codec = make_builtin_codec(o.codec);
    }
    const NoiseSchedule schedule = NoiseSchedule::linear_beta(o.steps);
    AssembleOptions options;
    options.augmentations = parse_augment_list(o.augment);
    options.box_margin = o.box_margin;

    std::vector<json> lines{{{"config", config}}};
    std::size_t failures = 0;
    for (const auto& pair : pairs) {
        try {
            const TrainingSample sample =
                assemble_training_sample(pair, *codec, schedule, derive_seed(o.seed, pair.id), options);
            lines.push_back(write_training_sample(sample, o.out));
        } catch (const std::exception& e) {
            err << "pair " << pair.id << ": " << e.what() << '\n';
            ++failures;
        }
    }
    const fs::path manifest = fs::path(o.out) / "train.jsonl";
    fs::create_directories(o.out);
    std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
    for (const auto& l : lines) out << l.dump() << '\n';
    if (!out) throw IoError("cannot write " + manifest.string());

    CommandResult res;
    res.summary = {{"samples", lines.size() - 1}, {"failed", failures}, {"manifest", manifest.string()}};
    if (failures > 0) res.code = lines.size() > 1 ? kExitPartial : kExitFatal;
    return res;
}

CommandResult cmd_selftest(const Settings& s, std::ostream& err) {
    const auto& o = s.selftest;
    json checks = json::array();
    bool ok = true;
    auto check = [&](const std::string& name, bool pass, const std::string& detail = "") {
        checks.push_back({{"check", name}, {"pass", pass}, {"detail", detail}});
        if (!pass) {
            ok = false;
            err << "FAIL " << name << (detail.empty() ? "" : ": " + detail) << '\n';
        }
    };

    // Framing round trip on a few payload sizes.
    for (std::size_t n : {0u, 1u, 42u, 4096u}) {
        wire::Bytes payload(n);
        for (std::size_t i = 0; i < n; ++i) payload[i] = static_cast<std::uint8_t>(i * 31 + 7);
        const auto frame = wire::frame_message(wire::MsgType::DenoiseReq, payload);
        const auto parsed = wire::parse_stream(frame);
        check("frame round trip " + std::to_string(n),
              parsed.messages.size() == 1 && parsed.messages[0].payload == payload && !parsed.error_offset);
    }

    if (!o.fixtures.empty()) {
        auto read_hex = [&](const std::string& name) {
            std::ifstream in(fs::path(o.fixtures) / name);
            std::stringstream ss;
            ss << in.rdbuf();
            return wire::from_hex(ss.str());
        };
        const auto hello = wire::frame_message(wire::MsgType::Hello, {});
        check("hello golden", read_hex("hello.hex") == hello);
        const LatentGrid zero(1, 2, 2);
        const auto req = wire::frame_message(wire::MsgType::DenoiseReq,
                                             wire::denoise_request_payload(zero, 10, ConditioningRef{0}));
        check("denoise request golden", read_hex("denoise_req.hex") == req);
    }

    std::shared_ptr<bridge::BridgeSession> session;
    std::thread server;
    if (o.backend.empty()) {
        auto [client, server_end] = bridge::socket_pair();
        bridge::Capabilities caps = bridge::Capabilities::parse(
            R"({"caps":["denoise","encode","decode","metric"],"latent_channels":3,"scale":1})");
        server = std::thread([stream = std::move(server_end), caps]() mutable {
            bridge::serve_connection(*stream, caps, bridge::echo_handler());
        });
        bridge::SessionOptions options;
        options.timeout = std::chrono::milliseconds(static_cast<long long>(o.timeout_s * 1000.0));
        session = std::make_shared<bridge::BridgeSession>(std::move(client), options);
    }
    try {
        if (!session) {
            bridge::SessionOptions options;
            options.timeout = std::chrono::milliseconds(static_cast<long long>(o.timeout_s * 1000.0));
            session = std::make_shared<bridge::BridgeSession>(bridge::connect_address(o.backend), options);
        }
        const auto& caps = session->handshake(R"({"client":"sourceswap-selftest"})");
        check("handshake", session->ready(), caps.blob);
        if (caps.has(bridge::kCapDenoise)) {
            LatentGrid z(caps.latent_channels > 0 ? static_cast<std::size_t>(caps.latent_channels) : 4, 8, 8);
            for (std::size_t i = 0; i < z.size(); ++i) z.values()[i] = 0.01 * static_cast<double>(i);
            const LatentGrid eps = session->denoise(z, 10, {0});
            check("denoise shape", eps.same_shape(z));
            check("denoise finite", all_finite(eps));
        }
    } catch (const std::exception& e) {
        check("bridge session", false, e.what());
    }
    session.reset();
    if (server.joinable()) server.join();

    CommandResult res;
    res.summary = {{"checks", checks}, {"pass", ok}};
    res.code = ok ? kExitOk : kExitFatal;
    return res;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Settings s;
    auto app = build_app(s);
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app->parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app->exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app->exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app->exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app->exit(e, out, err);
        if (e.get_exit_code() != 0) {
            err << app->help();
            return kExitFatal;
        }
        return kExitOk;
    }

    CLI::App* sub = app->get_subcommands().front();
    const std::string name = sub->get_name();
    json config = effective_config(*sub);
    config["command"] = name;

    CommandResult res;
    try {
        if (name == "make-pairs") res = cmd_make_pairs(s, config, err);
        else if (name == "perturb") res = cmd_perturb(s, config);
        else if (name == "invert") res = cmd_invert(s, config);
        else if (name == "sample") res = cmd_sample(s, config);
        else if (name == "refine") res = cmd_refine(s, config);
        else if (name == "eval-region") res = cmd_eval(s, err);
        else if (name == "assemble-train") res = cmd_assemble(s, config, err);
        else if (name == "protocol-selftest") res = cmd_selftest(s, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        res.code = kExitFatal;
        res.summary = {{"error", e.what()}};
    }
    if (s.json) {
        json summary = {{"command", name}, {"exit_code", res.code}, {"config", config}};
        summary.update(res.summary);
        out << summary.dump() << '\n';
    }
    return res.code;
}

std::string help_text(const std::string& command) {
    Settings s;
    auto app = build_app(s);
    if (command.empty()) return app->help();
    return app->get_subcommand(command)->help();
}

std::vector<std::string> all_flags() {
    Settings s;
    auto app = build_app(s);
    std::vector<std::string> flags;
    auto collect = [&](const CLI::App& a, const std::string& prefix) {
        for (const CLI::Option* opt : a.get_options()) {
            for (const auto& l : opt->get_lnames()) flags.push_back(prefix + "--" + l);
        }
    };
    collect(*app, "");
    for (const CLI::App* sub : app->get_subcommands({})) collect(*sub, sub->get_name() + " ");
    return flags;
}

}  // namespace sourceswap::cli
