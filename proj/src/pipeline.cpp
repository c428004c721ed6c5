#include "sourceswap/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "sourceswap/image_io.hpp"
#include "sourceswap/rng.hpp"
#include "sourceswap/wire.hpp"

namespace sourceswap {

using nlohmann::json;

namespace {

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path resolve(const fs::path& root, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : root / path;
}

void write_lines(const fs::path& path, const std::vector<json>& lines) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& line : lines) out << line.dump() << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

IngestResult ingest(const fs::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + manifest_path.string());

    IngestResult result;
    result.manifest.root = manifest_path.parent_path();
    std::set<std::string> seen;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        auto reject = [&](std::string reason) {
            result.rejects.push_back({line_number, std::move(reason), line});
        };
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            reject(std::string("malformed JSON: ") + e.what());
            continue;
        }
        if (!j.is_object()) {
            reject("entry is not an object");
            continue;
        }
        bool ok = true;
        for (const char* key : {"id", "image", "mask"}) {
            if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
                reject(std::string("missing or non-string field '") + key + "'");
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        if (j.contains("caption") && !j["caption"].is_string()) {
            reject("caption must be a string");
            continue;
        }
        if (j.contains("cond") && !j["cond"].is_number_unsigned()) {
            reject("cond must be a non-negative integer");
            continue;
        }

        ManifestEntry entry;
        entry.id = j["id"].get<std::string>();
        entry.image_path = resolve(result.manifest.root, j["image"].get<std::string>());
        entry.mask_path = resolve(result.manifest.root, j["mask"].get<std::string>());
        entry.caption = j.value("caption", std::string{});
        entry.cond = j.value("cond", std::uint64_t{0});

        if (!seen.insert(entry.id).second) {
            throw InvalidArgument("duplicate id '" + entry.id + "' at line " +
                                  std::to_string(line_number));
        }
        if (!fs::is_regular_file(entry.image_path)) {
            reject("image not found: " + entry.image_path.string());
            continue;
        }
        if (!fs::is_regular_file(entry.mask_path)) {
            reject("mask not found: " + entry.mask_path.string());
            continue;
        }
        result.manifest.entries.push_back(std::move(entry));
    }
    if (result.manifest.entries.empty()) {
        throw InvalidArgument("manifest " + manifest_path.string() + " has no valid entries (" +
                              std::to_string(result.rejects.size()) + " rejected)");
    }
    return result;
}

void write_rejects(const std::vector<RejectedLine>& rejects, const fs::path& path) {
    std::vector<json> lines;
    for (const auto& r : rejects) {
        lines.push_back({{"line", r.line_number}, {"reason", r.reason}, {"text", r.text}});
    }
    write_lines(path, lines);
}

json to_json(const PairRecord& r) {
    return {
        {"id", r.id},
        {"source_path", r.source_path.string()},
        {"perturbed_path", r.perturbed_path.string()},
        {"mask_path", r.mask_path.string()},
        {"latent_path", r.latent_path.string()},
        {"caption", r.caption},
        {"cond", r.cond},
        {"seed", r.seed},
        {"mode", std::string(to_string(r.mode))},
        {"stop_frequency", r.stop_frequency},
        {"schedule", r.schedule},
        {"codec", r.codec_id},
        {"denoiser", r.denoiser_id},
        {"created_at", r.created_at},
    };
}

PairRecord pair_record_from_json(const json& j) {
    try {
        PairRecord r;
        r.id = j.at("id").get<std::string>();
        r.source_path = j.at("source_path").get<std::string>();
        r.perturbed_path = j.at("perturbed_path").get<std::string>();
        r.mask_path = j.at("mask_path").get<std::string>();
        r.latent_path = j.value("latent_path", std::string{});
        r.caption = j.value("caption", std::string{});
        r.cond = j.value("cond", std::uint64_t{0});
        r.seed = j.at("seed").get<std::uint64_t>();
        r.mode = parse_perturb_mode(j.at("mode").get<std::string>());
        r.stop_frequency = j.at("stop_frequency").get<double>();
        r.schedule = j.value("schedule", json::object());
        r.codec_id = j.value("codec", std::string{});
        r.denoiser_id = j.value("denoiser", std::string{});
        r.created_at = j.value("created_at", std::string{});
        return r;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("bad pair record: ") + e.what());
    }
}

std::vector<PairRecord> read_pair_records(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<PairRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line);
        if (j.contains("config") && !j.contains("id")) continue;  // echoed run config
        records.push_back(pair_record_from_json(j));
    }
    return records;
}

namespace {

PairArtifacts finish_pair(const Image& source, const BinaryMask& mask, LatentCodec& codec,
                          Denoiser& denoiser, const NoiseSchedule& schedule, ConditioningRef cond,
                          const std::function<LatentGrid(const LatentGrid&, const BinaryMask&)>& perturb) {
    if (source.height() != mask.height() || source.width() != mask.width()) {
        throw ShapeMismatch("image and mask sizes differ");
    }
    const LatentGrid z0 = codec.encode(source);
    Trajectory traj = ddim_invert(z0, denoiser, schedule, cond);
    PairArtifacts out;
    out.latent_mask = resample_to_latent(mask, z0.height(), z0.width());
    if (out.latent_mask.is_empty()) throw InvalidArgument("mask vanishes at latent resolution");
    out.z_T = std::move(traj.back());
    out.z_T_perturbed = perturb(out.z_T, out.latent_mask);
    out.perturbed = codec.decode(ddim_sample(out.z_T_perturbed, denoiser, schedule, cond));
    return out;
}

}  // namespace

PairArtifacts synthesize_pair(const Image& source, const BinaryMask& mask, LatentCodec& codec,
                              Denoiser& denoiser, const NoiseSchedule& schedule,
                              const PerturbParams& params, ConditioningRef cond) {
    return finish_pair(source, mask, codec, denoiser, schedule, cond,
                       [&](const LatentGrid& z, const BinaryMask& m) {
                           return perturb_initial_noise(z, m, params);
                       });
}

PairArtifacts synthesize_pair_with_permutation(const Image& source, const BinaryMask& mask,
                                               LatentCodec& codec, Denoiser& denoiser,
                                               const NoiseSchedule& schedule, PerturbMode mode,
                                               const PermutationSpec& spec, double stop_frequency,
                                               ConditioningRef cond) {
    return finish_pair(source, mask, codec, denoiser, schedule, cond,
                       [&](const LatentGrid& z, const BinaryMask& m) {
                           return perturb_with_permutation(z, m, mode, spec, stop_frequency).perturbed;
                       });
}

PairOutcome build_pair(const ManifestEntry& entry, LatentCodec& codec, Denoiser& denoiser,
                       const NoiseSchedule& schedule, const PerturbParams& params,
                       const fs::path& out_dir) {
    PairOutcome outcome;
    try {
        const Image source = load_image_png(entry.image_path);
        const BinaryMask mask = load_mask_png(entry.mask_path);
        if (mask.height() != source.height() || mask.width() != source.width()) {
            outcome.skip_reason = "mask and image sizes differ";
            return outcome;
        }
        const SizeFilterResult verdict = size_filter(mask, source.height(), source.width());
        if (!verdict.accepted()) {
            outcome.skip_reason = verdict.reason;
            return outcome;
        }

        const PairArtifacts art =
            synthesize_pair(source, mask, codec, denoiser, schedule, params, {entry.cond});

        fs::create_directories(out_dir);
        PairRecord r;
        r.id = entry.id;
        r.source_path = fs::absolute(entry.image_path);
        r.mask_path = fs::absolute(entry.mask_path);
        r.perturbed_path = fs::absolute(out_dir / (entry.id + ".perturbed.png"));
        r.latent_path = fs::absolute(out_dir / (entry.id + ".zT.tw"));
        save_image_png(art.perturbed, r.perturbed_path);
        wire::write_tensor_file(r.latent_path, art.z_T_perturbed);
        r.caption = entry.caption;
        r.cond = entry.cond;
        r.seed = params.seed;
        r.mode = params.mode;
        r.stop_frequency = params.stop_frequency;
        r.schedule = json::parse(schedule.summary_json());
        r.codec_id = codec.id();
        r.denoiser_id = denoiser.id();
        r.created_at = utc_timestamp();
        outcome.record = std::move(r);
    } catch (const std::exception& e) {
        outcome.record.reset();
        outcome.skip_reason = e.what();
    }
    return outcome;
}

MakePairsSummary make_pairs(const DatasetManifest& manifest, const NoiseSchedule& schedule,
                            const BackendFactory& backend_factory, const MakePairsOptions& options) {
    const std::size_t n = manifest.entries.size();
    std::vector<PairOutcome> outcomes(n);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::string worker_error;

    auto worker = [&] {
        Backend backend;
        try {
            backend = backend_factory();
            if (!backend.codec || !backend.denoiser) throw Error("backend factory returned nothing");
        } catch (const std::exception& e) {
            std::lock_guard lock(error_mutex);
            worker_error = e.what();
            return;
        }
        for (std::size_t i = next++; i < n; i = next++) {
            const ManifestEntry& entry = manifest.entries[i];
            PerturbParams params{options.mode, derive_seed(options.run_seed, entry.id),
                                 options.stop_frequency};
            outcomes[i] = build_pair(entry, *backend.codec, *backend.denoiser, schedule, params,
                                     options.out_dir);
        }
    };

    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(n, 1));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (!worker_error.empty()) throw Error("backend setup failed: " + worker_error);

    MakePairsSummary summary;
    std::vector<json> lines;
    if (options.effective_config) lines.push_back({{"config", *options.effective_config}});
    for (std::size_t i = 0; i < n; ++i) {
        if (outcomes[i].record) {
            lines.push_back(to_json(*outcomes[i].record));
            summary.records.push_back(std::move(*outcomes[i].record));
        } else {
            summary.skipped.push_back({manifest.entries[i].id, outcomes[i].skip_reason});
        }
    }
    summary.pairs_path = options.out_dir / "pairs.jsonl";
    write_lines(summary.pairs_path, lines);

    std::vector<json> skipped;
    for (const auto& s : summary.skipped) skipped.push_back({{"id", s.id}, {"reason", s.reason}});
    write_lines(options.out_dir / "skipped.jsonl", skipped);
    return summary;
}

std::vector<std::string> missing_artifacts(const std::vector<PairRecord>& records) {
    std::vector<std::string> missing;
    for (const auto& r : records) {
        for (const fs::path* p : {&r.source_path, &r.perturbed_path, &r.mask_path, &r.latent_path}) {
            if (!p->empty() && !fs::exists(*p)) missing.push_back(r.id + ": " + p->string());
        }
    }
    return missing;
}

std::size_t draw_training_timestep(Rng& rng, std::size_t steps) {
    return static_cast<std::size_t>(rng.uniform_below(steps + 1));
}

TrainingSample assemble_training_sample(const PairRecord& pair, LatentCodec& codec,
                                        const NoiseSchedule& schedule, std::uint64_t seed,
                                        const AssembleOptions& options) {
    for (const fs::path* p : {&pair.source_path, &pair.perturbed_path, &pair.mask_path}) {
        if (!fs::is_regular_file(*p)) throw IoError("pair " + pair.id + ": missing " + p->string());
    }
    const Image source = load_image_png(pair.source_path);
    const Image perturbed = load_image_png(pair.perturbed_path);
    const BinaryMask mask = load_mask_png(pair.mask_path);
    if (mask.height() != source.height() || mask.width() != source.width() ||
        !perturbed.same_shape(source)) {
        throw ShapeMismatch("pair " + pair.id + ": image, perturbed image and mask sizes differ");
    }

    TrainingSample s;
    s.pair_id = pair.id;

    // Reference branch: the object cut out by the cleaned mask, augmented, no noise.
    const std::size_t radius = options.clean_radius != 0
                                   ? options.clean_radius
                                   : default_clean_radius(mask.height(), mask.width());
    const CleanedMask cleaned = clean_reference_mask(mask, radius);
    const BinaryMask& ref_mask = cleaned.empty ? mask : cleaned.mask;
    const auto box = bounding_box(ref_mask);
    if (!box) throw InvalidArgument("pair " + pair.id + ": empty mask");
    Image crop(source.channels(), box->height(), box->width());
    for (std::size_t c = 0; c < source.channels(); ++c) {
        for (std::size_t y = 0; y < box->height(); ++y) {
            for (std::size_t x = 0; x < box->width(); ++x) {
                const std::size_t sy = box->row_min + y;
                const std::size_t sx = box->col_min + x;
                crop.at(c, y, x) = ref_mask.at(sy, sx) ? source.at(c, sy, sx) : 0.0;
            }
        }
    }
    s.reference_crop = augment_reference(crop, options.augmentations, splitmix64(seed ^ 0xa5a5a5a5ull));
    s.reference_timestep = 0;

    // Denoiser branch.
    Rng rng(seed);
    const std::size_t t = draw_training_timestep(rng, schedule.steps());
    s.timestep = {t, schedule.train_timestep(t), schedule.alpha_bar(t)};
    s.clean_latent = codec.encode(source);
    s.noise = LatentGrid(s.clean_latent.channels(), s.clean_latent.height(), s.clean_latent.width());
    for (double& v : s.noise.values()) v = rng.normal();
    s.noisy_latent = add_noise(s.clean_latent, s.noise, s.timestep.alpha_bar);
    s.box_mask = resample_to_latent(to_bbox_mask(mask, options.box_margin), s.clean_latent.height(),
                                    s.clean_latent.width());
    s.condition = codec.encode(perturbed);
    return s;
}

json write_training_sample(const TrainingSample& s, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const fs::path base = fs::absolute(out_dir);
    auto path = [&](const char* suffix) { return base / (s.pair_id + suffix); };

    save_image_png(s.reference_crop, path(".ref.png"));
    wire::write_tensor_file(path(".clean.tw"), s.clean_latent);
    wire::write_tensor_file(path(".noise.tw"), s.noise);
    wire::write_tensor_file(path(".noisy.tw"), s.noisy_latent);
    wire::write_tensor_file(path(".cond.tw"), s.condition);
    save_mask_png(s.box_mask, path(".box.png"));

    return {
        {"id", s.pair_id},
        {"reference_crop", path(".ref.png").string()},
        {"reference_timestep", s.reference_timestep},
        {"t", s.timestep.index},
        {"train_timestep", s.timestep.train_step},
        {"alpha_bar", s.timestep.alpha_bar},
        {"target", path(".clean.tw").string()},
        {"noise", path(".noise.tw").string()},
        {"noisy_latent", path(".noisy.tw").string()},
        {"box_mask", path(".box.png").string()},
        {"condition", path(".cond.tw").string()},
    };
}

}  // namespace sourceswap
