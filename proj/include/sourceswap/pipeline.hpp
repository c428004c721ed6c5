#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sourceswap/augment.hpp"
#include "sourceswap/codec.hpp"
#include "sourceswap/ddim.hpp"
#include "sourceswap/maskops.hpp"
#include "sourceswap/perturb.hpp"
#include "sourceswap/rng.hpp"

namespace sourceswap {

namespace fs = std::filesystem;

/// One manifest line: {"id", "image", "mask", "caption", optional "cond"}.
/// Relative paths are resolved against the manifest's directory.
struct ManifestEntry {
    std::string id;
    fs::path image_path;
    fs::path mask_path;
    std::string caption;
    std::uint64_t cond = 0;
};

struct DatasetManifest {
    fs::path root;
    std::vector<ManifestEntry> entries;
};

struct RejectedLine {
    std::size_t line_number = 0;  ///< 1-based
    std::string reason;
    std::string text;
};

struct IngestResult {
    DatasetManifest manifest;
    std::vector<RejectedLine> rejects;
};

/// Malformed lines and entries with unreadable files go to `rejects`.
/// Throws InvalidArgument for a duplicate id or when no entry survives, and
/// IoError when the manifest itself cannot be read.
IngestResult ingest(const fs::path& manifest_path);

void write_rejects(const std::vector<RejectedLine>& rejects, const fs::path& path);

struct PairRecord {
    std::string id;
    fs::path source_path;
    fs::path perturbed_path;
    fs::path mask_path;
    fs::path latent_path;  ///< z_T^P as a tensor file
    std::string caption;
    std::uint64_t cond = 0;
    std::uint64_t seed = 0;
    PerturbMode mode = PerturbMode::HighOnly;
    double stop_frequency = kDefaultStopFrequency;
    nlohmann::json schedule;
    std::string codec_id;
    std::string denoiser_id;
    std::string created_at;  ///< ISO-8601 UTC
};

nlohmann::json to_json(const PairRecord& record);
PairRecord pair_record_from_json(const nlohmann::json& j);
std::vector<PairRecord> read_pair_records(const fs::path& path);

/// Everything build_pair computes before touching the filesystem.
struct PairArtifacts {
    Image perturbed;
    LatentGrid z_T;
    LatentGrid z_T_perturbed;
    BinaryMask latent_mask;
};

/// encode -> invert -> perturb at latent resolution -> sample -> decode.
PairArtifacts synthesize_pair(const Image& source, const BinaryMask& mask, LatentCodec& codec,
                              Denoiser& denoiser, const NoiseSchedule& schedule,
                              const PerturbParams& params, ConditioningRef cond = {});

/// Same with a caller-chosen permutation (for controls).
PairArtifacts synthesize_pair_with_permutation(const Image& source, const BinaryMask& mask,
                                               LatentCodec& codec, Denoiser& denoiser,
                                               const NoiseSchedule& schedule, PerturbMode mode,
                                               const PermutationSpec& spec, double stop_frequency,
                                               ConditioningRef cond = {});

struct PairOutcome {
    std::optional<PairRecord> record;
    std::string skip_reason;  ///< set when record is empty
};

/// Loads the entry, applies the size filter and writes
/// <out_dir>/<id>.perturbed.png and <out_dir>/<id>.zT.tw. Never throws for
/// per-entry problems; they become the skip reason.
PairOutcome build_pair(const ManifestEntry& entry, LatentCodec& codec, Denoiser& denoiser,
                       const NoiseSchedule& schedule, const PerturbParams& params,
                       const fs::path& out_dir);

struct MakePairsOptions {
    fs::path out_dir;
    std::uint64_t run_seed = 0;
    PerturbMode mode = PerturbMode::HighOnly;
    double stop_frequency = kDefaultStopFrequency;
    std::size_t jobs = 1;
    /// Echoed into pairs.jsonl as the first line when set.
    std::optional<nlohmann::json> effective_config;
};

struct SkippedEntry {
    std::string id;
    std::string reason;
};

struct MakePairsSummary {
    std::vector<PairRecord> records;
    std::vector<SkippedEntry> skipped;
    fs::path pairs_path;
};

struct Backend {
    std::unique_ptr<LatentCodec> codec;
    std::unique_ptr<Denoiser> denoiser;
};

/// Called once per worker thread.
using BackendFactory = std::function<Backend()>;

/// Runs build_pair over every entry with `jobs` workers, each owning its own
/// backend. Records are written to <out_dir>/pairs.jsonl in manifest order,
/// skipped entries to <out_dir>/skipped.jsonl.
MakePairsSummary make_pairs(const DatasetManifest& manifest, const NoiseSchedule& schedule,
                            const BackendFactory& backend_factory, const MakePairsOptions& options);

/// Post-run check: every path named by a record exists.
std::vector<std::string> missing_artifacts(const std::vector<PairRecord>& records);

// --- training samples -------------------------------------------------------

struct TrainingSample {
    std::string pair_id;
    Image reference_crop;
    std::size_t reference_timestep = 0;  ///< always 0: the reference branch is clean
    Timestep timestep;
    LatentGrid clean_latent;    ///< encode(I_s), the target
    LatentGrid noise;
    LatentGrid noisy_latent;    ///< add_noise(clean_latent, noise, alpha_bar(t))
    BinaryMask box_mask;        ///< M_box at latent resolution
    LatentGrid condition;       ///< encode(I_s^P)
};

/// Uniform over {0, ..., steps}.
std::size_t draw_training_timestep(Rng& rng, std::size_t steps);

struct AssembleOptions {
    std::vector<AugmentOp> augmentations;
    std::size_t box_margin = 0;
    /// 0 picks default_clean_radius for the mask size.
    std::size_t clean_radius = 0;
};

TrainingSample assemble_training_sample(const PairRecord& pair, LatentCodec& codec,
                                        const NoiseSchedule& schedule, std::uint64_t seed,
                                        const AssembleOptions& options = {});

/// Writes the tensors and crop next to each other and returns the JSON line
/// that references them.
nlohmann::json write_training_sample(const TrainingSample& sample, const fs::path& out_dir);

}  // namespace sourceswap
