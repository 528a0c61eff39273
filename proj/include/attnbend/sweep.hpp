#pragma once

// Combinatorial expansion of a sweep configuration into variation records,
// execution of those records, and the metadata manifest tying media files to
// the resolved transform settings.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "attnbend/bender.hpp"
#include "attnbend/sweep_config.hpp"

namespace attnbend {

struct VariationRecord {
  std::string variation_id;
  std::string filename;  // frames/<id>/index.json
  std::string prompt;
  std::size_t prompt_index = 0;
  std::uint64_t seed = 0;
  bool baseline = false;

  // Null on baseline records; value is also null for flips.
  std::optional<std::string> operation;
  std::optional<std::string> parameter_name;
  std::optional<double> value;
  std::optional<double> strength;
  std::optional<std::string> padding_mode;
  std::optional<std::string> target_token;
  std::optional<std::string> apply_to_timesteps;
  std::optional<std::string> apply_to_layers;
  bool renormalize = false;
  bool apply_before_softmax = false;

  // Filled in by run_sweep.
  std::optional<std::string> attention_index;  // attn/<id>/index.json
  std::vector<std::string> recorded_tokens;
  std::optional<std::string> error;

  friend bool operator==(const VariationRecord&, const VariationRecord&) = default;
};

// Expansion order: prompt, seed, baseline, then each operation spec in
// configuration order with magnitude outermost, followed by token target,
// timestep target and layer target.
std::vector<VariationRecord> expand_variations(const SweepConfig& config);

// Sets variation_id (content hash of the resolved fields, made unique by a
// suffix on collision) and filename on every record.
void assign_variation_ids(std::vector<VariationRecord>& records);

// Σ over specs of |magnitudes| x |tokens| x |timesteps| x |layers|, plus the
// baseline, times prompts x seeds. Zero when variations are disabled.
std::size_t expected_record_count(const SweepConfig& config);

std::vector<BendOperation> to_bend_operations(const VariationRecord& record);

struct Manifest {
  std::string batch_name;
  nlohmann::json config_echo;
  std::vector<VariationRecord> records;  // sorted by variation_id

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

nlohmann::json to_json(const VariationRecord& record);
VariationRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& j);
std::string serialize_manifest(const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

struct SweepOptions {
  std::size_t jobs = 1;
  bool dry_run = false;  // expand and write the manifest only
};

// Runs every variation (up to `jobs` at a time) and writes, under out_dir:
//   metadata.json
//   frames/<id>/frame_NNNN.ppm + frames/<id>/index.json
//   attn/<id>/<token>/tTT_fFF.pgm + attn/<id>/index.json + attn/<id>/volumes.json
// A variation that throws is kept in the manifest with `error` set.
Manifest run_sweep(const SweepConfig& config, const std::filesystem::path& out_dir, const SweepOptions& options);

// Writes frames/<id>/ and, when attention was recorded, attn/<id>/ under out_dir.
void write_variation_media(const GenerationResult& result, const VariationRecord& record,
                           const VideoGeometry& geometry, const std::filesystem::path& out_dir);

}  // namespace attnbend
