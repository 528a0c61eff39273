#include "attnbend/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "attnbend/media.hpp"

namespace attnbend {

namespace fs = std::filesystem;

void write_variation_media(const GenerationResult& result, const VariationRecord& record,
                           const VideoGeometry& geometry, const fs::path& out_dir) {
  write_video(result.video, geometry.fps, out_dir / "frames" / record.variation_id, record.variation_id);
  if (!result.attention.empty()) write_attention_video(result.attention, out_dir / "attn" / record.variation_id);
}

namespace {

void run_one(const ToyDiT& model, const SweepConfig& config, VariationRecord& record, const fs::path& out_dir) {
  try {
    GenerationSettings settings = config.generation;
    settings.seed = record.seed;
    const GenerationResult result =
        generate(model, settings, record.prompt, to_bend_operations(record), TokenResolution::kIntersect);
    // Stale media from an earlier run of the same id is replaced wholesale.
    fs::remove_all(out_dir / "frames" / record.variation_id);
    fs::remove_all(out_dir / "attn" / record.variation_id);
    write_variation_media(result, record, settings.video, out_dir);
    record.recorded_tokens = result.recorded_tokens;
    if (!result.attention.empty()) record.attention_index = "attn/" + record.variation_id + "/index.json";
  } catch (const std::exception& e) {
    record.error = e.what();
  }
}

}  // namespace

Manifest run_sweep(const SweepConfig& config, const fs::path& out_dir, const SweepOptions& options) {
  Manifest manifest;
  manifest.batch_name = config.batch_name;
  manifest.config_echo = config.echo;
  manifest.records = expand_variations(config);
  std::sort(manifest.records.begin(), manifest.records.end(),
            [](const VariationRecord& a, const VariationRecord& b) { return a.variation_id < b.variation_id; });

  fs::create_directories(out_dir);
  if (!options.dry_run && !manifest.records.empty()) {
    const ToyDiT model(config.model);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < manifest.records.size(); i = next++) {
        run_one(model, config, manifest.records[i], out_dir);
      }
    };
    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, manifest.records.size());
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
  }

  std::ofstream out(out_dir / "metadata.json", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + (out_dir / "metadata.json").string() + "'");
  out << serialize_manifest(manifest);
  return manifest;
}

}  // namespace attnbend
