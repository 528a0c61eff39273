#pragma once

// Sweep configuration: the YAML (or equivalent JSON) schema that drives a
// combinatorial generation batch. Field names and nesting:
//
//   batch_name, template, videos_per_variation, seeds (optional explicit list)
//   model_settings:  {seed, steps, cfg_scale, sampler, model_id, ...}
//   video_settings:  {fps, frames, height, width, duration}
//   attention_bending_settings: {apply_before_softmax, enabled, ...}
//   attention_bending_variations:
//     {enabled, generate_baseline, renormalize, apply_to_guidance_2,
//      operations: [{operation, parameter_name, range, steps, target_token,
//                    apply_to_timesteps, apply_to_layers, strength,
//                    padding_mode}]}
//   toy_model: {num_blocks, model_dim, num_heads, text_dim, mlp_hidden,
//               latent_frames, latent_height, latent_width, latent_channels,
//               weight_seed}
//
// memory_settings, cfg_schedule_settings, prompt_schedule_settings and
// prompt_settings are accepted and echoed but have no effect.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "attnbend/toy_dit.hpp"

namespace attnbend {

struct OperationSpec {
  std::string operation;
  std::string parameter_name;
  std::optional<std::pair<double, double>> range;
  std::optional<std::size_t> steps;
  std::vector<std::string> target_token{"ALL"};
  std::vector<std::string> apply_to_timesteps{"ALL"};
  std::vector<std::string> apply_to_layers{"ALL"};
  double strength = 1.0;
  std::string padding_mode = "border";

  // linspace over the range, or a single empty value for flips.
  std::vector<std::optional<double>> magnitudes() const;
};

struct SweepConfig {
  std::string batch_name = "sweep";
  std::string template_text;
  std::vector<std::string> prompts;
  std::optional<std::vector<std::uint64_t>> explicit_seeds;
  std::size_t videos_per_variation = 1;

  ModelConfig model;
  GenerationSettings generation;

  bool variations_enabled = true;
  bool generate_baseline = true;
  bool renormalize = false;
  bool apply_before_softmax = false;
  std::vector<OperationSpec> operations;

  nlohmann::json echo;  // the parsed document, as JSON

  // videos_per_variation n -> {seed, seed+1, ..., seed+n-1} unless `seeds` is given.
  std::vector<std::uint64_t> seeds() const;
};

enum class ConfigFormat { kAuto, kYaml, kJson };

// Converts a YAML document to JSON. Quoted scalars stay strings; plain
// scalars become null / bool / integer / float where they parse as such.
nlohmann::json yaml_to_json(std::string_view yaml_text);

SweepConfig parse_config(const nlohmann::json& doc);
SweepConfig parse_config_text(std::string_view text, ConfigFormat format = ConfigFormat::kAuto);
SweepConfig load_config(const std::filesystem::path& path);

// "[a | b | c]" -> {"a", "b", "c"}; a string without brackets is one prompt.
std::vector<std::string> expand_template(std::string_view text);

// `steps` evenly spaced values with both endpoints included; steps == 1 -> {lo}.
std::vector<double> linspace(double lo, double hi, std::size_t steps);

}  // namespace attnbend
