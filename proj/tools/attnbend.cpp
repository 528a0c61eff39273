// attnbend: generate, sweep, expand and export-attn over the toy video DiT.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
// Seed precedence: --seed flag, then ATTNBEND_SEED, then the config / default.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "attnbend/bender.hpp"
#include "attnbend/errors.hpp"
#include "attnbend/kernels.hpp"
#include "attnbend/media.hpp"
#include "attnbend/sweep.hpp"

namespace fs = std::filesystem;
using namespace attnbend;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("ATTNBEND_SEED");
  if (!s || !*s) return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ConfigError("ATTNBEND_SEED", "expected a non-negative integer, got '" + std::string(s) + "'");
  return v;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (auto e = env_seed()) return *e;
  return fallback;
}

void write_manifest_file(const Manifest& m, const fs::path& out) {
  fs::create_directories(out);
  std::ofstream f(out / "metadata.json", std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + (out / "metadata.json").string());
  f << serialize_manifest(m);
}

struct GenerateArgs {
  std::string prompt;
  std::optional<std::uint64_t> seed;
  std::string op, param;
  double value = 1.0;
  double strength = 1.0;
  std::string pad = "border";
  std::string tokens = "ALL", timesteps = "ALL", layers = "ALL";
  bool pre_softmax = false, renormalize = false;
  std::string out, config;
  std::optional<std::size_t> blocks, steps, frames, height, width;
  std::optional<double> cfg, fps;
};

int cmd_generate(const GenerateArgs& a) {
  SweepConfig base;
  if (!a.config.empty()) base = load_config(a.config);
  ModelConfig model = base.model;
  GenerationSettings settings = base.generation;
  if (a.blocks) model.num_blocks = *a.blocks;
  if (a.steps) settings.num_timesteps = *a.steps;
  if (a.cfg) settings.cfg_scale = *a.cfg;
  if (a.frames) settings.video.frames = *a.frames;
  if (a.height) settings.video.height = *a.height;
  if (a.width) settings.video.width = *a.width;
  if (a.fps) settings.video.fps = *a.fps;
  settings.seed = resolve_seed(a.seed, a.config.empty() ? 41 : settings.seed);
  model.validate();
  settings.validate();

  VariationRecord record;
  record.prompt = a.prompt;
  record.seed = settings.seed;
  record.baseline = a.op.empty();
  if (!a.op.empty()) {
    const OpKind kind = parse_op_kind(a.op);
    if (a.param.empty()) throw ConfigError("--param", "required with --op (valid: " + valid_parameters(kind) + ")");
    parse_op_param(kind, a.param);
    record.operation = a.op;
    record.parameter_name = a.param;
    if (takes_value(kind)) record.value = a.value;
    record.strength = a.strength;
    record.padding_mode = std::string(to_string(parse_padding_mode(a.pad)));
    record.target_token = TokenTarget::parse(a.tokens).str();
    record.apply_to_timesteps = IndexRange::parse(a.timesteps).str();
    record.apply_to_layers = IndexRange::parse(a.layers).str();
    record.renormalize = a.renormalize;
    record.apply_before_softmax = a.pre_softmax;
  }
  std::vector<VariationRecord> records{record};
  assign_variation_ids(records);

  const ToyDiT dit(model);
  GenerationResult result;
  try {
    result = generate(dit, settings, a.prompt, to_bend_operations(records[0]), TokenResolution::kStrict);
  } catch (const std::invalid_argument& e) {
    // Strict targeting and parameter checks surface as usage errors.
    throw ConfigError("", e.what());
  }
  const fs::path out(a.out);
  write_variation_media(result, records[0], settings.video, out);
  records[0].recorded_tokens = result.recorded_tokens;
  if (!result.attention.empty()) records[0].attention_index = "attn/" + records[0].variation_id + "/index.json";

  Manifest m;
  m.batch_name = "generate";
  m.records = records;
  write_manifest_file(m, out);
  std::cout << records[0].variation_id << " -> " << (out / records[0].filename).string() << "\n";
  return kExitOk;
}

SweepConfig load_with_seed(const std::string& path, const std::optional<std::uint64_t>& seed) {
  if (!fs::exists(path)) throw ConfigError("--config", "file '" + path + "' does not exist");
  SweepConfig cfg = load_config(path);
  cfg.generation.seed = resolve_seed(seed, cfg.generation.seed);
  return cfg;
}

int cmd_sweep(const std::string& config, const std::string& out, std::size_t jobs, bool dry_run,
              const std::optional<std::uint64_t>& seed) {
  const SweepConfig cfg = load_with_seed(config, seed);
  const auto start = std::chrono::steady_clock::now();
  const Manifest m = run_sweep(cfg, out, {jobs, dry_run});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::size_t failed = 0;
  for (const VariationRecord& r : m.records) failed += r.error ? 1 : 0;
  std::cout << m.records.size() << " records" << (dry_run ? " (dry run)" : "") << ", " << failed << " failed, "
            << secs << " s -> " << (fs::path(out) / "metadata.json").string() << "\n";
  return failed ? kExitRuntime : kExitOk;
}

int cmd_expand(const std::string& config, const std::string& out, const std::optional<std::uint64_t>& seed) {
  const SweepConfig cfg = load_with_seed(config, seed);
  const auto start = std::chrono::steady_clock::now();
  std::vector<VariationRecord> records = expand_variations(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::map<std::string, std::size_t> per_op;
  for (const VariationRecord& r : records) {
    per_op[r.baseline ? "baseline" : *r.operation + "/" + *r.parameter_name]++;
  }
  std::cout << records.size() << " records (" << cfg.prompts.size() << " prompts x " << cfg.seeds().size()
            << " seeds) in " << secs << " s\n";
  for (const auto& [k, n] : per_op) std::cout << "  " << k << ": " << n << "\n";
  if (!out.empty()) {
    std::sort(records.begin(), records.end(),
              [](const VariationRecord& a, const VariationRecord& b) { return a.variation_id < b.variation_id; });
    write_manifest_file({cfg.batch_name, cfg.echo, std::move(records)}, out);
  }
  return kExitOk;
}

int cmd_export_attn(const std::string& manifest_path, const std::string& id, const std::string& token,
                    const std::string& out) {
  const Manifest m = read_manifest(manifest_path);
  const auto it = std::find_if(m.records.begin(), m.records.end(),
                               [&](const VariationRecord& r) { return r.variation_id == id; });
  if (it == m.records.end()) throw ConfigError("--variation-id", "'" + id + "' is not in the manifest");
  if (!it->attention_index ||
      std::find(it->recorded_tokens.begin(), it->recorded_tokens.end(), token) == it->recorded_tokens.end()) {
    std::string list;
    for (const std::string& t : it->recorded_tokens) list += (list.empty() ? "" : ", ") + t;
    throw ConfigError("--token", "'" + token + "' was not recorded for " + id + " (recorded: " +
                                     (list.empty() ? "none" : list) + ")");
  }
  const fs::path volumes = fs::path(manifest_path).parent_path() / "attn" / id / "volumes.json";
  std::ifstream in(volumes, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + volumes.string());
  std::vector<AttentionRecord> records;
  for (AttentionRecord& r : attention_volumes_from_json(nlohmann::json::parse(in))) {
    if (r.token == token) records.push_back(std::move(r));
  }
  const std::vector<std::string> written = write_attention_video(records, out, false);
  std::cout << written.size() << " files -> " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-attention bending over a toy text-to-video diffusion transformer"};
  app.require_subcommand(1);
  std::string kernels_name;
  app.add_option("--kernels", kernels_name, "Force a kernel backend (scalar, avx2, neon)");

  GenerateArgs g;
  auto* gen = app.add_subcommand("generate", "Run one generation, optionally bent");
  gen->add_option("--prompt", g.prompt, "Prompt text")->required();
  gen->add_option("--seed", g.seed, "Noise seed");
  gen->add_option("--op", g.op, "Operation: " + valid_operations());
  gen->add_option("--param", g.param, "Operation parameter name");
  gen->add_option("--value", g.value, "Operation magnitude");
  gen->add_option("--strength", g.strength, "Blend strength in [0, 1]");
  gen->add_option("--pad", g.pad, "Padding mode: border, zeros, reflection");
  gen->add_option("--tokens", g.tokens, "ALL or comma-separated words");
  gen->add_option("--timesteps", g.timesteps, "ALL or lo-hi");
  gen->add_option("--layers", g.layers, "ALL or lo-hi");
  gen->add_flag("--pre-softmax", g.pre_softmax, "Bend logits before the softmax");
  gen->add_flag("--renormalize", g.renormalize, "Renormalize bent rows to sum to 1");
  gen->add_option("--out", g.out, "Output directory")->required();
  gen->add_option("--config", g.config, "Take model and video settings from a sweep config");
  gen->add_option("--blocks", g.blocks, "Transformer blocks");
  gen->add_option("--steps", g.steps, "Diffusion steps");
  gen->add_option("--cfg", g.cfg, "Guidance scale");
  gen->add_option("--frames", g.frames, "Output frames");
  gen->add_option("--height", g.height, "Output height");
  gen->add_option("--width", g.width, "Output width");
  gen->add_option("--fps", g.fps, "Output frame rate");

  std::string config, out;
  std::size_t jobs = 1;
  bool dry_run = false;
  std::optional<std::uint64_t> seed;
  auto* sweep = app.add_subcommand("sweep", "Run every variation of a sweep config");
  sweep->add_option("--config", config, "YAML or JSON sweep config")->required();
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Concurrent variations")->check(CLI::PositiveNumber);
  sweep->add_flag("--dry-run", dry_run, "Write the manifest without generating");
  sweep->add_option("--seed", seed, "Base seed");

  std::string expand_config, expand_out;
  std::optional<std::uint64_t> expand_seed;
  auto* expand = app.add_subcommand("expand", "Expand a sweep config and report record counts");
  expand->add_option("--config", expand_config, "YAML or JSON sweep config")->required();
  expand->add_option("--out", expand_out, "Also write metadata.json here");
  expand->add_option("--seed", expand_seed, "Base seed");

  std::string manifest, variation_id, token, export_out;
  auto* exp = app.add_subcommand("export-attn", "Re-emit recorded attention frames for one token");
  exp->add_option("--manifest", manifest, "metadata.json of a sweep")->required();
  exp->add_option("--variation-id", variation_id, "Variation id")->required();
  exp->add_option("--token", token, "Recorded token")->required();
  exp->add_option("--out", export_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!kernels_name.empty() && !kernels::select(kernels_name)) {
      throw ConfigError("--kernels", "backend '" + kernels_name + "' is not available");
    }
    if (*gen) return cmd_generate(g);
    if (*sweep) return cmd_sweep(config, out, jobs, dry_run, seed);
    if (*expand) return cmd_expand(expand_config, expand_out, expand_seed);
    if (*exp) return cmd_export_attn(manifest, variation_id, token, export_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
