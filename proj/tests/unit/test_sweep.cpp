#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "../oracles/oracles.hpp"
#include "attnbend/media.hpp"
#include "attnbend/sweep.hpp"

using namespace attnbend;
namespace fs = std::filesystem;

namespace {

std::string source_path(const char* rel) { return std::string(ATTNBEND_SOURCE_DIR) + "/" + rel; }

const char* kTinySweep = R"(
batch_name: tiny
template: "[a red (rose) in a vase | a white (horse) in a (field)]"
videos_per_variation: 2
model_settings: {seed: 41, steps: 3, cfg_scale: 4.5}
video_settings: {fps: 8, frames: 2, height: 6, width: 8}
toy_model: {num_blocks: 3, model_dim: 8, num_heads: 2, text_dim: 4, mlp_hidden: 8,
            latent_frames: 2, latent_height: 3, latent_width: 4, latent_channels: 2}
attention_bending_variations:
  enabled: true
  generate_baseline: true
  renormalize: true
  operations:
  - operation: scale
    parameter_name: scale_factor
    range: [0.5, 2.0]
    steps: 2
    target_token: ["ALL", "rose, horse"]
    apply_to_layers: ["0-1", "ALL"]
  - operation: flip
    parameter_name: flip_vertical
    apply_to_timesteps: ["1-2"]
)";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("attnbend_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> contents for every regular file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

std::string random_range(std::mt19937_64& gen, std::size_t domain) {
  std::uniform_int_distribution<std::size_t> d(0, domain - 1);
  std::size_t a = d(gen), b = d(gen);
  if (a > b) std::swap(a, b);
  return std::to_string(a) + "-" + std::to_string(b);
}

}  // namespace

TEST_CASE("reproduction schema expands to 4560 records") {
  const auto cfg = load_config(source_path("configs/comprehensive_sweep.yaml"));
  const auto records = expand_variations(cfg);
  CHECK(records.size() == 4560);
  CHECK(expected_record_count(cfg) == 4560);
  CHECK(oracle::count_records(cfg) == 4560);

  std::map<std::pair<std::size_t, std::uint64_t>, std::size_t> per_pair;
  std::set<std::string> ids;
  std::size_t baselines = 0;
  for (const auto& r : records) {
    ++per_pair[{r.prompt_index, r.seed}];
    ids.insert(r.variation_id);
    if (r.baseline) {
      ++baselines;
      CHECK_FALSE(r.operation.has_value());
      CHECK_FALSE(r.value.has_value());
    }
    CHECK(r.filename == "frames/" + r.variation_id + "/index.json");
  }
  CHECK(per_pair.size() == 15);
  for (const auto& [key, n] : per_pair) CHECK(n == 304);
  CHECK(baselines == 15);
  CHECK(ids.size() == records.size());
}

TEST_CASE("scale sub-schema expands to 192 per prompt and seed") {
  const auto cfg = load_config(source_path("configs/scale_sweep.yaml"));
  const auto records = expand_variations(cfg);
  CHECK(records.size() == 192 * cfg.prompts.size() * cfg.seeds().size());
  std::map<std::size_t, std::size_t> per_prompt;
  for (const auto& r : records) ++per_prompt[r.prompt_index];
  for (const auto& [p, n] : per_prompt) CHECK(n == 192);
}

TEST_CASE("expansion order and gating") {
  const auto cfg = parse_config_text(kTinySweep);
  const auto records = expand_variations(cfg);
  // Per pair: baseline + 2 x 2 x 1 x 2 scale + 1 flip.
  REQUIRE(records.size() == 2 * 2 * 10);
  CHECK(records[0].baseline);
  CHECK(records[0].prompt_index == 0);
  CHECK(records[0].seed == 41);
  CHECK(records[1].value == 0.5);
  CHECK(records[1].target_token == "ALL");
  CHECK(records[1].apply_to_layers == "0-1");
  CHECK(records[2].apply_to_layers == "ALL");
  CHECK(records[3].target_token == "rose, horse");
  CHECK(records[5].value == 2.0);
  CHECK(records[9].operation == "flip");
  CHECK_FALSE(records[9].value.has_value());
  CHECK(records[9].apply_to_timesteps == "1-2");
  CHECK(records[10].seed == 42);
  CHECK(records[20].prompt_index == 1);
  CHECK(records[1].renormalize);

  CHECK(expand_variations(cfg) == records);

  auto off = cfg;
  off.variations_enabled = false;
  CHECK(expand_variations(off).empty());
  CHECK(expected_record_count(off) == 0);
}

TEST_CASE("variation ids hash resolved content") {
  const auto cfg = parse_config_text(kTinySweep);
  auto a = expand_variations(cfg);
  // Reordering operations keeps each record's id.
  auto swapped = cfg;
  std::swap(swapped.operations[0], swapped.operations[1]);
  std::map<std::string, std::string> by_content;
  for (const auto& r : a) by_content[to_json(r).dump()] = r.variation_id;
  for (const auto& r : expand_variations(swapped)) CHECK(by_content.at(to_json(r).dump()) == r.variation_id);

  std::vector<VariationRecord> dup{a[1], a[1]};
  assign_variation_ids(dup);
  CHECK(dup[0].variation_id != dup[1].variation_id);
}

TEST_CASE("record count matches the nested-loop counter on random configs") {
  std::mt19937_64 gen(31);
  std::uniform_int_distribution<int> small(1, 4);
  std::bernoulli_distribution coin(0.5);
  const char* kinds[][2] = {{"scale", "scale_factor"}, {"rotate", "angle"}, {"flip", "flip_horizontal"},
                            {"blur", "sigma"},         {"amplify", "amplify_factor"}};
  for (int trial = 0; trial < 100; ++trial) {
    nlohmann::json doc;
    std::string tmpl = "[";
    const int prompts = small(gen);
    for (int p = 0; p < prompts; ++p) tmpl += (p ? " | " : "") + std::string("a rose number ") + std::to_string(p);
    doc["template"] = tmpl + "]";
    doc["videos_per_variation"] = small(gen);
    doc["attention_bending_variations"]["enabled"] = trial % 10 != 0;
    doc["attention_bending_variations"]["generate_baseline"] = coin(gen);
    auto& ops = doc["attention_bending_variations"]["operations"];
    ops = nlohmann::json::array();
    const int nops = small(gen) - 1;
    for (int o = 0; o < nops; ++o) {
      const auto* k = kinds[std::uniform_int_distribution<int>(0, 4)(gen)];
      nlohmann::json op{{"operation", k[0]}, {"parameter_name", k[1]}};
      if (std::string(k[0]) != "flip") {
        op["range"] = {0.5, 1.5};
        op["steps"] = small(gen);
      }
      if (coin(gen)) {
        op["target_token"] = nlohmann::json::array();
        for (int i = small(gen); i > 0; --i) op["target_token"].push_back(i % 2 ? "ALL" : "rose");
      }
      if (coin(gen)) {
        op["apply_to_timesteps"] = nlohmann::json::array();
        for (int i = small(gen); i > 0; --i) op["apply_to_timesteps"].push_back(random_range(gen, 10));
      }
      if (coin(gen)) {
        op["apply_to_layers"] = nlohmann::json::array();
        for (int i = small(gen); i > 0; --i) op["apply_to_layers"].push_back(random_range(gen, 6));
      }
      ops.push_back(op);
    }
    const auto cfg = parse_config(doc);
    CAPTURE(doc.dump());
    const std::size_t expected = oracle::count_records(cfg);
    CHECK(expand_variations(cfg).size() == expected);
    CHECK(expected_record_count(cfg) == expected);
  }
}

TEST_CASE("manifest round trip") {
  const auto cfg = parse_config_text(kTinySweep);
  Manifest m{cfg.batch_name, cfg.echo, expand_variations(cfg)};
  m.records[3].value = 0.1 + 0.2;  // not exactly representable in short decimal
  m.records[4].error = "boom";
  m.records[5].recorded_tokens = {"rose", "horse"};
  m.records[5].attention_index = "attn/x/index.json";
  const std::string text = serialize_manifest(m);
  CHECK(manifest_from_json(nlohmann::json::parse(text)) == m);
  CHECK(serialize_manifest(manifest_from_json(nlohmann::json::parse(text))) == text);
  const auto j = nlohmann::json::parse(text);
  CHECK(j.contains("batch_name"));
  CHECK(j.contains("config_echo"));
  CHECK(j["records"][0]["operation"].is_null());
}

TEST_CASE("run_sweep determinism, file coverage and baseline equivalence") {
  const auto cfg = parse_config_text(kTinySweep);
  const fs::path one = scratch("jobs1"), four = scratch("jobs4");
  const Manifest m1 = run_sweep(cfg, one, {1, false});
  const Manifest m4 = run_sweep(cfg, four, {4, false});
  CHECK(m1 == m4);
  const auto t1 = tree(one);
  CHECK(t1 == tree(four));

  // Rerunning into the same directory reproduces every byte.
  run_sweep(cfg, one, {3, false});
  CHECK(tree(one) == t1);

  REQUIRE(std::is_sorted(m1.records.begin(), m1.records.end(),
                         [](const auto& a, const auto& b) { return a.variation_id < b.variation_id; }));

  // Every file belongs to exactly one record and every referenced index exists.
  std::set<std::string> owned;
  for (const auto& r : m1.records) {
    CHECK_FALSE(r.error.has_value());
    REQUIRE(fs::exists(one / r.filename));
    const auto index = nlohmann::json::parse(slurp(one / r.filename));
    CHECK(index["frames"] == cfg.generation.video.frames);
    for (const auto& f : index["files"]) owned.insert("frames/" + r.variation_id + "/" + f.get<std::string>());
    owned.insert(r.filename);
    REQUIRE(r.attention_index.has_value());
    const auto attn = nlohmann::json::parse(slurp(one / *r.attention_index));
    CHECK(attn["tokens"].size() == r.recorded_tokens.size());
    for (const auto& tok : attn["tokens"]) {
      CHECK(tok["timesteps"] == cfg.generation.num_timesteps);
      for (const auto& f : tok["files"]) owned.insert("attn/" + r.variation_id + "/" + f.get<std::string>());
    }
    owned.insert(*r.attention_index);
    owned.insert("attn/" + r.variation_id + "/volumes.json");
  }
  owned.insert("metadata.json");
  std::set<std::string> on_disk;
  for (const auto& [path, _] : t1) on_disk.insert(path);
  CHECK(owned == on_disk);

  // The sweep's baseline media equals a direct generation.
  const auto base = std::find_if(m1.records.begin(), m1.records.end(),
                                 [](const auto& r) { return r.baseline && r.prompt_index == 1 && r.seed == 42; });
  REQUIRE(base != m1.records.end());
  GenerationSettings settings = cfg.generation;
  settings.seed = 42;
  const auto direct = generate(ToyDiT(cfg.model), settings, cfg.prompts[1], {});
  const fs::path solo = scratch("solo");
  write_variation_media(direct, *base, settings.video, solo);
  for (const auto& [path, bytes] : tree(solo)) CHECK(t1.at(path) == bytes);

  fs::remove_all(one);
  fs::remove_all(four);
  fs::remove_all(solo);
}

TEST_CASE("a failing variation is recorded and the sweep continues") {
  const auto cfg = parse_config_text(kTinySweep);
  const fs::path out = scratch("failing");
  fs::create_directories(out);
  std::ofstream(out / "attn") << "not a directory";
  const Manifest m = run_sweep(cfg, out, {2, false});
  CHECK(m.records.size() == 40);
  for (const auto& r : m.records) CHECK(r.error.has_value());
  CHECK(fs::exists(out / "metadata.json"));
  CHECK(read_manifest(out / "metadata.json") == m);
  fs::remove_all(out);
}

TEST_CASE("dry run writes only the manifest") {
  const auto cfg = load_config(source_path("configs/comprehensive_sweep.yaml"));
  const fs::path out = scratch("dry");
  const Manifest m = run_sweep(cfg, out, {1, true});
  CHECK(m.records.size() == 4560);
  CHECK(tree(out).size() == 1);
  CHECK(read_manifest(out / "metadata.json") == m);
  fs::remove_all(out);
}
