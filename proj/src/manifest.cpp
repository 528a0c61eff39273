#include <fstream>
#include <sstream>

#include "attnbend/errors.hpp"
#include "attnbend/sweep.hpp"

namespace attnbend {

using nlohmann::json;

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

json to_json(const VariationRecord& r) {
  return json{
      {"variation_id", r.variation_id},
      {"filename", r.filename},
      {"prompt", r.prompt},
      {"prompt_index", r.prompt_index},
      {"seed", r.seed},
      {"baseline", r.baseline},
      {"operation", optional_json(r.operation)},
      {"parameter_name", optional_json(r.parameter_name)},
      {"value", optional_json(r.value)},
      {"strength", optional_json(r.strength)},
      {"padding_mode", optional_json(r.padding_mode)},
      {"target_token", optional_json(r.target_token)},
      {"apply_to_timesteps", optional_json(r.apply_to_timesteps)},
      {"apply_to_layers", optional_json(r.apply_to_layers)},
      {"renormalize", r.renormalize},
      {"apply_before_softmax", r.apply_before_softmax},
      {"attention_index", optional_json(r.attention_index)},
      {"recorded_tokens", r.recorded_tokens},
      {"error", optional_json(r.error)},
  };
}

VariationRecord record_from_json(const json& j) {
  VariationRecord r;
  r.variation_id = j.at("variation_id").get<std::string>();
  r.filename = j.at("filename").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.prompt_index = j.at("prompt_index").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.baseline = j.at("baseline").get<bool>();
  r.operation = optional_field<std::string>(j, "operation");
  r.parameter_name = optional_field<std::string>(j, "parameter_name");
  r.value = optional_field<double>(j, "value");
  r.strength = optional_field<double>(j, "strength");
  r.padding_mode = optional_field<std::string>(j, "padding_mode");
  r.target_token = optional_field<std::string>(j, "target_token");
  r.apply_to_timesteps = optional_field<std::string>(j, "apply_to_timesteps");
  r.apply_to_layers = optional_field<std::string>(j, "apply_to_layers");
  r.renormalize = j.at("renormalize").get<bool>();
  r.apply_before_softmax = j.at("apply_before_softmax").get<bool>();
  r.attention_index = optional_field<std::string>(j, "attention_index");
  if (j.contains("recorded_tokens")) r.recorded_tokens = j.at("recorded_tokens").get<std::vector<std::string>>();
  r.error = optional_field<std::string>(j, "error");
  return r;
}

json to_json(const Manifest& m) {
  json records = json::array();
  for (const VariationRecord& r : m.records) records.push_back(to_json(r));
  return json{{"batch_name", m.batch_name}, {"config_echo", m.config_echo}, {"records", records}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  m.batch_name = j.at("batch_name").get<std::string>();
  m.config_echo = j.value("config_echo", json());
  for (const json& r : j.at("records")) m.records.push_back(record_from_json(r));
  return m;
}

std::string serialize_manifest(const Manifest& manifest) { return to_json(manifest).dump(2) + "\n"; }

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--manifest", "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return manifest_from_json(json::parse(ss.str()));
  } catch (const json::exception& e) {
    throw ConfigError("--manifest", std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace attnbend
