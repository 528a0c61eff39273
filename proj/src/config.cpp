#include <yaml-cpp/yaml.h>

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "attnbend/bend_ops.hpp"
#include "attnbend/bender.hpp"
#include "attnbend/errors.hpp"
#include "attnbend/sweep_config.hpp"

namespace attnbend {

using nlohmann::json;

std::vector<double> linspace(double lo, double hi, std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("linspace: steps must be >= 1");
  if (steps == 1) return {lo};
  std::vector<double> out(steps);
  const double step = (hi - lo) / static_cast<double>(steps - 1);
  for (std::size_t i = 0; i + 1 < steps; ++i) out[i] = lo + static_cast<double>(i) * step;
  out[steps - 1] = hi;
  return out;
}

std::vector<std::string> expand_template(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  std::string_view body = trim(text);
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']') {
    body = body.substr(1, body.size() - 2);
  } else {
    if (body.empty()) throw ConfigError("template", "prompt is empty");
    return {std::string(body)};
  }
  std::vector<std::string> prompts;
  std::size_t start = 0;
  while (true) {
    const std::size_t bar = body.find('|', start);
    const std::string_view part = trim(body.substr(start, bar == std::string_view::npos ? body.npos : bar - start));
    if (part.empty()) {
      throw ConfigError("template", "prompt " + std::to_string(prompts.size()) + " is empty");
    }
    prompts.emplace_back(part);
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return prompts;
}

std::vector<std::optional<double>> OperationSpec::magnitudes() const {
  if (!range) return {std::nullopt};
  std::vector<std::optional<double>> out;
  for (double v : linspace(range->first, range->second, steps.value_or(1))) out.emplace_back(v);
  return out;
}

std::vector<std::uint64_t> SweepConfig::seeds() const {
  if (explicit_seeds) return *explicit_seeds;
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < videos_per_variation; ++i) out.push_back(generation.seed + i);
  return out;
}

// --- YAML -> JSON ------------------------------------------------------------

namespace {

json scalar_to_json(const YAML::Node& node) {
  const std::string& s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  {
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && p == s.data() + s.size()) return v;
  }
  {
    std::istringstream is(s);
    is.imbue(std::locale::classic());
    double d = 0;
    if (is >> d && is.peek() == std::char_traits<char>::eof()) return d;
  }
  return s;
}

json node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(node_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = node_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

// Typed field access with the dotted path in every error.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

  bool has(const char* key) const { return node_.is_object() && node_.contains(key) && !node_.at(key).is_null(); }
  std::string child_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  Reader child(const char* key) const { return Reader(node_.at(key), child_path(key)); }
  const json& raw() const { return node_; }
  const std::string& path() const { return path_; }

  std::string str(const char* key, std::string fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_string()) throw ConfigError(child_path(key), "expected a string");
    return v.get<std::string>();
  }
  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number()) throw ConfigError(child_path(key), "expected a number");
    return v.get<double>();
  }
  std::uint64_t uinteger(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0 && !v.is_number_unsigned())) {
      throw ConfigError(child_path(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_boolean()) throw ConfigError(child_path(key), "expected true or false");
    return v.get<bool>();
  }
  std::vector<std::string> strings(const char* key, std::vector<std::string> fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(child_path(key), "expected a list");
    if (v.empty()) throw ConfigError(child_path(key), "list must not be empty");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) throw ConfigError(child_path(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

 private:
  const json& node_;
  std::string path_;
};

OperationSpec parse_operation(const Reader& r) {
  if (!r.raw().is_object()) throw ConfigError(r.path(), "expected a mapping");
  OperationSpec spec;
  spec.operation = r.str("operation", "");
  spec.parameter_name = r.str("parameter_name", "");
  if (spec.operation.empty()) throw ConfigError(r.child_path("operation"), "is required");
  OpKind kind;
  try {
    kind = parse_op_kind(spec.operation);
  } catch (const ConfigError& e) {
    throw ConfigError(r.child_path("operation"), e.message());
  }
  if (spec.parameter_name.empty()) throw ConfigError(r.child_path("parameter_name"), "is required");
  try {
    parse_op_param(kind, spec.parameter_name);
  } catch (const ConfigError& e) {
    throw ConfigError(r.child_path("parameter_name"), e.message());
  }

  const bool has_range = r.has("range");
  const bool has_steps = r.has("steps");
  if (has_range != has_steps) {
    throw ConfigError(r.child_path(has_range ? "steps" : "range"), "range and steps must be given together");
  }
  if (has_range) {
    if (!takes_value(kind)) throw ConfigError(r.child_path("range"), spec.operation + " takes no range");
    const json& range = r.raw().at("range");
    if (!range.is_array() || range.size() != 2 || !range[0].is_number() || !range[1].is_number()) {
      throw ConfigError(r.child_path("range"), "expected [lo, hi]");
    }
    spec.range = std::make_pair(range[0].get<double>(), range[1].get<double>());
    const json& steps = r.raw().at("steps");
    if (!steps.is_number_integer() || steps.get<long long>() < 1) {
      throw ConfigError(r.child_path("steps"), "expected an integer >= 1");
    }
    spec.steps = steps.get<std::size_t>();
  } else if (takes_value(kind)) {
    throw ConfigError(r.child_path("range"), spec.operation + " requires range and steps");
  }

  spec.target_token = r.strings("target_token", spec.target_token);
  spec.apply_to_timesteps = r.strings("apply_to_timesteps", spec.apply_to_timesteps);
  spec.apply_to_layers = r.strings("apply_to_layers", spec.apply_to_layers);
  spec.strength = r.number("strength", spec.strength);
  if (!(spec.strength >= 0.0 && spec.strength <= 1.0)) throw ConfigError(r.child_path("strength"), "must be in [0, 1]");
  spec.padding_mode = r.str("padding_mode", spec.padding_mode);

  auto checked = [&](const char* key, auto&& fn, const std::vector<std::string>& items) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      try {
        fn(items[i]);
      } catch (const ConfigError& e) {
        throw ConfigError(r.child_path(key) + "[" + std::to_string(i) + "]", e.message());
      }
    }
  };
  checked("target_token", [](const std::string& s) { TokenTarget::parse(s); }, spec.target_token);
  checked("apply_to_timesteps", [](const std::string& s) { IndexRange::parse(s); }, spec.apply_to_timesteps);
  checked("apply_to_layers", [](const std::string& s) { IndexRange::parse(s); }, spec.apply_to_layers);
  try {
    parse_padding_mode(spec.padding_mode);
  } catch (const ConfigError& e) {
    throw ConfigError(r.child_path("padding_mode"), e.message());
  }
  return spec;
}

}  // namespace

json yaml_to_json(std::string_view yaml_text) {
  try {
    return node_to_json(YAML::Load(std::string(yaml_text)));
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("YAML parse error: ") + e.what());
  }
}

SweepConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("", "configuration must be a mapping");
  const Reader root(doc, "");
  SweepConfig cfg;
  cfg.echo = doc;
  cfg.batch_name = root.str("batch_name", cfg.batch_name);

  cfg.template_text = root.str("template", "");
  if (cfg.template_text.empty()) throw ConfigError("template", "is required");
  cfg.prompts = expand_template(cfg.template_text);

  if (root.has("model_settings")) {
    const Reader m = root.child("model_settings");
    cfg.generation.seed = m.uinteger("seed", cfg.generation.seed);
    cfg.generation.num_timesteps = m.uinteger("steps", cfg.generation.num_timesteps);
    cfg.generation.cfg_scale = m.number("cfg_scale", cfg.generation.cfg_scale);
  }
  if (root.has("video_settings")) {
    const Reader v = root.child("video_settings");
    cfg.generation.video.fps = v.number("fps", cfg.generation.video.fps);
    cfg.generation.video.frames = v.uinteger("frames", cfg.generation.video.frames);
    cfg.generation.video.height = v.uinteger("height", cfg.generation.video.height);
    cfg.generation.video.width = v.uinteger("width", cfg.generation.video.width);
  }
  cfg.videos_per_variation = root.uinteger("videos_per_variation", cfg.videos_per_variation);
  if (cfg.videos_per_variation < 1) throw ConfigError("videos_per_variation", "must be >= 1");
  if (root.has("seeds")) {
    const json& s = doc.at("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds", "expected a non-empty list of integers");
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s[i].is_number_unsigned() && !(s[i].is_number_integer() && s[i].get<long long>() >= 0)) {
        throw ConfigError("seeds[" + std::to_string(i) + "]", "expected a non-negative integer");
      }
      seeds.push_back(s[i].get<std::uint64_t>());
    }
    cfg.explicit_seeds = std::move(seeds);
  }

  if (root.has("attention_bending_settings")) {
    cfg.apply_before_softmax = root.child("attention_bending_settings").boolean("apply_before_softmax", false);
  }

  if (root.has("toy_model")) {
    const Reader t = root.child("toy_model");
    ModelConfig& m = cfg.model;
    m.num_blocks = t.uinteger("num_blocks", m.num_blocks);
    m.model_dim = t.uinteger("model_dim", m.model_dim);
    m.num_heads = t.uinteger("num_heads", m.num_heads);
    m.text_dim = t.uinteger("text_dim", m.text_dim);
    m.mlp_hidden = t.uinteger("mlp_hidden", m.mlp_hidden);
    m.latent_frames = t.uinteger("latent_frames", m.latent_frames);
    m.latent_height = t.uinteger("latent_height", m.latent_height);
    m.latent_width = t.uinteger("latent_width", m.latent_width);
    m.latent_channels = t.uinteger("latent_channels", m.latent_channels);
    m.weight_seed = t.uinteger("weight_seed", m.weight_seed);
    try {
      m.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("toy_model", e.message());
    }
  }

  if (root.has("attention_bending_variations")) {
    const Reader v = root.child("attention_bending_variations");
    cfg.variations_enabled = v.boolean("enabled", true);
    cfg.generate_baseline = v.boolean("generate_baseline", true);
    cfg.renormalize = v.boolean("renormalize", false);
    cfg.generation.bend_unconditional = v.boolean("apply_to_guidance_2", false);
    if (v.has("operations")) {
      const json& ops = doc.at("attention_bending_variations").at("operations");
      if (!ops.is_array()) throw ConfigError(v.child_path("operations"), "expected a list");
      for (std::size_t i = 0; i < ops.size(); ++i) {
        cfg.operations.push_back(parse_operation(Reader(ops[i], v.child_path("operations") + "[" + std::to_string(i) + "]")));
      }
    }
  } else {
    cfg.variations_enabled = false;
  }

  cfg.generation.validate();
  return cfg;
}

SweepConfig parse_config_text(std::string_view text, ConfigFormat format) {
  if (format == ConfigFormat::kAuto) {
    std::size_t i = 0;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    format = (i < text.size() && text[i] == '{') ? ConfigFormat::kJson : ConfigFormat::kYaml;
  }
  if (format == ConfigFormat::kJson) {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError("", std::string("JSON parse error: ") + e.what());
    }
    return parse_config(doc);
  }
  return parse_config(yaml_to_json(text));
}

SweepConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const ConfigFormat format = path.extension() == ".json" ? ConfigFormat::kJson : ConfigFormat::kAuto;
  return parse_config_text(ss.str(), format);
}

}  // namespace attnbend
