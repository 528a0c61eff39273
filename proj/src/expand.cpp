#include <cstdio>
#include <set>

#include "attnbend/errors.hpp"
#include "attnbend/sweep.hpp"

namespace attnbend {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Canonical text of every resolved field; the id is its hash.
std::string identity_text(const VariationRecord& r) {
  nlohmann::json j = to_json(r);
  for (const char* k : {"variation_id", "filename", "attention_index", "recorded_tokens", "error"}) j.erase(k);
  return j.dump();
}

}  // namespace

std::vector<VariationRecord> expand_variations(const SweepConfig& config) {
  std::vector<VariationRecord> out;
  if (!config.variations_enabled) return out;

  const std::vector<std::uint64_t> seeds = config.seeds();
  for (std::size_t p = 0; p < config.prompts.size(); ++p) {
    for (std::uint64_t seed : seeds) {
      VariationRecord base;
      base.prompt = config.prompts[p];
      base.prompt_index = p;
      base.seed = seed;
      base.renormalize = config.renormalize;
      base.apply_before_softmax = config.apply_before_softmax;

      if (config.generate_baseline) {
        VariationRecord r = base;
        r.baseline = true;
        out.push_back(std::move(r));
      }
      for (const OperationSpec& spec : config.operations) {
        for (const std::optional<double>& magnitude : spec.magnitudes()) {
          for (const std::string& token : spec.target_token) {
            for (const std::string& timesteps : spec.apply_to_timesteps) {
              for (const std::string& layers : spec.apply_to_layers) {
                VariationRecord r = base;
                r.operation = spec.operation;
                r.parameter_name = spec.parameter_name;
                r.value = magnitude;
                r.strength = spec.strength;
                r.padding_mode = spec.padding_mode;
                r.target_token = TokenTarget::parse(token).str();
                r.apply_to_timesteps = IndexRange::parse(timesteps).str();
                r.apply_to_layers = IndexRange::parse(layers).str();
                out.push_back(std::move(r));
              }
            }
          }
        }
      }
    }
  }

  assign_variation_ids(out);
  return out;
}

void assign_variation_ids(std::vector<VariationRecord>& records) {
  std::set<std::string> used;
  for (VariationRecord& r : records) {
    const std::string text = identity_text(r);
    std::string id = hex64(fnv1a(text));
    // Duplicate specs resolve to identical fields; keep ids unique.
    for (std::size_t dup = 2; used.count(id); ++dup) id = hex64(fnv1a(text + "#" + std::to_string(dup)));
    used.insert(id);
    r.variation_id = id;
    r.filename = "frames/" + id + "/index.json";
  }
}

std::size_t expected_record_count(const SweepConfig& config) {
  if (!config.variations_enabled) return 0;
  std::size_t per_pair = config.generate_baseline ? 1 : 0;
  for (const OperationSpec& spec : config.operations) {
    per_pair += spec.magnitudes().size() * spec.target_token.size() * spec.apply_to_timesteps.size() *
                spec.apply_to_layers.size();
  }
  return per_pair * config.prompts.size() * config.seeds().size();
}

std::vector<BendOperation> to_bend_operations(const VariationRecord& record) {
  if (record.baseline || !record.operation) return {};
  BendOperation op;
  op.kind = parse_op_kind(*record.operation);
  op.param = parse_op_param(op.kind, record.parameter_name.value_or(""));
  op.value = record.value.value_or(0.0);
  op.strength = record.strength.value_or(1.0);
  op.padding = parse_padding_mode(record.padding_mode.value_or("border"));
  op.apply_before_softmax = record.apply_before_softmax;
  op.renormalize = record.renormalize;
  op.tokens = TokenTarget::parse(record.target_token.value_or("ALL"));
  op.timesteps = IndexRange::parse(record.apply_to_timesteps.value_or("ALL"));
  op.layers = IndexRange::parse(record.apply_to_layers.value_or("ALL"));
  return {op};
}

}  // namespace attnbend
