#include "attnbend/bender.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "attnbend/errors.hpp"
#include "attnbend/kernels.hpp"

namespace attnbend {

namespace {

struct ParamInfo {
  OpParam param;
  OpKind kind;
  std::string_view name;
};

constexpr std::array<std::pair<OpKind, std::string_view>, 7> kKinds{{
    {OpKind::kScale, "scale"},
    {OpKind::kRotate, "rotate"},
    {OpKind::kTranslate, "translate"},
    {OpKind::kFlip, "flip"},
    {OpKind::kBlur, "blur"},
    {OpKind::kSharpen, "sharpen"},
    {OpKind::kAmplify, "amplify"},
}};

constexpr std::array<ParamInfo, 10> kParams{{
    {OpParam::kScaleFactor, OpKind::kScale, "scale_factor"},
    {OpParam::kScaleX, OpKind::kScale, "scale_x"},
    {OpParam::kAngle, OpKind::kRotate, "angle"},
    {OpParam::kTranslateX, OpKind::kTranslate, "translate_x"},
    {OpParam::kTranslateY, OpKind::kTranslate, "translate_y"},
    {OpParam::kFlipHorizontal, OpKind::kFlip, "flip_horizontal"},
    {OpParam::kFlipVertical, OpKind::kFlip, "flip_vertical"},
    {OpParam::kSigma, OpKind::kBlur, "sigma"},
    {OpParam::kSharpenAmount, OpKind::kSharpen, "sharpen_amount"},
    {OpParam::kAmplifyFactor, OpKind::kAmplify, "amplify_factor"},
}};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_all(std::string_view s) {
  s = trim(s);
  if (s.size() != 3) return false;
  return std::tolower(static_cast<unsigned char>(s[0])) == 'a' && std::tolower(static_cast<unsigned char>(s[1])) == 'l' &&
         std::tolower(static_cast<unsigned char>(s[2])) == 'l';
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

OpKind parse_op_kind(std::string_view name) {
  for (const auto& [kind, n] : kKinds) {
    if (n == name) return kind;
  }
  throw ConfigError("operation", "unknown operation '" + std::string(name) + "' (valid: " + valid_operations() + ")");
}

OpParam parse_op_param(OpKind kind, std::string_view name) {
  for (const ParamInfo& p : kParams) {
    if (p.name == name && p.kind == kind) return p.param;
  }
  throw ConfigError("parameter_name", "'" + std::string(name) + "' is not a parameter of " +
                                          std::string(to_string(kind)) + " (valid: " + valid_parameters(kind) + ")");
}

std::string_view to_string(OpKind kind) {
  for (const auto& [k, n] : kKinds) {
    if (k == kind) return n;
  }
  return "?";
}

std::string_view to_string(OpParam param) {
  for (const ParamInfo& p : kParams) {
    if (p.param == param) return p.name;
  }
  return "?";
}

std::string valid_operations() {
  std::string out;
  for (const auto& [k, n] : kKinds) out += (out.empty() ? "" : ", ") + std::string(n);
  return out;
}

std::string valid_parameters(OpKind kind) {
  std::string out;
  for (const ParamInfo& p : kParams) {
    if (p.kind == kind) out += (out.empty() ? "" : ", ") + std::string(p.name);
  }
  return out;
}

bool takes_value(OpKind kind) { return kind != OpKind::kFlip; }

// --- targeting ---------------------------------------------------------------

IndexRange IndexRange::parse(std::string_view text) {
  const std::string_view s = trim(text);
  if (is_all(s)) return IndexRange{};
  const std::string quoted = "'" + std::string(text) + "'";
  const std::size_t dash = s.find('-');
  if (dash == std::string_view::npos) {
    throw ConfigError("index range " + quoted + ": expected \"ALL\" or \"lo-hi\"");
  }
  auto number = [&](std::string_view part, std::size_t offset) {
    part = trim(part);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size()) {
      throw ConfigError("index range " + quoted + ": expected a non-negative integer at position " +
                        std::to_string(offset));
    }
    return value;
  };
  IndexRange r;
  r.all = false;
  r.lo = number(s.substr(0, dash), 0);
  r.hi = number(s.substr(dash + 1), dash + 1);
  if (r.lo > r.hi) {
    throw ConfigError("index range " + quoted + ": lower bound " + std::to_string(r.lo) + " exceeds upper bound " +
                      std::to_string(r.hi));
  }
  return r;
}

void IndexRange::check(std::size_t domain, std::string_view what) const {
  if (!all && hi >= domain) {
    throw ConfigError(std::string(what) + " range '" + str() + "': upper bound " + std::to_string(hi) +
                      " is outside [0, " + std::to_string(domain) + ")");
  }
}

std::vector<std::size_t> IndexRange::resolve(std::size_t domain) const {
  check(domain);
  std::vector<std::size_t> out;
  const std::size_t first = all ? 0 : lo;
  const std::size_t last = all ? domain - 1 : hi;
  for (std::size_t i = first; domain > 0 && i <= last; ++i) out.push_back(i);
  return out;
}

std::string IndexRange::str() const { return all ? "ALL" : std::to_string(lo) + "-" + std::to_string(hi); }

IndexRange parse_index_range(std::string_view text, std::size_t domain) {
  IndexRange r = IndexRange::parse(text);
  r.check(domain);
  return r;
}

TokenTarget TokenTarget::parse(std::string_view text) {
  if (is_all(text)) return TokenTarget{};
  TokenTarget t;
  t.all = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string word = lower(trim(text.substr(start, comma - start)));
    if (!word.empty() && std::find(t.words.begin(), t.words.end(), word) == t.words.end()) t.words.push_back(word);
    start = comma + 1;
  }
  if (t.words.empty()) throw ConfigError("target_token '" + std::string(text) + "': no words listed");
  return t;
}

std::string TokenTarget::str() const {
  if (all) return "ALL";
  std::string out;
  for (const std::string& w : words) out += (out.empty() ? "" : ", ") + w;
  return out;
}

std::vector<std::size_t> select_present_token_indices(std::span<const std::string> tokens, const TokenTarget& target) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (target.all || std::find(target.words.begin(), target.words.end(), tokens[i]) != target.words.end()) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> select_token_indices(std::span<const std::string> tokens, const TokenTarget& target) {
  for (const std::string& w : target.words) {
    if (std::find(tokens.begin(), tokens.end(), w) == tokens.end()) {
      throw ConfigError("target_token", "word '" + w + "' does not occur in the prompt");
    }
  }
  return select_present_token_indices(tokens, target);
}

// --- operations --------------------------------------------------------------

void BendOperation::validate() const {
  const std::string where = std::string(to_string(kind)) + "/" + std::string(to_string(param));
  if (parse_op_param(kind, to_string(param)) != param) throw ConfigError(where, "parameter mismatch");
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError(where, "strength must be in [0, 1]");
  if (!std::isfinite(value)) throw ConfigError(where, "value must be finite");
  switch (param) {
    case OpParam::kScaleFactor:
    case OpParam::kScaleX:
      if (!(value > 0.0)) throw ConfigError(where, "scale factor must be > 0");
      break;
    case OpParam::kSigma:
      if (value < 0.0) throw ConfigError(where, "sigma must be >= 0");
      break;
    case OpParam::kSharpenAmount:
      if (value < 0.0) throw ConfigError(where, "sharpen amount must be >= 0");
      break;
    case OpParam::kAmplifyFactor:
      if (value < 0.0) throw ConfigError(where, "amplify factor must be >= 0");
      break;
    default:
      break;
  }
}

bool BendOperation::is_identity() const {
  if (strength == 0.0) return true;
  switch (param) {
    case OpParam::kScaleFactor:
    case OpParam::kScaleX:
    case OpParam::kAmplifyFactor:
      return value == 1.0;
    case OpParam::kAngle:
      return std::fmod(value, 360.0) == 0.0;
    case OpParam::kTranslateX:
    case OpParam::kTranslateY:
      return value == 0.0;
    case OpParam::kSigma:
      return value < kMinBlurSigma;
    case OpParam::kSharpenAmount:
      return value < kMinSharpenAmount;
    case OpParam::kFlipHorizontal:
    case OpParam::kFlipVertical:
      return false;
  }
  return false;
}

AttentionVolume transform_volume(const AttentionVolume& v, const BendOperation& op) {
  switch (op.param) {
    case OpParam::kScaleFactor: return apply_scale(v, op.value, op.padding);
    case OpParam::kScaleX: return apply_scale_xy(v, op.value, 1.0, op.padding);
    case OpParam::kAngle: return apply_rotate(v, op.value, op.padding);
    case OpParam::kTranslateX: return apply_translate(v, op.value, 0.0, op.padding);
    case OpParam::kTranslateY: return apply_translate(v, 0.0, op.value, op.padding);
    case OpParam::kFlipHorizontal: return apply_flip(v, FlipAxis::kHorizontal);
    case OpParam::kFlipVertical: return apply_flip(v, FlipAxis::kVertical);
    case OpParam::kSigma: return apply_blur(v, op.value, op.padding);
    case OpParam::kSharpenAmount: return apply_sharpen(v, op.value, op.padding);
    case OpParam::kAmplifyFactor: return apply_amplify(v, op.value);
  }
  return v;
}

AttentionVolume column_volume(const Tensor& map, std::size_t column, const LatentGrid& grid) {
  AttentionVolume v(grid.frames, grid.height, grid.width);
  for (std::size_t q = 0; q < map.rows(); ++q) v.data[q] = map.at(q, column);
  return v;
}

void write_column(Tensor& map, std::size_t column, const AttentionVolume& v) {
  for (std::size_t q = 0; q < map.rows(); ++q) map.at(q, column) = v.data[q];
}

Tensor bend_map(const Tensor& map, const BendOperation& op, const LatentGrid& grid,
                std::span<const std::size_t> token_columns) {
  if (map.rank() != 2 || map.rows() != grid.size()) {
    throw ShapeError("bend_map: " + std::to_string(map.rows()) + " queries do not factor as " +
                     std::to_string(grid.frames) + "x" + std::to_string(grid.height) + "x" +
                     std::to_string(grid.width));
  }
  if (op.is_identity() || token_columns.empty()) return map;

  Tensor out = map;
  for (std::size_t column : token_columns) {
    if (column >= map.cols()) throw ShapeError("bend_map: token column out of range");
    const AttentionVolume original = column_volume(map, column, grid);  // reshape
    const AttentionVolume bent = transform_volume(original, op);         // transform
    write_column(out, column, blend(original, bent, op.strength));       // flatten
  }
  // Softmax renormalizes pre-softmax edits on its own.
  if (op.renormalize && !op.apply_before_softmax) out = renormalize_rows(out);
  return out;
}

Tensor renormalize_rows(const Tensor& map) {
  Tensor out = map;
  const std::size_t n = out.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.row(r).data();
    const double total = kernels::sum(row, n);
    if (!(total > 1e-12)) {
      throw std::domain_error("renormalize_rows: row " + std::to_string(r) + " sums to " + std::to_string(total) +
                              "; cannot form a distribution");
    }
    kernels::scale(1.0 / total, row, n);
  }
  return out;
}

// --- recording ---------------------------------------------------------------

AttentionRecorder::AttentionRecorder(std::vector<TokenColumn> tokens, LatentGrid grid, std::size_t num_layers,
                                     std::size_t num_timesteps, std::vector<std::size_t> layers)
    : tokens_(std::move(tokens)),
      grid_(grid),
      num_layers_(num_layers),
      num_timesteps_(num_timesteps),
      layers_(std::move(layers)),
      slots_(num_layers * num_timesteps) {}

AttentionRecorder::Slot& AttentionRecorder::slot(std::size_t timestep, std::size_t layer) {
  return slots_.at(timestep * num_layers_ + layer);
}

const AttentionRecorder::Slot& AttentionRecorder::slot(std::size_t timestep, std::size_t layer) const {
  return slots_.at(timestep * num_layers_ + layer);
}

void AttentionRecorder::observe(const CrossAttentionSite& site, const Tensor& map) {
  if (!site.conditional) return;
  Slot& s = slot(site.timestep_index, site.layer_index);
  if (s.heads == 0) {
    s.sum = map;
  } else {
    kernels::axpy(1.0, map.data().data(), s.sum.data().data(), s.sum.size());
  }
  ++s.heads;
  s.mean = Tensor();
}

const Tensor* AttentionRecorder::site_map(std::size_t timestep, std::size_t layer) const {
  Slot& s = slots_.at(timestep * num_layers_ + layer);
  if (s.heads == 0) return nullptr;
  if (s.mean.size() == 0) s.mean = scaled(s.sum, 1.0 / static_cast<double>(s.heads));
  return &s.mean;
}

std::vector<AttentionRecord> AttentionRecorder::records() const {
  std::vector<AttentionRecord> out;
  for (const TokenColumn& tc : tokens_) {
    for (std::size_t t = 0; t < num_timesteps_; ++t) {
      AttentionVolume acc(grid_.frames, grid_.height, grid_.width);
      std::size_t count = 0;
      for (std::size_t layer : layers_) {
        const Tensor* m = site_map(t, layer);
        if (!m) continue;
        for (std::size_t q = 0; q < m->rows(); ++q) acc.data[q] += m->at(q, tc.column);
        ++count;
      }
      if (count == 0) continue;
      if (count > 1) kernels::scale(1.0 / static_cast<double>(count), acc.data.data(), acc.data.size());
      out.push_back({tc.token, t, std::move(acc)});
    }
  }
  return out;
}

// --- hook --------------------------------------------------------------------

namespace {

struct PreparedOp {
  BendOperation op;
  std::vector<std::size_t> columns;
  // Columns in the guidance branch's padding-token encoding.
  std::vector<std::size_t> uncond_columns;
};

}  // namespace

AttentionHook make_hook(const std::vector<BendOperation>& ops, const TextEncoding& text, const ModelConfig& cfg,
                        const GenerationSettings& settings, AttentionRecorder* recorder, TokenResolution resolution) {
  const TextEncoding uncond = TextEncoding::unconditional(cfg);
  auto prepared = std::make_shared<std::vector<PreparedOp>>();
  for (const BendOperation& op : ops) {
    op.validate();
    op.layers.check(cfg.num_blocks, "layer");
    op.timesteps.check(settings.num_timesteps, "timestep");
    std::vector<std::size_t> cols = resolution == TokenResolution::kStrict
                                        ? select_token_indices(text.tokens, op.tokens)
                                        : select_present_token_indices(text.tokens, op.tokens);
    prepared->push_back({op, std::move(cols), select_present_token_indices(uncond.tokens, op.tokens)});
  }
  const LatentGrid grid = LatentGrid::of(cfg);
  const bool bend_uncond = settings.bend_unconditional;

  return [prepared, grid, recorder, bend_uncond](HookStage stage, Tensor map,
                                                 const CrossAttentionSite& site) -> Tensor {
    const bool pre = stage == HookStage::kPreSoftmax;
    if (site.conditional || bend_uncond) {
      for (const PreparedOp& p : *prepared) {
        if (p.op.apply_before_softmax != pre) continue;
        if (!p.op.layers.contains(site.layer_index) || !p.op.timesteps.contains(site.timestep_index)) continue;
        map = bend_map(map, p.op, grid, site.conditional ? p.columns : p.uncond_columns);
      }
    }
    if (!pre && recorder) recorder->observe(site, map);
    return map;
  };
}

std::vector<std::string> default_recorded_tokens(const TextEncoding& text, const std::vector<BendOperation>& ops) {
  std::vector<std::string> out;
  auto add_word = [&](const std::string& w) {
    if (std::find(text.tokens.begin(), text.tokens.end(), w) != text.tokens.end() &&
        std::find(out.begin(), out.end(), w) == out.end()) {
      out.push_back(w);
    }
  };
  for (const std::string& w : text.key_tokens) add_word(w);
  for (const BendOperation& op : ops) {
    for (const std::string& w : op.tokens.words) add_word(w);
  }
  if (out.empty()) {
    for (const std::string& w : text.tokens) add_word(w);
  }
  return out;
}

std::vector<std::size_t> default_recorded_layers(const std::vector<BendOperation>& ops, std::size_t num_layers) {
  std::vector<std::size_t> out;
  for (std::size_t layer = 0; layer < num_layers; ++layer) {
    const bool targeted = ops.empty() || std::any_of(ops.begin(), ops.end(), [&](const BendOperation& op) {
                            return op.layers.contains(layer);
                          });
    if (targeted) out.push_back(layer);
  }
  return out;
}

GenerationResult generate(const ToyDiT& model, const GenerationSettings& settings, std::string_view prompt,
                          const std::vector<BendOperation>& ops, TokenResolution resolution) {
  const ModelConfig& cfg = model.config();
  const TextEncoding text = encode_text(prompt, cfg);

  GenerationResult result;
  result.recorded_tokens = default_recorded_tokens(text, ops);
  std::vector<AttentionRecorder::TokenColumn> columns;
  for (const std::string& w : result.recorded_tokens) {
    // A repeated word is recorded at its first occurrence.
    const auto it = std::find(text.tokens.begin(), text.tokens.end(), w);
    columns.push_back({w, static_cast<std::size_t>(it - text.tokens.begin())});
  }
  AttentionRecorder recorder(std::move(columns), LatentGrid::of(cfg), cfg.num_blocks, settings.num_timesteps,
                             default_recorded_layers(ops, cfg.num_blocks));
  const AttentionHook hook = make_hook(ops, text, cfg, settings, &recorder, resolution);

  result.latent = denoise(model, settings, text, hook);
  result.video = decode_latent(result.latent, cfg, settings.video);
  result.attention = recorder.records();
  return result;
}

}  // namespace attnbend
