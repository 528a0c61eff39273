#pragma once

// Interception of cross-attention maps: targeting, the reshape / transform /
// renormalize / flatten pipeline, and per-timestep attention recording.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnbend/bend_ops.hpp"
#include "attnbend/tensor.hpp"
#include "attnbend/toy_dit.hpp"

namespace attnbend {

enum class OpKind { kScale, kRotate, kTranslate, kFlip, kBlur, kSharpen, kAmplify };

enum class OpParam {
  kScaleFactor,
  kScaleX,
  kAngle,
  kTranslateX,
  kTranslateY,
  kFlipHorizontal,
  kFlipVertical,
  kSigma,
  kSharpenAmount,
  kAmplifyFactor,
};

OpKind parse_op_kind(std::string_view name);
// Rejects parameter names that do not belong to `kind`.
OpParam parse_op_param(OpKind kind, std::string_view name);
std::string_view to_string(OpKind kind);
std::string_view to_string(OpParam param);
std::string valid_operations();
std::string valid_parameters(OpKind kind);
// Flips take no magnitude.
bool takes_value(OpKind kind);

// "ALL" or an inclusive span "lo-hi".
struct IndexRange {
  bool all = true;
  std::size_t lo = 0;
  std::size_t hi = 0;

  static IndexRange parse(std::string_view text);
  // Throws when the span does not fit in [0, domain).
  void check(std::size_t domain, std::string_view what = "index") const;
  bool contains(std::size_t i) const { return all || (i >= lo && i <= hi); }
  std::vector<std::size_t> resolve(std::size_t domain) const;
  std::string str() const;
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

IndexRange parse_index_range(std::string_view text, std::size_t domain);

// "ALL" or a comma-separated word list.
struct TokenTarget {
  bool all = true;
  std::vector<std::string> words;

  static TokenTarget parse(std::string_view text);
  std::string str() const;
  friend bool operator==(const TokenTarget&, const TokenTarget&) = default;
};

// Every listed word must occur in the prompt.
std::vector<std::size_t> select_token_indices(std::span<const std::string> tokens, const TokenTarget& target);
// Listed words absent from the prompt are skipped.
std::vector<std::size_t> select_present_token_indices(std::span<const std::string> tokens, const TokenTarget& target);

enum class TokenResolution { kStrict, kIntersect };

struct BendOperation {
  OpKind kind = OpKind::kScale;
  OpParam param = OpParam::kScaleFactor;
  double value = 1.0;
  double strength = 1.0;
  PaddingMode padding = PaddingMode::kBorder;
  bool apply_before_softmax = false;
  bool renormalize = false;
  TokenTarget tokens;
  IndexRange timesteps;
  IndexRange layers;

  void validate() const;
  // True when the transform leaves every volume unchanged.
  bool is_identity() const;
};

struct LatentGrid {
  std::size_t frames = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  static LatentGrid of(const ModelConfig& cfg) { return {cfg.latent_frames, cfg.latent_height, cfg.latent_width}; }
  std::size_t size() const { return frames * height * width; }
};

// The per-frame transform of one token volume, before strength blending.
AttentionVolume transform_volume(const AttentionVolume& v, const BendOperation& op);

AttentionVolume column_volume(const Tensor& map, std::size_t column, const LatentGrid& grid);
void write_column(Tensor& map, std::size_t column, const AttentionVolume& v);

// Applies `op` to the given token columns of a query x key map.
Tensor bend_map(const Tensor& map, const BendOperation& op, const LatentGrid& grid,
                std::span<const std::size_t> token_columns);

// Divides every row by its sum; rejects rows summing to <= 1e-12.
Tensor renormalize_rows(const Tensor& map);

struct AttentionRecord {
  std::string token;
  std::size_t timestep = 0;
  AttentionVolume volume;
};

// Collects head-averaged post-bend maps from the conditional branch. One
// volume per recorded token per timestep, averaged over `layers`.
class AttentionRecorder {
 public:
  struct TokenColumn {
    std::string token;
    std::size_t column;
  };

  AttentionRecorder(std::vector<TokenColumn> tokens, LatentGrid grid, std::size_t num_layers,
                    std::size_t num_timesteps, std::vector<std::size_t> layers);

  void observe(const CrossAttentionSite& site, const Tensor& map);

  std::vector<AttentionRecord> records() const;
  // Head-averaged map at one site, or nullptr if nothing was observed there.
  const Tensor* site_map(std::size_t timestep, std::size_t layer) const;
  const std::vector<TokenColumn>& tokens() const { return tokens_; }

 private:
  struct Slot {
    Tensor sum;
    std::size_t heads = 0;
    Tensor mean;
  };

  Slot& slot(std::size_t timestep, std::size_t layer);
  const Slot& slot(std::size_t timestep, std::size_t layer) const;

  std::vector<TokenColumn> tokens_;
  LatentGrid grid_;
  std::size_t num_layers_;
  std::size_t num_timesteps_;
  std::vector<std::size_t> layers_;
  mutable std::vector<Slot> slots_;
};

// Builds the interception hook for one generation run. Targets are validated
// against the model depth and timestep count here; the hook itself does not
// throw for targeting reasons.
AttentionHook make_hook(const std::vector<BendOperation>& ops, const TextEncoding& text, const ModelConfig& cfg,
                        const GenerationSettings& settings, AttentionRecorder* recorder,
                        TokenResolution resolution = TokenResolution::kStrict);

// Key tokens plus explicit target words present in the prompt; every unique
// token when that is empty.
std::vector<std::string> default_recorded_tokens(const TextEncoding& text, const std::vector<BendOperation>& ops);
// Union of the ops' layer targets, or every layer without ops.
std::vector<std::size_t> default_recorded_layers(const std::vector<BendOperation>& ops, std::size_t num_layers);

struct GenerationResult {
  LatentVideo latent;
  RgbVideo video;
  std::vector<AttentionRecord> attention;
  std::vector<std::string> recorded_tokens;
};

GenerationResult generate(const ToyDiT& model, const GenerationSettings& settings, std::string_view prompt,
                          const std::vector<BendOperation>& ops,
                          TokenResolution resolution = TokenResolution::kStrict);

}  // namespace attnbend
