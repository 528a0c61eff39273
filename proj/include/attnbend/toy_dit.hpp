#pragma once

// A small, seeded, untrained text-conditioned video diffusion transformer.
//
// The network is structurally faithful (pre-norm blocks of self-attention,
// cross-attention and MLP over a flattened F x H x W latent grid) but its
// weights are random. It exists so the cross-attention site can be
// intercepted and its effect on generation measured deterministically.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "attnbend/tensor.hpp"

namespace attnbend {

struct ModelConfig {
  std::size_t num_blocks = 6;
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t text_dim = 32;
  std::size_t mlp_hidden = 128;
  std::size_t latent_frames = 3;
  std::size_t latent_height = 5;
  std::size_t latent_width = 8;
  std::size_t latent_channels = 4;
  std::uint64_t weight_seed = 0xA77E4B3D;

  std::size_t head_dim() const { return model_dim / num_heads; }
  std::size_t query_count() const { return latent_frames * latent_height * latent_width; }
  void validate() const;
};

struct VideoGeometry {
  std::size_t frames = 25;
  std::size_t height = 368;
  std::size_t width = 640;
  double fps = 16.0;
};

struct GenerationSettings {
  std::size_t num_timesteps = 10;
  double cfg_scale = 4.5;
  std::uint64_t seed = 41;
  VideoGeometry video;
  // Also run bending hooks on the unconditional guidance branch.
  bool bend_unconditional = false;

  void validate() const;
};

struct TextEncoding {
  std::vector<std::string> tokens;
  // Words the prompt marked with parentheses, e.g. "(rose)"; in order, unique.
  std::vector<std::string> key_tokens;
  Tensor embeddings;  // tokens.size() x text_dim

  // Conditioning for the guidance branch: a single padding token.
  static TextEncoding unconditional(const ModelConfig& cfg);
};

// Whitespace split, lower-cased, parentheses and edge punctuation removed.
std::vector<std::string> tokenize(std::string_view prompt);
TextEncoding encode_text(std::string_view prompt, const ModelConfig& cfg);
// Embedding depends only on the normalized token string.
std::vector<double> embed_token(std::string_view token, std::size_t text_dim);

enum class HookStage { kPreSoftmax, kPostSoftmax };

struct CrossAttentionSite {
  std::size_t layer_index = 0;
  std::size_t timestep_index = 0;
  std::size_t head_index = 0;
  std::size_t query_count = 0;
  std::size_t key_count = 0;
  bool conditional = true;
};

// Receives the per-head logits (pre-softmax) or attention map (post-softmax),
// query_count x key_count, and returns the map to continue with.
using AttentionHook = std::function<Tensor(HookStage, Tensor, const CrossAttentionSite&)>;

// Single-head scaled dot-product attention with an interception point on
// either side of the softmax. d_k is q.cols().
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const CrossAttentionSite& site,
              const AttentionHook& hook);

// uncond + scale * (cond - uncond); exact at scale 0 and 1.
Tensor combine_guidance(const Tensor& cond, const Tensor& uncond, double scale);

struct StepInfo {
  std::size_t timestep_index = 0;
  double time = 1.0;  // 1 = pure noise, 0 = clean
  bool conditional = true;
};

class ToyDiT {
 public:
  explicit ToyDiT(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  // x: query_count x model_dim (already layer-normed)
  Tensor cross_attention(const Tensor& x, const TextEncoding& text, std::size_t layer, const StepInfo& step,
                         const AttentionHook& hook) const;
  Tensor self_attention(const Tensor& x, std::size_t layer) const;
  Tensor block(const Tensor& x, const TextEncoding& text, std::size_t layer, const StepInfo& step,
               const AttentionHook& hook) const;
  // Velocity prediction for a latent (query_count x latent_channels).
  Tensor predict(const Tensor& latent, const TextEncoding& text, const StepInfo& step,
                 const AttentionHook& hook) const;
  // Residual stream entering the final norm, for block-level inspection.
  Tensor embed_latent(const Tensor& latent, double time) const;

 private:
  struct BlockWeights {
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias, ln3_gain, ln3_bias;
    Tensor sa_q, sa_k, sa_v, sa_o;
    Tensor ca_q, ca_k, ca_v, ca_o;
    Tensor mlp_in, mlp_out;
  };

  ModelConfig cfg_;
  Tensor latent_in_;   // latent_channels x model_dim
  Tensor positions_;   // query_count x model_dim
  Tensor final_gain_, final_bias_;
  Tensor latent_out_;  // model_dim x latent_channels
  std::vector<BlockWeights> blocks_;
};

using LatentVideo = Tensor;  // query_count x latent_channels

LatentVideo initial_noise(const ModelConfig& cfg, std::uint64_t seed);

// Deterministic Euler sampler over a linear time schedule with classifier-free
// guidance. `hook` sees the conditional branch (and the unconditional one
// when settings.bend_unconditional is set).
LatentVideo denoise(const ToyDiT& model, const GenerationSettings& settings, const TextEncoding& text,
                    const AttentionHook& hook);

struct RgbVideo {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // frames x height x width x 3

  std::span<const std::uint8_t> frame(std::size_t f) const {
    return std::span<const std::uint8_t>(pixels).subspan(f * height * width * 3, height * width * 3);
  }
  friend bool operator==(const RgbVideo&, const RgbVideo&) = default;
};

// Fixed seeded channel projection to RGB, nearest-neighbour upsampling in
// time and space, then a per-colour-channel min/max stretch over the whole
// clip. A channel with no spread decodes to 128.
RgbVideo decode_latent(const LatentVideo& z, const ModelConfig& cfg, const VideoGeometry& geometry);

}  // namespace attnbend
