#include "attnbend/toy_dit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "attnbend/errors.hpp"
#include "attnbend/kernels.hpp"

namespace attnbend {

void ModelConfig::validate() const {
  if (num_blocks == 0 || model_dim == 0 || num_heads == 0 || text_dim == 0 || mlp_hidden == 0 ||
      latent_frames == 0 || latent_height == 0 || latent_width == 0 || latent_channels == 0) {
    throw ConfigError("model", "all model extents must be >= 1");
  }
  if (model_dim % num_heads != 0) {
    throw ConfigError("model", "model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
                                   std::to_string(num_heads));
  }
}

void GenerationSettings::validate() const {
  if (num_timesteps == 0) throw ConfigError("model_settings.steps", "must be >= 1");
  if (!(cfg_scale >= 0.0) || !std::isfinite(cfg_scale)) throw ConfigError("model_settings.cfg_scale", "must be >= 0");
  if (video.frames == 0 || video.height == 0 || video.width == 0) {
    throw ConfigError("video_settings", "frames, height and width must be >= 1");
  }
  if (!(video.fps > 0.0)) throw ConfigError("video_settings.fps", "must be positive");
}

namespace {

constexpr double kNormEps = 1e-5;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tensor random_weight(SeededRng& rng, std::size_t in, std::size_t out, double gain) {
  Tensor w = sample_normal(rng, {in, out});
  kernels::scale(gain / std::sqrt(static_cast<double>(in)), w.data().data(), w.size());
  return w;
}

Tensor columns(const Tensor& t, std::size_t begin, std::size_t count) {
  Tensor out({t.rows(), count});
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::copy_n(t.row(r).begin() + static_cast<long>(begin), count, out.row(r).begin());
  }
  return out;
}

void put_columns(Tensor& dst, const Tensor& src, std::size_t begin) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    std::copy(src.row(r).begin(), src.row(r).end(), dst.row(r).begin() + static_cast<long>(begin));
  }
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

// Sinusoidal features of (frame, row, column), one third of the channels each.
Tensor grid_positions(const ModelConfig& cfg) {
  Tensor pos({cfg.query_count(), cfg.model_dim});
  const std::size_t d = cfg.model_dim;
  const std::size_t extents[3] = {cfg.latent_frames, cfg.latent_height, cfg.latent_width};
  std::size_t q = 0;
  for (std::size_t f = 0; f < cfg.latent_frames; ++f) {
    for (std::size_t y = 0; y < cfg.latent_height; ++y) {
      for (std::size_t x = 0; x < cfg.latent_width; ++x, ++q) {
        const std::size_t coord[3] = {f, y, x};
        for (std::size_t c = 0; c < d; ++c) {
          const std::size_t axis = c % 3;
          const std::size_t band = c / 6;
          const double span = static_cast<double>(std::max<std::size_t>(extents[axis], 2));
          const double freq = std::numbers::pi * static_cast<double>(band + 1) / span;
          const double phase = freq * static_cast<double>(coord[axis]);
          pos.at(q, c) = ((c / 3) % 2 == 0) ? std::sin(phase) : std::cos(phase);
        }
      }
    }
  }
  return pos;
}

std::string normalize_token(std::string_view raw) {
  std::string s;
  for (char c : raw) {
    if (c == '(' || c == ')') continue;
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  auto edge = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) && c != '-' && c != '_'; };
  while (!s.empty() && edge(s.back())) s.pop_back();
  std::size_t lead = 0;
  while (lead < s.size() && edge(s[lead])) ++lead;
  return s.substr(lead);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view prompt) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < prompt.size()) {
    while (i < prompt.size() && std::isspace(static_cast<unsigned char>(prompt[i]))) ++i;
    std::size_t j = i;
    while (j < prompt.size() && !std::isspace(static_cast<unsigned char>(prompt[j]))) ++j;
    if (j > i) {
      std::string tok = normalize_token(prompt.substr(i, j - i));
      if (!tok.empty()) out.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

std::vector<double> embed_token(std::string_view token, std::size_t text_dim) {
  SeededRng rng(fnv1a(token) ^ 0x7e47e4bedULL);
  std::vector<double> row(text_dim);
  for (double& v : row) v = rng.next_normal();
  return row;
}

TextEncoding encode_text(std::string_view prompt, const ModelConfig& cfg) {
  TextEncoding enc;
  enc.tokens = tokenize(prompt);
  if (enc.tokens.empty()) throw std::invalid_argument("encode_text: prompt is empty");

  // Parenthesized words mark the prompt's key subjects.
  std::size_t i = 0;
  while ((i = prompt.find('(', i)) != std::string_view::npos) {
    const std::size_t close = prompt.find(')', i);
    if (close == std::string_view::npos) break;
    for (std::string& t : tokenize(prompt.substr(i + 1, close - i - 1))) {
      if (std::find(enc.key_tokens.begin(), enc.key_tokens.end(), t) == enc.key_tokens.end()) {
        enc.key_tokens.push_back(std::move(t));
      }
    }
    i = close + 1;
  }

  std::vector<double> data;
  data.reserve(enc.tokens.size() * cfg.text_dim);
  for (const std::string& t : enc.tokens) {
    const std::vector<double> row = embed_token(t, cfg.text_dim);
    data.insert(data.end(), row.begin(), row.end());
  }
  enc.embeddings = Tensor({enc.tokens.size(), cfg.text_dim}, std::move(data));
  return enc;
}

TextEncoding TextEncoding::unconditional(const ModelConfig& cfg) {
  TextEncoding enc;
  enc.tokens = {"<pad>"};
  enc.embeddings = Tensor({1, cfg.text_dim}, embed_token("<pad>", cfg.text_dim));
  return enc;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const CrossAttentionSite& site,
              const AttentionHook& hook) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw ShapeError("attend: incompatible q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) +
                     ", v " + shape_string(v.shape()));
  }
  auto checked = [&](HookStage stage, Tensor map) {
    if (!hook) return map;
    const Shape expected = map.shape();
    Tensor out = hook(stage, std::move(map), site);
    if (out.shape() != expected) {
      throw ShapeError("attention hook returned " + shape_string(out.shape()) + ", expected " +
                       shape_string(expected));
    }
    return out;
  };
  Tensor logits = scaled(matmul_transposed(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  logits = checked(HookStage::kPreSoftmax, std::move(logits));
  Tensor map = checked(HookStage::kPostSoftmax, softmax_rows(logits));
  return matmul(map, v);
}

Tensor combine_guidance(const Tensor& cond, const Tensor& uncond, double scale) {
  if (cond.shape() != uncond.shape()) throw ShapeError("combine_guidance: branch shapes differ");
  if (scale == 0.0) return uncond;
  if (scale == 1.0) return cond;
  Tensor out = uncond;
  Tensor diff = cond;
  kernels::axpy(-1.0, uncond.data().data(), diff.data().data(), diff.size());
  kernels::axpy(scale, diff.data().data(), out.data().data(), out.size());
  return out;
}

ToyDiT::ToyDiT(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  SeededRng rng(cfg_.weight_seed);
  const std::size_t d = cfg_.model_dim;
  const Tensor ones = Tensor::filled({d}, 1.0);
  const Tensor zeros = Tensor::filled({d}, 0.0);

  latent_in_ = random_weight(rng, cfg_.latent_channels, d, 1.0);
  positions_ = grid_positions(cfg_);
  final_gain_ = ones;
  final_bias_ = zeros;
  latent_out_ = random_weight(rng, d, cfg_.latent_channels, 1.0);

  blocks_.reserve(cfg_.num_blocks);
  for (std::size_t b = 0; b < cfg_.num_blocks; ++b) {
    BlockWeights w;
    w.ln1_gain = w.ln2_gain = w.ln3_gain = ones;
    w.ln1_bias = w.ln2_bias = w.ln3_bias = zeros;
    w.sa_q = random_weight(rng, d, d, 1.0);
    w.sa_k = random_weight(rng, d, d, 1.0);
    w.sa_v = random_weight(rng, d, d, 1.0);
    w.sa_o = random_weight(rng, d, d, 1.0);
    // Larger query gain gives cross-attention maps real spatial contrast.
    w.ca_q = random_weight(rng, d, d, 2.0);
    w.ca_k = random_weight(rng, cfg_.text_dim, d, 1.0);
    w.ca_v = random_weight(rng, cfg_.text_dim, d, 1.0);
    w.ca_o = random_weight(rng, d, d, 1.0);
    w.mlp_in = random_weight(rng, d, cfg_.mlp_hidden, 1.0);
    w.mlp_out = random_weight(rng, cfg_.mlp_hidden, d, 1.0);
    blocks_.push_back(std::move(w));
  }
}

Tensor ToyDiT::cross_attention(const Tensor& x, const TextEncoding& text, std::size_t layer, const StepInfo& step,
                               const AttentionHook& hook) const {
  const BlockWeights& w = blocks_.at(layer);
  const Tensor q = matmul(x, w.ca_q);
  const Tensor k = matmul(text.embeddings, w.ca_k);
  const Tensor v = matmul(text.embeddings, w.ca_v);
  const std::size_t dk = cfg_.head_dim();
  Tensor merged({x.rows(), cfg_.model_dim});
  for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
    CrossAttentionSite site{layer, step.timestep_index, h, x.rows(), text.tokens.size(), step.conditional};
    put_columns(merged, attend(columns(q, h * dk, dk), columns(k, h * dk, dk), columns(v, h * dk, dk), site, hook),
                h * dk);
  }
  return matmul(merged, w.ca_o);
}

Tensor ToyDiT::self_attention(const Tensor& x, std::size_t layer) const {
  const BlockWeights& w = blocks_.at(layer);
  const Tensor q = matmul(x, w.sa_q);
  const Tensor k = matmul(x, w.sa_k);
  const Tensor v = matmul(x, w.sa_v);
  const std::size_t dk = cfg_.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor merged({x.rows(), cfg_.model_dim});
  for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
    const Tensor map = softmax_rows(scaled(matmul_transposed(columns(q, h * dk, dk), columns(k, h * dk, dk)), inv_sqrt));
    put_columns(merged, matmul(map, columns(v, h * dk, dk)), h * dk);
  }
  return matmul(merged, w.sa_o);
}

Tensor ToyDiT::block(const Tensor& x, const TextEncoding& text, std::size_t layer, const StepInfo& step,
                     const AttentionHook& hook) const {
  if (x.rank() != 2 || x.rows() != cfg_.query_count() || x.cols() != cfg_.model_dim) {
    throw ShapeError("block: expected " + std::to_string(cfg_.query_count()) + "x" + std::to_string(cfg_.model_dim) +
                     " input, got " + shape_string(x.shape()));
  }
  const BlockWeights& w = blocks_.at(layer);
  Tensor h = add(x, self_attention(layer_norm(x, w.ln1_gain, w.ln1_bias, kNormEps), layer));
  h = add(h, cross_attention(layer_norm(h, w.ln2_gain, w.ln2_bias, kNormEps), text, layer, step, hook));
  Tensor hidden = matmul(layer_norm(h, w.ln3_gain, w.ln3_bias, kNormEps), w.mlp_in);
  for (double& v : hidden.data()) v = gelu(v);
  return add(h, matmul(hidden, w.mlp_out));
}

Tensor ToyDiT::embed_latent(const Tensor& latent, double time) const {
  if (latent.rank() != 2 || latent.rows() != cfg_.query_count() || latent.cols() != cfg_.latent_channels) {
    throw ShapeError("predict: latent must be " + std::to_string(cfg_.query_count()) + "x" +
                     std::to_string(cfg_.latent_channels) + ", got " + shape_string(latent.shape()));
  }
  Tensor x = add(matmul(latent, latent_in_), positions_);
  std::vector<double> time_embed(cfg_.model_dim);
  for (std::size_t c = 0; c < cfg_.model_dim; ++c) {
    const double freq = std::pow(100.0, -static_cast<double>(c / 2) / static_cast<double>(cfg_.model_dim));
    time_embed[c] = (c % 2 == 0 ? std::sin(1000.0 * time * freq) : std::cos(1000.0 * time * freq));
  }
  for (std::size_t r = 0; r < x.rows(); ++r) kernels::axpy(1.0, time_embed.data(), x.row(r).data(), cfg_.model_dim);
  return x;
}

Tensor ToyDiT::predict(const Tensor& latent, const TextEncoding& text, const StepInfo& step,
                       const AttentionHook& hook) const {
  Tensor x = embed_latent(latent, step.time);
  for (std::size_t b = 0; b < cfg_.num_blocks; ++b) x = block(x, text, b, step, hook);
  return matmul(layer_norm(x, final_gain_, final_bias_, kNormEps), latent_out_);
}

LatentVideo initial_noise(const ModelConfig& cfg, std::uint64_t seed) {
  SeededRng rng(seed);
  return sample_normal(rng, {cfg.query_count(), cfg.latent_channels});
}

LatentVideo denoise(const ToyDiT& model, const GenerationSettings& settings, const TextEncoding& text,
                    const AttentionHook& hook) {
  settings.validate();
  const ModelConfig& cfg = model.config();
  const TextEncoding uncond_text = TextEncoding::unconditional(cfg);
  const double steps = static_cast<double>(settings.num_timesteps);

  LatentVideo z = initial_noise(cfg, settings.seed);
  for (std::size_t t = 0; t < settings.num_timesteps; ++t) {
    const double time = 1.0 - static_cast<double>(t) / steps;
    const double next = 1.0 - static_cast<double>(t + 1) / steps;
    Tensor velocity;
    // Branches that guidance would multiply by zero are skipped.
    if (settings.cfg_scale == 1.0) {
      velocity = model.predict(z, text, {t, time, true}, hook);
    } else if (settings.cfg_scale == 0.0) {
      velocity = model.predict(z, uncond_text, {t, time, false}, settings.bend_unconditional ? hook : nullptr);
    } else {
      const Tensor cond = model.predict(z, text, {t, time, true}, hook);
      const Tensor uncond =
          model.predict(z, uncond_text, {t, time, false}, settings.bend_unconditional ? hook : nullptr);
      velocity = combine_guidance(cond, uncond, settings.cfg_scale);
    }
    kernels::axpy(next - time, velocity.data().data(), z.data().data(), z.size());
  }
  return z;
}

RgbVideo decode_latent(const LatentVideo& z, const ModelConfig& cfg, const VideoGeometry& geometry) {
  if (z.rank() != 2 || z.rows() != cfg.query_count() || z.cols() != cfg.latent_channels) {
    throw ShapeError("decode_latent: latent shape " + shape_string(z.shape()) + " does not match model");
  }
  SeededRng rng(cfg.weight_seed ^ 0xDEC0DEULL);
  const Tensor to_rgb = random_weight(rng, cfg.latent_channels, 3, 1.0);
  const Tensor rgb = matmul(z, to_rgb);  // query_count x 3

  double lo[3], hi[3];
  for (std::size_t c = 0; c < 3; ++c) {
    lo[c] = hi[c] = rgb.at(0, c);
    for (std::size_t q = 1; q < rgb.rows(); ++q) {
      lo[c] = std::min(lo[c], rgb.at(q, c));
      hi[c] = std::max(hi[c], rgb.at(q, c));
    }
  }

  RgbVideo out;
  out.frames = geometry.frames;
  out.height = geometry.height;
  out.width = geometry.width;
  out.pixels.resize(out.frames * out.height * out.width * 3);
  std::size_t p = 0;
  for (std::size_t f = 0; f < out.frames; ++f) {
    const std::size_t lf = f * cfg.latent_frames / out.frames;
    for (std::size_t y = 0; y < out.height; ++y) {
      const std::size_t ly = y * cfg.latent_height / out.height;
      for (std::size_t x = 0; x < out.width; ++x) {
        const std::size_t lx = x * cfg.latent_width / out.width;
        const std::size_t q = (lf * cfg.latent_height + ly) * cfg.latent_width + lx;
        for (std::size_t c = 0; c < 3; ++c) {
          const double span = hi[c] - lo[c];
          const double v = span > 0.0 ? std::round((rgb.at(q, c) - lo[c]) / span * 255.0) : 128.0;
          out.pixels[p++] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
      }
    }
  }
  return out;
}

}  // namespace attnbend
