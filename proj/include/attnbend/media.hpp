#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "attnbend/bender.hpp"

namespace attnbend {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB
};

// Binary PNM (P6 / P5, maxval 255).
void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> rgb);
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> gray);
RgbImage read_ppm(const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);

// Writes frame_NNNN.ppm for every frame plus index.json; returns the frame
// file names relative to `dir`.
std::vector<std::string> write_video(const RgbVideo& video, double fps, const std::filesystem::path& dir,
                                     const std::string& variation_id);

// Directory-safe form of a token.
std::string token_dir_name(const std::string& token);

// Quantizes one volume frame against a token's max over all timesteps.
std::vector<std::uint8_t> quantize_attention_frame(const AttentionVolume& v, std::size_t frame, double max_value);

// Writes <dir>/<token>/tTT_fFF.pgm for every record (grouped by token, each
// token scaled by its own max over all timesteps) and an index.json listing
// them. Raw values go to volumes.json when `with_volumes` is set so the
// frames can be regenerated later. Returns written paths relative to `dir`.
std::vector<std::string> write_attention_video(const std::vector<AttentionRecord>& records,
                                               const std::filesystem::path& dir, bool with_volumes = true);

nlohmann::json attention_volumes_to_json(const std::vector<AttentionRecord>& records);
std::vector<AttentionRecord> attention_volumes_from_json(const nlohmann::json& j);

}  // namespace attnbend
