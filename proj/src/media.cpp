#include "attnbend/media.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace attnbend {

namespace fs = std::filesystem;

namespace {

void write_pnm(const fs::path& path, const char* magic, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<std::uint8_t> read_pnm(const fs::path& path, const std::string& magic, std::size_t channels,
                                   std::size_t& width, std::size_t& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string m;
  int maxval = 0;
  in >> m >> width >> height >> maxval;
  if (m != magic || maxval != 255) throw std::runtime_error("'" + path.string() + "' is not a " + magic + " file");
  in.get();
  std::vector<std::uint8_t> bytes(width * height * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error("'" + path.string() + "' is truncated");
  return bytes;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

std::string two_digits(std::size_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%02zu", v);
  return buf;
}

}  // namespace

void write_ppm(const fs::path& path, std::size_t width, std::size_t height, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != width * height * 3) throw std::invalid_argument("write_ppm: pixel count mismatch");
  write_pnm(path, "P6", width, height, rgb);
}

void write_pgm(const fs::path& path, std::size_t width, std::size_t height, std::span<const std::uint8_t> gray) {
  if (gray.size() != width * height) throw std::invalid_argument("write_pgm: pixel count mismatch");
  write_pnm(path, "P5", width, height, gray);
}

RgbImage read_ppm(const fs::path& path) {
  RgbImage img;
  img.pixels = read_pnm(path, "P6", 3, img.width, img.height);
  return img;
}

GrayImage read_pgm(const fs::path& path) {
  GrayImage img;
  img.pixels = read_pnm(path, "P5", 1, img.width, img.height);
  return img;
}

std::vector<std::string> write_video(const RgbVideo& video, double fps, const fs::path& dir,
                                     const std::string& variation_id) {
  std::vector<std::string> files;
  for (std::size_t f = 0; f < video.frames; ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", f);
    write_ppm(dir / name, video.width, video.height, video.frame(f));
    files.emplace_back(name);
  }
  write_json(dir / "index.json", {{"variation_id", variation_id},
                                  {"fps", fps},
                                  {"frames", video.frames},
                                  {"height", video.height},
                                  {"width", video.width},
                                  {"files", files}});
  return files;
}

std::string token_dir_name(const std::string& token) {
  std::string out;
  for (char c : token) {
    const unsigned char u = static_cast<unsigned char>(c);
    out.push_back(std::isalnum(u) || c == '-' || c == '_' ? c : '_');
  }
  if (out.empty()) out = "_";
  return out;
}

std::vector<std::uint8_t> quantize_attention_frame(const AttentionVolume& v, std::size_t frame, double max_value) {
  std::vector<std::uint8_t> out(v.frame_size(), 0);
  if (!(max_value > 0.0)) return out;
  for (std::size_t i = 0; i < v.frame_size(); ++i) {
    const double scaled = std::round(v.data[frame * v.frame_size() + i] / max_value * 255.0);
    out[i] = static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
  }
  return out;
}

nlohmann::json attention_volumes_to_json(const std::vector<AttentionRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const AttentionRecord& r : records) {
    arr.push_back({{"token", r.token},
                   {"timestep", r.timestep},
                   {"frames", r.volume.frames},
                   {"height", r.volume.height},
                   {"width", r.volume.width},
                   {"data", r.volume.data}});
  }
  return arr;
}

std::vector<AttentionRecord> attention_volumes_from_json(const nlohmann::json& j) {
  std::vector<AttentionRecord> out;
  for (const auto& item : j) {
    AttentionRecord r;
    r.token = item.at("token").get<std::string>();
    r.timestep = item.at("timestep").get<std::size_t>();
    r.volume = AttentionVolume(item.at("frames").get<std::size_t>(), item.at("height").get<std::size_t>(),
                               item.at("width").get<std::size_t>(), item.at("data").get<std::vector<double>>());
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> write_attention_video(const std::vector<AttentionRecord>& records, const fs::path& dir,
                                               bool with_volumes) {
  if (records.empty()) throw std::invalid_argument("write_attention_video: no records");
  const AttentionVolume& first = records.front().volume;
  std::vector<std::string> order;
  std::map<std::string, double> max_by_token;
  for (const AttentionRecord& r : records) {
    if (!r.volume.same_shape(first)) throw std::invalid_argument("write_attention_video: volume shapes differ");
    if (!max_by_token.count(r.token)) {
      order.push_back(r.token);
      max_by_token[r.token] = 0.0;
    }
    double& m = max_by_token[r.token];
    for (double v : r.volume.data) m = std::max(m, v);
  }

  std::vector<std::string> written;
  nlohmann::json tokens = nlohmann::json::array();
  for (const std::string& token : order) {
    const std::string sub = token_dir_name(token);
    nlohmann::json files = nlohmann::json::array();
    std::size_t timesteps = 0;
    for (const AttentionRecord& r : records) {
      if (r.token != token) continue;
      ++timesteps;
      for (std::size_t f = 0; f < r.volume.frames; ++f) {
        const std::string rel = sub + "/t" + two_digits(r.timestep) + "_f" + two_digits(f) + ".pgm";
        write_pgm(dir / rel, r.volume.width, r.volume.height, quantize_attention_frame(r.volume, f, max_by_token[token]));
        files.push_back(rel);
        written.push_back(rel);
      }
    }
    tokens.push_back({{"token", token},
                      {"directory", sub},
                      {"timesteps", timesteps},
                      {"max", max_by_token[token]},
                      {"files", files}});
  }
  write_json(dir / "index.json",
             {{"frames", first.frames}, {"height", first.height}, {"width", first.width}, {"tokens", tokens}});
  written.push_back("index.json");
  if (with_volumes) {
    write_json(dir / "volumes.json", attention_volumes_to_json(records));
    written.push_back("volumes.json");
  }
  return written;
}

}  // namespace attnbend
