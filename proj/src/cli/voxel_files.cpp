#include "unict/cli/voxel_files.hpp"

#include <fstream>
#include <vector>

#include "json.hpp"

namespace unict::cli {

namespace fs = std::filesystem;

void write_voxel(const fs::path& stem, const events::VoxelGrid& grid, const VoxelSidecar& meta) {
  std::vector<float> raw(grid.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(grid.data[i]);
  fs::path f32 = stem, side = stem;
  f32 += ".f32";
  side += ".json";
  std::ofstream out(f32, std::ios::binary);
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!out) throw events::EventError("cannot write " + f32.string());
  nlohmann::ordered_json j = {{"t0", meta.t0},         {"duration", meta.duration},
                              {"bins", meta.bins},     {"height", meta.height},
                              {"width", meta.width},   {"events", meta.events}};
  std::ofstream(side) << j.dump(2) << "\n";
}

events::VoxelGrid read_voxel(const fs::path& f32_path, VoxelSidecar* meta) {
  fs::path side = f32_path;
  side.replace_extension(".json");
  std::ifstream sin(side);
  if (!sin) throw events::EventError("missing voxel sidecar " + side.string());
  VoxelSidecar m;
  try {
    auto j = nlohmann::json::parse(sin);
    j.at("t0").get_to(m.t0);
    j.at("duration").get_to(m.duration);
    j.at("bins").get_to(m.bins);
    j.at("height").get_to(m.height);
    j.at("width").get_to(m.width);
    j.at("events").get_to(m.events);
  } catch (const nlohmann::json::exception& e) {
    throw events::EventError(side.string() + ": " + e.what());
  }
  events::VoxelGrid g;
  g.bins = m.bins;
  g.height = m.height;
  g.width = m.width;
  g.data = tensor::Tensor<double>({m.bins, m.height, m.width});
  std::vector<float> raw(g.data.size());
  std::ifstream in(f32_path, std::ios::binary);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!in || in.peek() != std::char_traits<char>::eof()) {
    throw events::EventError(f32_path.string() + ": size does not match its sidecar");
  }
  for (std::size_t i = 0; i < raw.size(); ++i) g.data[i] = raw[i];
  if (meta) *meta = m;
  return g;
}

}  // namespace unict::cli
