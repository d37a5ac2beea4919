#include "unict/depth/config.hpp"

namespace unict::depth {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kFusion: return "fusion";
    case Modality::kEventsOnly: return "events";
    case Modality::kImageOnly: return "image";
  }
  return "?";
}

Modality modality_from_string(const std::string& name) {
  if (name == "fusion") return Modality::kFusion;
  if (name == "events") return Modality::kEventsOnly;
  if (name == "image") return Modality::kImageOnly;
  throw ConfigError("unknown modality '" + name + "' (expected fusion, events or image)");
}

void NetConfig::validate() const {
  if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
    throw ConfigError("resolution " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be a positive multiple of 32");
  }
  if (time_bins == 0) throw ConfigError("time_bins must be positive");
  if (event_channels == 0 || image_channels == 0 || stem_channels == 0) {
    throw ConfigError("preprocessor widths must be positive");
  }
  for (auto c : encoder_channels)
    if (c == 0) throw ConfigError("encoder widths must be positive");
  for (auto c : decoder_channels)
    if (c == 0) throw ConfigError("decoder widths must be positive");
  if (!(loss.l1 >= 0.0) || !(loss.l2 >= 0.0) || loss.l1 + loss.l2 == 0.0) {
    throw ConfigError("loss weights must be >= 0 and not both zero");
  }
  if (!(initial_depth > 0.0)) throw ConfigError("initial_depth must be positive");
  for (std::size_t i = 0; i < 4; ++i) {
    try {
      stage_config(i).validate();
    } catch (const ConfigError& e) {
      throw ConfigError("stage " + std::to_string(i) + ": " + e.what());
    }
  }
}

attention::BlockConfig NetConfig::stage_config(std::size_t i) const {
  attention::BlockConfig cfg;
  cfg.channels = encoder_channels.at(i + 1);
  cfg.heads = heads.at(i);
  cfg.window_h = cfg.window_w = window;
  cfg.group_channels = group_channels;
  cfg.mlp_ratio = mlp_ratio;
  return cfg;
}

NetConfig NetConfig::tiny(std::size_t height, std::size_t width) {
  NetConfig c;
  c.height = height;
  c.width = width;
  c.event_channels = 8;
  c.image_channels = 8;
  c.stem_channels = 16;
  c.encoder_channels = {16, 24, 32, 48, 64};
  c.heads = {2, 2, 4, 4};
  c.group_channels = 8;
  c.mlp_ratio = 2;
  c.decoder_channels = {48, 32, 24, 16, 16};
  return c;
}

}  // namespace unict::depth
