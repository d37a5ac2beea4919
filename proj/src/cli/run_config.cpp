#include "unict/cli/run_config.hpp"

#include <fstream>
#include <set>

namespace unict::cli {

namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were consumed so the rest
// can be reported as unknown.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& field, const std::string& what) {
    throw ConfigError(field + ": " + what);
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void size(const std::string& key, std::size_t& out) {
    if (auto v = find(key)) out = as_size(*v, at(key));
  }

  void number(const std::string& key, double& out) {
    if (auto v = find(key)) {
      if (!v->is_number()) fail(at(key), "expected a number");
      out = v->get<double>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (auto v = find(key)) {
      if (!v->is_boolean()) fail(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void text(const std::string& key, std::string& out) {
    if (auto v = find(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <std::size_t N>
  void sizes(const std::string& key, std::array<std::size_t, N>& out) {
    if (auto v = find(key)) {
      if (!v->is_array() || v->size() != N) {
        fail(at(key), "expected an array of " + std::to_string(N) + " entries");
      }
      for (std::size_t i = 0; i < N; ++i)
        out[i] = as_size((*v)[i], at(key) + "[" + std::to_string(i) + "]");
    }
  }

  void integers(const std::string& key, std::vector<int>& out) {
    if (auto v = find(key)) {
      if (!v->is_array()) fail(at(key), "expected an array");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number_integer()) {
          fail(at(key) + "[" + std::to_string(i) + "]", "expected an integer");
        }
        out.push_back((*v)[i].get<int>());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
  }

 private:
  static std::size_t as_size(const json& v, const std::string& field) {
    if (!v.is_number_unsigned()) fail(field, "expected a non-negative integer");
    return v.get<std::size_t>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

depth::NetConfig parse_net(const json& j) {
  depth::NetConfig n;
  Fields f(j, "net");
  f.size("height", n.height);
  f.size("width", n.width);
  f.size("time_bins", n.time_bins);
  f.size("event_channels", n.event_channels);
  f.size("image_channels", n.image_channels);
  f.size("stem_channels", n.stem_channels);
  f.sizes("encoder_channels", n.encoder_channels);
  f.sizes("heads", n.heads);
  f.size("window", n.window);
  f.size("group_channels", n.group_channels);
  f.size("mlp_ratio", n.mlp_ratio);
  f.sizes("decoder_channels", n.decoder_channels);
  std::string modality = depth::to_string(n.modality);
  f.text("modality", modality);
  try {
    n.modality = depth::modality_from_string(modality);
  } catch (const ConfigError& e) {
    Fields::fail("net.modality", e.what());
  }
  if (auto block = f.find("block")) {
    Fields bf(*block, "net.block");
    auto kind = [&](const char* key, attention::BranchKind& k) {
      std::string name = attention::to_string(k);
      bf.text(key, name);
      try {
        k = attention::branch_kind_from_string(name);
      } catch (const ConfigError& e) {
        Fields::fail(std::string("net.block.") + key, e.what());
      }
    };
    kind("first", n.block.first);
    kind("second", n.block.second);
    bf.boolean("gate_first", n.block.gate_first);
    bf.boolean("gate_second", n.block.gate_second);
    bf.finish();
  }
  if (auto loss = f.find("loss")) {
    Fields lf(*loss, "net.loss");
    lf.number("l1", n.loss.l1);
    lf.number("l2", n.loss.l2);
    lf.finish();
  }
  f.number("initial_depth", n.initial_depth);
  f.finish();
  return n;
}

}  // namespace

void RunConfig::validate() const {
  try {
    net.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("net: ") + e.what());
  }
  if (epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("lr: must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay: must be >= 0");
  if (!(lr_factor > 0.0)) throw ConfigError("lr_factor: must be positive");
  for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] < 1) throw ConfigError("lr_milestones[" + std::to_string(i) + "]: must be >= 1");
    if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1]) {
      throw ConfigError("lr_milestones[" + std::to_string(i) + "]: must be strictly increasing");
    }
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction: must be in [0, 1)");
  }
  if (dtype != "f32" && dtype != "f64") throw ConfigError("dtype: expected \"f32\" or \"f64\"");
}

nlohmann::ordered_json net_to_json(const depth::NetConfig& n) {
  return {{"height", n.height},
          {"width", n.width},
          {"time_bins", n.time_bins},
          {"event_channels", n.event_channels},
          {"image_channels", n.image_channels},
          {"stem_channels", n.stem_channels},
          {"encoder_channels", n.encoder_channels},
          {"heads", n.heads},
          {"window", n.window},
          {"group_channels", n.group_channels},
          {"mlp_ratio", n.mlp_ratio},
          {"decoder_channels", n.decoder_channels},
          {"modality", depth::to_string(n.modality)},
          {"block",
           {{"first", attention::to_string(n.block.first)},
            {"second", attention::to_string(n.block.second)},
            {"gate_first", n.block.gate_first},
            {"gate_second", n.block.gate_second}}},
          {"loss", {{"l1", n.loss.l1}, {"l2", n.loss.l2}}},
          {"initial_depth", n.initial_depth}};
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  return {{"version", kConfigVersion},
          {"net", net_to_json(c.net)},
          {"dataset", c.dataset},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"lr_milestones", c.lr_milestones},
          {"lr_factor", c.lr_factor},
          {"val_fraction", c.val_fraction},
          {"seed", c.seed},
          {"out_dir", c.out_dir},
          {"dtype", c.dtype}};
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Fields f(j, "");
  auto version = f.find("version");
  if (!version) Fields::fail("version", "missing required field");
  if (!version->is_number_integer() || version->get<long>() != kConfigVersion) {
    Fields::fail("version", "unsupported value " + version->dump() + " (expected " +
                                std::to_string(kConfigVersion) + ")");
  }
  if (auto net = f.find("net")) c.net = parse_net(*net);
  f.text("dataset", c.dataset);
  f.size("epochs", c.epochs);
  f.size("batch_size", c.batch_size);
  f.number("lr", c.lr);
  f.number("weight_decay", c.weight_decay);
  f.integers("lr_milestones", c.lr_milestones);
  f.number("lr_factor", c.lr_factor);
  f.number("val_fraction", c.val_fraction);
  if (auto seed = f.find("seed")) {
    if (!seed->is_number_unsigned()) Fields::fail("seed", "expected a non-negative integer");
    c.seed = seed->get<std::uint64_t>();
  }
  f.text("out_dir", c.out_dir);
  f.text("dtype", c.dtype);
  f.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j);
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  out << to_json(cfg).dump(2) << "\n";
  if (!out) throw ConfigError(path + ": cannot write");
}

}  // namespace unict::cli
