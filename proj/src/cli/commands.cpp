#include "unict/cli/commands.hpp"

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "unict/attention/attention.hpp"
#include "unict/cli/run_config.hpp"
#include "unict/cli/voxel_files.hpp"
#include "unict/events/event_io.hpp"
#include "unict/events/windowing.hpp"
#include "unict/io/image_io.hpp"
#include "unict/synth/dataset.hpp"
#include "unict/tensor/checkpoint.hpp"

namespace unict::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Raised for bad command-line usage that CLI11 cannot see (missing inputs,
// inconsistent files).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Options {
  std::size_t threads = 1;
  std::optional<std::uint64_t> seed;
  std::string config, checkpoint, out, dataset;
  // voxelize
  std::string events_path, timestamps_path;
  std::size_t bins = events::kDefaultTimeBins, height = 0, width = 0;
  // infer / eval
  std::string voxel_path, image_path, pred_dir;
  // synth
  std::size_t scenes = 10, frames_per_scene = 21;
  double blank_fraction = 0.0, threshold = 0.15;
  // bench
  std::size_t channels = 64, window = 7, group_channels = 16, heads = 2, repeats = 3;
};

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto logger = std::make_shared<spdlog::logger>(
      "unict", std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true));
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("UNICT_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    logger->set_level(spdlog::level::err);
  } else if (level == "debug") {
    logger->set_level(spdlog::level::debug);
  } else {
    logger->set_level(spdlog::level::info);
    if (level != "info") logger->warn("UNICT_LOG='{}' not recognised; using info", level);
  }
  return logger;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

fs::path require_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
  return out;
}

RunConfig config_for_checkpoint(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (!o.config.empty()) return load_run_config(o.config);
  const auto beside = fs::path(o.checkpoint).parent_path() / "config.json";
  if (!fs::exists(beside)) {
    throw UsageError("no --config given and " + beside.string() + " does not exist");
  }
  return load_run_config(beside.string());
}

void check_geometry(const depth::NetConfig& net, const synth::Dataset& d) {
  if (d.options.height != net.height || d.options.width != net.width) {
    throw ConfigError("net.height/net.width: " + std::to_string(net.height) + "x" +
                      std::to_string(net.width) + " does not match dataset " +
                      std::to_string(d.options.height) + "x" + std::to_string(d.options.width));
  }
}

// ---- voxelize ------------------------------------------------------------

int cmd_voxelize(const Options& o, std::ostream& out, spdlog::logger& log) {
  events::EventReader reader(o.events_path);
  std::vector<events::EventRecord> stream;
  while (auto e = reader.next()) stream.push_back(*e);
  std::size_t h = o.height ? o.height : reader.height();
  std::size_t w = o.width ? o.width : reader.width();
  if (h == 0 || w == 0) throw UsageError("--height and --width are required for text event files");

  std::vector<double> times;
  std::ifstream ts(o.timestamps_path);
  if (!ts) throw UsageError("cannot open " + o.timestamps_path);
  for (double t; ts >> t;) times.push_back(t);
  if (!ts.eof()) throw events::ParseError(o.timestamps_path + ": non-numeric timestamp");
  if (times.size() < 2) throw UsageError(o.timestamps_path + ": need at least two timestamps");

  const auto dir = require_dir(o.out);
  const auto slices = events::window_events(stream, times);
  for (std::size_t k = 0; k < slices.size(); ++k) {
    const auto grid = events::voxelize(slices[k], h, w, o.bins);
    char name[32];
    std::snprintf(name, sizeof name, "voxel_%06zu", k);
    write_voxel(dir / name, grid,
                {slices[k].t0, slices[k].duration, o.bins, h, w, slices[k].events.size()});
    log.debug("{}: {} events", name, slices[k].events.size());
  }
  out << "wrote " << slices.size() << " voxel grids to " << dir.string() << "\n";
  return 0;
}

// ---- synth ---------------------------------------------------------------

int cmd_synth(const Options& o, std::ostream& out, spdlog::logger& log) {
  synth::DatasetOptions d;
  d.seed = o.seed.value_or(0);
  d.height = o.height ? o.height : 64;
  d.width = o.width ? o.width : 64;
  d.scenes = o.scenes;
  d.frames_per_scene = o.frames_per_scene;
  d.blank_fraction = o.blank_fraction;
  d.scene.threshold = o.threshold;
  d.threads = o.threads;
  const auto dir = require_dir(o.out);
  log.info("rendering {} scenes x {} frames at {}x{}", d.scenes, d.frames_per_scene, d.height, d.width);
  const auto data = synth::generate_dataset(d);
  synth::write_dataset(dir, data);
  out << "wrote " << data.frames() << " frames and " << data.events.size() << " events to "
      << dir.string() << "\n";
  return 0;
}

// ---- train ---------------------------------------------------------------

template <typename T>
int train_as(const RunConfig& cfg, std::ostream& out, spdlog::logger& log) {
  const auto data = synth::read_dataset(cfg.dataset);
  check_geometry(cfg.net, data);

  const std::size_t f = data.options.frames_per_scene;
  const std::size_t scenes = data.options.scenes;
  std::size_t val_scenes = static_cast<std::size_t>(std::lround(cfg.val_fraction * double(scenes)));
  if (cfg.val_fraction > 0.0 && scenes > 1) val_scenes = std::max<std::size_t>(val_scenes, 1);
  val_scenes = std::min(val_scenes, scenes - 1);
  std::vector<std::size_t> train_frames, val_frames;
  for (std::size_t k : data.sample_frames())
    (k / f >= scenes - val_scenes ? val_frames : train_frames).push_back(k);
  const auto train = synth::make_samples<T>(data, cfg.net.time_bins, train_frames);
  const auto val = val_frames.empty() ? std::vector<depth::Sample<T>>{}
                                      : synth::make_samples<T>(data, cfg.net.time_bins, val_frames);
  log.info("train {} samples, val {} samples", train.size(), val.size());

  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  save_run_config((dir / "config.json").string(), cfg);

  depth::DepthNet<T> net(cfg.net, cfg.seed);
  log.info("{} parameters", net.parameters().scalar_count());
  depth::FitOptions fit;
  fit.epochs = cfg.epochs;
  fit.batch_size = cfg.batch_size;
  fit.lr = cfg.lr;
  fit.weight_decay = cfg.weight_decay;
  fit.milestones = cfg.lr_milestones;
  fit.lr_factor = cfg.lr_factor;
  fit.shuffle_seed = cfg.seed;

  std::ofstream metrics_log(dir / "metrics.jsonl");
  depth::fit<T>(net, train, val, fit, [&](const depth::EpochRecord& r) {
    const auto line = r.to_json();
    metrics_log << line << "\n" << std::flush;
    log.info("{}", line);
  });
  net.save(dir / "checkpoint.bin");
  out << "wrote " << (dir / "checkpoint.bin").string() << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, spdlog::logger& log) {
  if (o.config.empty()) throw UsageError("--config is required");
  auto cfg = load_run_config(o.config);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.dataset.empty()) cfg.dataset = o.dataset;
  if (o.seed) cfg.seed = *o.seed;
  if (cfg.dataset.empty()) throw ConfigError("dataset: required for training");
  return cfg.dtype == "f64" ? train_as<double>(cfg, out, log) : train_as<float>(cfg, out, log);
}

// ---- infer ---------------------------------------------------------------

template <typename T>
int infer_as(const RunConfig& cfg, const Options& o, std::ostream& out) {
  depth::DepthNet<T> net(cfg.net, cfg.seed);
  net.load(o.checkpoint);
  const auto& n = cfg.net;
  const bool need_events = n.modality != depth::Modality::kImageOnly;
  const bool need_image = n.modality != depth::Modality::kEventsOnly;

  tensor::Tensor<T> voxel({n.time_bins, n.height, n.width}), image({3, n.height, n.width});
  if (need_events) {
    if (o.voxel_path.empty()) throw UsageError("--voxel is required for modality " + to_string(n.modality));
    const auto grid = read_voxel(o.voxel_path);
    if (grid.bins != n.time_bins || grid.height != n.height || grid.width != n.width) {
      throw ConfigError("net: voxel grid " + tensor::to_string(grid.data.shape()) +
                        " does not match the network input");
    }
    voxel = grid.as<T>();
  }
  if (need_image) {
    if (o.image_path.empty()) throw UsageError("--image is required for modality " + to_string(n.modality));
    const auto gray = io::read_pgm(o.image_path);
    if (gray.dim(1) != n.height || gray.dim(2) != n.width) {
      throw ConfigError("net: image " + tensor::to_string(gray.shape()) +
                        " does not match the network input");
    }
    const std::size_t plane = n.height * n.width;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) image[c * plane + i] = static_cast<T>(gray[i]);
  }
  const auto pred = net.infer(voxel, image);
  const auto dir = require_dir(o.out);
  io::write_pfm(dir / "depth.pfm", pred.depth);
  io::write_depth_png(dir / "depth.png", pred.depth, 0.0, 30.0);
  out << "wrote " << (dir / "depth.pfm").string() << " and " << (dir / "depth.png").string() << "\n";
  return 0;
}

int cmd_infer(const Options& o, std::ostream& out, spdlog::logger&) {
  const auto cfg = config_for_checkpoint(o);
  return cfg.dtype == "f64" ? infer_as<double>(cfg, o, out) : infer_as<float>(cfg, o, out);
}

// ---- eval ----------------------------------------------------------------

void report(const metrics::MetricReport& r, const Options& o, std::ostream& out) {
  out << r.to_table() << "\n" << r.to_json() << "\n";
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    f << r.to_json() << "\n";
    if (!f) throw io::ImageError("cannot write " + o.out);
  }
}

template <typename T>
metrics::MetricReport eval_checkpoint(const RunConfig& cfg, const synth::Dataset& data,
                                      const Options& o) {
  check_geometry(cfg.net, data);
  depth::DepthNet<T> net(cfg.net, cfg.seed);
  net.load(o.checkpoint);
  const auto samples = synth::make_samples<T>(data, cfg.net.time_bins);
  return depth::evaluate<T>(net, samples).metrics.report();
}

int cmd_eval(const Options& o, std::ostream& out, spdlog::logger& log) {
  if (o.dataset.empty()) throw UsageError("--dataset is required");
  if (o.pred_dir.empty() == o.checkpoint.empty()) {
    throw UsageError("give exactly one of --checkpoint or --pred");
  }
  const auto data = synth::read_dataset(o.dataset);
  if (!o.checkpoint.empty()) {
    const auto cfg = config_for_checkpoint(o);
    report(cfg.dtype == "f64" ? eval_checkpoint<double>(cfg, data, o)
                              : eval_checkpoint<float>(cfg, data, o),
           o, out);
    return 0;
  }
  metrics::MetricAccumulator acc;
  std::size_t used = 0;
  for (std::size_t k = 0; k < data.frames(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.pfm", k);
    const auto path = fs::path(o.pred_dir) / name;
    if (!fs::exists(path)) continue;
    const auto pred = io::read_pfm(path);
    if (pred.shape() != data.depth[k].depth.shape()) {
      throw UsageError(path.string() + ": shape does not match the ground truth");
    }
    acc.add<float>(pred.values(), data.depth[k].depth.values());
    ++used;
  }
  if (used == 0) throw UsageError(o.pred_dir + ": no NNNNNN.pfm predictions for this dataset");
  log.info("evaluated {} frames", used);
  report(acc.report(), o, out);
  return 0;
}

// ---- bench ---------------------------------------------------------------

int cmd_bench(const Options& o, std::ostream& out, spdlog::logger& log) {
  attention::BlockConfig cfg;
  cfg.channels = o.channels;
  cfg.heads = o.heads;
  cfg.window_h = cfg.window_w = o.window;
  cfg.group_channels = o.group_channels;
  if (!o.config.empty()) {
    const auto run = load_run_config(o.config);
    cfg = run.net.stage_config(0);
  }
  cfg.validate();

  struct Row {
    std::size_t side, tokens;
    std::uint64_t macs[3];
    double ms[3];
  };
  std::vector<Row> rows;
  tensor::Rng rng(o.seed.value_or(0));
  tensor::NoGradGuard no_grad;
  const char* keys[3] = {"dense", "window", "channel"};
  for (std::size_t side : {1, 2, 4, 8}) {
    const std::size_t gh = cfg.window_h * side, gw = cfg.window_w * side, p = gh * gw;
    auto make = [&] { return tensor::constant(tensor::uniform<float>({p, cfg.channels}, -1, 1, rng)); };
    const auto q = make(), k = make(), v = make();
    std::function<void()> kernels[3] = {
        [&] { attention::dense_attention(q, k, v, cfg.heads); },
        [&] { attention::window_attention(q, k, v, gh, gw, cfg.window_h, cfg.window_w, cfg.heads); },
        [&] { attention::group_channel_attention(q, k, v, cfg.groups()); }};
    Row row{side, p, {}, {}};
    for (int i = 0; i < 3; ++i) {
      tensor::OpCounter counter;
      {
        tensor::CountScope scope(counter);
        kernels[i]();
      }
      row.macs[i] = counter.total;
      double best = 1e300;
      for (std::size_t r = 0; r < std::max<std::size_t>(o.repeats, 1); ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        kernels[i]();
        best = std::min(best, std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0).count());
      }
      row.ms[i] = best;
    }
    log.debug("P={} done", p);
    rows.push_back(row);
  }

  out << "C=" << cfg.channels << " heads=" << cfg.heads << " window=" << cfg.window_h << "x"
      << cfg.window_w << " C_g=" << cfg.group_channels << "\n";
  out << std::left << std::setw(7) << "P";
  for (auto key : keys) out << std::setw(14) << (std::string(key) + " MAC") << std::setw(9) << "x prev" << std::setw(10) << "ms";
  out << "\n";
  ordered_json j = json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << std::setw(7) << rows[r].tokens;
    ordered_json jr = {{"tokens", rows[r].tokens}};
    for (int i = 0; i < 3; ++i) {
      std::ostringstream ratio;
      double growth = r ? double(rows[r].macs[i]) / double(rows[r - 1].macs[i]) : 0.0;
      if (r) ratio << std::fixed << std::setprecision(2) << growth;
      else ratio << "-";
      std::ostringstream ms;
      ms << std::fixed << std::setprecision(2) << rows[r].ms[i];
      out << std::setw(14) << rows[r].macs[i] << std::setw(9) << ratio.str() << std::setw(10) << ms.str();
      jr[keys[i]] = {{"macs", rows[r].macs[i]}, {"ms", rows[r].ms[i]}};
    }
    out << "\n";
    j.push_back(jr);
  }
  const auto& last = rows.back();
  out << "dense/window MAC ratio at P=" << last.tokens << ": "
      << double(last.macs[0]) / double(last.macs[1]) << " (P/P_w = "
      << double(last.tokens) / double(cfg.window_tokens()) << ")\n";
  if (!o.out.empty()) std::ofstream(o.out) << j.dump(2) << "\n";
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const depth::TrainingError*>(&e) || dynamic_cast<const tensor::NumericError*>(&e))
    return "numeric";
  if (dynamic_cast<const events::ParseError*>(&e) || dynamic_cast<const events::EventError*>(&e))
    return "events";
  if (dynamic_cast<const io::ImageError*>(&e) || dynamic_cast<const tensor::CheckpointError*>(&e) ||
      dynamic_cast<const synth::SceneError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e))
    return "io";
  return "internal";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto log = make_logger(err);
  Options o;
  CLI::App app{"Event and image fusion depth estimation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--threads", o.threads, "Worker cap; 1 is fully deterministic")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "Overrides the run seed");

  auto* vox = app.add_subcommand("voxelize", "Turn an event file into per-interval voxel grids");
  vox->add_option("--events", o.events_path, "Event file (text or binary)")->required()->check(CLI::ExistingFile);
  vox->add_option("--timestamps", o.timestamps_path, "Frame times, one per line")->required()->check(CLI::ExistingFile);
  vox->add_option("--out", o.out, "Output directory")->required();
  vox->add_option("--bins", o.bins, "Temporal bins")->check(CLI::PositiveNumber);
  vox->add_option("--height", o.height, "Sensor height (default: from binary header)");
  vox->add_option("--width", o.width, "Sensor width (default: from binary header)");

  auto* syn = app.add_subcommand("synth", "Generate a synthetic dataset");
  syn->add_option("--out", o.out, "Output directory")->required();
  syn->add_option("--height", o.height, "Frame height (default 64)");
  syn->add_option("--width", o.width, "Frame width (default 64)");
  syn->add_option("--scenes", o.scenes)->check(CLI::PositiveNumber);
  syn->add_option("--frames-per-scene", o.frames_per_scene)->check(CLI::Range(2, 100000));
  syn->add_option("--blank-fraction", o.blank_fraction)->check(CLI::Range(0.0, 1.0));
  syn->add_option("--threshold", o.threshold, "Event contrast threshold")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train from a run config");
  train->add_option("--config", o.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "Overrides out_dir");
  train->add_option("--dataset", o.dataset, "Overrides dataset");

  auto* infer = app.add_subcommand("infer", "Predict depth for one voxel grid and image");
  infer->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingFile);
  infer->add_option("--config", o.config, "Defaults to config.json beside the checkpoint");
  infer->add_option("--voxel", o.voxel_path, "Voxel .f32 file with .json sidecar");
  infer->add_option("--image", o.image_path, "Grayscale PGM");
  infer->add_option("--out", o.out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Depth metrics over a dataset");
  eval->add_option("--dataset", o.dataset)->required();
  eval->add_option("--checkpoint", o.checkpoint);
  eval->add_option("--config", o.config, "Defaults to config.json beside the checkpoint");
  eval->add_option("--pred", o.pred_dir, "Directory of NNNNNN.pfm predictions");
  eval->add_option("--out", o.out, "Also write the report JSON here");

  auto* bench = app.add_subcommand("bench", "Attention MACs and time for P in {49, 196, 784, 3136}");
  bench->add_option("--config", o.config, "Take C, heads, window and C_g from the first stage");
  bench->add_option("--channels", o.channels)->check(CLI::PositiveNumber);
  bench->add_option("--heads", o.heads)->check(CLI::PositiveNumber);
  bench->add_option("--window", o.window)->check(CLI::PositiveNumber);
  bench->add_option("--group-channels", o.group_channels)->check(CLI::PositiveNumber);
  bench->add_option("--repeats", o.repeats);
  bench->add_option("--out", o.out, "Write the table as JSON");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    log->debug("threads cap {}", o.threads);
    if (*vox) return cmd_voxelize(o, out, *log);
    if (*syn) return cmd_synth(o, out, *log);
    if (*train) return cmd_train(o, out, *log);
    if (*infer) return cmd_infer(o, out, *log);
    if (*eval) return cmd_eval(o, out, *log);
    if (*bench) return cmd_bench(o, out, *log);
  } catch (const std::exception& e) {
    const auto kind = error_kind(e);
    err << "error: " << kind << ": " << one_line(e.what()) << "\n";
    return kind == "config" || kind == "usage" ? 2 : 1;
  }
  return 2;
}

}  // namespace unict::cli
