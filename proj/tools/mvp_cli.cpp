// mvp: command-line front end.
//
//   mvp simulate <scene.json> <out_dir>
//   mvp generate --cloud --masks --meta --calib --out
//   mvp voxelize --cloud --virtual --out
//   mvp eval chamfer|masked|density ...
//
// Exit codes: 0 success, 1 assertion failure, 2 input error.
// Settings resolve as flag > --config file > MVP_SEED (seed only) > default.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mvp/mvp.hpp"

namespace fs = std::filesystem;
using mvp::json;

namespace {

struct AssertionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(const std::vector<char>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

/// Collects outputs in memory and writes them only after all work succeeded,
/// through temporary files renamed into place.
class OutputSet {
 public:
  void add(const std::string& path, std::vector<char> bytes) { files_.push_back({path, std::move(bytes)}); }
  void add_text(const std::string& path, const std::string& text) { add(path, {text.begin(), text.end()}); }

  json listing() const {
    json out = json::array();
    for (const auto& f : files_) out.push_back({{"path", f.path}, {"sha256", sha256_hex(f.bytes)}});
    return out;
  }

  void commit() const {
    std::vector<std::string> temps;
    try {
      for (const auto& f : files_) {
        const fs::path p(f.path);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        temps.push_back(f.path + ".partial");
        mvp::io::write_file(temps.back(), f.bytes);
      }
      for (std::size_t i = 0; i < files_.size(); ++i) fs::rename(temps[i], files_[i].path);
    } catch (const std::exception& e) {
      std::error_code ec;
      for (const auto& t : temps) fs::remove(t, ec);
      throw mvp::InputError(std::string("cannot write outputs: ") + e.what());
    }
  }

 private:
  struct File {
    std::string path;
    std::vector<char> bytes;
  };
  std::vector<File> files_;
};

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& argv) : command_(std::move(command)), argv_(argv) {}

  void input(const std::string& path) {
    inputs_.push_back({{"path", path}, {"sha256", sha256_hex(mvp::io::read_file(path))}});
  }
  json& config() { return config_; }

  void finish(OutputSet& outputs, const std::string& manifest_path, double wall_time) {
    const json m = {{"command", command_},    {"argv", argv_},
                    {"version", mvp::kVersion}, {"config", config_},
                    {"seed", config_.value("seed", json())},
                    {"inputs", inputs_},      {"outputs", outputs.listing()},
                    {"wall_time_s", wall_time}};
    outputs.add_text(manifest_path, m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  json config_ = json::object();
  json inputs_ = json::array();
};

/// Flag > config file > environment (seed) > default.
class Settings {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    file_ = mvp::load_json(path);
    if (!file_.is_object()) throw mvp::InputError(path + ": config must be a JSON object");
    static const std::vector<std::string> known{
        "tau",  "seed",        "num_classes",   "frame_id",   "score_threshold", "cell_size",   "threads",
        "mode", "range",       "voxel_size",    "min_points", "mask_fraction",   "range_noise", "downscale",
        "erode", "score_noise", "assert_max_chamfer"};
    for (const auto& [key, value] : file_.items())
      if (std::find(known.begin(), known.end(), key) == known.end())
        throw mvp::InputError(path + ": unknown config key '" + key + "'");
  }

  template <typename T>
  T get(const std::string& key, const std::optional<T>& flag, T fallback) const {
    if (flag) return *flag;
    if (file_.contains(key)) {
      try {
        return file_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw mvp::InputError("config key '" + key + "': " + e.what());
      }
    }
    return fallback;
  }

  std::optional<double> optional_double(const std::string& key, const std::optional<double>& flag) const {
    if (flag) return flag;
    if (file_.contains(key)) return get<double>(key, std::nullopt, 0.0);
    return std::nullopt;
  }

  std::uint64_t seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback = 0) const {
    if (flag) return *flag;
    if (file_.contains("seed")) return get<std::uint64_t>("seed", std::nullopt, 0);
    if (const char* env = std::getenv("MVP_SEED"); env && *env) {
      char* end = nullptr;
      const auto v = std::strtoull(env, &end, 10);
      if (*end != '\0') throw mvp::InputError(std::string("MVP_SEED is not an unsigned integer: ") + env);
      return v;
    }
    return fallback;
  }

 private:
  json file_ = json::object();
};

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<double> parse_list(const std::string& text, std::size_t n, const std::string& what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw mvp::InputError(what + ": '" + item + "' is not a number");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.size() != n) throw mvp::InputError(what + " needs " + std::to_string(n) + " comma-separated values");
  return out;
}

std::vector<mvp::Vec3> load_point_set(const std::string& path) {
  const auto bytes = mvp::io::read_file(path);
  std::vector<mvp::Vec3> out;
  if (bytes.size() >= 5 && std::string(bytes.data(), 5) == "MVPC1") {
    for (const auto& p : mvp::decode_cloud(bytes).points) out.push_back(p.position());
  } else if (bytes.size() >= 5 && std::string(bytes.data(), 5) == "MVVP1") {
    for (const auto& g : mvp::decode_virtual(bytes).groups)
      for (const auto& p : g.points) out.push_back(p.position);
  } else {
    throw mvp::ParseError(path + ": expected an MVPC1 or MVVP1 file", 0);
  }
  return out;
}

std::vector<std::uint32_t> load_gt_ids(const std::string& path) {
  if (!fs::exists(path)) throw mvp::InputError("ground-truth sidecar not found: " + path);
  const json j = mvp::load_json(path);
  try {
    return j.at("point_object_ids").get<std::vector<std::uint32_t>>();
  } catch (const json::exception& e) {
    throw mvp::InputError(path + ": malformed ground-truth sidecar: " + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

struct CommonOpts {
  std::string config_path;
  std::optional<unsigned> threads;
  std::string manifest;
};

void add_common(CLI::App* app, CommonOpts& o, bool with_manifest = true) {
  app->add_option("--config", o.config_path, "JSON file with default settings")->check(CLI::ExistingFile);
  app->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  if (with_manifest) app->add_option("--manifest", o.manifest, "manifest path (default <out>.manifest.json)");
}

struct SimulateOpts {
  CommonOpts common;
  std::string scene, out_dir;
  std::optional<double> range_noise, downscale, score_noise;
  std::optional<int> erode;
  std::optional<std::uint64_t> seed;
};

void run_simulate(const SimulateOpts& o, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  Settings settings;
  settings.load(o.common.config_path);
  auto spec = mvp::sim::scene_from_json(mvp::load_json(o.scene));
  spec.seed = settings.seed(o.seed, spec.seed);
  spec.lidar.range_noise = settings.get("range_noise", o.range_noise, spec.lidar.range_noise);
  const double downscale = settings.get("downscale", o.downscale, 1.0);
  const int erode = settings.get("erode", o.erode, 0);
  const double score_noise = settings.get("score_noise", o.score_noise, 0.0);
  const unsigned threads = resolve_threads(settings.get("threads", o.common.threads, 0u));
  spec.validate();

  auto frame = mvp::sim::simulate(spec, threads);
  auto masks = mvp::sim::downscale_masks(frame.masks, downscale);
  masks = mvp::sim::erode_masks(masks, erode);
  masks = mvp::sim::perturb_scores(masks, score_noise, spec.seed);

  const fs::path dir(o.out_dir);
  auto path = [&](const char* name) { return (dir / name).string(); };
  OutputSet out;
  out.add(path("cloud.mvpc"), mvp::encode_cloud(frame.scan.cloud));
  out.add(path("masks.pgm"), mvp::encode_pgm16(masks.width(), masks.height(), masks.ids()));
  out.add_text(path("masks.json"), mvp::mask_meta_json(masks).dump(2) + "\n");
  out.add_text(path("calib.json"), mvp::calibration_json(frame.calib).dump(2) + "\n");
  out.add_text(path("gt.json"), mvp::sim::ground_truth_json(spec, frame.scan).dump() + "\n");

  Manifest m("simulate", argv);
  m.input(o.scene);
  if (!o.common.config_path.empty()) m.input(o.common.config_path);
  m.config() = {{"seed", spec.seed},         {"frame_id", spec.frame_id},    {"range_noise", spec.lidar.range_noise},
                {"downscale", downscale},    {"erode", erode},               {"score_noise", score_noise},
                {"threads", threads}};
  m.finish(out, o.common.manifest.empty() ? path("manifest.json") : o.common.manifest, seconds_since(t0));
  out.commit();
  std::cout << "simulated " << frame.scan.cloud.points.size() << " lidar points, " << masks.instances().size()
            << " instances -> " << o.out_dir << "\n";
}

struct GenerateOpts {
  CommonOpts common;
  std::string cloud, masks, meta, calib, out, diagnostics, csv;
  std::optional<std::size_t> tau;
  std::optional<std::uint64_t> seed, frame_id;
  std::optional<int> num_classes, cell_size;
  std::optional<double> score_threshold;
};

void run_generate(const GenerateOpts& o, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  Settings settings;
  settings.load(o.common.config_path);
  mvp::GenerationConfig gen;
  gen.tau = settings.get("tau", o.tau, mvp::kDefaultTau);
  gen.seed = settings.seed(o.seed);
  gen.frame_id = settings.get("frame_id", o.frame_id, std::uint64_t{0});
  gen.num_classes = settings.get("num_classes", o.num_classes, mvp::kDefaultNumClasses);
  gen.nn_cell_size = settings.get("cell_size", o.cell_size, mvp::kDefaultCellSize);
  gen.threads = resolve_threads(settings.get("threads", o.common.threads, 0u));
  const double threshold = settings.get("score_threshold", o.score_threshold, mvp::kDefaultScoreThreshold);
  gen.validate();

  const auto calib = mvp::load_calibration(o.calib);
  auto cloud = mvp::load_cloud(o.cloud);
  cloud.timestamp = calib.t_lidar;
  const auto masks = mvp::load_masks(o.masks, o.meta, threshold);
  const auto result = mvp::generate(cloud, masks, calib, gen);

  OutputSet out;
  out.add(o.out, mvp::encode_virtual(result.points));
  const std::string diag_path = o.diagnostics.empty() ? o.out + ".diagnostics.json" : o.diagnostics;
  out.add_text(diag_path, mvp::diagnostics_json(result).dump(2) + "\n");
  if (!o.csv.empty()) out.add_text(o.csv, mvp::virtual_csv(result.points));

  Manifest m("generate", argv);
  for (const auto& p : {o.cloud, o.masks, o.meta, o.calib}) m.input(p);
  if (!o.common.config_path.empty()) m.input(o.common.config_path);
  m.config() = {{"tau", gen.tau},
                {"seed", gen.seed},
                {"frame_id", gen.frame_id},
                {"num_classes", gen.num_classes},
                {"feature_dim", result.points.feature_dim},
                {"cell_size", gen.nn_cell_size},
                {"score_threshold", threshold},
                {"threads", gen.threads}};
  m.finish(out, o.common.manifest.empty() ? o.out + ".manifest.json" : o.common.manifest, seconds_since(t0));
  out.commit();
  std::cout << "generated " << result.points.total_points() << " virtual points for " << masks.instances().size()
            << " instances (" << result.skipped_instances() << " skipped: empty frustum)\n";
}

struct VoxelizeOpts {
  CommonOpts common;
  std::string cloud, virt, out, csv;
  std::optional<std::string> mode, range, voxel_size;
};

void run_voxelize(const VoxelizeOpts& o, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  Settings settings;
  settings.load(o.common.config_path);
  const std::string mode = settings.get("mode", o.mode, std::string("split"));
  if (mode != "split" && mode != "padded") throw mvp::InputError("--mode must be split or padded");
  mvp::VoxelGridSpec spec;
  const auto range_text = settings.get("range", o.range, std::string("-54,54,-54,54,-5,3"));
  const auto size_text = settings.get("voxel_size", o.voxel_size, std::string("0.075,0.075,0.2"));
  const auto r = parse_list(range_text, 6, "--range");
  const auto s = parse_list(size_text, 3, "--voxel-size");
  spec = {r[0], r[1], r[2], r[3], r[4], r[5], s[0], s[1], s[2]};
  spec.validate();

  const auto cloud = mvp::load_cloud(o.cloud);
  const auto virt = mvp::load_virtual(o.virt);
  const auto enc = mode == "split" ? mvp::encode_split(cloud, virt, spec) : mvp::encode_padded(cloud, virt, spec);

  OutputSet out;
  out.add(o.out, mvp::encode_voxels(enc));
  if (!o.csv.empty()) out.add_text(o.csv, mvp::voxels_csv(enc));
  Manifest m("voxelize", argv);
  m.input(o.cloud);
  m.input(o.virt);
  if (!o.common.config_path.empty()) m.input(o.common.config_path);
  const auto v = spec.values();
  m.config() = {{"mode", mode},
                {"range", std::vector<double>(v.begin(), v.begin() + 6)},
                {"voxel_size", std::vector<double>(v.begin() + 6, v.end())},
                {"feature_width", enc.width()},
                {"dropped_real", enc.dropped_real},
                {"dropped_virtual", enc.dropped_virtual}};
  m.finish(out, o.common.manifest.empty() ? o.out + ".manifest.json" : o.common.manifest, seconds_since(t0));
  out.commit();
  std::cout << enc.voxels.size() << " voxels (" << mode << ", width " << enc.width() << "), dropped "
            << enc.dropped_real << " real / " << enc.dropped_virtual << " virtual points out of range\n";
}

struct ChamferOpts {
  CommonOpts common;
  std::string a, b, out;
  std::optional<double> assert_max;
};

void check_assertion(std::optional<double> max_chamfer, double value, std::size_t evaluated = 1) {
  if (!max_chamfer) return;
  if (evaluated == 0) throw AssertionFailure("no objects were evaluated, cannot check --assert-max-chamfer");
  if (!(value <= *max_chamfer))
    throw AssertionFailure("chamfer " + mvp::csv_number(value) + " m exceeds --assert-max-chamfer " +
                           mvp::csv_number(*max_chamfer));
}

void run_chamfer(const ChamferOpts& o, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  Settings settings;
  settings.load(o.common.config_path);
  const auto max_chamfer = settings.optional_double("assert_max_chamfer", o.assert_max);
  const auto r = mvp::chamfer(load_point_set(o.a), load_point_set(o.b));
  json report = mvp::chamfer_json(r);
  report["chamfer_definition"] = mvp::kChamferDefinition;

  OutputSet out;
  Manifest m("eval chamfer", argv);
  m.input(o.a);
  m.input(o.b);
  m.config() = {{"assert_max_chamfer", max_chamfer ? json(*max_chamfer) : json()}};
  if (!o.out.empty()) {
    out.add_text(o.out, report.dump(2) + "\n");
    m.finish(out, o.common.manifest.empty() ? o.out + ".manifest.json" : o.common.manifest, seconds_since(t0));
  } else if (!o.common.manifest.empty()) {
    m.finish(out, o.common.manifest, seconds_since(t0));
  }
  out.commit();
  std::cout << report.dump(2) << "\n";
  check_assertion(max_chamfer, r.bidirectional);
}

struct MaskedOpts {
  CommonOpts common;
  std::string cloud, masks, meta, calib, gt, out, csv;
  std::optional<std::size_t> min_points;
  std::optional<double> mask_fraction, score_threshold, assert_max;
  std::optional<std::uint64_t> seed, frame_id;
  std::optional<int> cell_size;
};

void run_masked(const MaskedOpts& o, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  Settings settings;
  settings.load(o.common.config_path);
  mvp::MaskedExperimentConfig exp;
  exp.min_points = settings.get("min_points", o.min_points, std::size_t{15});
  exp.mask_fraction = settings.get("mask_fraction", o.mask_fraction, 0.8);
  exp.seed = settings.seed(o.seed);
  exp.validate();
  mvp::GenerationConfig gen;
  gen.frame_id = settings.get("frame_id", o.frame_id, std::uint64_t{0});
  gen.nn_cell_size = settings.get("cell_size", o.cell_size, mvp::kDefaultCellSize);
  gen.threads = resolve_threads(settings.get("threads", o.common.threads, 0u));
  const double threshold = settings.get("score_threshold", o.score_threshold, mvp::kDefaultScoreThreshold);
  const auto max_chamfer = settings.optional_double("assert_max_chamfer", o.assert_max);

  const auto gt = load_gt_ids(o.gt);
  const auto calib = mvp::load_calibration(o.calib);
  const auto cloud = mvp::load_cloud(o.cloud);
  const auto masks = mvp::load_masks(o.masks, o.meta, threshold);
  const auto report = mvp::masked_experiment(cloud, gt, masks, calib, gen, exp);
  const json j = mvp::masked_report_json(report, exp, gen);

  OutputSet out;
  if (!o.out.empty()) out.add_text(o.out, j.dump(2) + "\n");
  if (!o.csv.empty()) out.add_text(o.csv, mvp::masked_report_csv(report));
  Manifest m("eval masked", argv);
  for (const auto& p : {o.cloud, o.masks, o.meta, o.calib, o.gt}) m.input(p);
  if (!o.common.config_path.empty()) m.input(o.common.config_path);
  m.config() = j["config"];
  m.config()["score_threshold"] = threshold;
  m.config()["threads"] = gen.threads;
  m.config()["assert_max_chamfer"] = max_chamfer ? json(*max_chamfer) : json();
  const std::string primary = !o.out.empty() ? o.out : o.csv;
  if (!o.common.manifest.empty() || !primary.empty())
    m.finish(out, o.common.manifest.empty() ? primary + ".manifest.json" : o.common.manifest, seconds_since(t0));
  out.commit();
  std::cout << "masked experiment: " << report.evaluated << " objects evaluated, aggregate chamfer "
            << mvp::csv_number(report.aggregate.bidirectional) << " m\n";
  check_assertion(max_chamfer, report.aggregate.bidirectional, report.evaluated);
}

struct DensityOpts {
  CommonOpts common;
  std::string cloud, virt, gt, masks, meta, out, csv;
  std::optional<std::size_t> tau;
  std::optional<double> score_threshold;
};

void run_density(const DensityOpts& o, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  Settings settings;
  settings.load(o.common.config_path);
  const std::size_t tau = settings.get("tau", o.tau, mvp::kDefaultTau);
  const double threshold = settings.get("score_threshold", o.score_threshold, mvp::kDefaultScoreThreshold);
  if (o.masks.empty() != o.meta.empty()) throw mvp::InputError("--masks and --meta must be given together");

  const auto gt = load_gt_ids(o.gt);
  const auto cloud = mvp::load_cloud(o.cloud);
  const auto virt = mvp::load_virtual(o.virt);
  std::optional<mvp::InstanceMaskSet> masks;
  if (!o.masks.empty()) masks = mvp::load_masks(o.masks, o.meta, threshold);
  const auto report = mvp::density_report(cloud, virt, gt, masks ? &*masks : nullptr, tau);
  const json j = mvp::density_report_json(report);

  OutputSet out;
  if (!o.out.empty()) out.add_text(o.out, j.dump(2) + "\n");
  if (!o.csv.empty()) out.add_text(o.csv, mvp::density_report_csv(report));
  Manifest m("eval density", argv);
  for (const auto& p : {o.cloud, o.virt, o.gt}) m.input(p);
  if (masks) {
    m.input(o.masks);
    m.input(o.meta);
  }
  m.config() = {{"tau", tau}, {"score_threshold", threshold}};
  const std::string primary = !o.out.empty() ? o.out : o.csv;
  if (!o.common.manifest.empty() || !primary.empty())
    m.finish(out, o.common.manifest.empty() ? primary + ".manifest.json" : o.common.manifest, seconds_since(t0));
  out.commit();
  std::cout << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Multimodal virtual point toolkit"};
  app.set_version_flag("--version", mvp::kVersion);
  app.require_subcommand(1);

  SimulateOpts sim;
  auto* sim_cmd = app.add_subcommand("simulate", "ray-cast a scene into a lidar cloud, masks and calibration");
  sim_cmd->add_option("scene", sim.scene, "scene description (JSON)")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("out_dir", sim.out_dir, "output directory")->required();
  sim_cmd->add_option("--seed", sim.seed, "override the scene seed");
  sim_cmd->add_option("--range-noise", sim.range_noise, "Gaussian lidar range noise sigma (m)");
  sim_cmd->add_option("--downscale", sim.downscale, "degrade masks: nearest-neighbour downscale factor");
  sim_cmd->add_option("--erode", sim.erode, "degrade masks: erosion steps");
  sim_cmd->add_option("--score-noise", sim.score_noise, "degrade masks: score noise sigma");
  add_common(sim_cmd, sim.common);

  GenerateOpts gen;
  auto* gen_cmd = app.add_subcommand("generate", "lift instance masks to virtual points");
  gen_cmd->add_option("--cloud", gen.cloud, "lidar cloud (MVPC1)")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--masks", gen.masks, "instance map (16-bit PGM)")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--meta", gen.meta, "instance metadata (JSON)")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--calib", gen.calib, "calibration (JSON)")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "virtual points (MVVP1)")->required();
  gen_cmd->add_option("--diagnostics", gen.diagnostics, "diagnostics JSON (default <out>.diagnostics.json)");
  gen_cmd->add_option("--csv", gen.csv, "also write virtual points as CSV");
  gen_cmd->add_option("--tau", gen.tau, "virtual points per instance (default 50)");
  gen_cmd->add_option("--seed", gen.seed, "sampling seed (default MVP_SEED or 0)");
  gen_cmd->add_option("--frame-id", gen.frame_id, "frame id mixed into the random streams");
  gen_cmd->add_option("--num-classes", gen.num_classes, "number of classes C; features have C+1 entries (default 10)");
  gen_cmd->add_option("--score-threshold", gen.score_threshold, "drop instances scoring below this (default 0.05)");
  gen_cmd->add_option("--cell-size", gen.cell_size, "nearest-neighbour grid cell in pixels (default 8)");
  add_common(gen_cmd, gen.common);

  VoxelizeOpts vox;
  auto* vox_cmd = app.add_subcommand("voxelize", "encode real and virtual points into voxels");
  vox_cmd->add_option("--cloud", vox.cloud, "lidar cloud (MVPC1)")->required()->check(CLI::ExistingFile);
  vox_cmd->add_option("--virtual", vox.virt, "virtual points (MVVP1)")->required()->check(CLI::ExistingFile);
  vox_cmd->add_option("--out", vox.out, "voxel file (MVVX1)")->required();
  vox_cmd->add_option("--csv", vox.csv, "also write voxels as CSV");
  vox_cmd->add_option("--mode", vox.mode, "split (default) or padded");
  vox_cmd->add_option("--range", vox.range, "x0,x1,y0,y1,z0,z1 (default -54,54,-54,54,-5,3)");
  vox_cmd->add_option("--voxel-size", vox.voxel_size, "dx,dy,dz (default 0.075,0.075,0.2)");
  add_common(vox_cmd, vox.common);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate depth completion");
  eval_cmd->require_subcommand(1);

  ChamferOpts ch;
  auto* ch_cmd = eval_cmd->add_subcommand("chamfer", "bidirectional chamfer distance between two point files");
  ch_cmd->add_option("--a", ch.a, "first point set (MVPC1 or MVVP1)")->required()->check(CLI::ExistingFile);
  ch_cmd->add_option("--b", ch.b, "second point set (MVPC1 or MVVP1)")->required()->check(CLI::ExistingFile);
  ch_cmd->add_option("--out", ch.out, "report JSON");
  ch_cmd->add_option("--assert-max-chamfer", ch.assert_max, "exit 1 if the bidirectional chamfer exceeds this");
  add_common(ch_cmd, ch.common);

  MaskedOpts mk;
  auto* mk_cmd = eval_cmd->add_subcommand("masked", "hide lidar returns and measure how well virtual points recover them");
  mk_cmd->add_option("--cloud", mk.cloud, "lidar cloud (MVPC1)")->required()->check(CLI::ExistingFile);
  mk_cmd->add_option("--masks", mk.masks, "instance map (16-bit PGM)")->required()->check(CLI::ExistingFile);
  mk_cmd->add_option("--meta", mk.meta, "instance metadata (JSON)")->required()->check(CLI::ExistingFile);
  mk_cmd->add_option("--calib", mk.calib, "calibration (JSON)")->required()->check(CLI::ExistingFile);
  mk_cmd->add_option("--gt", mk.gt, "ground-truth sidecar (gt.json)")->required();
  mk_cmd->add_option("--out", mk.out, "report JSON");
  mk_cmd->add_option("--csv", mk.csv, "per-object CSV");
  mk_cmd->add_option("--min-points", mk.min_points, "minimum returns per object (default 15)");
  mk_cmd->add_option("--mask-fraction", mk.mask_fraction, "fraction of returns hidden (default 0.8)");
  mk_cmd->add_option("--seed", mk.seed, "masking seed (default MVP_SEED or 0)");
  mk_cmd->add_option("--frame-id", mk.frame_id, "frame id mixed into the random streams");
  mk_cmd->add_option("--cell-size", mk.cell_size, "nearest-neighbour grid cell in pixels (default 8)");
  mk_cmd->add_option("--score-threshold", mk.score_threshold, "drop instances scoring below this (default 0.05)");
  mk_cmd->add_option("--assert-max-chamfer", mk.assert_max, "exit 1 if the aggregate chamfer exceeds this");
  add_common(mk_cmd, mk.common);

  DensityOpts dn;
  auto* dn_cmd = eval_cmd->add_subcommand("density", "per-object real and virtual point counts by range");
  dn_cmd->add_option("--cloud", dn.cloud, "lidar cloud (MVPC1)")->required()->check(CLI::ExistingFile);
  dn_cmd->add_option("--virtual", dn.virt, "virtual points (MVVP1)")->required()->check(CLI::ExistingFile);
  dn_cmd->add_option("--gt", dn.gt, "ground-truth sidecar (gt.json)")->required();
  dn_cmd->add_option("--masks", dn.masks, "instance map, adds the min(tau, pixels) target")->check(CLI::ExistingFile);
  dn_cmd->add_option("--meta", dn.meta, "instance metadata")->check(CLI::ExistingFile);
  dn_cmd->add_option("--tau", dn.tau, "virtual points per instance used for the target (default 50)");
  dn_cmd->add_option("--score-threshold", dn.score_threshold, "drop instances scoring below this (default 0.05)");
  dn_cmd->add_option("--out", dn.out, "report JSON");
  dn_cmd->add_option("--csv", dn.csv, "per-object CSV");
  add_common(dn_cmd, dn.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim_cmd) run_simulate(sim, args);
    if (*gen_cmd) run_generate(gen, args);
    if (*vox_cmd) run_voxelize(vox, args);
    if (*ch_cmd) run_chamfer(ch, args);
    if (*mk_cmd) run_masked(mk, args);
    if (*dn_cmd) run_density(dn, args);
  } catch (const AssertionFailure& e) {
    std::cerr << "mvp: assertion failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "mvp: error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
