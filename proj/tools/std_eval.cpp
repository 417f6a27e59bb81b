// std_eval: sequence replay and precision/recall sweeps.
//
//   std_eval run --config cfg.txt --scans velodyne/ --poses poses.txt --out results/
//   std_eval sweep --records results/records.csv --gt results/gt.csv --out pr.csv

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stdesc/stdesc.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

int exit_code_for(stdesc::ErrorCode c) {
  switch (c) {
    case stdesc::ErrorCode::ConfigError:
    case stdesc::ErrorCode::InvalidArgument:
      return kExitConfig;
    case stdesc::ErrorCode::IoError:
    case stdesc::ErrorCode::MalformedRecord:
    case stdesc::ErrorCode::UnsupportedFormat:
      return kExitIo;
    default:
      return kExitOther;
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw stdesc::Error(stdesc::ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw stdesc::Error(stdesc::ErrorCode::IoError, "cannot open " + p.string());
  return in;
}

json latency_json(const stdesc::LatencyStats& s) {
  return {{"total", s.total}, {"mean", s.mean}, {"p50", s.p50}, {"p90", s.p90}, {"p99", s.p99}, {"max", s.max}};
}

json summary_json(const stdesc::Config& cfg, const stdesc::RunOutput& run) {
  const auto& s = run.summary;
  json j;
  j["scans"] = s.scans;
  j["keyframes"] = s.keyframes;
  j["descriptors"] = s.descriptors;
  j["detections"] = s.detections;
  j["true_positives"] = s.true_positives;
  j["false_positives"] = s.false_positives;
  j["gt_loops"] = s.gt_loops;
  j["gt_radius"] = cfg.gt_radius;
  j["sigma_pc"] = cfg.sigma_pc;
  j["seed"] = cfg.seed;
  j["latency_ms"] = {{"extract", latency_json(s.extract_ms)},
                     {"query", latency_json(s.query_ms)},
                     {"verify", latency_json(s.verify_ms)},
                     {"total", latency_json(s.total_ms)}};
  std::vector<double> rot, trans;
  for (const auto& r : run.records)
    if (r.error) {
      rot.push_back(r.error->rotation_deg);
      trans.push_back(r.error->translation_m);
    }
  auto err = [](const std::vector<double>& v) {
    auto st = stdesc::LatencyStats::of(v);
    return json{{"mean", st.mean}, {"p50", st.p50}, {"max", st.max}};
  };
  j["pose_error"] = {{"count", rot.size()}, {"rotation_deg", err(rot)}, {"translation_m", err(trans)}};
  return j;
}

int cmd_run(const fs::path& config, const std::vector<std::string>& overrides, const fs::path& scans,
            const fs::path& poses, const fs::path& out) {
  stdesc::Config cfg = stdesc::Config::load(config);
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw stdesc::Error(stdesc::ErrorCode::ConfigError, "--set expects key=value: " + kv);
    cfg.set(stdesc::detail::trim(kv.substr(0, eq)), stdesc::detail::trim(kv.substr(eq + 1)));
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw stdesc::Error(stdesc::ErrorCode::IoError, "cannot create " + out.string() + ": " + ec.message());

  stdesc::RunOutput run = stdesc::run_sequence(cfg, scans, poses);

  auto rec = open_out(out / "records.csv");
  stdesc::write_records_csv(rec, run.records);
  auto tim = open_out(out / "timing.csv");
  stdesc::write_timing_csv(tim, run.records);
  auto gt = open_out(out / "gt.csv");
  stdesc::write_gt_csv(gt, run.ground_truth);
  auto pr = open_out(out / "pr.csv");
  stdesc::write_pr_csv(pr, run.pr);
  auto sum = open_out(out / "summary.json");
  sum << summary_json(cfg, run).dump(2) << '\n';
  auto used = open_out(out / "config_used.txt");
  used << cfg.to_text();

  std::cout << run.summary.keyframes << " keyframes, " << run.summary.detections << " detections ("
            << run.summary.true_positives << " TP, " << run.summary.false_positives << " FP) -> " << out.string()
            << '\n';
  return 0;
}

std::vector<double> parse_grid(const std::string& s) {
  if (s.empty()) return stdesc::default_sweep_grid();
  std::vector<double> grid;
  std::string tok;
  std::istringstream ss(s);
  while (std::getline(ss, tok, ',')) {
    double v = 0;
    if (!stdesc::detail::parse_double(stdesc::detail::trim(tok), v) || v < 0 || v > 1)
      throw stdesc::Error(stdesc::ErrorCode::ConfigError, "bad grid value '" + tok + "'");
    grid.push_back(v);
  }
  return grid;
}

int cmd_sweep(const fs::path& records, const fs::path& gt_file, const fs::path& out, const std::string& grid,
              bool best_of) {
  auto g = parse_grid(grid);
  auto rin = open_in(records);
  auto recs = stdesc::read_records_csv(rin);
  auto gin = open_in(gt_file);
  auto gt = stdesc::read_gt_csv(gin);
  auto rows = stdesc::pr_sweep(recs, gt, g, best_of);
  auto o = open_out(out);
  stdesc::write_pr_csv(o, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STD place-recognition evaluation"};
  app.require_subcommand(1);

  std::string config, scans, poses, out_dir;
  auto* run = app.add_subcommand("run", "replay a scan sequence and write records, PR table and summary");
  run->add_option("--config", config, "key=value parameter file")->required();
  run->add_option("--scans", scans, "directory of .bin or .pcd scans")->required();
  run->add_option("--poses", poses, "pose file (KITTI 3x4 rows or TUM rows)")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  std::vector<std::string> overrides;
  std::string downsample;
  run->add_option("--set", overrides, "override a config key (key=value, repeatable)");
  run->add_option("--downsample", downsample, "keyframe voxel downsample leaf in m, 0 disables");

  std::string records, gt, out_csv, grid;
  bool best_of = false;
  auto* sweep = app.add_subcommand("sweep", "re-score stored records over a sigma_pc grid");
  sweep->add_option("--records", records, "records.csv from run")->required();
  sweep->add_option("--gt", gt, "gt.csv from run")->required();
  sweep->add_option("--out", out_csv, "PR table to write")->required();
  sweep->add_option("--grid", grid, "comma-separated thresholds (default 0.1..0.9)");
  sweep->add_flag("--best-of", best_of, "pick the highest-overlap candidate instead of the first accepted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      if (!downsample.empty()) overrides.push_back("downsample_leaf=" + downsample);
      return cmd_run(config, overrides, scans, poses, out_dir);
    }
    return cmd_sweep(records, gt, out_csv, grid, best_of);
  } catch (const stdesc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
}
