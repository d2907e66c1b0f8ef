// Command line front end for the sanding pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sandbot/harness.hpp"

namespace fs = std::filesystem;
using namespace sandbot;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

PipelineConfig load(const Common& c) {
  PipelineConfig cfg = c.config_path.empty() ? PipelineConfig{} : load_config(c.config_path);
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.sanding.params.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("-o,--out", c.out_dir, "output directory (overrides output_dir)");
  app->add_option("--seed", c.seed, "top-level seed (overrides seed)");
}

int cmd_scan(const Common& c) {
  const PipelineConfig cfg = load(c);
  const auto scans = acquire_scans(cfg, initial_roughness(cfg));
  fs::create_directories(fs::path(cfg.output_dir) / "scans");
  for (std::size_t k = 0; k < scans.size(); ++k) {
    const fs::path p = fs::path(cfg.output_dir) / "scans" / ("scan_" + std::to_string(k) + ".ply");
    write_ply(p.string(), scans[k]);
    std::printf("%s  %zu points\n", p.c_str(), scans[k].size());
  }
  return 0;
}

int cmd_model(const Common& c, const std::string& scan_dir) {
  const PipelineConfig cfg = load(c);
  const fs::path dir = scan_dir.empty() ? fs::path(cfg.output_dir) / "scans" : fs::path(scan_dir);
  std::vector<PointCloud> scans;
  for (int k = 0; k < cfg.scan.num_views; ++k) {
    const fs::path p = dir / ("scan_" + std::to_string(k) + ".ply");
    if (!fs::exists(p)) {
      if (k == 0) scans = acquire_scans(cfg, initial_roughness(cfg));
      if (k == 0) std::printf("no scans in %s, generating them\n", dir.c_str());
      break;
    }
    scans.push_back(read_ply(p.string()));
  }
  require(static_cast<int>(scans.size()) == cfg.scan.num_views, ErrorCode::InsufficientData,
          "expected " + std::to_string(cfg.scan.num_views) + " scans in " + dir.string());
  const ModelResult m = build_model(cfg, scans);
  fs::create_directories(cfg.output_dir);
  const fs::path out = fs::path(cfg.output_dir) / "model.ply";
  write_ply(out.string(), m.merge.cloud);
  std::printf("%s  %zu points  rms to mesh %.3g m\n", out.c_str(), m.merge.cloud.size(), m.rms_to_mesh);
  for (std::size_t k = 0; k < m.merge.rms.size(); ++k) std::printf("  scan %zu icp rms %.3g m\n", k, m.merge.rms[k]);
  return 0;
}

int cmd_plan(const Common& c) {
  const PipelineConfig cfg = load(c);
  const WorkCell cell = make_work_cell(cfg);
  const SequenceResult seq = ga_optimize_sequence(cell.tasks, cfg.ga, cell.planner, cell.home);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir / "trajectories");
  std::vector<int> order;
  for (const auto& t : seq.tasks) order.push_back(t.face_id);
  write_cost_matrix_csv((dir / "cost_matrix.csv").string(), seq.matrix.cost);
  write_ga_history_csv((dir / "ga_history.csv").string(), seq.ga);
  write_json((dir / "sequence.json").string(), Json{{"sequence", order}, {"cost", seq.ga.cost}});
  Vec4 q = cell.home;
  for (const auto& t : seq.tasks) {
    const Path path = plan_single_query(cell.planner, q, t.q_start);
    const Trajectory traj = lspb_parameterize(path, cfg.robot.velocity_limits,
                                              cfg.robot.acceleration_limits, cfg.trajectory_dt);
    char name[40];
    std::snprintf(name, sizeof name, "face_%02d.csv", t.face_id);
    write_trajectory_csv((dir / "trajectories" / name).string(), traj);
    q = t.q_start;
  }
  std::printf("sequence:");
  for (int f : order) std::printf(" %d", f);
  std::printf("\ncost %.6g after %zu generations\n", seq.ga.cost, seq.ga.best_history.size());
  return 0;
}

int cmd_sand(const Common& c, int face, const std::string& csv) {
  const PipelineConfig cfg = load(c);
  SandingSetup setup;
  if (face < 0) {
    setup = reference_setup(cfg);
  } else {
    const WorkCell cell = make_work_cell(cfg);
    require(face < static_cast<int>(cell.tasks.size()), ErrorCode::InvalidArgument,
            "face index out of range");
    setup = face_setup(cfg, cell, face);
  }
  const SandingResult r = run_sanding(cfg, setup, cfg.seed);
  fs::path out = csv;
  if (out.empty()) {
    fs::create_directories(fs::path(cfg.output_dir) / "logs");
    out = fs::path(cfg.output_dir) / "logs" /
          (face < 0 ? std::string("reference.csv") : detail::face_tag(face, 0) + ".csv");
  }
  write_sanding_csv(out.string(), r);
  std::printf("steady force %.4f N (error %+.4f)\n", r.steady_force, r.force_error);
  std::printf("max |z_q| after transient %.3g, final window %.3g\n", r.max_zq_after_transient, r.zq_floor);
  std::printf("final |x - x_d| %.3g m\n", r.final_dx);
  std::printf("log %s\n", out.c_str());
  return 0;
}

int cmd_run(const Common& c, bool quiet) {
  const PipelineConfig cfg = load(c);
  PipelineOptions opt;
  opt.log = quiet ? nullptr : &std::cerr;
  const RunReport r = run_pipeline(cfg, opt);
  std::printf("%s  exit %d  wall %.2f s\n", r.pass ? "PASS" : "FAIL", r.exit_code, r.wall_time);
  if (!r.error.empty()) std::printf("stage %s: %s\n", r.failed_stage.c_str(), r.error.c_str());
  return r.exit_code;
}

int cmd_report(const std::string& dir) {
  const fs::path p = fs::path(dir) / "report.json";
  std::ifstream in(p);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + p.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, p.string() + ": " + e.what());
  }
  std::printf("run %s  exit %d", j.value("pass", false) ? "PASS" : "FAIL", j.value("exit_code", -1));
  if (j.contains("wall_time")) std::printf("  wall %.2f s", j["wall_time"].get<double>());
  std::printf("\n");
  if (j.contains("failed_stage")) {
    std::printf("failed at %s: %s\n", j["failed_stage"].get<std::string>().c_str(),
                j.value("error", std::string()).c_str());
  }
  std::printf("model rms %.3g m  ga cost %.4g  travel %.4g\n", j.value("model_rms", 0.0),
              j.value("ga_cost", 0.0), j.value("total_travel_cost", 0.0));
  std::printf("%4s %4s %9s %8s %9s %7s %7s %6s %4s\n", "face", "pos", "force", "err", "zq_max",
              "oe", "rough", "resand", "ok");
  for (const auto& f : j.value("faces", Json::array())) {
    const auto& q = f["quality"];
    const double rb = q.value("roughness_before", 0.0);
    std::printf("%4d %4d %9.3f %+8.3f %9.2e %3d->%-3d %7.3f %6d %4s\n", f.value("face_id", -1),
                f.value("sequence_position", -1), f.value("steady_force", 0.0),
                f.value("force_error", 0.0), f.value("max_zq_after_transient", 0.0),
                q.value("overexposure_before", 0), q.value("overexposure_after", 0),
                rb > 0 ? q.value("roughness_after", 0.0) / rb : 0.0, f.value("resand_count", 0),
                f.value("passed", false) ? "yes" : "no");
  }
  return j.value("exit_code", 0);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sandbot: simulated scan, plan and sand pipeline"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the default config as JSON and exit");

  Common common;
  auto* scan = app.add_subcommand("scan", "synthetic scans of the workpiece to PLY");
  add_common(scan, common);

  std::string scan_dir;
  auto* model = app.add_subcommand("model", "filter and register scans into model.ply");
  add_common(model, common);
  model->add_option("--scans", scan_dir, "directory holding scan_k.ply (default <out>/scans)");

  auto* plan = app.add_subcommand("plan", "face sequence and transit trajectories");
  add_common(plan, common);

  int face = -1;
  std::string csv;
  auto* sand = app.add_subcommand("sand", "closed-loop sanding of one face to CSV");
  add_common(sand, common);
  sand->add_option("--face", face, "lateral face index (default: reference setup)");
  sand->add_option("--csv", csv, "log path");

  bool quiet = false;
  auto* run = app.add_subcommand("run", "full pipeline, writes report.json");
  add_common(run, common);
  run->add_flag("-q,--quiet", quiet, "no progress lines");

  std::string report_dir = "out";
  auto* report = app.add_subcommand("report", "summarize a run directory");
  report->add_option("dir", report_dir, "run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::Usage);
  }

  try {
    if (print_config) {
      PipelineConfig cfg = common.config_path.empty() ? PipelineConfig{} : load_config(common.config_path);
      std::cout << to_json(cfg).dump(2) << '\n';
      return 0;
    }
    if (*scan) return cmd_scan(common);
    if (*model) return cmd_model(common, scan_dir);
    if (*plan) return cmd_plan(common);
    if (*sand) return cmd_sand(common, face, csv);
    if (*run) return cmd_run(common, quiet);
    if (*report) return cmd_report(report_dir);
    std::cout << app.help();
    return static_cast<int>(ExitCode::Usage);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(exit_code_for(e.code()));
  }
}
