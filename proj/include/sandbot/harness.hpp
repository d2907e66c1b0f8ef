/**
 * @file harness.hpp
 * @brief End-to-end sanding workflow: scan, model, plan, sand, assess and
 * re-sand, with the run report and the files written along the way.
 */
#pragma once

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sandbot/config.hpp"

namespace sandbot {

enum class ExitCode : int { Pass = 0, Usage = 1, QualityFailure = 2, PlannerFailure = 3, NumericFailure = 4 };

inline ExitCode exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoPathFound:
    case ErrorCode::InvalidEndpoint:
    case ErrorCode::IterationLimit:
      return ExitCode::PlannerFailure;
    case ErrorCode::SingularJacobian:
    case ErrorCode::IntegrationDiverged:
    case ErrorCode::JointLimitViolation:
    case ErrorCode::ComplexRoots:
    case ErrorCode::Diverged:
    case ErrorCode::EmptyScan:
    case ErrorCode::TooFewPoints:
    case ErrorCode::InsufficientData:
    case ErrorCode::MissingIntensity:
      return ExitCode::NumericFailure;
    default:
      return ExitCode::Usage;
  }
}

// --- work cell --------------------------------------------------------------

struct FaceGeometry {
  int face_id = 0;
  double alpha = 0.0;   // outward normal angle in the object frame
  double offset = 0.0;  // distance from the object origin to the face plane
};

inline std::vector<FaceGeometry> lateral_faces(const ObjectSpec& object) {
  const ConvexMesh mesh = object.mesh();
  std::vector<FaceGeometry> out;
  for (int f = 0; f < object.lateral_faces(); ++f) {
    const Vec3 n = mesh.face_normal(f);
    out.push_back({f, std::atan2(n(1), n(0)), mesh.face_offset(f)});
  }
  return out;
}

struct WorkCell {
  PlannerContext planner;
  std::vector<SandingTask> tasks;      // indexed by face id
  std::vector<double> contact_planes;  // end-effector x at first touch, per face
  Vec4 home = Vec4::Zero();
};

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0) a += 2.0 * M_PI;
  return a - M_PI;
}

/// Robot parts, belt obstacle and one task per lateral face. The arm links
/// ride above the belt, so only the held object can reach it.
inline WorkCell make_work_cell(const PipelineConfig& cfg) {
  WorkCell cell;
  auto& ctx = cell.planner;
  ctx.model = cfg.robot;
  ctx.params = cfg.planner;
  const double hz = cfg.object.half_height;
  ctx.robot.push_back({ConvexShape::from_mesh(cfg.object.mesh()), RobotFrame::EndEffector});
  const double lift = hz + 0.05;
  ctx.robot.push_back({ConvexShape::box(Vec3(0.5 * cfg.robot.l1, 0.02, 0.02),
                                        Vec3(0.5 * cfg.robot.l1, 0.0, lift)),
                       RobotFrame::Link1});
  ctx.robot.push_back({ConvexShape::box(Vec3(0.5 * cfg.robot.l2, 0.02, 0.02),
                                        Vec3(0.5 * cfg.robot.l2, 0.0, lift)),
                       RobotFrame::Link2});
  ctx.robot.push_back({ConvexShape::box(Vec3(0.05, 0.05, 0.02), Vec3(0.0, 0.0, lift)),
                       RobotFrame::Carriage});
  // Belt: a slab behind the plane x = belt_x that stops below the arm.
  ctx.obstacles.push_back({ConvexShape::box(Vec3(0.1, 0.6, 0.5 * (hz + 0.2)),
                                            Vec3(cfg.cell.belt_x + 0.1, cfg.cell.work_y,
                                                 0.5 * (hz + 0.02) - 0.1)),
                           RigidTransform::identity()});

  const double elbow = cfg.cell.elbow;
  for (const auto& face : lateral_faces(cfg.object)) {
    const double phi = wrap_angle(-face.alpha);
    const double px = cfg.cell.belt_x - face.offset;
    SandingTask t;
    t.face_id = face.face_id;
    t.q_goal = inverse_kinematics(cfg.robot, Vec3(px, cfg.cell.work_y, phi), elbow);
    t.q_start = inverse_kinematics(
        cfg.robot, Vec3(px - cfg.cell.approach_distance, cfg.cell.work_y, phi), elbow);
    t.normal = Vec3::UnitX();
    cell.tasks.push_back(t);
    cell.contact_planes.push_back(px);
  }
  const Vec3 home_x = Vec3(cfg.cell.belt_x, cfg.cell.work_y, 0.0) + cfg.cell.home_offset;
  cell.home = inverse_kinematics(cfg.robot, home_x, elbow);
  return cell;
}

/// Belt and setpoint for sanding one face, the setpoint placed as deep past
/// first touch as the reference setpoint sits past the reference datum.
inline SandingSetup face_setup(const PipelineConfig& cfg, const WorkCell& cell, int face) {
  SandingSetup s;
  s.contact = cfg.contact;
  s.contact.plane_offset = cell.contact_planes.at(face);
  s.q0 = cell.tasks.at(face).q_goal;
  s.x_d = forward_kinematics(cfg.robot, s.q0);
  s.x_d(0) = s.contact.plane_offset + (cfg.sanding.x_d - cfg.cell.contact_datum);
  s.f_d = cfg.sanding.f_d;
  return s;
}

/// Single-face reference: belt plane at the configured offset, setpoint x_d.
inline SandingSetup reference_setup(const PipelineConfig& cfg) {
  SandingSetup s;
  s.contact = cfg.contact;
  Vec4 q0(0.0, 0.0, 0.6, 1.0);
  q0(0) += s.contact.plane_offset - forward_kinematics(cfg.robot, q0)(0);
  s.q0 = q0;
  s.x_d = forward_kinematics(cfg.robot, q0);
  s.x_d(0) = cfg.sanding.x_d + (s.contact.plane_offset - cfg.cell.contact_datum);
  s.f_d = cfg.sanding.f_d;
  return s;
}

inline SandingResult run_sanding(const PipelineConfig& cfg, const SandingSetup& setup,
                                 std::uint64_t seed) {
  SandingParams p = cfg.sanding.params;
  p.seed = seed;
  return sanding_phase(cfg.robot, cfg.impedance, cfg.gains, make_rbf_network(cfg.rbf), setup, p);
}

// --- perception -------------------------------------------------------------

inline std::vector<double> view_angles(int n) {
  std::vector<double> a;
  for (int k = 0; k < n; ++k) a.push_back(2.0 * M_PI * k / n);
  return a;
}

inline RigidTransform view_pose(double angle) {
  return RigidTransform::from_axis_angle(Vec3::UnitZ(), angle);
}

inline ScanParams view_scan_params(const PipelineConfig& cfg, int view,
                                   const std::vector<double>& roughness) {
  ScanParams p = cfg.scan.scanner;
  p.seed = cfg.seed * 1000 + static_cast<std::uint64_t>(view);
  p.face_roughness = roughness;
  return p;
}

inline std::vector<double> initial_roughness(const PipelineConfig& cfg) {
  const std::size_t n = cfg.object.mesh().faces.size();
  std::mt19937_64 rng(cfg.seed * 7 + 5);
  std::uniform_real_distribution<double> u(cfg.object.roughness_min, cfg.object.roughness_max);
  std::vector<double> r(n);
  for (auto& v : r) v = u(rng);
  return r;
}

inline std::vector<PointCloud> acquire_scans(const PipelineConfig& cfg,
                                             const std::vector<double>& roughness) {
  const ConvexMesh mesh = cfg.object.mesh();
  std::vector<PointCloud> scans;
  const auto angles = view_angles(cfg.scan.num_views);
  for (int k = 0; k < cfg.scan.num_views; ++k) {
    scans.push_back(synthetic_scan(mesh, view_pose(angles[k]), view_scan_params(cfg, k, roughness)));
  }
  return scans;
}

struct ModelResult {
  MergeResult merge;
  double rms_to_mesh = 0.0;  // m
};

inline double rms_to_mesh(const PointCloud& cloud, const ConvexMesh& mesh) {
  require(!cloud.empty(), ErrorCode::InsufficientData, "empty cloud");
  double sq = 0.0;
  for (const auto& p : cloud.points) {
    const double d = point_mesh_distance(p, mesh);
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(cloud.size()));
}

inline ModelResult build_model(const PipelineConfig& cfg, const std::vector<PointCloud>& scans) {
  std::vector<PointCloud> filtered;
  for (const auto& s : scans) filtered.push_back(field_limits_filter(s, cfg.scan.field_limits));
  ModelResult m;
  m.merge = merge_scans(filtered, view_angles(static_cast<int>(scans.size())), Vec3::UnitZ(),
                        Vec3::Zero(), cfg.scan.icp, cfg.scan.sor);
  m.merge.cloud.frame_id = "object";
  m.rms_to_mesh = rms_to_mesh(m.merge.cloud, cfg.object.mesh());
  return m;
}

/// View in which `face` meets the scanner most squarely.
inline int best_view(const PipelineConfig& cfg, int face) {
  const Vec3 n = cfg.object.mesh().face_normal(face);
  const Vec3 view = cfg.scan.scanner.view_direction.normalized();
  const auto angles = view_angles(cfg.scan.num_views);
  int best = 0;
  double best_cos = -2.0;
  for (int k = 0; k < cfg.scan.num_views; ++k) {
    const double c = -(view_pose(angles[k]).R * n).dot(view);
    if (c > best_cos) {
      best_cos = c;
      best = k;
    }
  }
  return best;
}

/// Rescan from the face's best original view with the current relief.
inline PointCloud face_scan(const PipelineConfig& cfg, int face, const std::vector<double>& roughness) {
  const int k = best_view(cfg, face);
  return synthetic_scan(cfg.object.mesh(), view_pose(view_angles(cfg.scan.num_views)[k]),
                        view_scan_params(cfg, k, roughness))
      .with_label(face);
}

// --- report -----------------------------------------------------------------

struct FaceReport {
  int face_id = 0;
  int sequence_position = -1;
  double sanding_duration = 0.0;
  double steady_force = 0.0;
  double force_error = 0.0;
  double max_zq_after_transient = 0.0;
  double zq_floor = 0.0;
  QualityReport quality;
  int resand_count = 0;
  bool passed = false;
};

struct RunReport {
  std::vector<FaceReport> faces;
  std::vector<int> sequence;        // GA order of face ids
  std::vector<int> executed;        // faces in execution order, re-sands appended
  double ga_cost = 0.0;
  double total_travel_cost = 0.0;
  double model_rms = 0.0;
  double wall_time = 0.0;
  bool pass = false;
  int exit_code = 0;
  std::string failed_stage;
  std::string error;
};

inline Json to_json(const QualityReport& q) {
  return {{"overexposure_before", q.overexposure_before},
          {"overexposure_after", q.overexposure_after},
          {"roughness_before", q.roughness_before},
          {"roughness_after", q.roughness_after},
          {"pass", q.pass}};
}

inline Json to_json(const RunReport& r, bool include_wall_time = true) {
  Json faces = Json::array();
  for (const auto& f : r.faces) {
    faces.push_back({{"face_id", f.face_id},
                     {"sequence_position", f.sequence_position},
                     {"sanding_duration", f.sanding_duration},
                     {"steady_force", f.steady_force},
                     {"force_error", f.force_error},
                     {"max_zq_after_transient", f.max_zq_after_transient},
                     {"zq_floor", f.zq_floor},
                     {"quality", to_json(f.quality)},
                     {"resand_count", f.resand_count},
                     {"passed", f.passed}});
  }
  Json j = {{"pass", r.pass},
            {"exit_code", r.exit_code},
            {"sequence", r.sequence},
            {"executed", r.executed},
            {"ga_cost", r.ga_cost},
            {"total_travel_cost", r.total_travel_cost},
            {"model_rms", r.model_rms}};
  if (include_wall_time) j["wall_time"] = r.wall_time;
  if (!r.failed_stage.empty()) j["failed_stage"] = r.failed_stage;
  if (!r.error.empty()) j["error"] = r.error;
  j["faces"] = faces;
  return j;
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path);
  out << j.dump(2) << '\n';
}

// --- pipeline ---------------------------------------------------------------

struct PipelineOptions {
  bool write_files = true;
  bool write_trajectories = true;
  std::ostream* log = nullptr;
};

namespace detail {
inline std::string face_tag(int face, int pass) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "face_%02d_pass_%d", face, pass);
  return buf;
}
}  // namespace detail

/**
 * Runs the whole workflow. Errors are caught per stage and recorded in the
 * report along with the exit code; the partial report is still written.
 */
inline RunReport run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opt = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;
  RunReport report;
  const fs::path dir = cfg.output_dir;
  const bool files = opt.write_files && !cfg.output_dir.empty();
  if (files) fs::create_directories(dir);
  auto say = [&](const std::string& msg) {
    if (opt.log) *opt.log << msg << '\n';
  };
  std::string stage = "config";

  auto finish = [&] {
    report.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (files) write_json((dir / "report.json").string(), to_json(report));
    return report;
  };

  try {
    cfg.validate();

    stage = "scan";
    std::vector<double> roughness = initial_roughness(cfg);
    const auto scans = acquire_scans(cfg, roughness);
    if (files) {
      fs::create_directories(dir / "scans");
      for (std::size_t k = 0; k < scans.size(); ++k) {
        write_ply((dir / "scans" / ("scan_" + std::to_string(k) + ".ply")).string(), scans[k]);
      }
    }
    say("scan: " + std::to_string(scans.size()) + " views");

    stage = "model";
    const ModelResult model = build_model(cfg, scans);
    report.model_rms = model.rms_to_mesh;
    if (files) write_ply((dir / "model.ply").string(), model.merge.cloud);
    say("model: " + std::to_string(model.merge.cloud.size()) + " points, rms " +
        std::to_string(model.rms_to_mesh));

    stage = "plan";
    const WorkCell cell = make_work_cell(cfg);
    const SequenceResult seq = ga_optimize_sequence(cell.tasks, cfg.ga, cell.planner, cell.home);
    report.ga_cost = seq.ga.cost;
    for (const auto& t : seq.tasks) report.sequence.push_back(t.face_id);
    if (files) {
      write_cost_matrix_csv((dir / "cost_matrix.csv").string(), seq.matrix.cost);
      write_ga_history_csv((dir / "ga_history.csv").string(), seq.ga);
      write_json((dir / "sequence.json").string(), Json{{"sequence", report.sequence}, {"cost", seq.ga.cost}});
    }
    say("plan: GA cost " + std::to_string(seq.ga.cost));

    report.faces.resize(cell.tasks.size());
    for (std::size_t f = 0; f < cell.tasks.size(); ++f) report.faces[f].face_id = static_cast<int>(f);
    for (std::size_t i = 0; i < report.sequence.size(); ++i) {
      report.faces[report.sequence[i]].sequence_position = static_cast<int>(i);
    }

    std::vector<PointCloud> before(cell.tasks.size());
    for (std::size_t f = 0; f < cell.tasks.size(); ++f) {
      before[f] = face_scan(cfg, static_cast<int>(f), roughness);
    }

    std::deque<int> queue(report.sequence.begin(), report.sequence.end());
    Vec4 q_current = cell.home;
    bool any_failed = false;
    while (!queue.empty()) {
      const int face = queue.front();
      queue.pop_front();
      FaceReport& fr = report.faces[face];
      const int pass = fr.resand_count;
      const SandingTask& task = cell.tasks[face];
      report.executed.push_back(face);

      stage = "plan";
      const Path transit = plan_single_query(cell.planner, q_current, task.q_start);
      report.total_travel_cost += path_cost(transit, cfg.ga.w);
      if (files && opt.write_trajectories) {
        const Trajectory traj = lspb_parameterize(transit, cfg.robot.velocity_limits,
                                                  cfg.robot.acceleration_limits, cfg.trajectory_dt);
        Trajectory approach = lspb_parameterize(std::vector<Vec4>{task.q_start, task.q_goal},
                                                cfg.robot.velocity_limits,
                                                cfg.robot.acceleration_limits, cfg.trajectory_dt);
        Trajectory all = traj;
        const double t0 = all.duration();
        for (std::size_t i = 1; i < approach.samples.size(); ++i) {
          auto s = approach.samples[i];
          s.t += t0;
          all.samples.push_back(s);
        }
        fs::create_directories(dir / "trajectories");
        write_trajectory_csv((dir / "trajectories" / (detail::face_tag(face, pass) + ".csv")).string(), all);
      }

      stage = "sand";
      const SandingSetup setup = face_setup(cfg, cell, face);
      const SandingResult res =
          run_sanding(cfg, setup, cfg.seed * 100003 + static_cast<std::uint64_t>(face) * 101 + pass);
      if (files) {
        fs::create_directories(dir / "logs");
        write_sanding_csv((dir / "logs" / (detail::face_tag(face, pass) + ".csv")).string(), res);
      }
      roughness[face] *= std::exp(-cfg.sanding.preston_kappa * res.normal_impulse);
      fr.sanding_duration += cfg.sanding.params.duration;
      fr.steady_force = res.steady_force;
      fr.force_error = res.force_error;
      fr.max_zq_after_transient = res.max_zq_after_transient;
      fr.zq_floor = res.zq_floor;

      stage = "assess";
      fr.quality = assess_quality(before[face], face_scan(cfg, face, roughness), cfg.quality);
      fr.passed = fr.quality.pass || !cfg.sanding.quality_gate;
      say("face " + std::to_string(face) + " pass " + std::to_string(pass) + ": force " +
          std::to_string(res.steady_force) + " quality " + (fr.quality.pass ? "ok" : "fail"));
      if (!fr.passed) {
        if (fr.resand_count < cfg.sanding.max_resand) {
          ++fr.resand_count;
          queue.push_back(face);
        } else {
          any_failed = true;
        }
      }
      q_current = task.q_start;
    }

    report.pass = !any_failed;
    report.exit_code = static_cast<int>(report.pass ? ExitCode::Pass : ExitCode::QualityFailure);
    if (!report.pass) report.failed_stage = "assess";
  } catch (const Error& e) {
    report.pass = false;
    report.failed_stage = stage;
    report.error = e.what();
    report.exit_code = static_cast<int>(exit_code_for(e.code()));
  }
  return finish();
}

}  // namespace sandbot
