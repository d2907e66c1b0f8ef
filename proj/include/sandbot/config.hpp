/**
 * @file config.hpp
 * @brief Pipeline configuration and its JSON mapping. Every key is optional;
 * missing keys keep their defaults. See docs/config.md for the schema.
 */
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sandbot/common.hpp"
#include "sandbot/controller.hpp"
#include "sandbot/dynamics.hpp"
#include "sandbot/geometry.hpp"
#include "sandbot/impedance.hpp"
#include "sandbot/planner.hpp"
#include "sandbot/pointcloud.hpp"
#include "sandbot/sanding.hpp"

namespace sandbot {

using Json = nlohmann::ordered_json;

/// The sanded workpiece: a prism over a rounded rectangle.
struct ObjectSpec {
  double half_x = 0.10;
  double half_y = 0.07;
  double corner_radius = 0.03;
  std::vector<int> corner_facets{2, 2, 2, 3};
  double half_height = 0.05;
  double roughness_min = 3e-4;  // m, initial relief range across faces
  double roughness_max = 6e-4;

  ConvexMesh mesh() const {
    return make_prism(rounded_rectangle(half_x, half_y, corner_radius, corner_facets), half_height);
  }
  /// Lateral faces come first in the prism face list.
  int lateral_faces() const {
    int n = 4;
    for (int f : corner_facets) n += f;
    return n;
  }
};

/// Layout of the work cell around the belt.
struct CellSpec {
  double belt_x = 0.5;            // m, belt surface along +x
  double work_y = 0.0;            // m, height at which faces meet the belt
  double approach_distance = 0.02;
  double elbow = 1.0;             // rad, preferred theta2 for inverse kinematics
  Vec3 home_offset{-0.3, 0.0, 0.0};  // home end-effector pose relative to (belt_x, work_y, 0)
  double contact_datum = 0.050;   // m, belt plane of the single-face reference setup
};

/// Scanner settings for the workpiece: finer sampling than the library
/// default and some stray returns for the filters to remove.
inline ScanParams workpiece_scanner() {
  ScanParams p;
  p.density = 2e5;
  p.clutter_points = 200;
  p.clutter_min = Vec3::Constant(-0.6);
  p.clutter_max = Vec3::Constant(0.6);
  return p;
}

struct ScanStage {
  ScanParams scanner = workpiece_scanner();
  int num_views = 4;              // scans at equal steps of theta2
  Bounds field_limits{Vec3(-0.25, -0.25, -0.1), Vec3(0.25, 0.25, 0.1)};
  SorParams sor;
  IcpParams icp;
};

struct SandingStage {
  SandingParams params;
  Vec3 f_d{-25.0, 0.0, 0.0};
  double x_d = 0.0515;            // m, setpoint along the belt normal for the reference datum
  double preston_kappa = 0.01;    // 1/(N s), relief decay per unit normal impulse
  int max_resand = 3;
  bool quality_gate = true;       // false accepts every face after its first pass
};

struct PipelineConfig {
  RobotModel robot;
  ImpedanceSpec impedance;
  ControllerGains gains;
  RbfLayout rbf = RbfLayout::sanding_default();
  BeltContact contact;
  ObjectSpec object;
  CellSpec cell;
  ScanStage scan;
  PlannerParams planner;
  GaParams ga;
  QualityParams quality;
  SandingStage sanding;
  double trajectory_dt = 1e-3;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  void validate() const {
    robot.validate();
    gains.validate();
    contact.validate();
    sanding.params.validate();
    ga.validate();
    scan.scanner.validate();
    require(scan.num_views >= 2, ErrorCode::ConfigError, "need at least two scan views");
    require(sanding.max_resand >= 0, ErrorCode::ConfigError, "max_resand must be non-negative");
    require(rbf.num_centers >= 2, ErrorCode::ConfigError, "RBF needs at least two centers");
    require(trajectory_dt > 0, ErrorCode::ConfigError, "trajectory_dt must be positive");
    derive_lambda_gamma(impedance.Md, impedance.Cd, impedance.Kd);
  }
};

namespace detail {

template <typename T>
void read(const Json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

template <int N>
void read_vec(const Json& j, const char* key, Eigen::Matrix<double, N, 1>& v) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (a.is_number()) {
    v.setConstant(a.get<double>());
    return;
  }
  require(a.is_array() && a.size() == static_cast<std::size_t>(N), ErrorCode::ConfigError,
          std::string("key '") + key + "' needs " + std::to_string(N) + " numbers");
  for (int i = 0; i < N; ++i) v(i) = a[i].get<double>();
}

template <int N>
Json vec(const Eigen::Matrix<double, N, 1>& v) {
  Json a = Json::array();
  for (int i = 0; i < N; ++i) a.push_back(v(i));
  return a;
}

inline Json section(const Json& j, const char* key) {
  if (!j.contains(key)) return Json::object();
  require(j.at(key).is_object(), ErrorCode::ConfigError, std::string("'") + key + "' must be an object");
  return j.at(key);
}

inline SignMode parse_sign_mode(const std::string& s) {
  if (s == "exact") return SignMode::Exact;
  if (s == "boundary_layer") return SignMode::BoundaryLayer;
  throw Error(ErrorCode::ConfigError, "sign_mode must be 'exact' or 'boundary_layer'");
}

}  // namespace detail

inline Json to_json(const PipelineConfig& c) {
  using detail::vec;
  Json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["robot"] = {{"l1", c.robot.l1},
                {"l2", c.robot.l2},
                {"carriage_x_mass", c.robot.carriage_x_mass},
                {"carriage_y_mass", c.robot.carriage_y_mass},
                {"link1_mass", c.robot.link1_mass},
                {"link2_mass", c.robot.link2_mass},
                {"rotor_inertia", vec(c.robot.rotor_inertia)},
                {"gravity", c.robot.gravity},
                {"joint_lower", vec(c.robot.joint_limits.lower)},
                {"joint_upper", vec(c.robot.joint_limits.upper)},
                {"velocity_limits", vec(c.robot.velocity_limits)},
                {"acceleration_limits", vec(c.robot.acceleration_limits)}};
  j["impedance"] = {{"Md", vec(c.impedance.Md)}, {"Cd", vec(c.impedance.Cd)}, {"Kd", vec(c.impedance.Kd)}};
  j["controller"] = {{"Kz", vec(c.gains.Kz)},
                     {"kg", c.gains.kg},
                     {"sign_mode", c.gains.sign_mode == SignMode::Exact ? "exact" : "boundary_layer"},
                     {"epsilon", c.gains.epsilon},
                     {"rbf_centers", c.rbf.num_centers},
                     {"rbf_lower", vec(c.rbf.lower)},
                     {"rbf_upper", vec(c.rbf.upper)},
                     {"learning_rate", vec(c.rbf.learning_rate)},
                     {"rbf_seed", c.rbf.seed}};
  j["contact"] = {{"stiffness", c.contact.stiffness},
                  {"damping", c.contact.damping},
                  {"plane_offset", c.contact.plane_offset},
                  {"tangential_force", c.contact.tangential_force}};
  j["object"] = {{"half_x", c.object.half_x},
                 {"half_y", c.object.half_y},
                 {"corner_radius", c.object.corner_radius},
                 {"corner_facets", c.object.corner_facets},
                 {"half_height", c.object.half_height},
                 {"roughness_min", c.object.roughness_min},
                 {"roughness_max", c.object.roughness_max}};
  j["cell"] = {{"belt_x", c.cell.belt_x},
               {"work_y", c.cell.work_y},
               {"approach_distance", c.cell.approach_distance},
               {"elbow", c.cell.elbow},
               {"home_offset", vec(c.cell.home_offset)},
               {"contact_datum", c.cell.contact_datum}};
  const auto& s = c.scan.scanner;
  j["scanner"] = {{"density", s.density},
                  {"noise_sigma", s.noise_sigma},
                  {"view_direction", vec(s.view_direction)},
                  {"min_incidence", s.min_incidence},
                  {"intensity_base", s.intensity_base},
                  {"intensity_shine", s.intensity_shine},
                  {"roughness_ref", s.roughness_ref},
                  {"speckle", s.speckle},
                  {"clutter_points", s.clutter_points},
                  {"clutter_min", vec(s.clutter_min)},
                  {"clutter_max", vec(s.clutter_max)},
                  {"num_views", c.scan.num_views},
                  {"field_min", vec(c.scan.field_limits.min)},
                  {"field_max", vec(c.scan.field_limits.max)}};
  j["sor"] = {{"k", c.scan.sor.k}, {"alpha", c.scan.sor.alpha}};
  j["icp"] = {{"max_iterations", c.scan.icp.max_iterations},
              {"tolerance", c.scan.icp.tolerance},
              {"reject_factor", c.scan.icp.reject_factor},
              {"divergence_patience", c.scan.icp.divergence_patience}};
  j["planner"] = {{"max_step", c.planner.max_step},
                  {"retreat_step", c.planner.retreat_step},
                  {"retreat_max", c.planner.retreat_max},
                  {"random_samples", c.planner.random_samples},
                  {"seed", c.planner.seed},
                  {"trajectory_dt", c.trajectory_dt}};
  j["ga"] = {{"population_size", c.ga.population_size},
             {"crossover_prob", c.ga.crossover_prob},
             {"mutation_prob", c.ga.mutation_prob},
             {"max_generations", c.ga.max_generations},
             {"seed", c.ga.seed},
             {"w", vec(c.ga.w)},
             {"tournament_size", c.ga.tournament_size},
             {"straight_line_cost", c.ga.straight_line_cost}};
  j["quality"] = {{"intensity_threshold", c.quality.intensity_threshold},
                  {"window", c.quality.window},
                  {"min_window_points", c.quality.min_window_points},
                  {"ratio_overexposure", c.quality.ratio_overexposure},
                  {"ratio_roughness", c.quality.ratio_roughness}};
  const auto& p = c.sanding.params;
  j["sanding"] = {{"duration", p.duration},
                  {"dt_control", p.dt_control},
                  {"dt_physics", p.dt_physics},
                  {"force_noise", p.force_noise},
                  {"disturbance", p.disturbance},
                  {"disturbance_frequency", p.disturbance_frequency},
                  {"transient", p.transient},
                  {"steady_fraction", p.steady_fraction},
                  {"f_d", vec(c.sanding.f_d)},
                  {"x_d", c.sanding.x_d},
                  {"preston_kappa", c.sanding.preston_kappa},
                  {"max_resand", c.sanding.max_resand},
                  {"quality_gate", c.sanding.quality_gate}};
  return j;
}

inline PipelineConfig config_from_json(const Json& j) {
  using detail::read;
  using detail::read_vec;
  using detail::section;
  PipelineConfig c;
  try {
    read(j, "seed", c.seed);
    read(j, "output_dir", c.output_dir);

    const Json r = section(j, "robot");
    read(r, "l1", c.robot.l1);
    read(r, "l2", c.robot.l2);
    read(r, "carriage_x_mass", c.robot.carriage_x_mass);
    read(r, "carriage_y_mass", c.robot.carriage_y_mass);
    read(r, "link1_mass", c.robot.link1_mass);
    read(r, "link2_mass", c.robot.link2_mass);
    read_vec(r, "rotor_inertia", c.robot.rotor_inertia);
    read(r, "gravity", c.robot.gravity);
    read_vec(r, "joint_lower", c.robot.joint_limits.lower);
    read_vec(r, "joint_upper", c.robot.joint_limits.upper);
    read_vec(r, "velocity_limits", c.robot.velocity_limits);
    read_vec(r, "acceleration_limits", c.robot.acceleration_limits);

    const Json im = section(j, "impedance");
    read_vec(im, "Md", c.impedance.Md);
    read_vec(im, "Cd", c.impedance.Cd);
    read_vec(im, "Kd", c.impedance.Kd);
    c.impedance = make_impedance_spec(c.impedance.Md, c.impedance.Cd, c.impedance.Kd);

    const Json ct = section(j, "controller");
    read_vec(ct, "Kz", c.gains.Kz);
    read(ct, "kg", c.gains.kg);
    if (ct.contains("sign_mode")) c.gains.sign_mode = detail::parse_sign_mode(ct.at("sign_mode"));
    read(ct, "epsilon", c.gains.epsilon);
    read(ct, "rbf_centers", c.rbf.num_centers);
    read_vec(ct, "rbf_lower", c.rbf.lower);
    read_vec(ct, "rbf_upper", c.rbf.upper);
    read_vec(ct, "learning_rate", c.rbf.learning_rate);
    read(ct, "rbf_seed", c.rbf.seed);

    const Json co = section(j, "contact");
    read(co, "stiffness", c.contact.stiffness);
    read(co, "damping", c.contact.damping);
    read(co, "plane_offset", c.contact.plane_offset);
    read(co, "tangential_force", c.contact.tangential_force);

    const Json ob = section(j, "object");
    read(ob, "half_x", c.object.half_x);
    read(ob, "half_y", c.object.half_y);
    read(ob, "corner_radius", c.object.corner_radius);
    read(ob, "corner_facets", c.object.corner_facets);
    read(ob, "half_height", c.object.half_height);
    read(ob, "roughness_min", c.object.roughness_min);
    read(ob, "roughness_max", c.object.roughness_max);

    const Json ce = section(j, "cell");
    read(ce, "belt_x", c.cell.belt_x);
    read(ce, "work_y", c.cell.work_y);
    read(ce, "approach_distance", c.cell.approach_distance);
    read(ce, "elbow", c.cell.elbow);
    read_vec(ce, "home_offset", c.cell.home_offset);
    read(ce, "contact_datum", c.cell.contact_datum);

    const Json sc = section(j, "scanner");
    auto& s = c.scan.scanner;
    read(sc, "density", s.density);
    read(sc, "noise_sigma", s.noise_sigma);
    read_vec(sc, "view_direction", s.view_direction);
    read(sc, "min_incidence", s.min_incidence);
    read(sc, "intensity_base", s.intensity_base);
    read(sc, "intensity_shine", s.intensity_shine);
    read(sc, "roughness_ref", s.roughness_ref);
    read(sc, "speckle", s.speckle);
    read(sc, "clutter_points", s.clutter_points);
    read_vec(sc, "clutter_min", s.clutter_min);
    read_vec(sc, "clutter_max", s.clutter_max);
    read(sc, "num_views", c.scan.num_views);
    read_vec(sc, "field_min", c.scan.field_limits.min);
    read_vec(sc, "field_max", c.scan.field_limits.max);

    const Json so = section(j, "sor");
    read(so, "k", c.scan.sor.k);
    read(so, "alpha", c.scan.sor.alpha);

    const Json ic = section(j, "icp");
    read(ic, "max_iterations", c.scan.icp.max_iterations);
    read(ic, "tolerance", c.scan.icp.tolerance);
    read(ic, "reject_factor", c.scan.icp.reject_factor);
    read(ic, "divergence_patience", c.scan.icp.divergence_patience);

    const Json pl = section(j, "planner");
    read(pl, "max_step", c.planner.max_step);
    read(pl, "retreat_step", c.planner.retreat_step);
    read(pl, "retreat_max", c.planner.retreat_max);
    read(pl, "random_samples", c.planner.random_samples);
    read(pl, "seed", c.planner.seed);
    read(pl, "trajectory_dt", c.trajectory_dt);

    const Json ga = section(j, "ga");
    read(ga, "population_size", c.ga.population_size);
    read(ga, "crossover_prob", c.ga.crossover_prob);
    read(ga, "mutation_prob", c.ga.mutation_prob);
    read(ga, "max_generations", c.ga.max_generations);
    read(ga, "seed", c.ga.seed);
    read_vec(ga, "w", c.ga.w);
    read(ga, "tournament_size", c.ga.tournament_size);
    read(ga, "straight_line_cost", c.ga.straight_line_cost);

    const Json q = section(j, "quality");
    read(q, "intensity_threshold", c.quality.intensity_threshold);
    read(q, "window", c.quality.window);
    read(q, "min_window_points", c.quality.min_window_points);
    read(q, "ratio_overexposure", c.quality.ratio_overexposure);
    read(q, "ratio_roughness", c.quality.ratio_roughness);

    const Json sa = section(j, "sanding");
    auto& p = c.sanding.params;
    read(sa, "duration", p.duration);
    read(sa, "dt_control", p.dt_control);
    read(sa, "dt_physics", p.dt_physics);
    read(sa, "force_noise", p.force_noise);
    read(sa, "disturbance", p.disturbance);
    read(sa, "disturbance_frequency", p.disturbance_frequency);
    read(sa, "transient", p.transient);
    read(sa, "steady_fraction", p.steady_fraction);
    read_vec(sa, "f_d", c.sanding.f_d);
    read(sa, "x_d", c.sanding.x_d);
    read(sa, "preston_kappa", c.sanding.preston_kappa);
    read(sa, "max_resand", c.sanding.max_resand);
    read(sa, "quality_gate", c.sanding.quality_gate);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  c.sanding.params.seed = c.seed;
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open config " + path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace sandbot
