#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "sandbot/harness.hpp"

using namespace sandbot;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, bool ok, const std::string& what) {
  std::printf("%s %2d  %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Steady floor of ||z_q||; a run that leaves the workspace has no floor.
double floor_or_inf(const PipelineConfig& cfg) {
  try {
    return run_sanding(cfg, reference_setup(cfg), cfg.seed).zq_floor;
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void force_regulation() {
  const PipelineConfig cfg;
  const auto t0 = Clock::now();
  const auto r = run_sanding(cfg, reference_setup(cfg), cfg.seed);
  const double wall = seconds_since(t0);
  const double f = r.steady_force, fd = cfg.sanding.f_d(0);
  const bool ok = std::abs(f - fd) <= 0.05 * std::abs(fd) && wall < 30.0 &&
                  cfg.sanding.params.duration <= 5.0;
  verdict(1, ok, fmt("force regulation: steady force %.3f N (target %.1f N, +-5%%), %.2f s wall", f, fd, wall));
}

void impedance_convergence() {
  PipelineConfig cfg;
  const double nominal = run_sanding(cfg, reference_setup(cfg), cfg.seed).zq_floor;
  cfg.sanding.params.disturbance = 5.0;
  const double disturbed = floor_or_inf(cfg);
  PipelineConfig no_learning = cfg;
  no_learning.rbf.learning_rate = Vec4::Zero();
  const double l0 = floor_or_inf(no_learning);
  PipelineConfig no_switching = cfg;
  no_switching.gains.kg = 0.0;
  const double kg0 = floor_or_inf(no_switching);
  const bool ok = nominal < 1e-2 && l0 > disturbed && kg0 > disturbed;
  verdict(2, ok,
          fmt("impedance vector: final-30%% max |z_q| %.4g (< 1e-2); with 5 N m disturbance "
              "%.4g, L=0 %.4g, k_g=0 %.4g",
              nominal, disturbed, l0, kg0));
}

void impedance_realization() {
  PipelineConfig cfg;
  const auto noisy = run_sanding(cfg, reference_setup(cfg), cfg.seed);
  cfg.sanding.params.force_noise = 0.0;
  const auto clean = run_sanding(cfg, reference_setup(cfg), cfg.seed);
  const double t = cfg.sanding.params.transient;
  const double r_clean = impedance_realization_residual(clean, cfg.impedance, t, 1);
  const double r_noisy = impedance_realization_residual(noisy, cfg.impedance, t, 1);
  verdict(3, r_clean < 0.05,
          fmt("impedance realization: max |dz/dt + Gamma z| after %.1f s = %.4g noise-free "
              "(%.4g with force noise, informational)",
              t, r_clean, r_noisy));
}

void dynamics_properties() {
  const RobotModel m;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> lin(-0.8, 0.8), ang(-M_PI, M_PI), vel(-2, 2);
  const double h = 1e-6;
  double worst_sym = 0, worst_skew = 0, min_eig = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    const Vec4 q(lin(rng), lin(rng), ang(rng), ang(rng));
    const Vec4 qd(vel(rng), vel(rng), vel(rng), vel(rng));
    const auto d = dynamics_terms(m, q, qd);
    worst_sym = std::max(worst_sym, (d.M - d.M.transpose()).cwiseAbs().maxCoeff());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Mat4>(d.M).eigenvalues().minCoeff());
    const Mat4 Mdot = (dynamics_terms(m, q + h * qd, qd).M - dynamics_terms(m, q - h * qd, qd).M) / (2 * h);
    const Mat4 N = Mdot - 2.0 * d.C;
    worst_skew = std::max(worst_skew, (N + N.transpose()).cwiseAbs().maxCoeff());
  }
  verdict(4, worst_sym < 1e-12 && min_eig > 0 && worst_skew < 1e-7,
          fmt("dynamics: 1000 samples, |M - M^T| %.2g, min eig(M) %.4g, |N + N^T| %.2g", worst_sym,
              min_eig, worst_skew));
}

void icp_recovery() {
  const auto truth = RigidTransform::from_axis_angle(Vec3::UnitZ(), 10.0 * M_PI / 180.0, Vec3(0.01, 0.02, 0));
  const ConvexMesh box = make_box(Vec3(0.10, 0.07, 0.05));
  auto scan = [&](double sigma, std::uint64_t seed) {
    ScanParams p;
    p.noise_sigma = sigma;
    p.seed = seed;
    return synthetic_scan(box, RigidTransform::identity(), p);
  };
  const PointCloud src = scan(0.0, 1);
  const auto r = icp_register(src, src.transformed(truth));
  const double clean_rot = rotation_error(r.transform, truth), clean_tr = translation_error(r.transform, truth);
  double worst_rot = 0, worst_tr = 0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto n = icp_register(scan(2e-4, 100 + 2 * k), scan(2e-4, 101 + 2 * k).transformed(truth));
    worst_rot = std::max(worst_rot, rotation_error(n.transform, truth));
    worst_tr = std::max(worst_tr, translation_error(n.transform, truth));
  }
  const bool ok = clean_rot < 1e-6 && clean_tr < 1e-6 && worst_rot < 0.5 * M_PI / 180.0 && worst_tr < 1e-3;
  verdict(5, ok,
          fmt("ICP: noise-free error %.2g rad / %.2g m; 20 trials at 0.2 mm worst %.4f deg / %.4f mm",
              clean_rot, clean_tr, worst_rot * 180.0 / M_PI, worst_tr * 1e3));
}

void ga_optimality() {
  int hits = 0;
  bool monotone = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const MatX c = oracle::random_cost_matrix(5, 1000 + s);
    GaParams p;
    p.seed = s;
    const auto r = ga_optimize(c, p);
    if (std::abs(r.cost - oracle::exhaustive_sequence_min(c)) < 1e-12) ++hits;
    for (std::size_t g = 1; g < r.best_history.size(); ++g) {
      monotone = monotone && r.best_history[g] <= r.best_history[g - 1];
    }
  }
  verdict(6, hits >= 19 && monotone,
          fmt("GA: exhaustive optimum matched in %d/20 runs, best fitness %s", hits,
              monotone ? "never rose" : "rose"));
}

void gjk_correctness() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> h(0.05, 0.5);
  int checked = 0, agree = 0, hits = 0;
  const auto t0 = Clock::now();
  for (int k = 0; k < 1000; ++k) {
    const Vec3 ha(h(rng), h(rng), h(rng)), hb(h(rng), h(rng), h(rng));
    const auto pa = oracle::random_pose(rng, 0.6), pb = oracle::random_pose(rng, 0.6);
    const double m = oracle::sat_margin(oracle::posed_box(ha, Vec3::Zero(), pa),
                                        oracle::posed_box(hb, Vec3::Zero(), pb));
    if (std::abs(m) <= 1e-6) continue;
    ++checked;
    const bool g = gjk_intersects(ConvexShape::box(ha), ConvexShape::box(hb), pa, pb);
    if (g == (m < 0)) ++agree;
    if (g) ++hits;
  }
  const double wall = seconds_since(t0);
  verdict(7, agree == checked && checked > 990 && wall < 5.0,
          fmt("GJK: %d/%d pairs agree with the separating-axis oracle (%d intersecting), %.3f s", agree,
              checked, hits, wall));
}

void lspb_limits() {
  const Vec4 ones = Vec4::Ones(), twos = Vec4::Constant(2.0);
  Vec4 b = Vec4::Zero();
  b(0) = 1.0;
  const auto trap = lspb_segment(Vec4::Zero(), b, ones, twos);
  b(0) = 0.25;
  const auto tri = lspb_segment(Vec4::Zero(), b, ones, twos);
  const bool closed = std::abs(trap.duration - 1.5) < 1e-9 && std::abs(trap.blend(0) - 0.5) < 1e-9 &&
                      std::abs(trap.cruise(0) - 1.0) < 1e-9 &&
                      std::abs(tri.duration - std::sqrt(0.5)) < 1e-9 &&
                      std::abs(tri.cruise(0) - std::sqrt(0.5)) < 1e-9;

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1), lim(0.3, 2.0);
  bool limits = true, continuity = true, endpoints = true;
  std::size_t samples = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec4> corners;
    for (int k = 0; k < 5; ++k) corners.emplace_back(u(rng), u(rng), u(rng), u(rng));
    const Vec4 vmax(lim(rng), lim(rng), lim(rng), lim(rng)), amax(lim(rng), lim(rng), lim(rng), lim(rng));
    const auto traj = lspb_parameterize(corners, vmax, amax, 1e-3);
    samples += traj.samples.size();
    endpoints = endpoints && traj.samples.front().q == corners.front() && traj.samples.back().q == corners.back();
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
      const auto& s = traj.samples[i];
      limits = limits && (s.qdot.cwiseAbs().array() <= vmax.array() + 1e-9).all() &&
               (s.qddot.cwiseAbs().array() <= amax.array() + 1e-9).all();
      if (i == 0) continue;
      const auto& p = traj.samples[i - 1];
      continuity = continuity && s.t > p.t &&
                   ((s.qdot - p.qdot).cwiseAbs().array() <= amax.array() * (s.t - p.t) + 1e-9).all();
    }
  }
  verdict(8, closed && limits && continuity && endpoints,
          fmt("LSPB: trapezoid T=%.12f, triangle T=%.12f peak %.12f; %zu samples, limits %s, "
              "continuity %s, endpoints %s",
              trap.duration, tri.duration, tri.cruise(0), samples, limits ? "ok" : "broken",
              continuity ? "ok" : "broken", endpoints ? "ok" : "broken"));
}

void full_pipeline() {
  const fs::path base = fs::temp_directory_path() / "sandbot_acceptance";
  fs::remove_all(base);
  PipelineConfig a, b;
  a.output_dir = (base / "a").string();
  b.output_dir = (base / "b").string();
  const auto t0 = Clock::now();
  const auto ra = run_pipeline(a);
  const double wall = seconds_since(t0);
  const auto rb = run_pipeline(b);

  int passed = 0, worst_resand = 0;
  for (const auto& f : ra.faces) {
    passed += f.passed;
    worst_resand = std::max(worst_resand, f.resand_count);
  }
  bool same = to_json(ra, false) == to_json(rb, false);
  for (const auto& e : fs::recursive_directory_iterator(a.output_dir)) {
    if (!e.is_regular_file() || e.path().filename() == "report.json") continue;
    const fs::path rel = fs::relative(e.path(), a.output_dir);
    same = same && slurp(e.path()) == slurp(fs::path(b.output_dir) / rel);
  }
  const bool ok = ra.pass && ra.faces.size() == 13 && passed == 13 && worst_resand <= 3 && same &&
                  wall < 600.0;
  verdict(9, ok,
          fmt("pipeline: %d/%zu faces passed, most re-sands %d, exit %d, repeat run %s, %.1f s",
              passed, ra.faces.size(), worst_resand, ra.exit_code, same ? "identical" : "differs", wall));
}

void lyapunov_descent() {
  const PipelineConfig cfg;
  const auto r = run_sanding(cfg, reference_setup(cfg), cfg.seed);
  LyapunovOptions opt;
  opt.transient = 1.0;
  const auto rep = lyapunov_monitor(lyapunov_samples(cfg.robot, r), opt);
  verdict(10, rep.descending,
          fmt("Lyapunov: moving average of V_obs %s after %.1f s (worst rise %.3g)",
              rep.descending ? "non-increasing" : "rises", opt.transient, rep.worst_rise));
}

}  // namespace

int main() {
  const std::pair<void (*)(), int> checks[] = {
      {force_regulation, 1},    {impedance_convergence, 2}, {impedance_realization, 3},
      {dynamics_properties, 4}, {icp_recovery, 5},          {ga_optimality, 6},
      {gjk_correctness, 7},     {lspb_limits, 8},           {full_pipeline, 9},
      {lyapunov_descent, 10}};
  for (const auto& [check, id] : checks) {
    try {
      check();
    } catch (const std::exception& e) {
      verdict(id, false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
