/**
 * @file pointcloud.hpp
 * @brief Synthetic structured-light scans, field-limits and statistical
 * outlier filters, ICP registration, scan merging and the before/after
 * sanding quality check.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "sandbot/common.hpp"
#include "sandbot/geometry.hpp"
#include "sandbot/kdtree.hpp"

namespace sandbot {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<double> intensity;  // empty or one value per point
  std::vector<int> labels;        // empty or source face per point
  std::string frame_id = "world";

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_intensity() const { return !points.empty() && intensity.size() == points.size(); }
  bool has_labels() const { return !points.empty() && labels.size() == points.size(); }

  void validate() const {
    for (const auto& p : points) {
      require(p.allFinite(), ErrorCode::InvalidArgument, "point coordinates must be finite");
    }
    require(intensity.empty() || intensity.size() == points.size(), ErrorCode::InvalidArgument,
            "intensity length must match point count");
    require(labels.empty() || labels.size() == points.size(), ErrorCode::InvalidArgument,
            "label length must match point count");
  }

  /// Copy of the points at `indices`, carrying attributes along.
  PointCloud subset(const std::vector<std::size_t>& indices) const {
    PointCloud out;
    out.frame_id = frame_id;
    out.points.reserve(indices.size());
    for (std::size_t i : indices) {
      out.points.push_back(points[i]);
      if (has_intensity()) out.intensity.push_back(intensity[i]);
      if (has_labels()) out.labels.push_back(labels[i]);
    }
    return out;
  }

  PointCloud transformed(const RigidTransform& t) const {
    PointCloud out = *this;
    for (auto& p : out.points) p = t.apply(p);
    return out;
  }

  PointCloud with_label(int label) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) idx.push_back(i);
    }
    return subset(idx);
  }
};

// --- synthetic scanner ------------------------------------------------------

struct ScanParams {
  double density = 1e4;          // samples per square meter of face
  double noise_sigma = 2e-4;     // m, along the viewing ray
  std::uint64_t seed = 1;
  Vec3 view_direction = Vec3(-1.0, -0.3, -1.0).normalized();  // scanner to object
  double min_incidence = 0.1;    // faces with cos(incidence) below this are hidden
  /// Surface relief amplitude per face (m). Missing entries use `roughness`.
  std::vector<double> face_roughness;
  double roughness = 0.0;
  // intensity = clamp(base + shine * exp(-r / r_ref) + speckle * N(0,1), 0, 1)
  double intensity_base = 0.6;
  double intensity_shine = 0.35;
  double roughness_ref = 2e-4;
  double speckle = 0.1;
  /// Uniform clutter points drawn inside `clutter_box` (platform, dust).
  std::size_t clutter_points = 0;
  Vec3 clutter_min = Vec3::Constant(-1.0);
  Vec3 clutter_max = Vec3::Constant(1.0);

  void validate() const {
    require(density > 0 && noise_sigma >= 0 && roughness >= 0 && roughness_ref > 0 &&
                speckle >= 0 && view_direction.norm() > 0,
            ErrorCode::InvalidArgument, "invalid scan parameters");
  }

  double roughness_of(std::size_t face) const {
    return face < face_roughness.size() ? face_roughness[face] : roughness;
  }
};

/**
 * Samples every face of the posed mesh that faces the scanner on a square
 * grid fixed in the face's own coordinates, so repeated scans of the same
 * object hit the same surface points. Each sample is offset along the face
 * normal by the face's relief and along the viewing ray by sensor noise.
 */
inline PointCloud synthetic_scan(const ConvexMesh& mesh, const RigidTransform& pose,
                                 const ScanParams& params) {
  params.validate();
  require(mesh.faces.size() >= 4, ErrorCode::InvalidArgument, "mesh must be a closed polyhedron");
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vec3 view = params.view_direction.normalized();
  const double spacing = 1.0 / std::sqrt(params.density);

  PointCloud cloud;
  cloud.frame_id = "scanner";
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Vec3 n_obj = mesh.face_normal(f);
    const Vec3 n = pose.R * n_obj;
    if (-n.dot(view) < params.min_incidence) continue;

    const auto& idx = mesh.faces[f];
    const Vec3 origin = mesh.vertices[idx[0]];
    const Vec3 u = (mesh.vertices[idx[1]] - origin).normalized();
    const Vec3 v = n_obj.cross(u);
    std::vector<Vec2> poly;
    double umin = 0, umax = 0, vmin = 0, vmax = 0;
    for (int i : idx) {
      const Vec3 d = mesh.vertices[i] - origin;
      poly.emplace_back(d.dot(u), d.dot(v));
      umin = std::min(umin, poly.back()(0));
      umax = std::max(umax, poly.back()(0));
      vmin = std::min(vmin, poly.back()(1));
      vmax = std::max(vmax, poly.back()(1));
    }
    auto inside = [&](const Vec2& p) {
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2 e = poly[(i + 1) % poly.size()] - poly[i];
        const Vec2 w = p - poly[i];
        if (e(0) * w(1) - e(1) * w(0) < -1e-12) return false;
      }
      return true;
    };

    const double relief = params.roughness_of(f);
    const double shine = params.intensity_shine * std::exp(-relief / params.roughness_ref);
    const long iu0 = static_cast<long>(std::floor(umin / spacing));
    const long iu1 = static_cast<long>(std::ceil(umax / spacing));
    const long iv0 = static_cast<long>(std::floor(vmin / spacing));
    const long iv1 = static_cast<long>(std::ceil(vmax / spacing));
    for (long a = iu0; a <= iu1; ++a) {
      for (long b = iv0; b <= iv1; ++b) {
        const Vec2 uv((a + 0.5) * spacing, (b + 0.5) * spacing);
        if (!inside(uv)) continue;
        Vec3 p = pose.apply(origin + uv(0) * u + uv(1) * v);
        if (relief > 0) p += relief * gauss(rng) * n;
        if (params.noise_sigma > 0) p += params.noise_sigma * gauss(rng) * view;
        double inten = params.intensity_base + shine;
        if (params.speckle > 0) inten += params.speckle * gauss(rng);
        cloud.points.push_back(p);
        cloud.intensity.push_back(std::clamp(inten, 0.0, 1.0));
        cloud.labels.push_back(static_cast<int>(f));
      }
    }
  }
  if (cloud.empty()) throw Error(ErrorCode::EmptyScan, "no face of the mesh faces the scanner");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < params.clutter_points; ++i) {
    Vec3 p;
    for (int d = 0; d < 3; ++d) {
      p(d) = params.clutter_min(d) + unit(rng) * (params.clutter_max(d) - params.clutter_min(d));
    }
    cloud.points.push_back(p);
    cloud.intensity.push_back(std::clamp(params.intensity_base + params.speckle * gauss(rng), 0.0, 1.0));
    cloud.labels.push_back(-1);
  }
  return cloud;
}

// --- filters ----------------------------------------------------------------

struct Bounds {
  Vec3 min = Vec3::Constant(-1.0);
  Vec3 max = Vec3::Constant(1.0);

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

inline PointCloud field_limits_filter(const PointCloud& cloud, const Bounds& bounds) {
  require((bounds.min.array() < bounds.max.array()).all(), ErrorCode::InvalidArgument,
          "field limits need min < max on every axis");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (bounds.contains(cloud.points[i])) keep.push_back(i);
  }
  return cloud.subset(keep);
}

/// Mean distance from each point to its k nearest other points.
inline std::vector<double> mean_neighbor_distances(const PointCloud& cloud, std::size_t k) {
  KdTree tree(cloud.points);
  std::vector<double> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nn = tree.knn(cloud.points[i], k + 1);
    double sum = 0.0;
    std::size_t used = 0;
    bool skipped_self = false;
    for (const auto& n : nn) {
      if (!skipped_self && n.index == i) {
        skipped_self = true;
        continue;
      }
      if (used == k) break;
      sum += std::sqrt(n.sq_distance);
      ++used;
    }
    out[i] = sum / static_cast<double>(used);
  }
  return out;
}

struct SorParams {
  std::size_t k = 50;
  double alpha = 1.0;
};

/// Keeps points whose mean k-NN distance is at most mean + alpha * std of
/// those means (sample standard deviation).
inline PointCloud sor_filter(const PointCloud& cloud, const SorParams& params = {}) {
  require(params.k >= 1, ErrorCode::InvalidArgument, "SOR needs k >= 1");
  require(cloud.size() > params.k, ErrorCode::TooFewPoints,
          "SOR needs more points than neighbours");
  const auto d = mean_neighbor_distances(cloud, params.k);
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d.size() - 1);
  // Equal distances on a regular lattice differ only by round-off; do not let
  // that decide membership.
  const double spread = var > 0 ? params.alpha * std::sqrt(var) : 0.0;
  const double threshold = mean + spread + 1e-12 * mean;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= threshold) keep.push_back(i);
  }
  return cloud.subset(keep);
}

// --- registration -----------------------------------------------------------

/// Least-squares rigid fit dst ~ R src + T (Kabsch with reflection guard).
inline RigidTransform fit_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  require(src.size() == dst.size() && src.size() >= 3, ErrorCode::InsufficientData,
          "rigid fit needs at least three pairs");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(src.size());
  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) H += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform out;
  out.R = svd.matrixV() * D * svd.matrixU().transpose();
  out.T = cd - out.R * cs;
  return out;
}

struct IcpParams {
  int max_iterations = 100;
  double tolerance = 1e-12;   // stop when the RMS changes less than this
  double reject_factor = 5.0; // pairs beyond this multiple of the median distance are dropped
  int divergence_patience = 5;
};

struct IcpResult {
  RigidTransform transform;
  double rms = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> rms_history;  // accepted iterations only
};

/**
 * Point-to-point ICP mapping `source` into the frame of `target`. The
 * reported transform is the best one seen, so the accepted RMS sequence never
 * increases.
 */
inline IcpResult icp_register(const PointCloud& source, const PointCloud& target,
                              const RigidTransform& init = {}, const IcpParams& params = {}) {
  require(!source.empty() && !target.empty(), ErrorCode::InvalidArgument,
          "ICP needs non-empty clouds");
  require(init.is_valid(1e-6), ErrorCode::InvalidArgument, "initial guess is not a rotation");
  KdTree tree(target.points);
  const std::size_t n = source.size();
  std::vector<double> dist(n), sorted(n);
  std::vector<Vec3> src, dst;

  IcpResult result;
  result.transform = init;
  RigidTransform current = init;
  double best = std::numeric_limits<double>::infinity();
  double previous = std::numeric_limits<double>::infinity();
  int rises = 0;
  std::vector<std::size_t> match(n);

  for (int it = 0; it < params.max_iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto nb = tree.nearest(current.apply(source.points[i]));
      match[i] = nb.index;
      dist[i] = std::sqrt(nb.sq_distance);
    }
    sorted = dist;
    auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double cutoff = params.reject_factor * *mid;
    src.clear();
    dst.clear();
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i] <= cutoff) {
        src.push_back(source.points[i]);
        dst.push_back(target.points[match[i]]);
        sq += dist[i] * dist[i];
      }
    }
    const double rms = std::sqrt(sq / static_cast<double>(src.size()));
    result.iterations = it + 1;

    if (rms < best) {
      best = rms;
      result.transform = current;
      result.rms = rms;
      result.rms_history.push_back(rms);
      rises = 0;
    } else if (rms > previous) {
      if (++rises >= params.divergence_patience) {
        throw Error(ErrorCode::Diverged, "ICP residual rose for " +
                                             std::to_string(params.divergence_patience) +
                                             " consecutive iterations");
      }
    } else {
      rises = 0;
    }
    if (std::abs(previous - rms) < params.tolerance || rms == 0.0) {
      result.converged = true;
      break;
    }
    previous = rms;
    if (src.size() < 3) break;
    current = fit_rigid(src, dst);
  }
  return result;
}

struct MergeResult {
  PointCloud cloud;
  /// Transform taking scan i into the frame of scan 0.
  std::vector<RigidTransform> to_first;
  std::vector<double> rms;
};

/**
 * Registers consecutive scans, each taken after the object turned by
 * `axis_angles[i]` about `axis`, composes the transforms into the first
 * scan's frame, concatenates and applies SOR.
 */
inline MergeResult merge_scans(const std::vector<PointCloud>& scans,
                               const std::vector<double>& axis_angles,
                               const Vec3& axis = Vec3::UnitZ(),
                               const Vec3& pivot = Vec3::Zero(), const IcpParams& icp = {},
                               const SorParams& sor = {}) {
  require(scans.size() >= 2, ErrorCode::InsufficientData, "merging needs at least two scans");
  require(axis_angles.size() == scans.size(), ErrorCode::InvalidArgument,
          "one commanded angle per scan");
  MergeResult out;
  out.to_first.push_back(RigidTransform::identity());
  out.rms.push_back(0.0);
  PointCloud merged = scans[0];
  merged.frame_id = scans[0].frame_id;
  for (std::size_t i = 1; i < scans.size(); ++i) {
    const auto guess =
        RigidTransform::rotation_about(pivot, axis, axis_angles[i - 1] - axis_angles[i]);
    const IcpResult r = icp_register(scans[i], scans[i - 1], guess, icp);
    const RigidTransform t = out.to_first.back() * r.transform;
    out.to_first.push_back(t);
    out.rms.push_back(r.rms);
    const PointCloud moved = scans[i].transformed(t);
    merged.points.insert(merged.points.end(), moved.points.begin(), moved.points.end());
    if (merged.has_intensity() && moved.has_intensity()) {
      merged.intensity.insert(merged.intensity.end(), moved.intensity.begin(), moved.intensity.end());
    } else {
      merged.intensity.clear();
    }
    if (merged.has_labels() && moved.has_labels()) {
      merged.labels.insert(merged.labels.end(), moved.labels.begin(), moved.labels.end());
    } else {
      merged.labels.clear();
    }
  }
  out.cloud = sor_filter(merged, sor);
  return out;
}

// --- quality ----------------------------------------------------------------

struct QualityParams {
  double intensity_threshold = 0.9;
  double window = 0.02;          // m, cube edge of a local plane-fit cell
  std::size_t min_window_points = 6;
  double ratio_overexposure = 1.5;
  double ratio_roughness = 0.7;
};

struct QualityReport {
  std::size_t overexposure_before = 0;
  std::size_t overexposure_after = 0;
  double roughness_before = 0.0;
  double roughness_after = 0.0;
  bool pass = false;
};

inline std::size_t count_overexposed(const PointCloud& cloud, double threshold) {
  require(cloud.has_intensity(), ErrorCode::MissingIntensity, "cloud carries no intensity");
  return static_cast<std::size_t>(
      std::count_if(cloud.intensity.begin(), cloud.intensity.end(),
                    [threshold](double v) { return v > threshold; }));
}

/// RMS residual of least-squares planes fitted in cubic cells of edge `window`.
inline double local_roughness(const PointCloud& cloud, double window, std::size_t min_points) {
  require(window > 0, ErrorCode::InvalidArgument, "window must be positive");
  std::map<std::tuple<long, long, long>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    cells[{static_cast<long>(std::floor(p(0) / window)), static_cast<long>(std::floor(p(1) / window)),
           static_cast<long>(std::floor(p(2) / window))}]
        .push_back(i);
  }
  double sq = 0.0;
  std::size_t count = 0;
  for (const auto& [key, idx] : cells) {
    if (idx.size() < std::max<std::size_t>(min_points, 3)) continue;
    Vec3 c = Vec3::Zero();
    for (std::size_t i : idx) c += cloud.points[i];
    c /= static_cast<double>(idx.size());
    Mat3 cov = Mat3::Zero();
    for (std::size_t i : idx) cov += (cloud.points[i] - c) * (cloud.points[i] - c).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    // Smallest eigenvalue is the residual sum of squares about the best plane.
    sq += std::max(es.eigenvalues()(0), 0.0);
    count += idx.size();
  }
  require(count > 0, ErrorCode::InsufficientData, "no window holds enough points for a plane fit");
  return std::sqrt(sq / static_cast<double>(count));
}

inline QualityReport assess_quality(const PointCloud& before, const PointCloud& after,
                                    const QualityParams& params = {}) {
  require(before.has_intensity() && after.has_intensity(), ErrorCode::MissingIntensity,
          "quality check needs intensity on both clouds");
  QualityReport r;
  r.overexposure_before = count_overexposed(before, params.intensity_threshold);
  r.overexposure_after = count_overexposed(after, params.intensity_threshold);
  r.roughness_before = local_roughness(before, params.window, params.min_window_points);
  r.roughness_after = local_roughness(after, params.window, params.min_window_points);
  r.pass = static_cast<double>(r.overexposure_after) >=
               params.ratio_overexposure * static_cast<double>(r.overexposure_before) &&
           r.roughness_after <= params.ratio_roughness * r.roughness_before;
  return r;
}

// --- file I/O ---------------------------------------------------------------

namespace detail {
inline std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace detail

inline void write_ply(const std::string& path, const PointCloud& cloud) {
  cloud.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path);
  out << "ply\nformat ascii 1.0\ncomment frame " << cloud.frame_id << "\nelement vertex "
      << cloud.size() << "\nproperty double x\nproperty double y\nproperty double z\n";
  if (cloud.has_intensity()) out << "property double intensity\n";
  if (cloud.has_labels()) out << "property int label\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    out << detail::fmt9(p(0)) << ' ' << detail::fmt9(p(1)) << ' ' << detail::fmt9(p(2));
    if (cloud.has_intensity()) out << ' ' << detail::fmt9(cloud.intensity[i]);
    if (cloud.has_labels()) out << ' ' << cloud.labels[i];
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path);
}

inline PointCloud read_ply(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  std::string line;
  require(std::getline(in, line) && line == "ply", ErrorCode::IoError, path + " is not a PLY file");
  std::size_t count = 0;
  std::vector<std::string> props;
  PointCloud cloud;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string kind;
      ls >> kind;
      require(kind == "ascii", ErrorCode::IoError, "only ASCII PLY is supported");
    } else if (word == "comment") {
      std::string key;
      if (ls >> key && key == "frame") ls >> cloud.frame_id;
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::IoError, "truncated PLY " + path);
    std::istringstream ls(line);
    Vec3 p = Vec3::Zero();
    for (const auto& name : props) {
      double v = 0.0;
      require(static_cast<bool>(ls >> v), ErrorCode::IoError, "malformed PLY row in " + path);
      if (name == "x") p(0) = v;
      else if (name == "y") p(1) = v;
      else if (name == "z") p(2) = v;
      else if (name == "intensity") cloud.intensity.push_back(v);
      else if (name == "label") cloud.labels.push_back(static_cast<int>(v));
    }
    cloud.points.push_back(p);
  }
  cloud.validate();
  return cloud;
}

/// One point per line: x y z [intensity].
inline void write_xyz(const std::string& path, const PointCloud& cloud) {
  cloud.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    out << detail::fmt9(p(0)) << ' ' << detail::fmt9(p(1)) << ' ' << detail::fmt9(p(2));
    if (cloud.has_intensity()) out << ' ' << detail::fmt9(cloud.intensity[i]);
    out << '\n';
  }
}

inline PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  PointCloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (vals.empty()) continue;
    require(vals.size() == 3 || vals.size() == 4, ErrorCode::IoError,
            "XYZ rows need 3 or 4 columns in " + path);
    cloud.points.emplace_back(vals[0], vals[1], vals[2]);
    if (vals.size() == 4) cloud.intensity.push_back(vals[3]);
  }
  cloud.validate();
  return cloud;
}

}  // namespace sandbot
