#include "fisheval/synth.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <random>

namespace fisheval {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double hash_unit(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(i) * 0x632BE59BD9B4E019ULL +
                                                 static_cast<std::uint64_t>(j)));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, double u, double v) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const auto iu = static_cast<std::int64_t>(fu);
  const auto iv = static_cast<std::int64_t>(fv);
  const double su = smooth(u - fu);
  const double sv = smooth(v - fv);
  const double a = hash_unit(seed, iu, iv);
  const double b = hash_unit(seed, iu + 1, iv);
  const double c = hash_unit(seed, iu, iv + 1);
  const double d = hash_unit(seed, iu + 1, iv + 1);
  return (a * (1 - su) + b * su) * (1 - sv) + (c * (1 - su) + d * su) * sv;
}

// Facade-like pattern: panels with inset windows of random shade.
double window_pattern(std::uint64_t seed, double u, double v) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const auto iu = static_cast<std::int64_t>(fu);
  const auto iv = static_cast<std::int64_t>(fv);
  const double ru = u - fu;
  const double rv = v - fv;
  const double panel = hash_unit(seed + 17, iu, iv);
  const double inset = 0.15 + 0.2 * hash_unit(seed + 29, iu, iv);
  const bool in_window = ru > inset && ru < 1.0 - inset && rv > inset && rv < 1.0 - inset;
  if (in_window && hash_unit(seed + 41, iu, iv) < 0.7) return 0.15 + 0.5 * hash_unit(seed + 53, iu, iv);
  return 0.35 + 0.5 * panel;
}

bool intersect_box(const Box& box, const Eigen::Vector3d& o, const Eigen::Vector3d& d, double* t_hit) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < box.min_corner[a] || o[a] > box.max_corner[a]) return false;
      continue;
    }
    const double inv = 1.0 / d[a];
    double tn = (box.min_corner[a] - o[a]) * inv;
    double tf = (box.max_corner[a] - o[a]) * inv;
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1) return false;
  }
  if (t0 <= 0.0) return false;  // origin inside a box: treat as no hit
  *t_hit = t0;
  return true;
}

}  // namespace

std::optional<Hit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& direction) {
  Hit best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    double t = 0.0;
    if (intersect_box(scene.boxes[i], origin, direction, &t) && t < best.distance) {
      best.distance = t;
      best.primitive = static_cast<int>(i);
    }
  }
  if (scene.ground_plane && direction.z() < 0.0 && origin.z() > 0.0) {
    const double t = -origin.z() / direction.z();
    if (t < best.distance) {
      best.distance = t;
      best.primitive = -1;
    }
  }
  if (!std::isfinite(best.distance) || best.distance > scene.world_bound) return std::nullopt;
  best.point = origin + best.distance * direction;
  if (best.primitive == -1) best.point.z() = 0.0;
  return best;
}

float surface_intensity(const Scene& scene, const Hit& hit) {
  const Eigen::Vector3d& p = hit.point;
  double u = p.x();
  double v = p.y();
  std::uint64_t seed = splitmix64(scene.seed);
  if (hit.primitive >= 0) {
    const Box& box = scene.boxes[static_cast<std::size_t>(hit.primitive)];
    seed = splitmix64(scene.seed ^ box.texture_seed);
    // Pick the face whose plane the point lies on.
    const Eigen::Vector3d to_min = (p - box.min_corner).cwiseAbs();
    const Eigen::Vector3d to_max = (p - box.max_corner).cwiseAbs();
    const Eigen::Vector3d face = to_min.cwiseMin(to_max);
    Eigen::Index axis = 0;
    face.minCoeff(&axis);
    if (axis == 0) {
      u = p.y();
      v = p.z();
    } else if (axis == 1) {
      u = p.x();
      v = p.z();
    }
  }
  const double k = scene.texture_density;
  const double value = 0.55 * window_pattern(seed, u * k * 0.5, v * k * 0.5) +
                       0.3 * value_noise(seed + 101, u * k, v * k) +
                       0.15 * value_noise(seed + 202, u * k * 4.0, v * k * 4.0);
  return static_cast<float>(std::clamp(value, 0.0, 1.0));
}

Scene make_urban_canyon(std::uint64_t seed, double texture_density) {
  Scene scene;
  scene.seed = seed;
  scene.texture_density = texture_density;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> width(6.0, 14.0);
  std::uniform_real_distribution<double> gap(0.0, 3.0);
  std::uniform_real_distribution<double> height(8.0, 30.0);
  std::uniform_real_distribution<double> setback(6.0, 9.0);
  std::uniform_real_distribution<double> depth(6.0, 12.0);
  std::uint64_t tex = 1;
  for (int side : {-1, 1}) {
    double x = -70.0;
    while (x < 80.0) {
      const double w = width(rng);
      const double s = setback(rng);
      const double dpt = depth(rng);
      Box b;
      b.min_corner = Eigen::Vector3d(x, side > 0 ? s : -s - dpt, 0.0);
      b.max_corner = Eigen::Vector3d(x + w, side > 0 ? s + dpt : -s, height(rng));
      b.texture_seed = tex++;
      scene.boxes.push_back(b);
      x += w + gap(rng);
    }
  }
  // Closing buildings at both ends of the street.
  for (double x0 : {-85.0, 82.0}) {
    Box b;
    b.min_corner = Eigen::Vector3d(x0, -20.0, 0.0);
    b.max_corner = Eigen::Vector3d(x0 + 8.0, 20.0, height(rng));
    b.texture_seed = tex++;
    scene.boxes.push_back(b);
  }
  return scene;
}

namespace {

float sky_intensity(const Eigen::Vector3d& world_dir) {
  return static_cast<float>(0.55 + 0.4 * std::clamp(world_dir.z(), -1.0, 1.0));
}

float shade(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  const auto hit = cast_ray(scene, origin, dir);
  return hit ? surface_intensity(scene, *hit) : sky_intensity(dir);
}

}  // namespace

RenderedView render_view(const Scene& scene, const FisheyeModeld& model, const Posed& pose,
                         const RenderOptions& options) {
  RenderedView out;
  const int w = options.width;
  const int h = options.height;
  out.image.setConstant(h, w, options.border_value);
  out.sky = ByteMask::Zero(h, w);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> range =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(h, w);
  const int ss = std::max(1, options.supersample);
  const Eigen::Vector3d origin = pose.camera_center();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto ray = unproject_pixel(model, Eigen::Vector2d(x, y));
      if (!ray) continue;
      const Eigen::Vector3d dir = pose.rotation * ray->direction();
      const auto hit = cast_ray(scene, origin, dir);
      if (hit) {
        range(y, x) = hit->distance;
      } else {
        out.sky(y, x) = 1;
      }
      if (ss == 1) {
        out.image(y, x) = hit ? surface_intensity(scene, *hit) : sky_intensity(dir);
        continue;
      }
      double acc = 0.0;
      int n = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const Eigen::Vector2d sub(x - 0.5 + (sx + 0.5) / ss, y - 0.5 + (sy + 0.5) / ss);
          const auto sub_ray = unproject_pixel(model, sub);
          if (!sub_ray) continue;
          acc += shade(scene, origin, pose.rotation * sub_ray->direction());
          ++n;
        }
      }
      out.image(y, x) = n > 0 ? static_cast<float>(acc / n) : options.border_value;
    }
  }
  out.distance = DistanceMap::from_values(std::move(range));
  return out;
}

Posed pose_at(const Posed& pose, const MotionParams& motion, double t) {
  Posed out = pose;
  const double angle = motion.angular_velocity.norm() * t;
  if (angle != 0.0) {
    const Eigen::Matrix3d dR =
        Eigen::AngleAxisd(angle, motion.angular_velocity.normalized()).toRotationMatrix();
    out.rotation = dR * pose.rotation;
  }
  out.translation = pose.translation + motion.linear_velocity * t;
  return out;
}

namespace {

CameraView render_blurred(const Scene& scene, const FisheyeModeld& model, const Posed& mid_pose,
                          const Pose<double>& offset, bool apply_offset, const MotionParams& motion,
                          const RenderOptions& options) {
  auto camera_pose = [&](const Posed& front) { return apply_offset ? front * offset : front; };
  CameraView view;
  view.model = model;
  RenderedView mid = render_view(scene, model, camera_pose(mid_pose), options);
  view.distance = std::move(mid.distance);
  view.sky = std::move(mid.sky);
  view.pose = camera_pose(mid_pose);
  const int k = std::max(1, motion.subsamples);
  if (k == 1) {
    view.image = std::move(mid.image);
    return view;
  }
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(options.height, options.width);
  for (int s = 0; s < k; ++s) {
    const double t = motion.exposure * ((s + 0.5) / k - 0.5);
    const Posed p = camera_pose(pose_at(mid_pose, motion, t));
    acc += render_view(scene, model, p, options).image.cast<double>();
  }
  view.image = (acc / k).cast<float>();
  return view;
}

}  // namespace

StereoPair render_pair(const Scene& scene, const Rig& rig, const Posed& front_pose,
                       const MotionParams& motion, const RenderOptions& options,
                       const std::string& id) {
  StereoPair pair;
  pair.id = id;
  pair.front = render_blurred(scene, rig.front, front_pose, rig.rear_offset, false, motion, options);
  pair.rear = render_blurred(scene, rig.rear, front_pose, rig.rear_offset, true, motion, options);
  return pair;
}

Rig make_pfseq_rig(ProjectionKind kind, int width) {
  // Full-size PFSeq circles: 1200 px (equidistant) and 1124 px (equisolid) on 1200 px images.
  const double scale = width / 1200.0;
  const double radius = (kind == ProjectionKind::Equidistant ? 600.0 : 562.0) * scale;
  const Eigen::Vector2d center((width - 1) / 2.0, (width - 1) / 2.0);
  Rig rig;
  rig.front = FisheyeModeld::from_fov(kind, kPfseqFovDeg, radius, center);
  rig.rear = rig.front;
  rig.rear_offset = Rig::make_offset(kPfseqBaseline, kPfseqRearShiftDeg);
  return rig;
}

SynthSequence generate_sequence(const SynthSpec& spec) {
  SynthSequence out;
  const Scene scene = make_urban_canyon(spec.seed, spec.texture_density);
  out.sequence.rig = make_pfseq_rig(spec.kind, spec.width);
  RenderOptions options;
  options.width = spec.width;
  options.height = spec.width;
  options.supersample = spec.supersample;
  for (int i = 0; i < spec.frames; ++i) {
    SequenceFrameRecord rec;
    rec.x = -10.0 + spec.step * i;
    rec.y = 0.0;
    rec.yaw_deg = spec.yaw_step_deg * i;
    const Posed front = trajectory_pose(rec.x, rec.y, rec.yaw_deg, spec.camera_height);
    char id[16];
    std::snprintf(id, sizeof(id), "%04d", i);
    out.sequence.frames.push_back(
        render_pair(scene, out.sequence.rig, front, spec.motion, options, id));
    out.sequence.trajectory.push_back(front);
    out.records.push_back(rec);
  }
  return out;
}

}  // namespace fisheval
