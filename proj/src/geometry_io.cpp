#include "fisheval/geometry_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace fisheval {

std::string to_string(ProjectionKind kind) {
  return kind == ProjectionKind::Equidistant ? "equidistant" : "equisolid";
}

ProjectionKind projection_kind_from_string(const std::string& name) {
  if (name == "equidistant") return ProjectionKind::Equidistant;
  if (name == "equisolid" || name == "equisolid_angle") return ProjectionKind::EquisolidAngle;
  throw Error(ErrorCode::BadConfig, "unknown projection kind '" + name + "'");
}

FisheyeModeld read_model(const KeyValueFile& kv, const std::string& prefix) {
  const std::string kind_key = prefix + "kind";
  ProjectionKind kind;
  try {
    kind = projection_kind_from_string(kv.get(kind_key));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BadConfig || !kv.has(kind_key)) throw;
    kv.fail(kind_key, "expected 'equidistant' or 'equisolid'");
  }
  const double fov = kv.get_double(prefix + "fov");
  const double radius = kv.get_double(prefix + "circle_radius");
  const Eigen::Vector2d center(kv.get_double(prefix + "cx"), kv.get_double(prefix + "cy"));
  FisheyeModeld model;
  try {
    model = FisheyeModeld::from_fov(kind, fov, radius, center);
  } catch (const Error& e) {
    kv.fail(prefix + "fov", e.what());
  }
  if (kv.has(prefix + "focal")) {
    const double focal = kv.get_double(prefix + "focal");
    FisheyeModeld explicit_model = model;
    explicit_model.focal = focal;
    try {
      explicit_model.validate();
    } catch (const Error& e) {
      kv.fail(prefix + "focal", e.what());
    }
    model = explicit_model;
  }
  return model;
}

std::string write_model(const FisheyeModeld& model, const std::string& prefix) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%skind = %s\n%sfocal = %.17g\n%scx = %.17g\n%scy = %.17g\n"
                "%scircle_radius = %.17g\n%sfov = %.17g\n",
                prefix.c_str(), to_string(model.kind).c_str(), prefix.c_str(), model.focal,
                prefix.c_str(), model.center.x(), prefix.c_str(), model.center.y(), prefix.c_str(),
                model.circle_radius, prefix.c_str(), model.fov_deg);
  return buf;
}

FisheyeModeld load_model(const std::filesystem::path& path) {
  return read_model(KeyValueFile::load(path));
}

void save_model(const std::filesystem::path& path, const FisheyeModeld& model) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  out << write_model(model);
}

std::string model_hash(const FisheyeModeld& model) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", fnv1a64(write_model(model)));
  return buf;
}

}  // namespace fisheval
