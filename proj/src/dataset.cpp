#include "fisheval/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fisheval/geometry_io.hpp"
#include "fisheval/keyvalue.hpp"

namespace fisheval {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

using RangeMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr char kDistanceMagic[4] = {'F', 'E', 'D', 'M'};

// Values within this relative slack above the cap are treated as the cap, so
// full-scale encodings (e.g. 65535 * 500/65535) stay valid.
constexpr double kCapSlack = 1e-9;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& in, T* v) {
  in.read(reinterpret_cast<char*>(v), sizeof(T));
  return static_cast<std::size_t>(in.gcount()) == sizeof(T);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& name) {
  const std::filesystem::path p(name);
  return p.is_absolute() ? p : base / p;
}

void require_file(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw Error(ErrorCode::MissingFile, p.string());
}

}  // namespace

DistanceMap DistanceMap::from_values(RangeMatrix values, double cap) {
  DistanceMap map;
  map.cap = cap;
  map.valid.resize(values.rows(), values.cols());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    double& v = values.data()[i];
    bool ok = std::isfinite(v) && v > 0.0 && v <= cap * (1.0 + kCapSlack);
    if (ok && v > cap) v = cap;
    map.valid.data()[i] = ok ? 1 : 0;
  }
  map.values = std::move(values);
  return map;
}

void DistanceMap::apply_sky_mask(const ByteMask& sky) {
  if (sky.rows() != values.rows() || sky.cols() != values.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "sky mask and distance map sizes differ");
  }
  for (Eigen::Index i = 0; i < sky.size(); ++i) {
    if (sky.data()[i]) valid.data()[i] = 0;
  }
}

std::optional<double> DistanceMap::lookup_nearest(const Eigen::Vector2d& pixel) const {
  const double fx = std::floor(pixel.x() + 0.5);
  const double fy = std::floor(pixel.y() + 0.5);
  if (!(fx >= 0 && fy >= 0 && fx < width() && fy < height())) return std::nullopt;
  const auto x = static_cast<Eigen::Index>(fx);
  const auto y = static_cast<Eigen::Index>(fy);
  if (!valid(y, x)) return std::nullopt;
  return values(y, x);
}

Posed Rig::make_offset(double baseline_x, const Eigen::Vector3d& euler_xzy_deg) {
  Posed offset;
  offset.rotation = euler_xzy_to_rotation(euler_xzy_deg.x(), euler_xzy_deg.y(), euler_xzy_deg.z());
  offset.translation = Eigen::Vector3d(baseline_x, 0.0, 0.0);
  return offset;
}

DistanceEncoding DistanceEncoding::parse(const std::string& name, double scale, double offset) {
  DistanceEncoding enc;
  enc.scale = scale;
  enc.offset = offset;
  if (name == "raw32f" || name == "Raw32F") {
    enc.kind = Kind::Raw32F;
  } else if (name == "png16" || name == "PNG16") {
    enc.kind = Kind::PNG16;
  } else {
    throw Error(ErrorCode::UnknownEncoding, "unknown distance encoding '" + name + "'");
  }
  return enc;
}

DistanceMap decode_distance_map(const std::filesystem::path& file, const DistanceEncoding& encoding,
                                double cap) {
  require_file(file);
  if (encoding.kind == DistanceEncoding::Kind::PNG16) {
    Raw16Image raw;
    try {
      raw = read_png16(file);
    } catch (const Error& e) {
      throw Error(ErrorCode::CorruptFile, e.what());
    }
    RangeMatrix values = raw.cast<double>().array() * encoding.scale + encoding.offset;
    // Zero is reserved for "no return" regardless of the offset.
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
      if (raw.data()[i] == 0) values.data()[i] = 0.0;
    }
    return DistanceMap::from_values(std::move(values), cap);
  }

  std::ifstream in(file, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  if (in.gcount() != 4 || std::memcmp(magic, kDistanceMagic, 4) != 0 || !read_pod(in, &width) ||
      !read_pod(in, &height)) {
    throw Error(ErrorCode::CorruptFile, file.string() + ": bad Raw32F header");
  }
  std::vector<float> data(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != data.size() * 4) {
    throw Error(ErrorCode::CorruptFile, file.string() + ": truncated Raw32F payload");
  }
  RangeMatrix values(height, width);
  for (std::size_t i = 0; i < data.size(); ++i) values.data()[i] = data[i];
  return DistanceMap::from_values(std::move(values), cap);
}

void write_distance_raw32f(const std::filesystem::path& file, const DistanceMap& map) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + file.string());
  out.write(kDistanceMagic, 4);
  write_pod(out, static_cast<std::uint32_t>(map.width()));
  write_pod(out, static_cast<std::uint32_t>(map.height()));
  for (Eigen::Index i = 0; i < map.values.size(); ++i) {
    const float v = map.valid.data()[i] ? static_cast<float>(map.values.data()[i]) : 0.0f;
    write_pod(out, v);
  }
}

Posed trajectory_pose(double x, double y, double yaw_deg, double height) {
  Posed pose;
  pose.rotation = rotation_z(deg_to_rad(yaw_deg));
  pose.translation = Eigen::Vector3d(x, y, height);
  return pose;
}

namespace {

CameraView load_view(const std::filesystem::path& base, const std::string& image_name,
                     const std::string& distance_name, const std::string& sky_name,
                     const DistanceEncoding& encoding, double cap, const FisheyeModeld& model) {
  CameraView view;
  view.model = model;
  const auto image_path = resolve(base, image_name);
  require_file(image_path);
  view.image = read_gray_image(image_path);
  view.distance = decode_distance_map(resolve(base, distance_name), encoding, cap);
  if (view.distance.width() != view.image.cols() || view.distance.height() != view.image.rows()) {
    throw Error(ErrorCode::DimensionMismatch,
                distance_name + " is " + std::to_string(view.distance.width()) + "x" +
                    std::to_string(view.distance.height()) + " but " + image_name + " is " +
                    std::to_string(view.image.cols()) + "x" + std::to_string(view.image.rows()));
  }
  if (sky_name == "-") {
    view.sky = ByteMask::Zero(view.image.rows(), view.image.cols());
  } else {
    const auto sky_path = resolve(base, sky_name);
    require_file(sky_path);
    view.sky = read_mask(sky_path);
    if (view.sky.rows() != view.image.rows() || view.sky.cols() != view.image.cols()) {
      throw Error(ErrorCode::DimensionMismatch, sky_name + " does not match " + image_name);
    }
    view.distance.apply_sky_mask(view.sky);
  }
  return view;
}

}  // namespace

Sequence load_sequence(const std::filesystem::path& manifest_path) {
  require_file(manifest_path);
  const auto kv = KeyValueFile::load(manifest_path);
  const auto base = manifest_path.parent_path();

  Sequence seq;
  seq.rig.front = read_model(kv, "front.");
  seq.rig.rear = read_model(kv, "rear.");
  const double baseline = kv.get_double_or("rig.baseline_x", -2.0);
  Eigen::Vector3d shift = Eigen::Vector3d::Zero();
  if (kv.has("rig.rear_euler_xzy")) {
    const auto angles = kv.get_double_list("rig.rear_euler_xzy");
    if (angles.size() != 3) kv.fail("rig.rear_euler_xzy", "expected three angles (x, y, z)");
    shift = Eigen::Vector3d(angles[0], angles[1], angles[2]);
  }
  seq.rig.rear_offset = Rig::make_offset(baseline, shift);
  const double height = kv.get_double_or("rig.height", 0.0);
  const double cap = kv.get_double_or("distance_cap", kDefaultDistanceCap);

  DistanceEncoding encoding;
  try {
    encoding = DistanceEncoding::parse(kv.get_or("distance_encoding", "raw32f"),
                                       kv.get_double_or("distance_scale", 1.0),
                                       kv.get_double_or("distance_offset", 0.0));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnknownEncoding) throw;
    throw Error(ErrorCode::UnknownEncoding, kv.source() + ": " + e.what());
  }
  if (encoding.kind == DistanceEncoding::Kind::PNG16 && !kv.has("distance_scale")) {
    kv.fail("distance_scale", "PNG16 distance maps require an explicit scale");
  }

  // id x y yaw front_image front_distance front_sky rear_image rear_distance rear_sky
  for (const auto& row : kv.table("frames")) {
    const auto where = kv.source() + ":" + std::to_string(row.line);
    if (row.tokens.size() != 10) {
      throw Error(ErrorCode::BadPoseRecord, where + ": expected 10 columns, got " +
                                                std::to_string(row.tokens.size()));
    }
    double pose_values[3];
    for (int k = 0; k < 3; ++k) {
      bool ok = false;
      pose_values[k] = parse_double(row.tokens[1 + k], &ok);
      if (!ok || !std::isfinite(pose_values[k])) {
        throw Error(ErrorCode::BadPoseRecord, where + ": bad pose value '" + row.tokens[1 + k] + "'");
      }
    }
    StereoPair pair;
    pair.id = row.tokens[0];
    const Posed front_pose = trajectory_pose(pose_values[0], pose_values[1], pose_values[2], height);
    pair.front = load_view(base, row.tokens[4], row.tokens[5], row.tokens[6], encoding, cap,
                           seq.rig.front);
    pair.rear = load_view(base, row.tokens[7], row.tokens[8], row.tokens[9], encoding, cap,
                          seq.rig.rear);
    if (pair.front.image.rows() != pair.rear.image.rows() ||
        pair.front.image.cols() != pair.rear.image.cols()) {
      throw Error(ErrorCode::DimensionMismatch, where + ": front and rear resolutions differ");
    }
    pair.front.pose = front_pose;
    pair.rear.pose = front_pose * seq.rig.rear_offset;
    seq.trajectory.push_back(front_pose);
    seq.frames.push_back(std::move(pair));
  }
  return seq;
}

void write_sequence(const std::filesystem::path& dir, const Sequence& sequence,
                    const std::vector<SequenceFrameRecord>& records, double camera_height,
                    const Eigen::Vector3d& rear_euler_xzy_deg, double baseline) {
  if (records.size() != sequence.frames.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one pose record per frame is required");
  }
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest.precision(17);
  manifest << "# fisheval sequence manifest\n"
           << "distance_encoding = raw32f\n"
           << "distance_cap = "
           << (sequence.frames.empty() ? kDefaultDistanceCap : sequence.frames.front().front.distance.cap)
           << "\n"
           << "rig.baseline_x = " << baseline << "\n"
           << "rig.rear_euler_xzy = " << rear_euler_xzy_deg.x() << ", " << rear_euler_xzy_deg.y()
           << ", " << rear_euler_xzy_deg.z() << "\n"
           << "rig.height = " << camera_height << "\n"
           << write_model(sequence.rig.front, "front.") << write_model(sequence.rig.rear, "rear.")
           << "\n[frames]\n"
           << "# id x y yaw front_image front_distance front_sky rear_image rear_distance rear_sky\n";
  for (std::size_t i = 0; i < sequence.frames.size(); ++i) {
    const auto& pair = sequence.frames[i];
    const auto& rec = records[i];
    auto emit = [&](const CameraView& view, const std::string& side) {
      const std::string stem = pair.id + "_" + side;
      write_gray_png(dir / (stem + ".png"), view.image);
      write_distance_raw32f(dir / (stem + ".dist"), view.distance);
      write_mask(dir / (stem + "_sky.png"), view.sky);
      return stem + ".png " + stem + ".dist " + stem + "_sky.png";
    };
    const std::string front_cols = emit(pair.front, "front");
    const std::string rear_cols = emit(pair.rear, "rear");
    manifest << pair.id << " " << rec.x << " " << rec.y << " " << rec.yaw_deg << " " << front_cols
             << " " << rear_cols << "\n";
  }
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write manifest in " + dir.string());
  out << manifest.str();
}

// Keypoint interchange ------------------------------------------------------

void write_keypoint_file(const std::filesystem::path& path, const KeypointFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  out << kKeypointMagic << " " << kKeypointVersion << "\n"
      << "image: " << file.image_id << "\n"
      << "detector: " << file.detector_id << "\n"
      << "params: " << file.parameters << "\n"
      << "frame: " << (file.frame == ImageFrame::Polar ? "polar" : "fisheye") << "\n"
      << "count: " << file.keypoints.size() << "\n";
  if (!file.descriptors) {
    out << "descriptor: none 0\n";
  } else if (file.descriptors->type == DescriptorSet::Type::Real) {
    out << "descriptor: real32 " << file.descriptors->width << "\n";
  } else {
    out << "descriptor: bits " << file.descriptors->width << "\n";
  }
  out << "end\n";
  if (file.descriptors && file.descriptors->size() != static_cast<int>(file.keypoints.size())) {
    throw Error(ErrorCode::DimensionMismatch, "descriptor count differs from keypoint count");
  }
  for (std::size_t i = 0; i < file.keypoints.size(); ++i) {
    const auto& kp = file.keypoints[i];
    for (double v : {kp.x, kp.y, kp.scale, kp.orientation, kp.response}) write_pod(out, v);
    if (!file.descriptors) continue;
    const auto row = static_cast<Eigen::Index>(i);
    if (file.descriptors->type == DescriptorSet::Type::Real) {
      out.write(reinterpret_cast<const char*>(file.descriptors->real.row(row).data()),
                file.descriptors->width * 4);
    } else {
      out.write(reinterpret_cast<const char*>(file.descriptors->bits.row(row).data()),
                file.descriptors->bits.cols());
    }
  }
}

namespace {

std::string header_field(std::istream& in, const std::string& name, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::TruncatedFile, path + ": header ends early");
  const std::string prefix = name + ": ";
  if (line.rfind(prefix, 0) != 0 && line != name + ":") {
    throw Error(ErrorCode::CorruptFile, path + ": expected '" + name + "' header line");
  }
  return line.size() > prefix.size() ? line.substr(prefix.size()) : std::string();
}

}  // namespace

KeypointFile read_keypoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  const std::string where = path.string();
  std::string line;
  std::getline(in, line);
  const std::string expected = std::string(kKeypointMagic) + " " + std::to_string(kKeypointVersion);
  if (line != expected) {
    throw Error(ErrorCode::VersionMismatch, where + ": expected '" + expected + "'");
  }
  KeypointFile file;
  file.image_id = header_field(in, "image", where);
  file.detector_id = header_field(in, "detector", where);
  file.parameters = header_field(in, "params", where);
  const std::string frame = header_field(in, "frame", where);
  if (frame != "fisheye" && frame != "polar") {
    throw Error(ErrorCode::CorruptFile, where + ": unknown frame '" + frame + "'");
  }
  file.frame = frame == "polar" ? ImageFrame::Polar : ImageFrame::Fisheye;
  std::size_t count = 0;
  std::istringstream(header_field(in, "count", where)) >> count;
  std::istringstream desc(header_field(in, "descriptor", where));
  std::string desc_type;
  int desc_width = 0;
  desc >> desc_type >> desc_width;
  if (!std::getline(in, line) || line != "end") {
    throw Error(ErrorCode::TruncatedFile, where + ": missing header terminator");
  }
  if (desc_type == "real32") {
    file.descriptors = DescriptorSet::make_real(static_cast<int>(count), desc_width);
  } else if (desc_type == "bits") {
    file.descriptors = DescriptorSet::make_binary(static_cast<int>(count), desc_width);
  } else if (desc_type != "none") {
    throw Error(ErrorCode::CorruptFile, where + ": unknown descriptor type '" + desc_type + "'");
  }
  file.keypoints.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& kp = file.keypoints[i];
    kp.frame = file.frame;
    for (double* v : {&kp.x, &kp.y, &kp.scale, &kp.orientation, &kp.response}) {
      if (!read_pod(in, v)) throw Error(ErrorCode::TruncatedFile, where + ": keypoint records end early");
    }
    if (!file.descriptors) continue;
    const auto row = static_cast<Eigen::Index>(i);
    std::streamsize bytes = 0;
    char* dst = nullptr;
    if (file.descriptors->type == DescriptorSet::Type::Real) {
      bytes = desc_width * 4;
      dst = reinterpret_cast<char*>(file.descriptors->real.row(row).data());
    } else {
      bytes = file.descriptors->bits.cols();
      dst = reinterpret_cast<char*>(file.descriptors->bits.row(row).data());
    }
    in.read(dst, bytes);
    if (in.gcount() != bytes) throw Error(ErrorCode::TruncatedFile, where + ": descriptor data ends early");
  }
  return file;
}

}  // namespace fisheval
