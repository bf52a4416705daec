#include "sketchface/face_model.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace sketchface {

CoreTensor::CoreTensor(int n_vertices, int n_identity, int n_expression, std::uint64_t seed,
                       std::vector<double> data)
    : n_vertices_(n_vertices), n_identity_(n_identity), n_expression_(n_expression), seed_(seed),
      data_(std::move(data)) {
  if (n_vertices < 1 || n_identity < 1 || n_expression < 1) {
    throw DimensionError("core tensor dimensions must be >= 1");
  }
  const std::size_t expected = static_cast<std::size_t>(3) * n_vertices * n_identity * n_expression;
  if (data_.size() != expected) {
    throw DimensionError("core tensor has " + std::to_string(data_.size()) + " entries, expected " +
                         std::to_string(expected));
  }
  for (double x : data_) {
    if (!std::isfinite(x)) throw ValidationError("core tensor has non-finite entry");
  }
}

RigidPose::RigidPose(const Mat3& rotation, const Vec3& translation) : rotation_(rotation), translation_(translation) {
  const double ortho = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-9) || !(std::abs(rotation.determinant() - 1.0) <= 1e-9)) {
    throw ValidationError("pose rotation is not a proper orthonormal matrix");
  }
  if (!translation.allFinite()) throw ValidationError("pose translation is not finite");
}

Mat3 yaw_pitch_rotation(double yaw, double pitch) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitY()) * Eigen::AngleAxisd(pitch, Vec3::UnitX())).toRotationMatrix();
}

Camera::Camera(double focal, const Vec2& principal_point, int width, int height)
    : focal_(focal), principal_point_(principal_point), width_(width), height_(height) {
  if (!(focal > 0.0) || !std::isfinite(focal)) throw ValidationError("camera focal must be positive");
  if (width < 1 || height < 1) throw ValidationError("camera image size must be positive");
  if (!(principal_point.x() >= 0 && principal_point.x() <= width && principal_point.y() >= 0 &&
        principal_point.y() <= height)) {
    throw ValidationError("principal point outside image bounds");
  }
}

Vec2 Camera::project(const Vec3& p) const {
  if (!(p.z() > 0.0)) throw ProjectionError("point has non-positive depth " + std::to_string(p.z()));
  return focal_ * Vec2(p.x() / p.z(), p.y() / p.z()) + principal_point_;
}

Vec3 Camera::unproject(const Vec2& pixel, double z) const {
  if (!(z > 0.0)) throw ProjectionError("back-projection at non-positive depth " + std::to_string(z));
  const Vec2 d = pixel - principal_point_;
  return Vec3(d.x() * z / focal_, d.y() * z / focal_, z);
}

namespace {

// Bit-exact uniform double in [0,1) from the raw 64-bit engine output.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct SmoothField {
  static constexpr int kTerms = 4;
  std::array<Vec3, kTerms> freq[3];
  std::array<double, kTerms> phase[3];
  std::array<double, kTerms> weight[3];
  double amplitude = 0.0;

  SmoothField(std::mt19937_64& rng, double amp) : amplitude(amp) {
    for (int c = 0; c < 3; ++c) {
      double total = 0.0;
      for (int k = 0; k < kTerms; ++k) {
        freq[c][k] = Vec3(2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1);
        phase[c][k] = 2 * std::numbers::pi * uniform01(rng);
        weight[c][k] = 2 * uniform01(rng) - 1;
        total += std::abs(weight[c][k]);
      }
      for (int k = 0; k < kTerms; ++k) weight[c][k] /= total;
    }
  }

  // |value| <= amplitude per coordinate; wavelengths are at least diag / sqrt(3).
  Vec3 operator()(const Vec3& normalized) const {
    Vec3 out;
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < kTerms; ++k) {
        s += weight[c][k] * std::sin(2 * std::numbers::pi * freq[c][k].dot(normalized) + phase[c][k]);
      }
      out[c] = amplitude * s;
    }
    return out / std::sqrt(3.0);
  }
};

}  // namespace

CoreTensor synthesize_core(std::uint64_t seed, int n_vertices, int n_identity, int n_expression,
                           const FaceMesh& base_mesh) {
  if (n_vertices < 1 || n_identity < 1 || n_expression < 1) {
    throw DimensionError("core tensor counts must be >= 1");
  }
  if (base_mesh.vertex_count() != n_vertices) {
    throw DimensionError("base mesh has " + std::to_string(base_mesh.vertex_count()) + " vertices, expected " +
                         std::to_string(n_vertices));
  }
  Vec3 lo = base_mesh.vertices.front();
  Vec3 hi = lo;
  for (const Vec3& p : base_mesh.vertices) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 center = 0.5 * (lo + hi);
  const double diag = std::max((hi - lo).norm(), 1e-12);
  const double max_amp = 0.02 * diag;

  std::mt19937_64 rng(seed);
  const std::size_t slab = static_cast<std::size_t>(n_identity) * n_expression;
  std::vector<double> data(static_cast<std::size_t>(3) * n_vertices * slab, 0.0);
  for (int i = 0; i < n_identity; ++i) {
    for (int j = 0; j < n_expression; ++j) {
      const bool is_base = (i == 0 && j == 0);
      const bool cross = (i > 0 && j > 0);
      // Cross terms stay small so identity and expression stay nearly separable.
      const double amp = is_base ? 0.0 : max_amp * (cross ? 0.25 : 0.5 + 0.5 * uniform01(rng));
      const SmoothField field(rng, amp);
      for (int v = 0; v < n_vertices; ++v) {
        Vec3 value = Vec3::Zero();
        if (i == 0) value = base_mesh.vertices[v];
        if (!is_base) value += field((base_mesh.vertices[v] - center) / diag);
        for (int c = 0; c < 3; ++c) {
          data[(static_cast<std::size_t>(3 * v + c) * n_identity + i) * n_expression + j] = value[c];
        }
      }
    }
  }
  return CoreTensor(n_vertices, n_identity, n_expression, seed, std::move(data));
}

Vertices contract(const CoreTensor& core, const IdentityCoeffs& u, const Eigen::VectorXd& e) {
  if (u.u.size() != core.n_identity()) throw DimensionError("identity vector length mismatch");
  if (e.size() != core.n_expression()) throw DimensionError("expression vector length mismatch");
  const Blendshapes b = build_blendshapes(core, u);
  Vertices out(core.n_vertices(), Vec3::Zero());
  for (int j = 0; j < b.count(); ++j) {
    for (int v = 0; v < core.n_vertices(); ++v) out[v] += e[j] * b.shapes[j][v];
  }
  return out;
}

Blendshapes build_blendshapes(const CoreTensor& core, const IdentityCoeffs& u) {
  if (u.u.size() != core.n_identity()) {
    throw DimensionError("identity vector has length " + std::to_string(u.u.size()) + ", core expects " +
                         std::to_string(core.n_identity()));
  }
  using RowBlock = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int ni = core.n_identity();
  const int ne = core.n_expression();
  Blendshapes out;
  out.shapes.assign(ne, Vertices(core.n_vertices(), Vec3::Zero()));
  const double* base = core.data().data();
  for (int row = 0; row < core.rows(); ++row) {
    Eigen::Map<const RowBlock> block(base + static_cast<std::size_t>(row) * ni * ne, ni, ne);
    const Eigen::RowVectorXd contracted = u.u.transpose() * block;
    for (int j = 0; j < ne; ++j) out.shapes[j][row / 3][row % 3] = contracted[j];
  }
  return out;
}

ComposedShape compose_shape(const Blendshapes& b, const ExpressionCoeffs& e) {
  if (b.count() < 1) throw DimensionError("blendshape set is empty");
  if (e.e.size() != b.count() - 1) {
    throw DimensionError("expression vector has length " + std::to_string(e.e.size()) + ", expected " +
                         std::to_string(b.count() - 1));
  }
  const Vertices& b0 = b.neutral();
  ComposedShape out;
  out.expression_offset.assign(b0.size(), Vec3::Zero());
  for (int n = 1; n < b.count(); ++n) {
    const double w = e.e[n - 1];
    if (w == 0.0) continue;
    const Vertices& bn = b.shapes[n];
    for (std::size_t v = 0; v < b0.size(); ++v) out.expression_offset[v] += (bn[v] - b0[v]) * w;
  }
  out.shape.resize(b0.size());
  for (std::size_t v = 0; v < b0.size(); ++v) out.shape[v] = b0[v] + out.expression_offset[v];
  // A single unit weight reproduces b_n exactly instead of b0 + (b_n - b0).
  for (int n = 1; n < b.count(); ++n) {
    bool basis = e.e[n - 1] == 1.0;
    for (int m = 1; basis && m < b.count(); ++m) basis = (m == n) || e.e[m - 1] == 0.0;
    if (basis) out.shape = b.shapes[n];
  }
  return out;
}

Vertices transform_mesh(std::span<const Vec3> shape, const RigidPose& pose) {
  Vertices out;
  out.reserve(shape.size());
  for (const Vec3& p : shape) out.push_back(pose.apply(p));
  return out;
}

Vec2 project_landmark(const Vec3& posed_point, const Camera& cam, const Vec2& displacement) {
  return cam.project(posed_point) + displacement;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_le(std::istream& in, int bytes, const std::filesystem::path& path) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == EOF) throw IoError("truncated core tensor file " + path.string());
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_core(const std::filesystem::path& path, const CoreTensor& core) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write core tensor file " + path.string());
  out.write("FCTN", 4);
  put_u32(out, static_cast<std::uint32_t>(core.n_vertices()));
  put_u32(out, static_cast<std::uint32_t>(core.n_identity()));
  put_u32(out, static_cast<std::uint32_t>(core.n_expression()));
  put_u32(out, 3);
  put_u64(out, core.seed());
  for (double x : core.data()) put_u64(out, std::bit_cast<std::uint64_t>(x));
  if (!out) throw IoError("failed writing core tensor file " + path.string());
}

CoreTensor read_core(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open core tensor file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "FCTN") throw IoError("bad magic in core tensor file " + path.string());
  const auto nv = static_cast<int>(get_le(in, 4, path));
  const auto ni = static_cast<int>(get_le(in, 4, path));
  const auto ne = static_cast<int>(get_le(in, 4, path));
  const auto coords = get_le(in, 4, path);
  if (coords != 3) throw IoError("core tensor file must have 3 coordinates per vertex");
  const std::uint64_t seed = get_le(in, 8, path);
  if (nv < 1 || ni < 1 || ne < 1) throw IoError("core tensor file has zero dimension");
  std::vector<double> data(static_cast<std::size_t>(3) * nv * ni * ne);
  for (double& x : data) x = std::bit_cast<double>(get_le(in, 8, path));
  return CoreTensor(nv, ni, ne, seed, std::move(data));
}

}  // namespace sketchface
