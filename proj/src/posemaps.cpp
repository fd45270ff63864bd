#include "posefit/posemaps.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "posefit/error.hpp"

namespace posefit {

using detail::require;

bool GridSpec::contains(const Vec2& p) const {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() < crop_width_px() && p.y() < crop_height_px();
}

MapStack MapStack::zeros(const GridSpec& grid, int joint_count) {
  require(grid.width > 0 && grid.height > 0 && grid.stride_px > 0.0, "invalid grid");
  MapStack m;
  m.grid = grid;
  const Plane zero = Plane::Zero(grid.height, grid.width);
  m.joints.assign(joint_count, JointMaps{zero, zero, zero, zero});
  return m;
}

void MapStack::validate() const {
  require(grid.width > 0 && grid.height > 0 && grid.stride_px > 0.0, "invalid grid");
  for (const auto& jm : joints) {
    for (const Plane* p : {&jm.heat, &jm.x, &jm.y, &jm.z}) {
      require(p->rows() == grid.height && p->cols() == grid.width, "map plane shape mismatch");
      require(p->allFinite(), "map plane holds non-finite values");
    }
  }
}

Keypoints2D Keypoints2D::all_visible(Points2 locations) {
  Keypoints2D k;
  k.confidence.assign(locations.size(), 1.0);
  k.visible.assign(locations.size(), true);
  k.location = std::move(locations);
  return k;
}

int Keypoints2D::visible_count() const {
  int n = 0;
  for (bool v : visible) n += v ? 1 : 0;
  return n;
}

MapStack render_gt(const Keypoints2D& keypoints_crop, const LocalPose3D& local, const GridSpec& grid,
                   double sigma_cells) {
  const int n = keypoints_crop.size();
  require(static_cast<int>(local.positions.size()) == n, "keypoint and pose joint counts differ");
  require(static_cast<int>(keypoints_crop.visible.size()) == n, "keypoint visibility size mismatch");
  require(sigma_cells > 0.0, "heatmap sigma must be positive");

  MapStack maps = MapStack::zeros(grid, n);
  const double radius = 3.0 * sigma_cells;
  const double inv_two_var = 1.0 / (2.0 * sigma_cells * sigma_cells);
  for (int j = 0; j < n; ++j) {
    const Vec2& k = keypoints_crop.location[j];
    if (!keypoints_crop.visible[j] || !grid.contains(k)) continue;
    // Continuous cell coordinates with cell centers on integers.
    const double ux = k.x() / grid.stride_px - 0.5;
    const double uy = k.y() / grid.stride_px - 0.5;
    auto& jm = maps.joints[j];
    double peak = 0.0;
    for (int cy = 0; cy < grid.height; ++cy) {
      for (int cx = 0; cx < grid.width; ++cx) {
        const double d2 = (cx - ux) * (cx - ux) + (cy - uy) * (cy - uy);
        if (d2 > radius * radius) continue;
        const double v = std::exp(-d2 * inv_two_var);
        jm.heat(cy, cx) = v;
        peak = std::max(peak, v);
      }
    }
    if (peak > 0.0) jm.heat /= peak;
    jm.x.setConstant(local.positions[j].x());
    jm.y.setConstant(local.positions[j].y());
    jm.z.setConstant(local.positions[j].z());
  }
  return maps;
}

std::optional<Eigen::Vector2i> argmax_cell(const Plane& heat) {
  double best = 0.0;
  std::optional<Eigen::Vector2i> arg;
  for (int cy = 0; cy < heat.rows(); ++cy) {
    for (int cx = 0; cx < heat.cols(); ++cx) {
      // Strict comparison keeps the first (lowest row-major) maximum.
      if (heat(cy, cx) > best) {
        best = heat(cy, cx);
        arg = Eigen::Vector2i(cx, cy);
      }
    }
  }
  return arg;
}

Eigen::Vector2i cell_of(const GridSpec& grid, const Vec2& p, bool* clamped) {
  const int cx = static_cast<int>(std::floor(p.x() / grid.stride_px));
  const int cy = static_cast<int>(std::floor(p.y() / grid.stride_px));
  const int ccx = std::clamp(cx, 0, grid.width - 1);
  const int ccy = std::clamp(cy, 0, grid.height - 1);
  if (clamped) *clamped = (ccx != cx || ccy != cy);
  return {ccx, ccy};
}

namespace {

Vec3 read_cell(const JointMaps& jm, const Eigen::Vector2i& c) {
  return Vec3(jm.x(c.y(), c.x()), jm.y(c.y(), c.x()), jm.z(c.y(), c.x()));
}

void reroot(LocalPose3D& local, const std::vector<bool>& valid, int root) {
  if (!valid[root]) {
    local.positions[root].setZero();
    return;
  }
  const Vec3 origin = local.positions[root];
  for (std::size_t j = 0; j < local.positions.size(); ++j) {
    if (valid[j]) local.positions[j] -= origin;
  }
  local.positions[root].setZero();
}

}  // namespace

Vec2 subcell_offset(const Plane& heat, const Eigen::Vector2i& cell) {
  // Keeps the refined keypoint strictly inside the argmax cell.
  constexpr double kLimit = 0.5 - 1e-9;
  const int cx = cell.x(), cy = cell.y();
  const double c = heat(cy, cx);
  auto vertex = [&](double lo, double hi) {
    if (c <= 0.0 || lo <= 0.0 || hi <= 0.0) return 0.0;
    const double l0 = std::log(lo), l1 = std::log(c), l2 = std::log(hi);
    const double curvature = l0 - 2.0 * l1 + l2;
    if (curvature >= 0.0) return 0.0;
    return std::clamp(0.5 * (l0 - l2) / curvature, -kLimit, kLimit);
  };
  Vec2 off = Vec2::Zero();
  if (cx > 0 && cx + 1 < heat.cols()) off.x() = vertex(heat(cy, cx - 1), heat(cy, cx + 1));
  if (cy > 0 && cy + 1 < heat.rows()) off.y() = vertex(heat(cy - 1, cx), heat(cy + 1, cx));
  return off;
}

Decoded decode(const MapStack& maps, int root, const DecodeOptions& options) {
  maps.validate();
  const int n = maps.joint_count();
  require(root >= 0 && root < n, "root index out of range");
  Decoded out;
  out.keypoints.location.assign(n, Vec2::Zero());
  out.keypoints.confidence.assign(n, 0.0);
  out.keypoints.visible.assign(n, false);
  out.local.positions.assign(n, Vec3::Zero());
  for (int j = 0; j < n; ++j) {
    const auto& jm = maps.joints[j];
    const auto cell = argmax_cell(jm.heat);
    if (!cell) continue;
    out.keypoints.location[j] = maps.grid.cell_center(cell->x(), cell->y());
    if (options.subcell_refinement) {
      out.keypoints.location[j] += maps.grid.stride_px * subcell_offset(jm.heat, *cell);
    }
    out.keypoints.confidence[j] = jm.heat(cell->y(), cell->x());
    out.keypoints.visible[j] = true;
    out.local.positions[j] = read_cell(jm, *cell);
  }
  reroot(out.local, out.keypoints.visible, root);
  return out;
}

Lookup decode_at(const MapStack& maps, const Keypoints2D& keypoints_crop, int root) {
  maps.validate();
  const int n = maps.joint_count();
  require(keypoints_crop.size() == n, "keypoint count does not match map stack");
  require(root >= 0 && root < n, "root index out of range");
  Lookup out;
  out.local.positions.assign(n, Vec3::Zero());
  out.valid.assign(n, false);
  out.clamped.assign(n, false);
  for (int j = 0; j < n; ++j) {
    if (!keypoints_crop.visible[j]) continue;
    bool clamped = false;
    const auto cell = cell_of(maps.grid, keypoints_crop.location[j], &clamped);
    out.clamped[j] = clamped;
    out.valid[j] = true;
    out.local.positions[j] = read_cell(maps.joints[j], cell);
  }
  reroot(out.local, out.valid, root);
  return out;
}

LocmapLoss locmap_loss(const Plane& x_pred, const Plane& x_gt, const Plane& h_gt) {
  require(x_pred.rows() == x_gt.rows() && x_pred.cols() == x_gt.cols() &&
              x_pred.rows() == h_gt.rows() && x_pred.cols() == h_gt.cols(),
          "location-map loss operands differ in shape");
  const Plane weighted = h_gt * (x_pred - x_gt);
  LocmapLoss out;
  out.loss = std::sqrt(weighted.square().sum());
  if (out.loss > 0.0) {
    out.gradient = h_gt * weighted / out.loss;
  } else {
    out.gradient = Plane::Zero(x_pred.rows(), x_pred.cols());
  }
  return out;
}

Plane bone_length_map(const Plane& dx, const Plane& dy, const Plane& dz) {
  require(dx.rows() == dy.rows() && dx.cols() == dy.cols() && dx.rows() == dz.rows() &&
              dx.cols() == dz.cols(),
          "bone-length map operands differ in shape");
  return (dx * dx + dy * dy + dz * dz).sqrt();
}

namespace {

constexpr std::array<char, 4> kMagic = {'P', 'F', 'M', 'P'};

void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint16_t get_u16(const unsigned char* b) {
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_maps(std::ostream& out, const MapStack& maps) {
  maps.validate();
  require(maps.joint_count() <= 0xffff && maps.grid.width <= 0xffff && maps.grid.height <= 0xffff,
          "map stack too large for the tensor format");
  out.write(kMagic.data(), kMagic.size());
  put_u16(out, kMapFormatVersion);
  put_u16(out, static_cast<std::uint16_t>(maps.joint_count()));
  put_u16(out, static_cast<std::uint16_t>(maps.grid.width));
  put_u16(out, static_cast<std::uint16_t>(maps.grid.height));
  put_u32(out, static_cast<std::uint32_t>(std::llround(maps.grid.stride_px * 1000.0)));
  for (const auto& jm : maps.joints) {
    for (const Plane* p : {&jm.heat, &jm.x, &jm.y, &jm.z}) {
      for (Eigen::Index i = 0; i < p->size(); ++i) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p->data()[i])));
      }
    }
  }
  if (!out) throw DataError("failed writing map tensor");
}

std::optional<MapStack> read_maps(std::istream& in) {
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (in.gcount() == 0 && in.eof()) return std::nullopt;
  if (in.gcount() != sizeof(header)) throw DataError("truncated map tensor header");
  if (std::memcmp(header, kMagic.data(), kMagic.size()) != 0) {
    throw DataError("bad map tensor magic");
  }
  if (get_u16(header + 4) != kMapFormatVersion) throw DataError("unsupported map tensor version");
  const int joints = get_u16(header + 6);
  GridSpec grid;
  grid.width = get_u16(header + 8);
  grid.height = get_u16(header + 10);
  grid.stride_px = get_u32(header + 12) / 1000.0;
  if (grid.width == 0 || grid.height == 0 || grid.stride_px <= 0.0) {
    throw DataError("map tensor header has an empty grid");
  }

  MapStack maps = MapStack::zeros(grid, joints);
  std::vector<unsigned char> buf(static_cast<std::size_t>(grid.width) * grid.height * 4);
  for (auto& jm : maps.joints) {
    for (Plane* p : {&jm.heat, &jm.x, &jm.y, &jm.z}) {
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
      if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
        throw DataError("truncated map tensor payload");
      }
      for (Eigen::Index i = 0; i < p->size(); ++i) {
        p->data()[i] = std::bit_cast<float>(get_u32(buf.data() + 4 * i));
      }
    }
  }
  try {
    maps.validate();
  } catch (const ContractError& e) {
    throw DataError(std::string("corrupt map tensor: ") + e.what());
  }
  return maps;
}

}  // namespace posefit
