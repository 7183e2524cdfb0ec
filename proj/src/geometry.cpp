#include "softmesh/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

SOFTMESH_BEGIN_NAMESPACE

namespace {

constexpr Real kPi = Real(3.14159265358979323846);
constexpr Real kDegToRad = kPi / Real(180);

struct CameraBasis {
  Vec3 right, up, back;
  // Derivatives of the basis with respect to azimuth and elevation
  // (radians). Zero in the pole fallback.
  Vec3 d_right_da, d_up_da, d_back_da;
  Vec3 d_up_de, d_back_de;
};

CameraBasis make_basis(Real azimuth_rad, Real elevation_deg) {
  CameraBasis b;
  const Real e = elevation_deg * kDegToRad;
  if (std::abs(elevation_deg) >= Real(90)) {
    // Look-at with +Z as the up hint.
    b.back = Vec3(0, elevation_deg > 0 ? 1 : -1, 0);
    b.right = Vec3::UnitZ().cross(b.back).normalized();
    b.up = b.back.cross(b.right);
    b.d_right_da = b.d_up_da = b.d_back_da = Vec3::Zero();
    b.d_up_de = b.d_back_de = Vec3::Zero();
    return b;
  }
  const Real sa = std::sin(azimuth_rad), ca = std::cos(azimuth_rad);
  const Real se = std::sin(e), ce = std::cos(e);
  b.back = Vec3(ce * sa, se, ce * ca);
  b.right = Vec3(ca, 0, -sa);
  b.up = Vec3(-se * sa, ce, -se * ca);
  b.d_right_da = Vec3(-sa, 0, -ca);
  b.d_up_da = Vec3(-se * ca, 0, se * sa);
  b.d_back_da = Vec3(ce * ca, 0, -ce * sa);
  b.d_up_de = Vec3(-ce * sa, -se, -ce * ca);
  b.d_back_de = Vec3(-se * sa, ce, -se * ca);
  return b;
}

Real azimuth_rad_of(Real a_x, Real a_y) {
  return (a_x == 0 && a_y == 0) ? Real(0) : std::atan2(a_x, a_y);
}

Real signed_area2(Real ax, Real ay, Real bx, Real by, Real cx, Real cy) {
  return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

}  // namespace

std::size_t Mesh::num_edges() const {
  std::set<std::pair<std::int32_t, std::int32_t>> edges;
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k) {
      const auto a = f[static_cast<std::size_t>(k)];
      const auto b = f[static_cast<std::size_t>((k + 1) % 3)];
      edges.emplace(std::min(a, b), std::max(a, b));
    }
  }
  return edges.size();
}

void Mesh::validate() const {
  const auto v = static_cast<std::int32_t>(num_vertices());
  if (vertices.size() % 3 != 0) {
    throw std::invalid_argument("mesh: vertex array not a multiple of 3");
  }
  if (uv.size() != 2 * num_vertices()) {
    throw std::invalid_argument("mesh: uv count does not match vertices");
  }
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const auto& f = faces[i];
    for (auto idx : f) {
      if (idx < 0 || idx >= v) {
        throw std::invalid_argument("mesh: face " + std::to_string(i) +
                                    " index " + std::to_string(idx) +
                                    " out of range");
      }
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw std::invalid_argument("mesh: face " + std::to_string(i) +
                                  " is degenerate");
    }
  }
}

Mesh icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 3) {
    throw std::invalid_argument("icosphere: subdivisions must be in [0,3], got " +
                                std::to_string(subdivisions));
  }
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> pts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
      {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
      {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : pts) p.normalize();
  std::vector<Face> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<std::int32_t, std::int32_t>, std::int32_t> midpoint;
    auto mid = [&](std::int32_t a, std::int32_t b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      pts.push_back((pts[static_cast<std::size_t>(a)] +
                     pts[static_cast<std::size_t>(b)])
                        .normalized());
      const auto idx = static_cast<std::int32_t>(pts.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const auto ab = mid(f[0], f[1]);
      const auto bc = mid(f[1], f[2]);
      const auto ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  // Enforce outward winding.
  for (auto& f : faces) {
    const auto& a = pts[static_cast<std::size_t>(f[0])];
    const auto& b = pts[static_cast<std::size_t>(f[1])];
    const auto& c = pts[static_cast<std::size_t>(f[2])];
    if ((b - a).cross(c - a).dot(a + b + c) < 0) std::swap(f[1], f[2]);
  }

  Mesh mesh;
  mesh.faces = std::move(faces);
  const std::size_t v = pts.size();
  mesh.vertices.resize(3 * v);
  mesh.uv.resize(2 * v);
  for (std::size_t i = 0; i < v; ++i) {
    for (int k = 0; k < 3; ++k) {
      mesh.vertices[3 * i + static_cast<std::size_t>(k)] =
          static_cast<Real>(pts[i][k]);
    }
    const double u = 0.5 + std::atan2(pts[i].x(), pts[i].z()) / (2.0 * M_PI);
    const double vv = std::acos(std::clamp(pts[i].y(), -1.0, 1.0)) / M_PI;
    mesh.uv[2 * i] = static_cast<Real>(u);
    mesh.uv[2 * i + 1] = static_cast<Real>(vv);
  }

  // Seam vertices (x == 0, z < 0) take the u of the side most of their
  // neighbours lie on.
  for (std::size_t i = 0; i < v; ++i) {
    if (std::abs(pts[i].x()) > 1e-9 || pts[i].z() >= 0) continue;
    int high = 0, low = 0;
    for (const auto& f : mesh.faces) {
      if (f[0] != static_cast<std::int32_t>(i) &&
          f[1] != static_cast<std::int32_t>(i) &&
          f[2] != static_cast<std::int32_t>(i)) {
        continue;
      }
      for (auto j : f) {
        const auto& q = pts[static_cast<std::size_t>(j)];
        if (static_cast<std::size_t>(j) == i || std::abs(q.x()) <= 1e-9) {
          continue;
        }
        (q.x() > 0 ? high : low)++;
      }
    }
    mesh.uv[2 * i] = high >= low ? Real(1) : Real(0);
  }
  return mesh;
}

Real CameraRaw::azimuth_deg() const {
  Real deg = azimuth_rad_of(a_x, a_y) / kDegToRad;
  if (deg < 0) deg += Real(360);
  if (deg >= Real(360)) deg -= Real(360);
  return deg;
}

CameraMatrices camera_matrices(const CameraRaw& camera, int height, int width,
                               Real fov_deg, Real near_fraction) {
  if (!(camera.distance > 0)) {
    throw std::invalid_argument("camera_matrices: distance must be > 0");
  }
  if (!(fov_deg > 0 && fov_deg < 180)) {
    throw std::invalid_argument("camera_matrices: fov must be in (0,180)");
  }
  if (height <= 0 || width <= 0) {
    throw std::invalid_argument("camera_matrices: image size must be positive");
  }
  const CameraBasis basis = make_basis(azimuth_rad_of(camera.a_x, camera.a_y),
                                       camera.elevation_deg);
  CameraMatrices m;
  m.height = height;
  m.width = width;
  m.fov_deg = fov_deg;
  m.near = near_fraction * camera.distance;
  m.right = basis.right;
  m.up = basis.up;
  m.back = basis.back;
  m.eye = camera.distance * basis.back;

  m.view = Mat4::Identity();
  m.view.template block<1, 3>(0, 0) = basis.right.transpose();
  m.view.template block<1, 3>(1, 0) = basis.up.transpose();
  m.view.template block<1, 3>(2, 0) = basis.back.transpose();
  m.view(0, 3) = -basis.right.dot(m.eye);
  m.view(1, 3) = -basis.up.dot(m.eye);
  m.view(2, 3) = -basis.back.dot(m.eye);

  const Real f = Real(1) / std::tan(Real(0.5) * fov_deg * kDegToRad);
  const Real aspect = Real(width) / Real(height);
  const Real far = Real(100) * camera.distance;
  m.proj = Mat4::Zero();
  m.proj(0, 0) = f / aspect;
  m.proj(1, 1) = f;
  m.proj(2, 2) = (far + m.near) / (m.near - far);
  m.proj(2, 3) = Real(2) * far * m.near / (m.near - far);
  m.proj(3, 2) = -1;
  return m;
}

ProjectedPoint project_point(const CameraMatrices& cam, const Vec3& p) {
  const Vec3 rel = p - cam.eye;
  const Real depth = -cam.back.dot(rel);
  if (!(depth > cam.near)) {
    throw std::domain_error("project: point is not beyond the near plane");
  }
  const Real t = std::tan(Real(0.5) * cam.fov_deg * kDegToRad);
  const Real aspect = Real(cam.width) / Real(cam.height);
  const Real ndc_x = cam.right.dot(rel) / (depth * t * aspect);
  const Real ndc_y = cam.up.dot(rel) / (depth * t);
  return {(ndc_x + 1) * Real(0.5) * Real(cam.width),
          (1 - ndc_y) * Real(0.5) * Real(cam.height), depth};
}

Tensor project(const Tensor& vertices, const Tensor& camera, int height,
               int width, Real fov_deg, Real near_fraction) {
  if (vertices.rank() != 2 || vertices.shape()[1] != 3) {
    throw ShapeError("project: vertices must be [V,3], got " +
                     shape_string(vertices.shape()));
  }
  if (camera.numel() != 4) {
    throw ShapeError("project: camera must have 4 entries, got " +
                     shape_string(camera.shape()));
  }
  const auto nv = vertices.shape()[0];
  const auto cam = camera.data();
  const Real a_x = cam[0], a_y = cam[1], e_deg = cam[2], d = cam[3];
  if (!(d > 0)) throw std::domain_error("project: distance must be > 0");
  const Real azimuth = azimuth_rad_of(a_x, a_y);
  const CameraBasis basis = make_basis(azimuth, e_deg);
  const Real t = std::tan(Real(0.5) * fov_deg * kDegToRad);
  const Real aspect = Real(width) / Real(height);
  const Real sx = Real(0.5) * Real(width) / (t * aspect);
  const Real sy = Real(0.5) * Real(height) / t;
  const Real near = near_fraction * d;

  std::vector<Real> out(static_cast<std::size_t>(nv * 3));
  const Real* p = vertices.data().data();
  for (std::int64_t i = 0; i < nv; ++i) {
    const Vec3 v(p[3 * i], p[3 * i + 1], p[3 * i + 2]);
    const Real depth = d - basis.back.dot(v);
    if (!(depth > near)) {
      throw std::domain_error("project: vertex " + std::to_string(i) +
                              " is not beyond the near plane (depth " +
                              std::to_string(depth) + ")");
    }
    const Real xc = basis.right.dot(v);
    const Real yc = basis.up.dot(v);
    out[static_cast<std::size_t>(3 * i)] =
        Real(0.5) * Real(width) + sx * xc / depth;
    out[static_cast<std::size_t>(3 * i + 1)] =
        Real(0.5) * Real(height) - sy * yc / depth;
    out[static_cast<std::size_t>(3 * i + 2)] = depth;
  }

  return make_result(
      OpKind::custom, {nv, 3}, std::move(out), {vertices, camera},
      [=](Node& self) {
        Node& nvtx = *self.inputs[0];
        Node& ncam = *self.inputs[1];
        Real* gv = nvtx.requires_grad ? nvtx.grad_buffer().data() : nullptr;
        Real g_az = 0, g_el = 0, g_d = 0;
        const Real* pv = nvtx.data.data();
        for (std::int64_t i = 0; i < nv; ++i) {
          const Vec3 v(pv[3 * i], pv[3 * i + 1], pv[3 * i + 2]);
          const Real gx = self.grad[static_cast<std::size_t>(3 * i)];
          const Real gy = self.grad[static_cast<std::size_t>(3 * i + 1)];
          const Real gz = self.grad[static_cast<std::size_t>(3 * i + 2)];
          const Real depth = self.data[static_cast<std::size_t>(3 * i + 2)];
          const Real xc = basis.right.dot(v);
          const Real yc = basis.up.dot(v);
          // x = cx + sx*xc/depth, y = cy - sy*yc/depth, z = depth.
          const Real g_xc = gx * sx / depth;
          const Real g_yc = -gy * sy / depth;
          const Real g_depth =
              gz - gx * sx * xc / (depth * depth) + gy * sy * yc / (depth * depth);
          if (gv) {
            const Vec3 gp =
                g_xc * basis.right + g_yc * basis.up - g_depth * basis.back;
            for (int k = 0; k < 3; ++k) gv[3 * i + k] += gp[k];
          }
          g_az += g_xc * basis.d_right_da.dot(v) +
                  g_yc * basis.d_up_da.dot(v) -
                  g_depth * basis.d_back_da.dot(v);
          g_el += g_yc * basis.d_up_de.dot(v) -
                  g_depth * basis.d_back_de.dot(v);
          g_d += g_depth;
        }
        if (ncam.requires_grad) {
          auto& gc = ncam.grad_buffer();
          const Real r2 = a_x * a_x + a_y * a_y;
          if (r2 > 0) {
            gc[0] += g_az * a_y / r2;
            gc[1] += -g_az * a_x / r2;
          }
          gc[2] += g_el * kDegToRad;
          gc[3] += g_d;
        }
      },
      "project");
}

std::vector<bool> visibility(const Mesh& mesh, const CameraMatrices& cam) {
  const std::size_t nv = mesh.num_vertices();
  std::vector<ProjectedPoint> proj(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    proj[i] = project_point(cam, mesh.vertex(i));
  }
  std::vector<bool> front(mesh.num_faces(), false);
  std::vector<bool> touches_front(nv, false);
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const auto& face = mesh.faces[f];
    const Vec3 a = mesh.vertex(static_cast<std::size_t>(face[0]));
    const Vec3 b = mesh.vertex(static_cast<std::size_t>(face[1]));
    const Vec3 c = mesh.vertex(static_cast<std::size_t>(face[2]));
    front[f] = (b - a).cross(c - a).dot(cam.eye - a) > 0;
    if (front[f]) {
      for (auto idx : face) touches_front[static_cast<std::size_t>(idx)] = true;
    }
  }
  const Real tol = Real(1e-3) * cam.eye.norm();
  std::vector<bool> visible(nv, false);
  for (std::size_t k = 0; k < nv; ++k) {
    if (!touches_front[k]) continue;
    const Real px = proj[k].x, py = proj[k].y;
    // Nearest front-facing surface through the vertex's image position,
    // with perspective-correct depth.
    Real nearest = std::numeric_limits<Real>::infinity();
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
      if (!front[f]) continue;
      const auto& face = mesh.faces[f];
      const auto& p0 = proj[static_cast<std::size_t>(face[0])];
      const auto& p1 = proj[static_cast<std::size_t>(face[1])];
      const auto& p2 = proj[static_cast<std::size_t>(face[2])];
      const Real area = signed_area2(p0.x, p0.y, p1.x, p1.y, p2.x, p2.y);
      if (std::abs(area) < Real(1e-12)) continue;
      const Real w0 = signed_area2(p1.x, p1.y, p2.x, p2.y, px, py) / area;
      const Real w1 = signed_area2(p2.x, p2.y, p0.x, p0.y, px, py) / area;
      const Real w2 = Real(1) - w0 - w1;
      const Real slack = Real(-1e-6);
      if (w0 < slack || w1 < slack || w2 < slack) continue;
      const Real inv = w0 / p0.depth + w1 / p1.depth + w2 / p2.depth;
      nearest = std::min(nearest, Real(1) / inv);
    }
    visible[k] = proj[k].depth <= nearest + tol;
  }
  return visible;
}

std::vector<Vec3> face_normals(const Mesh& mesh) {
  std::vector<Vec3> normals;
  normals.reserve(mesh.num_faces());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const auto& face = mesh.faces[f];
    const Vec3 a = mesh.vertex(static_cast<std::size_t>(face[0]));
    const Vec3 b = mesh.vertex(static_cast<std::size_t>(face[1]));
    const Vec3 c = mesh.vertex(static_cast<std::size_t>(face[2]));
    const Vec3 n = (b - a).cross(c - a);
    const Real len = n.norm();
    if (!(len > Real(0))) {
      throw std::domain_error("face_normals: face " + std::to_string(f) +
                              " has zero area");
    }
    normals.push_back(n / len);
  }
  return normals;
}

Tensor face_normals(const Tensor& vertices, std::span<const Face> faces) {
  if (vertices.rank() != 2 || vertices.shape()[1] != 3) {
    throw ShapeError("face_normals: vertices must be [V,3], got " +
                     shape_string(vertices.shape()));
  }
  const auto nv = vertices.shape()[0];
  const auto nf = static_cast<std::int64_t>(faces.size());
  const Real* p = vertices.data().data();
  auto vtx = [p](std::int32_t i) {
    return Vec3(p[3 * i], p[3 * i + 1], p[3 * i + 2]);
  };
  std::vector<Real> out(static_cast<std::size_t>(nf * 3));
  std::vector<Real> lengths(static_cast<std::size_t>(nf));
  for (std::int64_t f = 0; f < nf; ++f) {
    const auto& face = faces[static_cast<std::size_t>(f)];
    for (auto idx : face) {
      if (idx < 0 || idx >= nv) {
        throw ShapeError("face_normals: face " + std::to_string(f) +
                         " index out of range");
      }
    }
    const Vec3 a = vtx(face[0]), b = vtx(face[1]), c = vtx(face[2]);
    const Vec3 n = (b - a).cross(c - a);
    const Real len = n.norm();
    if (!(len > Real(0))) {
      throw std::domain_error("face_normals: face " + std::to_string(f) +
                              " has zero area");
    }
    lengths[static_cast<std::size_t>(f)] = len;
    for (int k = 0; k < 3; ++k) out[static_cast<std::size_t>(3 * f + k)] = n[k] / len;
  }
  std::vector<Face> face_copy(faces.begin(), faces.end());
  return make_result(
      OpKind::custom, {nf, 3}, std::move(out), {vertices},
      [face_copy = std::move(face_copy), lengths = std::move(lengths)](
          Node& self) {
        Node& in = *self.inputs[0];
        auto& g = in.grad_buffer();
        const Real* pv = in.data.data();
        for (std::size_t f = 0; f < face_copy.size(); ++f) {
          const auto& face = face_copy[f];
          const Vec3 n(self.data[3 * f], self.data[3 * f + 1],
                       self.data[3 * f + 2]);
          const Vec3 gn(self.grad[3 * f], self.grad[3 * f + 1],
                        self.grad[3 * f + 2]);
          // n = c / |c|  =>  dL/dc = (gn - n (n . gn)) / |c|
          const Vec3 gc = (gn - n * n.dot(gn)) / lengths[f];
          auto vtx = [pv](std::int32_t i) {
            return Vec3(pv[3 * i], pv[3 * i + 1], pv[3 * i + 2]);
          };
          const Vec3 a = vtx(face[0]), b = vtx(face[1]), c = vtx(face[2]);
          const Vec3 e1 = b - a, e2 = c - a;
          const Vec3 g1 = e2.cross(gc);
          const Vec3 g2 = gc.cross(e1);
          for (int k = 0; k < 3; ++k) {
            g[3 * static_cast<std::size_t>(face[1]) + k] += g1[k];
            g[3 * static_cast<std::size_t>(face[2]) + k] += g2[k];
            g[3 * static_cast<std::size_t>(face[0]) + k] -= g1[k] + g2[k];
          }
        }
      },
      "face_normals");
}

void write_obj(std::ostream& out, const Mesh& mesh) {
  out << std::setprecision(std::numeric_limits<Real>::max_digits10);
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    out << "v " << mesh.vertices[3 * i] << ' ' << mesh.vertices[3 * i + 1]
        << ' ' << mesh.vertices[3 * i + 2] << '\n';
  }
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    out << "vt " << mesh.uv[2 * i] << ' ' << mesh.uv[2 * i + 1] << '\n';
  }
  for (const auto& f : mesh.faces) {
    out << 'f';
    for (auto idx : f) out << ' ' << idx + 1 << '/' << idx + 1;
    out << '\n';
  }
}

void write_obj(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_obj(out, mesh);
}

Mesh read_obj(std::istream& in) {
  Mesh mesh;
  std::vector<Real> texcoords;
  std::vector<std::array<std::int32_t, 3>> face_uv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Real x, y, z;
      if (!(ls >> x >> y >> z)) {
        throw std::runtime_error("obj line " + std::to_string(line_no) +
                                 ": bad vertex");
      }
      mesh.vertices.insert(mesh.vertices.end(), {x, y, z});
    } else if (tag == "vt") {
      Real u, v;
      if (!(ls >> u >> v)) {
        throw std::runtime_error("obj line " + std::to_string(line_no) +
                                 ": bad texture coordinate");
      }
      texcoords.insert(texcoords.end(), {u, v});
    } else if (tag == "f") {
      Face f{};
      std::array<std::int32_t, 3> fuv{-1, -1, -1};
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        if (!(ls >> tok)) {
          throw std::runtime_error("obj line " + std::to_string(line_no) +
                                   ": face needs 3 vertices");
        }
        const auto slash = tok.find('/');
        f[static_cast<std::size_t>(k)] = std::stoi(tok.substr(0, slash)) - 1;
        if (slash != std::string::npos && slash + 1 < tok.size() &&
            tok[slash + 1] != '/') {
          fuv[static_cast<std::size_t>(k)] =
              std::stoi(tok.substr(slash + 1)) - 1;
        }
      }
      mesh.faces.push_back(f);
      face_uv.push_back(fuv);
    }
  }
  mesh.uv.assign(2 * mesh.num_vertices(), Real(0));
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const auto t = face_uv[i][static_cast<std::size_t>(k)];
      const auto v = mesh.faces[i][static_cast<std::size_t>(k)];
      if (t < 0) continue;
      if (2 * static_cast<std::size_t>(t) + 1 >= texcoords.size() || v < 0 ||
          static_cast<std::size_t>(v) >= mesh.num_vertices()) {
        throw std::runtime_error("obj: face " + std::to_string(i) +
                                 " references a missing record");
      }
      mesh.uv[2 * static_cast<std::size_t>(v)] =
          texcoords[2 * static_cast<std::size_t>(t)];
      mesh.uv[2 * static_cast<std::size_t>(v) + 1] =
          texcoords[2 * static_cast<std::size_t>(t) + 1];
    }
  }
  mesh.validate();
  return mesh;
}

Mesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_obj(in);
}

SOFTMESH_END_NAMESPACE
