#include "softmesh/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

SOFTMESH_BEGIN_NAMESPACE

namespace {

constexpr Real kC1 = Real(0.488603);
constexpr Real kC2 = Real(1.092548);
constexpr Real kC3 = Real(0.315392);
constexpr Real kC4 = Real(0.546274);

// Coverage below sigmoid(-kCutoff) is treated as exactly zero.
constexpr Real kCutoff = Real(25);

Real softplus(Real x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Real sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

// d(basis)/d(normal) as rows of a 9x3 Jacobian.
std::array<Vec3, kShCoefficients> sh_jacobian(const Vec3& n) {
  const Real x = n.x(), y = n.y(), z = n.z();
  return {Vec3(0, 0, 0),
          Vec3(0, kC1, 0),
          Vec3(0, 0, kC1),
          Vec3(kC1, 0, 0),
          Vec3(kC2 * y, kC2 * x, 0),
          Vec3(0, kC2 * z, kC2 * y),
          Vec3(0, 0, kC3 * 6 * z),
          Vec3(kC2 * z, 0, kC2 * x),
          Vec3(kC4 * 2 * x, -kC4 * 2 * y, 0)};
}

struct TexTap {
  std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  Real fx = 0, fy = 0;
  Real du = 0, dv = 0;  // d(texel coord)/d(u or v); 0 when clamped
};

TexTap texture_tap(Real u, Real v, std::int64_t th, std::int64_t tw) {
  TexTap t;
  Real px = u * Real(tw - 1);
  Real py = v * Real(th - 1);
  t.du = Real(tw - 1);
  t.dv = Real(th - 1);
  if (px <= 0) {
    px = 0;
    t.du = 0;
  } else if (px >= Real(tw - 1)) {
    px = Real(tw - 1);
    t.du = 0;
  }
  if (py <= 0) {
    py = 0;
    t.dv = 0;
  } else if (py >= Real(th - 1)) {
    py = Real(th - 1);
    t.dv = 0;
  }
  t.x0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(px)),
                                std::max<std::int64_t>(tw - 2, 0));
  t.y0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(py)),
                                std::max<std::int64_t>(th - 2, 0));
  t.x1 = std::min<std::int64_t>(t.x0 + 1, tw - 1);
  t.y1 = std::min<std::int64_t>(t.y0 + 1, th - 1);
  t.fx = px - Real(t.x0);
  t.fy = py - Real(t.y0);
  return t;
}

struct FaceSetup {
  std::array<std::int32_t, 3> idx{};
  Real x[3]{}, y[3]{}, z[3]{};
  Real area = 0;  // twice the signed area in NDC
  std::int64_t row0 = 0, row1 = -1, col0 = 0, col1 = -1;
};

Real edge_fn(Real px, Real py, Real qx, Real qy, Real rx, Real ry) {
  return (qx - px) * (ry - py) - (qy - py) * (rx - px);
}

// Per-pixel state of one face.
struct Fragment {
  std::int32_t face = 0;
  Real w[3]{};   // raw barycentrics
  Real wc[3]{};  // clipped and renormalized
  Real wsum = 0;
  bool inside = false;
  int edge = 0;  // nearest edge (v[edge], v[edge+1])
  Real t = 0;
  Real qx = 0, qy = 0;
  Real dist2 = 0;
  Real D = 0;
  Real s = 0;    // coverage
  Real ls = 0;   // log coverage
  Real l1s = 0;  // log(1 - coverage)
  Real z = 0;
  Real u = 0, v = 0;
  TexTap tap;
  Real tex[3]{};
  Real c[3]{};
  bool saturated[3]{};
  Real lw = 0;
};

class Rasterizer {
 public:
  Rasterizer(std::span<const Real> screen, std::span<const Face> faces,
             const RenderConfig& cfg)
      : cfg_(cfg), h_(cfg.height), w_(cfg.width) {
    if (h_ <= 0 || w_ <= 0) {
      throw std::invalid_argument("rasterize: image size must be positive");
    }
    if (!(cfg.sigma > 0) || !(cfg.gamma > 0)) {
      throw std::invalid_argument("rasterize: sigma and gamma must be > 0");
    }
    const Real margin = std::sqrt(kCutoff * cfg.sigma);
    setups_.reserve(faces.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
      FaceSetup fs;
      fs.idx = faces[f];
      for (int k = 0; k < 3; ++k) {
        const auto v = static_cast<std::size_t>(fs.idx[static_cast<std::size_t>(k)]);
        fs.x[k] = Real(2) * screen[3 * v] / Real(w_) - Real(1);
        fs.y[k] = Real(1) - Real(2) * screen[3 * v + 1] / Real(h_);
        fs.z[k] = screen[3 * v + 2];
      }
      fs.area = edge_fn(fs.x[0], fs.y[0], fs.x[1], fs.y[1], fs.x[2], fs.y[2]);
      if (std::abs(fs.area) > Real(1e-12)) {
        const Real xmin = std::min({fs.x[0], fs.x[1], fs.x[2]}) - margin;
        const Real xmax = std::max({fs.x[0], fs.x[1], fs.x[2]}) + margin;
        const Real ymin = std::min({fs.y[0], fs.y[1], fs.y[2]}) - margin;
        const Real ymax = std::max({fs.y[0], fs.y[1], fs.y[2]}) + margin;
        // Pixel centre (i, j) sits at x = 2(j+.5)/W - 1, y = 1 - 2(i+.5)/H.
        fs.col0 = std::max<std::int64_t>(
            0, static_cast<std::int64_t>(
                   std::ceil((xmin + 1) * Real(w_) / 2 - Real(0.5))));
        fs.col1 = std::min<std::int64_t>(
            w_ - 1, static_cast<std::int64_t>(
                        std::floor((xmax + 1) * Real(w_) / 2 - Real(0.5))));
        fs.row0 = std::max<std::int64_t>(
            0, static_cast<std::int64_t>(
                   std::ceil((1 - ymax) * Real(h_) / 2 - Real(0.5))));
        fs.row1 = std::min<std::int64_t>(
            h_ - 1, static_cast<std::int64_t>(
                        std::floor((1 - ymin) * Real(h_) / 2 - Real(0.5))));
      }
      setups_.push_back(fs);
    }
    // Candidate lists per pixel in ascending face order (CSR).
    offsets_.assign(static_cast<std::size_t>(h_ * w_ + 1), 0);
    for (const auto& fs : setups_) {
      for (auto r = fs.row0; r <= fs.row1; ++r) {
        for (auto c = fs.col0; c <= fs.col1; ++c) {
          ++offsets_[static_cast<std::size_t>(r * w_ + c + 1)];
        }
      }
    }
    for (std::size_t i = 1; i < offsets_.size(); ++i) {
      offsets_[i] += offsets_[i - 1];
    }
    candidates_.resize(static_cast<std::size_t>(offsets_.back()));
    std::vector<std::int64_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t f = 0; f < setups_.size(); ++f) {
      const auto& fs = setups_[f];
      for (auto r = fs.row0; r <= fs.row1; ++r) {
        for (auto c = fs.col0; c <= fs.col1; ++c) {
          candidates_[static_cast<std::size_t>(
              fill[static_cast<std::size_t>(r * w_ + c)]++)] =
              static_cast<std::int32_t>(f);
        }
      }
    }
  }

  std::int64_t height() const { return h_; }
  std::int64_t width() const { return w_; }
  Real pixel_x(std::int64_t col) const {
    return Real(2) * (Real(col) + Real(0.5)) / Real(w_) - Real(1);
  }
  Real pixel_y(std::int64_t row) const {
    return Real(1) - Real(2) * (Real(row) + Real(0.5)) / Real(h_);
  }
  std::span<const std::int32_t> candidates(std::int64_t pixel) const {
    const auto b = offsets_[static_cast<std::size_t>(pixel)];
    const auto e = offsets_[static_cast<std::size_t>(pixel + 1)];
    return {candidates_.data() + b, static_cast<std::size_t>(e - b)};
  }
  const FaceSetup& setup(std::int32_t f) const {
    return setups_[static_cast<std::size_t>(f)];
  }

  // Coverage terms only.
  void coverage(Fragment& fr, Real px, Real py) const {
    const FaceSetup& fs = setup(fr.face);
    fr.w[0] = edge_fn(fs.x[1], fs.y[1], fs.x[2], fs.y[2], px, py) / fs.area;
    fr.w[1] = edge_fn(fs.x[2], fs.y[2], fs.x[0], fs.y[0], px, py) / fs.area;
    fr.w[2] = edge_fn(fs.x[0], fs.y[0], fs.x[1], fs.y[1], px, py) / fs.area;
    fr.inside = fr.w[0] >= 0 && fr.w[1] >= 0 && fr.w[2] >= 0;
    fr.dist2 = std::numeric_limits<Real>::infinity();
    for (int e = 0; e < 3; ++e) {
      const int e1 = (e + 1) % 3;
      const Real ax = fs.x[e], ay = fs.y[e];
      const Real dx = fs.x[e1] - ax, dy = fs.y[e1] - ay;
      const Real len2 = dx * dx + dy * dy;
      Real t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : Real(0);
      t = std::clamp(t, Real(0), Real(1));
      const Real qx = ax + t * dx, qy = ay + t * dy;
      const Real d2 = (px - qx) * (px - qx) + (py - qy) * (py - qy);
      if (d2 < fr.dist2) {
        fr.dist2 = d2;
        fr.edge = e;
        fr.t = t;
        fr.qx = qx;
        fr.qy = qy;
      }
    }
    fr.D = fr.inside ? -fr.dist2 : fr.dist2;
    const Real arg = fr.D / cfg_.sigma;
    fr.s = sigmoid(-arg);
    fr.ls = -softplus(arg);
    fr.l1s = -softplus(-arg);
  }

  void color(Fragment& fr, std::span<const Real> shading,
             std::span<const Real> texture, std::span<const Real> uv,
             std::int64_t th, std::int64_t tw) const {
    const FaceSetup& fs = setup(fr.face);
    fr.wsum = 0;
    for (int k = 0; k < 3; ++k) {
      fr.wc[k] = std::max(fr.w[k], Real(0));
      fr.wsum += fr.wc[k];
    }
    for (int k = 0; k < 3; ++k) fr.wc[k] /= fr.wsum;
    fr.z = fr.u = fr.v = 0;
    for (int k = 0; k < 3; ++k) {
      const auto vi = static_cast<std::size_t>(fs.idx[static_cast<std::size_t>(k)]);
      fr.z += fr.wc[k] * fs.z[k];
      fr.u += fr.wc[k] * uv[2 * vi];
      fr.v += fr.wc[k] * uv[2 * vi + 1];
    }
    fr.tap = texture_tap(fr.u, fr.v, th, tw);
    const TexTap& t = fr.tap;
    const Real shade = shading[static_cast<std::size_t>(fr.face)];
    for (int ch = 0; ch < 3; ++ch) {
      const Real v00 = texture[static_cast<std::size_t>((t.y0 * tw + t.x0) * 3 + ch)];
      const Real v01 = texture[static_cast<std::size_t>((t.y0 * tw + t.x1) * 3 + ch)];
      const Real v10 = texture[static_cast<std::size_t>((t.y1 * tw + t.x0) * 3 + ch)];
      const Real v11 = texture[static_cast<std::size_t>((t.y1 * tw + t.x1) * 3 + ch)];
      const Real top = v00 + t.fx * (v01 - v00);
      const Real bot = v10 + t.fx * (v11 - v10);
      fr.tex[ch] = top + t.fy * (bot - top);
      const Real c = fr.tex[ch] * shade;
      fr.saturated[ch] = c > Real(1);
      fr.c[ch] = fr.saturated[ch] ? Real(1) : c;
    }
    fr.lw = fr.ls - fr.z / cfg_.gamma;
  }

  // Accumulates d(loss)/d(D) and d(loss)/d(raw barycentrics) into screen
  // gradients for the face's three vertices.
  void scatter_geometry(const Fragment& fr, Real g_D, const Real g_w[3],
                        Real px, Real py, Real* g_screen) const {
    const FaceSetup& fs = setup(fr.face);
    Real gx[3] = {0, 0, 0}, gy[3] = {0, 0, 0};
    if (g_D != 0) {
      // D = sign * |p - q|^2, q on edge (e, e+1) at parameter t.
      const Real sign = fr.inside ? Real(-1) : Real(1);
      const Real rx = px - fr.qx, ry = py - fr.qy;
      const int e = fr.edge, e1 = (fr.edge + 1) % 3;
      gx[e] += g_D * sign * Real(-2) * (1 - fr.t) * rx;
      gy[e] += g_D * sign * Real(-2) * (1 - fr.t) * ry;
      gx[e1] += g_D * sign * Real(-2) * fr.t * rx;
      gy[e1] += g_D * sign * Real(-2) * fr.t * ry;
    }
    if (g_w) {
      // w_k = E_k / A with E_0 = E(v1,v2,p), E_1 = E(v2,v0,p), E_2 =
      // E(v0,v1,p), A = E(v0,v1,v2).
      Real g_area = 0;
      for (int k = 0; k < 3; ++k) g_area -= g_w[k] * fr.w[k];
      g_area /= fs.area;
      auto add_edge = [&](int P, int Q, Real g, bool with_r, int R) {
        const Real Px = fs.x[P], Py = fs.y[P], Qx = fs.x[Q], Qy = fs.y[Q];
        const Real Rx = with_r ? fs.x[R] : px;
        const Real Ry = with_r ? fs.y[R] : py;
        gx[P] += g * (Qy - Ry);
        gy[P] += g * (Rx - Qx);
        gx[Q] += g * (Ry - Py);
        gy[Q] += g * (Px - Rx);
        if (with_r) {
          gx[R] += g * (Py - Qy);
          gy[R] += g * (Qx - Px);
        }
      };
      add_edge(1, 2, g_w[0] / fs.area, false, 0);
      add_edge(2, 0, g_w[1] / fs.area, false, 0);
      add_edge(0, 1, g_w[2] / fs.area, false, 0);
      add_edge(0, 1, g_area, true, 2);
    }
    for (int k = 0; k < 3; ++k) {
      const auto v = static_cast<std::size_t>(fs.idx[static_cast<std::size_t>(k)]);
      // NDC -> pixels: x = 2 px / W - 1, y = 1 - 2 py / H.
      g_screen[3 * v] += gx[k] * Real(2) / Real(w_);
      g_screen[3 * v + 1] += gy[k] * Real(-2) / Real(h_);
    }
  }

  const RenderConfig& config() const { return cfg_; }

 private:
  RenderConfig cfg_;
  std::int64_t h_, w_;
  std::vector<FaceSetup> setups_;
  std::vector<std::int64_t> offsets_;
  std::vector<std::int32_t> candidates_;
};

void check_screen(const Tensor& screen, std::span<const Face> faces) {
  if (screen.rank() != 2 || screen.shape()[1] != 3) {
    throw ShapeError("rasterize: screen must be [V,3], got " +
                     shape_string(screen.shape()));
  }
  const auto nv = screen.shape()[0];
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (auto idx : faces[f]) {
      if (idx < 0 || idx >= nv) {
        throw ShapeError("rasterize: face " + std::to_string(f) +
                         " index out of range");
      }
    }
  }
}

}  // namespace

std::array<Real, kShCoefficients> sh_basis(const Vec3& n) {
  const Real x = n.x(), y = n.y(), z = n.z();
  return {kShY00,
          kC1 * y,
          kC1 * z,
          kC1 * x,
          kC2 * x * y,
          kC2 * y * z,
          kC3 * (3 * z * z - 1),
          kC2 * x * z,
          kC4 * (x * x - y * y)};
}

Real sh_irradiance(const Vec3& normal, std::span<const Real> light) {
  if (light.size() != kShCoefficients) {
    throw ShapeError("shade_sh: light must have 9 coefficients");
  }
  const auto basis = sh_basis(normal);
  Real e = 0;
  for (int k = 0; k < kShCoefficients; ++k) {
    e += light[static_cast<std::size_t>(k)] * basis[static_cast<std::size_t>(k)];
  }
  return e;
}

Real shade_sh(const Vec3& normal, std::span<const Real> light) {
  return std::max(Real(0), sh_irradiance(normal, light));
}

Tensor shade_faces(const Tensor& normals, const Tensor& light) {
  if (normals.rank() != 2 || normals.shape()[1] != 3) {
    throw ShapeError("shade_faces: normals must be [F,3], got " +
                     shape_string(normals.shape()));
  }
  if (light.numel() != kShCoefficients) {
    throw ShapeError("shade_faces: light must have 9 entries, got " +
                     shape_string(light.shape()));
  }
  const auto nf = normals.shape()[0];
  std::vector<Real> out(static_cast<std::size_t>(nf));
  const Real* n = normals.data().data();
  for (std::int64_t f = 0; f < nf; ++f) {
    out[static_cast<std::size_t>(f)] =
        shade_sh(Vec3(n[3 * f], n[3 * f + 1], n[3 * f + 2]), light.data());
  }
  return make_result(
      OpKind::custom, {nf}, std::move(out), {normals, light},
      [nf](Node& self) {
        Node& nn = *self.inputs[0];
        Node& nl = *self.inputs[1];
        Real* gn = nn.requires_grad ? nn.grad_buffer().data() : nullptr;
        Real* gl = nl.requires_grad ? nl.grad_buffer().data() : nullptr;
        const Real* n = nn.data.data();
        for (std::int64_t f = 0; f < nf; ++f) {
          const Real g = self.grad[static_cast<std::size_t>(f)];
          if (g == 0) continue;
          const Vec3 normal(n[3 * f], n[3 * f + 1], n[3 * f + 2]);
          // Zero gradient on the clamped side, including the kink.
          if (!(sh_irradiance(normal, nl.data) > 0)) continue;
          const auto basis = sh_basis(normal);
          if (gl) {
            for (int k = 0; k < kShCoefficients; ++k) {
              gl[k] += g * basis[static_cast<std::size_t>(k)];
            }
          }
          if (gn) {
            const auto jac = sh_jacobian(normal);
            Vec3 acc = Vec3::Zero();
            for (int k = 0; k < kShCoefficients; ++k) {
              acc += nl.data[static_cast<std::size_t>(k)] *
                     jac[static_cast<std::size_t>(k)];
            }
            for (int k = 0; k < 3; ++k) gn[3 * f + k] += g * acc[k];
          }
        }
      },
      "shade_faces");
}

Tensor soft_silhouette(const Tensor& screen, std::span<const Face> faces,
                       const RenderConfig& cfg) {
  check_screen(screen, faces);
  auto rast = std::make_shared<Rasterizer>(screen.data(), faces, cfg);
  const auto h = rast->height(), w = rast->width();
  std::vector<Real> out(static_cast<std::size_t>(h * w));
  for (std::int64_t r = 0; r < h; ++r) {
    for (std::int64_t c = 0; c < w; ++c) {
      Real log_empty = 0;
      for (auto f : rast->candidates(r * w + c)) {
        Fragment fr;
        fr.face = f;
        rast->coverage(fr, rast->pixel_x(c), rast->pixel_y(r));
        log_empty += fr.l1s;
      }
      out[static_cast<std::size_t>(r * w + c)] = Real(1) - std::exp(log_empty);
    }
  }
  return make_result(
      OpKind::custom, {h, w}, std::move(out), {screen},
      [rast, h, w](Node& self) {
        auto& gs = self.inputs[0]->grad_buffer();
        for (std::int64_t r = 0; r < h; ++r) {
          for (std::int64_t c = 0; c < w; ++c) {
            const Real g = self.grad[static_cast<std::size_t>(r * w + c)];
            if (g == 0) continue;
            const Real m = self.data[static_cast<std::size_t>(r * w + c)];
            const Real px = rast->pixel_x(c), py = rast->pixel_y(r);
            for (auto f : rast->candidates(r * w + c)) {
              Fragment fr;
              fr.face = f;
              rast->coverage(fr, px, py);
              const Real g_D = -g * (1 - m) * fr.s / rast->config().sigma;
              rast->scatter_geometry(fr, g_D, nullptr, px, py, gs.data());
            }
          }
        }
      },
      "soft_silhouette");
}

Tensor soft_rasterize(const Tensor& screen, const Tensor& face_shading,
                      const Tensor& texture, const Mesh& topology,
                      const RenderConfig& cfg) {
  check_screen(screen, topology.faces);
  if (face_shading.numel() != static_cast<std::int64_t>(topology.num_faces())) {
    throw ShapeError("rasterize: shading must have one entry per face");
  }
  if (texture.rank() != 3 || texture.shape()[2] != 3) {
    throw ShapeError("rasterize: texture must be [Ht,Wt,3], got " +
                     shape_string(texture.shape()));
  }
  if (topology.uv.size() != 2 * static_cast<std::size_t>(screen.shape()[0])) {
    throw ShapeError("rasterize: uv count does not match vertices");
  }
  auto rast = std::make_shared<Rasterizer>(screen.data(), topology.faces, cfg);
  auto uv = std::make_shared<std::vector<Real>>(topology.uv);
  const auto h = rast->height(), w = rast->width();
  const auto th = texture.shape()[0], tw = texture.shape()[1];
  const auto bg = cfg.background;

  std::vector<Real> out(static_cast<std::size_t>(h * w * 4));
  std::vector<Fragment> frags;
  for (std::int64_t r = 0; r < h; ++r) {
    for (std::int64_t c = 0; c < w; ++c) {
      const auto pixel = r * w + c;
      const Real px = rast->pixel_x(c), py = rast->pixel_y(r);
      frags.clear();
      Real log_empty = 0;
      Real lw_max = -std::numeric_limits<Real>::infinity();
      for (auto f : rast->candidates(pixel)) {
        Fragment fr;
        fr.face = f;
        rast->coverage(fr, px, py);
        rast->color(fr, face_shading.data(), texture.data(), *uv, th, tw);
        log_empty += fr.l1s;
        lw_max = std::max(lw_max, fr.lw);
        frags.push_back(fr);
      }
      Real* o = out.data() + pixel * 4;
      const Real m = Real(1) - std::exp(log_empty);
      Real color[3] = {0, 0, 0};
      if (!frags.empty()) {
        Real denom = 0;
        for (const auto& fr : frags) {
          const Real p = std::exp(fr.lw - lw_max);
          denom += p;
          for (int ch = 0; ch < 3; ++ch) color[ch] += p * fr.c[ch];
        }
        for (auto& v : color) v /= denom;
      }
      for (int ch = 0; ch < 3; ++ch) {
        o[ch] = m * color[ch] + (1 - m) * bg[static_cast<std::size_t>(ch)];
      }
      o[3] = m;
    }
  }

  return make_result(
      OpKind::custom, {h, w, 4}, std::move(out),
      {screen, face_shading, texture},
      [rast, uv, h, w, th, tw, bg](Node& self) {
        Node& ns = *self.inputs[0];
        Node& nsh = *self.inputs[1];
        Node& ntex = *self.inputs[2];
        Real* g_screen = ns.requires_grad ? ns.grad_buffer().data() : nullptr;
        Real* g_shade = nsh.requires_grad ? nsh.grad_buffer().data() : nullptr;
        Real* g_tex = ntex.requires_grad ? ntex.grad_buffer().data() : nullptr;
        const Real sigma = rast->config().sigma;
        const Real gamma = rast->config().gamma;
        std::vector<Fragment> frags;
        std::vector<Real> prob;
        for (std::int64_t r = 0; r < h; ++r) {
          for (std::int64_t c = 0; c < w; ++c) {
            const auto pixel = r * w + c;
            const Real* g = self.grad.data() + pixel * 4;
            if (g[0] == 0 && g[1] == 0 && g[2] == 0 && g[3] == 0) continue;
            const auto cands = rast->candidates(pixel);
            if (cands.empty()) continue;
            const Real px = rast->pixel_x(c), py = rast->pixel_y(r);
            frags.clear();
            Real lw_max = -std::numeric_limits<Real>::infinity();
            for (auto f : cands) {
              Fragment fr;
              fr.face = f;
              rast->coverage(fr, px, py);
              rast->color(fr, nsh.data, ntex.data, *uv, th, tw);
              lw_max = std::max(lw_max, fr.lw);
              frags.push_back(fr);
            }
            prob.assign(frags.size(), Real(0));
            Real denom = 0;
            for (std::size_t i = 0; i < frags.size(); ++i) {
              prob[i] = std::exp(frags[i].lw - lw_max);
              denom += prob[i];
            }
            Real color[3] = {0, 0, 0};
            for (std::size_t i = 0; i < frags.size(); ++i) {
              prob[i] /= denom;
              for (int ch = 0; ch < 3; ++ch) color[ch] += prob[i] * frags[i].c[ch];
            }
            const Real m = self.data[static_cast<std::size_t>(pixel * 4 + 3)];
            Real g_color[3];
            Real g_m = g[3];
            for (int ch = 0; ch < 3; ++ch) {
              g_color[ch] = m * g[ch];
              g_m += g[ch] * (color[ch] - bg[static_cast<std::size_t>(ch)]);
            }
            for (std::size_t i = 0; i < frags.size(); ++i) {
              const Fragment& fr = frags[i];
              const FaceSetup& fs = rast->setup(fr.face);
              // Silhouette: dM/dD = -(1 - M) s / sigma.
              Real g_D = -g_m * (1 - m) * fr.s / sigma;
              // Softmax blend.
              Real g_c[3];
              Real g_lw = 0;
              for (int ch = 0; ch < 3; ++ch) {
                g_c[ch] = prob[i] * g_color[ch];
                g_lw += prob[i] * (fr.c[ch] - color[ch]) * g_color[ch];
              }
              // lw = log s - z / gamma; d(log s)/dD = -(1 - s) / sigma.
              g_D += g_lw * (-(1 - fr.s) / sigma);
              const Real g_z = -g_lw / gamma;
              // Face color = min(texture(uv) * shade, 1).
              const Real shade = nsh.data[static_cast<std::size_t>(fr.face)];
              Real g_sample[3];
              Real g_shade_f = 0;
              for (int ch = 0; ch < 3; ++ch) {
                const Real gc = fr.saturated[ch] ? Real(0) : g_c[ch];
                g_shade_f += gc * fr.tex[ch];
                g_sample[ch] = gc * shade;
              }
              if (g_shade) g_shade[fr.face] += g_shade_f;
              const TexTap& t = fr.tap;
              Real g_u = 0, g_v = 0;
              for (int ch = 0; ch < 3; ++ch) {
                const auto o00 = static_cast<std::size_t>((t.y0 * tw + t.x0) * 3 + ch);
                const auto o01 = static_cast<std::size_t>((t.y0 * tw + t.x1) * 3 + ch);
                const auto o10 = static_cast<std::size_t>((t.y1 * tw + t.x0) * 3 + ch);
                const auto o11 = static_cast<std::size_t>((t.y1 * tw + t.x1) * 3 + ch);
                if (g_tex) {
                  g_tex[o00] += g_sample[ch] * (1 - t.fx) * (1 - t.fy);
                  g_tex[o01] += g_sample[ch] * t.fx * (1 - t.fy);
                  g_tex[o10] += g_sample[ch] * (1 - t.fx) * t.fy;
                  g_tex[o11] += g_sample[ch] * t.fx * t.fy;
                }
                const Real v00 = ntex.data[o00], v01 = ntex.data[o01],
                           v10 = ntex.data[o10], v11 = ntex.data[o11];
                g_u += g_sample[ch] *
                       ((v01 - v00) * (1 - t.fy) + (v11 - v10) * t.fy);
                g_v += g_sample[ch] *
                       ((v10 - v00) * (1 - t.fx) + (v11 - v01) * t.fx);
              }
              g_u *= t.du;
              g_v *= t.dv;
              if (!g_screen) continue;
              // Interpolated z, u, v through clipped barycentrics.
              Real g_wc[3];
              for (int k = 0; k < 3; ++k) {
                const auto vi = static_cast<std::size_t>(fs.idx[static_cast<std::size_t>(k)]);
                g_screen[3 * vi + 2] += fr.wc[k] * g_z;
                g_wc[k] = fs.z[k] * g_z + (*uv)[2 * vi] * g_u +
                          (*uv)[2 * vi + 1] * g_v;
              }
              Real dot = 0;
              for (int k = 0; k < 3; ++k) dot += g_wc[k] * fr.wc[k];
              Real g_w[3];
              for (int k = 0; k < 3; ++k) {
                g_w[k] = fr.w[k] > 0 ? (g_wc[k] - dot) / fr.wsum : Real(0);
              }
              rast->scatter_geometry(fr, g_D, g_w, px, py, g_screen);
            }
          }
        }
      },
      "soft_rasterize");
}

std::vector<Real> hard_silhouette(std::span<const Real> screen,
                                  std::span<const Face> faces, int height,
                                  int width) {
  std::vector<Real> out(static_cast<std::size_t>(height * width), Real(0));
  for (const Face& f : faces) {
    Real x[3], y[3];
    for (int k = 0; k < 3; ++k) {
      const auto v = static_cast<std::size_t>(f[static_cast<std::size_t>(k)]);
      x[k] = screen[3 * v];
      y[k] = screen[3 * v + 1];
    }
    const Real area = edge_fn(x[0], y[0], x[1], y[1], x[2], y[2]);
    if (area == 0) continue;
    const auto c0 = std::max<std::int64_t>(
        0, static_cast<std::int64_t>(std::floor(std::min({x[0], x[1], x[2]}))));
    const auto c1 = std::min<std::int64_t>(
        width - 1,
        static_cast<std::int64_t>(std::ceil(std::max({x[0], x[1], x[2]}))));
    const auto r0 = std::max<std::int64_t>(
        0, static_cast<std::int64_t>(std::floor(std::min({y[0], y[1], y[2]}))));
    const auto r1 = std::min<std::int64_t>(
        height - 1,
        static_cast<std::int64_t>(std::ceil(std::max({y[0], y[1], y[2]}))));
    for (auto r = r0; r <= r1; ++r) {
      for (auto c = c0; c <= c1; ++c) {
        const Real px = Real(c) + Real(0.5), py = Real(r) + Real(0.5);
        const Real e0 = edge_fn(x[1], y[1], x[2], y[2], px, py) / area;
        const Real e1 = edge_fn(x[2], y[2], x[0], y[0], px, py) / area;
        const Real e2 = edge_fn(x[0], y[0], x[1], y[1], px, py) / area;
        if (e0 >= 0 && e1 >= 0 && e2 >= 0) {
          out[static_cast<std::size_t>(r * width + c)] = Real(1);
        }
      }
    }
  }
  return out;
}

RenderedFrame render(const RealizedAttributes& a, const Mesh& topology,
                     const RenderConfig& cfg) {
  if (a.vertices.rank() != 2 ||
      a.vertices.shape()[0] != static_cast<std::int64_t>(topology.num_vertices())) {
    throw ShapeError("render: vertices must be [V,3] matching the template");
  }
  for (Real v : a.vertices.data()) {
    if (!std::isfinite(v)) throw std::domain_error("render: non-finite vertex");
  }
  const Tensor screen = project(a.vertices, a.camera, cfg.height, cfg.width,
                                cfg.fov_deg, cfg.near_fraction);
  const Tensor normals = face_normals(a.vertices, topology.faces);
  const Tensor shading = shade_faces(normals, a.light);
  RenderedFrame frame;
  frame.rgba = soft_rasterize(screen, shading, a.texture, topology, cfg);
  frame.screen = screen;
  frame.image = slice(frame.rgba, 2, 0, 3);
  frame.mask = slice(frame.rgba, 2, 3, 4);
  return frame;
}

SOFTMESH_END_NAMESPACE
