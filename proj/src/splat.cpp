// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/splat.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "vg3s/error.hpp"
#include "vg3s/parallel.hpp"

namespace vg3s {
namespace {

struct Prim {
  Vec3 m;
  std::array<double, 3> s;
  std::array<double, 3> inv_s2;
  std::array<double, 4> q;  // normalized
  double qnorm;
  Mat3 R;
  double a;
  std::vector<double> pi;  // softmax of the logits
  std::array<std::size_t, 3> lo;
  std::array<std::size_t, 3> hi;  // half-open voxel index range
};

struct Raw {
  const Tensor& m;
  const Tensor& s;
  const Tensor& r;
  const Tensor& a;
  const Tensor& c;
};

void check_shapes(const Raw& raw, std::size_t& J, std::size_t& C) {
  J = raw.a.numel();
  if (raw.a.shape() != Shape{J} || raw.m.shape() != Shape{J, 3} || raw.s.shape() != Shape{J, 3} ||
      raw.r.shape() != Shape{J, 4} || raw.c.rank() != 2 || raw.c.dim(0) != J) {
    throw ShapeError("splat inputs disagree on primitive count " + std::to_string(J));
  }
  C = raw.c.dim(1);
}

std::vector<Prim> prepare(const Raw& raw, const GridSpec& grid, double kappa) {
  std::size_t J = 0;
  std::size_t C = 0;
  check_shapes(raw, J, C);
  if (!(kappa > 0)) throw ConfigError("splat culling radius must be positive");
  std::vector<Prim> out(J);
  for (std::size_t i = 0; i < J; ++i) {
    Prim& p = out[i];
    double n2 = 0.0;
    for (int k = 0; k < 4; ++k) n2 += raw.r[4 * i + k] * raw.r[4 * i + k];
    p.qnorm = std::sqrt(n2);
    if (p.qnorm < 1e-12) throw NumericError("splat: quaternion " + std::to_string(i) + " has norm below 1e-12");
    for (int k = 0; k < 4; ++k) p.q[k] = raw.r[4 * i + k] / p.qnorm;
    p.R = quat_to_rot(p.q);
    double smax = 0.0;
    for (int k = 0; k < 3; ++k) {
      p.m[k] = raw.m[3 * i + k];
      p.s[k] = raw.s[3 * i + k];
      if (!(p.s[k] > 0)) throw NumericError("splat: scale of primitive " + std::to_string(i) + " is not positive");
      p.inv_s2[k] = 1.0 / (p.s[k] * p.s[k]);
      smax = std::max(smax, p.s[k]);
    }
    p.a = raw.a[i];
    p.pi.resize(C);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, raw.c[i * C + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += p.pi[c] = std::exp(raw.c[i * C + c] - mx);
    for (double& v : p.pi) v /= z;
    for (int k = 0; k < 3; ++k) {
      p.lo[k] = 0;
      p.hi[k] = grid.dims[k];
      if (std::isinf(kappa)) continue;
      const double radius = kappa * smax;
      const double first = std::ceil((p.m[k] - radius - grid.origin[k]) / grid.voxel_size - 0.5);
      const double last = std::floor((p.m[k] + radius - grid.origin[k]) / grid.voxel_size - 0.5);
      const double dim = static_cast<double>(grid.dims[k]);
      p.lo[k] = static_cast<std::size_t>(std::clamp(first, 0.0, dim));
      p.hi[k] = static_cast<std::size_t>(std::clamp(last + 1.0, 0.0, dim));
      if (p.hi[k] < p.lo[k]) p.hi[k] = p.lo[k];
    }
  }
  return out;
}

/// alpha at voxel center x; fills the offset, local coordinates and kernel value.
double contribution(const Prim& p, const Vec3& x, Vec3& delta, Vec3& y, double& g) {
  for (int k = 0; k < 3; ++k) delta[k] = x[k] - p.m[k];
  double d = 0.0;
  for (int k = 0; k < 3; ++k) {
    y[k] = p.R[k] * delta[0] + p.R[3 + k] * delta[1] + p.R[6 + k] * delta[2];
    d += y[k] * y[k] * p.inv_s2[k];
  }
  g = std::exp(-0.5 * d);
  return std::min(p.a * g, kAlphaMax);
}

struct Accum {
  std::vector<double> log_t;  // sum of log(1 - alpha)
  std::vector<double> w;      // sum of alpha
  std::vector<double> u;      // [V, C] sum of alpha * pi
};

Accum accumulate(const std::vector<Prim>& prims, const GridSpec& grid, std::size_t C, unsigned workers) {
  const std::size_t V = grid.count();
  Accum acc{std::vector<double>(V), std::vector<double>(V), std::vector<double>(V * C)};
  parallel_for(grid.dims[0], workers, [&](std::size_t x0, std::size_t x1) {
    Vec3 delta, y;
    double g = 0.0;
    for (const Prim& p : prims) {
      const std::size_t xa = std::max(x0, p.lo[0]);
      const std::size_t xb = std::min(x1, p.hi[0]);
      for (std::size_t x = xa; x < xb; ++x) {
        for (std::size_t yy = p.lo[1]; yy < p.hi[1]; ++yy) {
          for (std::size_t z = p.lo[2]; z < p.hi[2]; ++z) {
            const std::size_t v = grid.flat(x, yy, z);
            const double alpha = contribution(p, grid.center(x, yy, z), delta, y, g);
            acc.log_t[v] += std::log1p(-alpha);
            acc.w[v] += alpha;
            for (std::size_t c = 0; c < C; ++c) acc.u[v * C + c] += alpha * p.pi[c];
          }
        }
      }
    }
  });
  return acc;
}

OccupancyGrid to_grid(const Accum& acc, const GridSpec& grid, std::size_t C) {
  const std::size_t V = grid.count();
  OccupancyGrid out{grid, C, std::vector<double>(V), std::vector<double>(V * C), acc.w};
  for (std::size_t v = 0; v < V; ++v) {
    out.occupancy[v] = -std::expm1(acc.log_t[v]);
    if (acc.w[v] > 0) {
      for (std::size_t c = 0; c < C; ++c) out.semantics[v * C + c] = acc.u[v * C + c] / acc.w[v];
    }
  }
  return out;
}

// d R / d q for q = (w, x, y, z), row-major.
void rot_grad_to_quat(const Mat3& gR, const std::array<double, 4>& q, std::array<double, 4>& gq) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const Mat3 dw{0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
  const Mat3 dx{0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
  const Mat3 dy{-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
  const Mat3 dz{-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
  const Mat3* parts[4] = {&dw, &dx, &dy, &dz};
  for (int k = 0; k < 4; ++k) {
    double s = 0.0;
    for (int e = 0; e < 9; ++e) s += gR[e] * (*parts[k])[e];
    gq[k] = s;
  }
}

}  // namespace

OccupancyGrid splat(const GaussianSet& set, const GridSpec& grid, const SplatOptions& opts) {
  const Tensor a = set.opacities();
  const Raw raw{set.means, set.scales, set.rotations, a, set.logits};
  const auto prims = prepare(raw, grid, opts.kappa);
  return to_grid(accumulate(prims, grid, set.num_classes, opts.workers), grid, set.num_classes);
}

OccupancyGrid splat_oracle(const GaussianSet& set, const GridSpec& grid) {
  const std::size_t J = set.size();
  const std::size_t C = set.num_classes;
  if (J > 1000) throw ConfigError("splat oracle is limited to 1000 primitives");
  for (std::size_t d : grid.dims) {
    if (d > 32) throw ConfigError("splat oracle is limited to 32 voxels per axis");
  }
  set.validate();
  // inverse covariance by adjugate, softmax weights per primitive
  std::vector<Mat3> inv(J);
  std::vector<std::vector<double>> probs(J, std::vector<double>(C));
  for (std::size_t i = 0; i < J; ++i) {
    const Mat3 S = covariance_from({set.scales[3 * i], set.scales[3 * i + 1], set.scales[3 * i + 2]},
                                   {set.rotations[4 * i], set.rotations[4 * i + 1], set.rotations[4 * i + 2],
                                    set.rotations[4 * i + 3]});
    const double det = S[0] * (S[4] * S[8] - S[5] * S[7]) - S[1] * (S[3] * S[8] - S[5] * S[6]) +
                       S[2] * (S[3] * S[7] - S[4] * S[6]);
    if (!(std::abs(det) > 0)) throw NumericError("splat oracle: singular covariance");
    inv[i] = {(S[4] * S[8] - S[5] * S[7]) / det, (S[2] * S[7] - S[1] * S[8]) / det, (S[1] * S[5] - S[2] * S[4]) / det,
              (S[5] * S[6] - S[3] * S[8]) / det, (S[0] * S[8] - S[2] * S[6]) / det, (S[2] * S[3] - S[0] * S[5]) / det,
              (S[3] * S[7] - S[4] * S[6]) / det, (S[1] * S[6] - S[0] * S[7]) / det, (S[0] * S[4] - S[1] * S[3]) / det};
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(set.logits[i * C + c]);
    for (std::size_t c = 0; c < C; ++c) probs[i][c] = std::exp(set.logits[i * C + c]) / z;
  }
  const std::size_t V = grid.count();
  OccupancyGrid out{grid, C, std::vector<double>(V), std::vector<double>(V * C), std::vector<double>(V)};
  for (std::size_t x = 0; x < grid.dims[0]; ++x) {
    for (std::size_t y = 0; y < grid.dims[1]; ++y) {
      for (std::size_t z = 0; z < grid.dims[2]; ++z) {
        const std::size_t v = grid.flat(x, y, z);
        const Vec3 p = grid.center(x, y, z);
        double transmit = 1.0;
        std::vector<double> u(C);
        double w = 0.0;
        for (std::size_t i = 0; i < J; ++i) {
          double dv[3];
          for (int k = 0; k < 3; ++k) dv[k] = p[k] - set.means[3 * i + k];
          double d = 0.0;
          for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) d += dv[r] * inv[i][3 * r + c] * dv[c];
          }
          const double alpha = std::min(set.opacity(i) * std::exp(-0.5 * d), kAlphaMax);
          transmit *= 1.0 - alpha;
          w += alpha;
          for (std::size_t c = 0; c < C; ++c) u[c] += alpha * probs[i][c];
        }
        out.occupancy[v] = 1.0 - transmit;
        out.weight_sum[v] = w;
        if (w > 0) {
          for (std::size_t c = 0; c < C; ++c) out.semantics[v * C + c] = u[c] / w;
        }
      }
    }
  }
  return out;
}

Var splat_distribution(Var means, Var scales, Var rotations, Var opacity, Var logits, const GridSpec& grid,
                       const SplatOptions& opts) {
  Tape& tape = *means.tape();
  const Raw raw{means.value(), scales.value(), rotations.value(), opacity.value(), logits.value()};
  auto prims = std::make_shared<const std::vector<Prim>>(prepare(raw, grid, opts.kappa));
  const std::size_t C = logits.value().dim(1);
  const std::size_t V = grid.count();
  auto acc = std::make_shared<const Accum>(accumulate(*prims, grid, C, opts.workers));

  Tensor out({V, C + 1});
  for (std::size_t v = 0; v < V; ++v) {
    const double o = -std::expm1(acc->log_t[v]);
    if (acc->w[v] > 0) {
      for (std::size_t c = 0; c < C; ++c) out[v * (C + 1) + c] = o * acc->u[v * C + c] / acc->w[v];
    }
    out[v * (C + 1) + C] = std::exp(acc->log_t[v]);
  }

  return tape.record(
      "splat", std::move(out), {means, scales, rotations, opacity, logits},
      [=, &tape](const Tensor& G, const Tensor&) {
        const std::size_t J = prims->size();
        // per-voxel upstream terms: dL/dT and dL/dchat
        std::vector<double> gT(V), gchat(V * C), proj(V);
        for (std::size_t v = 0; v < V; ++v) {
          const double o = -std::expm1(acc->log_t[v]);
          double t = G[v * (C + 1) + C];
          double pr = 0.0;
          if (acc->w[v] > 0) {
            for (std::size_t c = 0; c < C; ++c) {
              const double chat = acc->u[v * C + c] / acc->w[v];
              t -= G[v * (C + 1) + c] * chat;
              gchat[v * C + c] = G[v * (C + 1) + c] * o;
              pr += gchat[v * C + c] * chat;
            }
          }
          gT[v] = t;
          proj[v] = pr;
        }
        Tensor gm({J, 3}), gs({J, 3}), gr({J, 4}), ga({J}), gc({J, C});
        parallel_for(J, opts.workers, [&](std::size_t i0, std::size_t i1) {
          Vec3 delta, y;
          double g = 0.0;
          std::vector<double> gpi(C);
          for (std::size_t i = i0; i < i1; ++i) {
            const Prim& p = (*prims)[i];
            std::fill(gpi.begin(), gpi.end(), 0.0);
            Mat3 gR{};
            for (std::size_t x = p.lo[0]; x < p.hi[0]; ++x) {
              for (std::size_t yy = p.lo[1]; yy < p.hi[1]; ++yy) {
                for (std::size_t z = p.lo[2]; z < p.hi[2]; ++z) {
                  const std::size_t v = grid.flat(x, yy, z);
                  const double alpha = contribution(p, grid.center(x, yy, z), delta, y, g);
                  double galpha = -gT[v] * std::exp(acc->log_t[v] - std::log1p(-alpha));
                  if (acc->w[v] > 0) {
                    const double inv_w = 1.0 / acc->w[v];
                    double dot = 0.0;
                    for (std::size_t c = 0; c < C; ++c) {
                      dot += gchat[v * C + c] * p.pi[c];
                      gpi[c] += gchat[v * C + c] * alpha * inv_w;
                    }
                    galpha += (dot - proj[v]) * inv_w;
                  }
                  if (p.a * g >= kAlphaMax) continue;  // clamped: flat in the geometry
                  ga[i] += galpha * g;
                  const double gd = -0.5 * galpha * p.a * g;
                  for (int k = 0; k < 3; ++k) {
                    const double t = 2.0 * y[k] * p.inv_s2[k];
                    gs[3 * i + k] += gd * (-t * y[k] / p.s[k]);
                    for (int j = 0; j < 3; ++j) {
                      gm[3 * i + j] -= gd * p.R[3 * j + k] * t;
                      gR[3 * j + k] += gd * delta[j] * t;
                    }
                  }
                }
              }
            }
            std::array<double, 4> gq{};
            rot_grad_to_quat(gR, p.q, gq);
            double qdot = 0.0;
            for (int k = 0; k < 4; ++k) qdot += gq[k] * p.q[k];
            for (int k = 0; k < 4; ++k) gr[4 * i + k] = (gq[k] - qdot * p.q[k]) / p.qnorm;
            double pdot = 0.0;
            for (std::size_t c = 0; c < C; ++c) pdot += gpi[c] * p.pi[c];
            for (std::size_t c = 0; c < C; ++c) gc[i * C + c] = p.pi[c] * (gpi[c] - pdot);
          }
        });
        const Tensor* grads[5] = {&gm, &gs, &gr, &ga, &gc};
        const Var inputs[5] = {means, scales, rotations, opacity, logits};
        for (int k = 0; k < 5; ++k) {
          if (Tensor* slot = tape.grad_slot(inputs[k])) {
            for (std::size_t e = 0; e < slot->numel(); ++e) (*slot)[e] += (*grads[k])[e];
          }
        }
      });
}

}  // namespace vg3s
