#pragma once

#include <cmath>

#include "bento/ops.hpp"
#include "bento/types.hpp"

namespace bento::stn {

/**
 * Normalized coordinates use the pixel-center convention: column j of a
 * width-W image sits at x = (2j+1)/W - 1, so -1 and +1 are the outer pixel
 * edges, not centers. Both directions of the mapping below must agree on
 * this or the identity transform stops being exact.
 */
inline double to_normalized(int index, int extent) {
  return (2.0 * index + 1.0) / extent - 1.0;
}

inline double to_pixel(double coord, int extent) {
  return ((coord + 1.0) * extent - 1.0) / 2.0;
}

inline Tensor identity_theta() {
  return Tensor({2, 3}, {1, 0, 0, 0, 1, 0});
}

/**
 * Sample grid for an affine map: grid[i,j] = theta . (x_j, y_i, 1), stored
 * as [H,W,2] with x in channel 0 and y in channel 1. Differentiable in
 * theta; the coordinates themselves are constants of the output size.
 */
inline Tensor affine_grid(const Tensor& theta, int out_h, int out_w) {
  if (theta.ndim() != 2 || theta.dim(0) != 2 || theta.dim(1) != 3)
    throw ShapeError("affine_grid: theta must be [2,3], got " +
                     shape_str(theta.shape()));
  if (out_h < 1 || out_w < 1) throw ValueError("affine_grid: output size must be >= 1");

  Tensor grid = Tensor::zeros({out_h, out_w, 2});
  for (int i = 0; i < out_h; ++i) {
    const double y = to_normalized(i, out_h);
    for (int j = 0; j < out_w; ++j) {
      const double x = to_normalized(j, out_w);
      grid.at(i, j, 0) = theta.at(0, 0) * x + theta.at(0, 1) * y + theta.at(0, 2);
      grid.at(i, j, 1) = theta.at(1, 0) * x + theta.at(1, 1) * y + theta.at(1, 2);
    }
  }
  if (recording(theta)) {
    grid.set_requires_grad(true);
    Graph::record("affine_grid", [theta, grid, out_h, out_w]() mutable {
      if (!grid.has_grad()) return;
      const auto& gg = grid.grad();
      auto& gt = theta.grad_accum();
      for (int i = 0; i < out_h; ++i) {
        const double y = to_normalized(i, out_h);
        for (int j = 0; j < out_w; ++j) {
          const double x = to_normalized(j, out_w);
          const double gx = gg[(size_t(i) * out_w + j) * 2 + 0];
          const double gy = gg[(size_t(i) * out_w + j) * 2 + 1];
          gt[0] += gx * x;
          gt[1] += gx * y;
          gt[2] += gx;
          gt[3] += gy * x;
          gt[4] += gy * y;
          gt[5] += gy;
        }
      }
    });
  }
  return grid;
}

/**
 * Bilinear sampling with zero padding outside the image. Differentiable in
 * both the image and the grid. The four corner weights are non-negative and
 * sum to 1 whenever all four taps land in bounds; taps outside contribute
 * zero, which fades items out smoothly at the border.
 */
inline Tensor bilinear_sample(const Tensor& image, const Tensor& grid) {
  if (image.ndim() != 3)
    throw ShapeError("bilinear_sample: image must be [C,H,W], got " +
                     shape_str(image.shape()));
  if (grid.ndim() != 3 || grid.dim(2) != 2)
    throw ShapeError("bilinear_sample: grid must be [H,W,2], got " +
                     shape_str(grid.shape()));
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const int Ho = grid.dim(0), Wo = grid.dim(1);

  Tensor out = Tensor::zeros({C, Ho, Wo});
  auto tap = [&](int c, int y, int x) -> double {
    if (y < 0 || y >= H || x < 0 || x >= W) return 0.0;
    return image.at(c, y, x);
  };
  for (int i = 0; i < Ho; ++i)
    for (int j = 0; j < Wo; ++j) {
      const double px = to_pixel(grid.at(i, j, 0), W);
      const double py = to_pixel(grid.at(i, j, 1), H);
      const int x0 = int(std::floor(px)), y0 = int(std::floor(py));
      const double wx = px - x0, wy = py - y0;
      for (int c = 0; c < C; ++c) {
        out.at(c, i, j) = (1 - wy) * ((1 - wx) * tap(c, y0, x0) + wx * tap(c, y0, x0 + 1)) +
                          wy * ((1 - wx) * tap(c, y0 + 1, x0) + wx * tap(c, y0 + 1, x0 + 1));
      }
    }
  debug_check_finite(out, "bilinear_sample");

  if (recording(image, grid)) {
    out.set_requires_grad(true);
    Graph::record("bilinear_sample", [image, grid, out, C, H, W, Ho, Wo]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto tap = [&](int c, int y, int x) -> double {
        if (y < 0 || y >= H || x < 0 || x >= W) return 0.0;
        return image.at(c, y, x);
      };
      const bool want_img = image.requires_grad();
      const bool want_grid = grid.requires_grad();
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          const double px = to_pixel(grid.at(i, j, 0), W);
          const double py = to_pixel(grid.at(i, j, 1), H);
          const int x0 = int(std::floor(px)), y0 = int(std::floor(py));
          const double wx = px - x0, wy = py - y0;
          double dpx = 0.0, dpy = 0.0;
          for (int c = 0; c < C; ++c) {
            const double g = go[(size_t(c) * Ho + i) * Wo + j];
            if (g == 0.0) continue;
            if (want_img) {
              auto& gi = image.grad_accum();
              auto bump = [&](int y, int x, double w) {
                if (y < 0 || y >= H || x < 0 || x >= W) return;
                gi[(size_t(c) * H + y) * W + x] += g * w;
              };
              bump(y0, x0, (1 - wy) * (1 - wx));
              bump(y0, x0 + 1, (1 - wy) * wx);
              bump(y0 + 1, x0, wy * (1 - wx));
              bump(y0 + 1, x0 + 1, wy * wx);
            }
            if (want_grid) {
              const double i00 = tap(c, y0, x0), i01 = tap(c, y0, x0 + 1);
              const double i10 = tap(c, y0 + 1, x0), i11 = tap(c, y0 + 1, x0 + 1);
              dpx += g * ((1 - wy) * (i01 - i00) + wy * (i11 - i10));
              dpy += g * ((1 - wx) * (i10 - i00) + wx * (i11 - i01));
            }
          }
          if (want_grid) {
            auto& gd = grid.grad_accum();
            gd[(size_t(i) * Wo + j) * 2 + 0] += dpx * W / 2.0;
            gd[(size_t(i) * Wo + j) * 2 + 1] += dpy * H / 2.0;
          }
        }
    });
  }
  return out;
}

/// L1 distance between the transformed item and its target.
inline Tensor stn_loss(const Tensor& predicted, const Tensor& target) {
  return l1_loss(predicted, target);
}

/**
 * Theta mapping the full item canvas into the box region. Derivation: the
 * output pixel at normalized u in [-1,1] covers canvas position
 * cx + u*w/2, which in normalized canvas coordinates is 2*cx - 1 + u*w.
 * Inverting for the sampler gives x_src = (x_dst - (2*cx - 1)) / w.
 */
inline Tensor bbox_to_affine(const LayoutBox& box) {
  if (!(box.w > 0.0) || !(box.h > 0.0))
    throw ValueError("bbox_to_affine: degenerate box " + std::to_string(box.w) + "x" +
                     std::to_string(box.h));
  if (box.cx < 0.0 || box.cx > 1.0 || box.cy < 0.0 || box.cy > 1.0 || box.w > 1.0 ||
      box.h > 1.0)
    throw ValueError("bbox_to_affine: box outside unit canvas");
  return Tensor({2, 3}, {1.0 / box.w, 0.0, (1.0 - 2.0 * box.cx) / box.w,
                         0.0, 1.0 / box.h, (1.0 - 2.0 * box.cy) / box.h});
}

}  // namespace bento::stn
