//! Triangle rasterization with a depth buffer.
//!
//! Pixel `(px, py)` is sampled at its center `(px + 0.5, py + 0.5)`. Edges
//! follow the top-left fill rule, so two triangles sharing an edge never both
//! cover a pixel on it. Depth is tested on view-space distance, recovered
//! from the linearly interpolated `1/w`.

use super::Frame;

/// A vertex after projection: pixel position plus perspective-divided
/// attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenVertex {
    pub x: f32,
    pub y: f32,
    /// Reciprocal of view depth.
    pub inv_w: f32,
    /// Texture coordinates pre-multiplied by `inv_w`.
    pub uv_over_w: [f32; 2],
}

#[derive(Debug, Clone, Copy)]
pub enum Shader<'a> {
    Flat([f32; 3]),
    Texture(&'a Frame),
}

fn edge(a: [f32; 2], b: [f32; 2], p: [f32; 2]) -> f32 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Top-left rule for a triangle whose vertices are ordered so every edge
/// function is positive inside (y axis points down).
fn is_top_left(a: [f32; 2], b: [f32; 2]) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    // With positive-inside orientation in a y-down frame, top edges run
    // left-to-right and left edges run upward.
    (d[1] == 0.0 && d[0] > 0.0) || d[1] < 0.0
}

/// Visits every pixel covered by a screen-space triangle, passing the pixel
/// index and barycentric weights. Degenerate triangles cover nothing.
pub fn for_each_covered(
    tri: [[f32; 2]; 3],
    width: usize,
    height: usize,
    mut visit: impl FnMut(usize, usize, [f32; 3]),
) {
    let [mut a, mut b, c] = tri;
    let mut area = edge(a, b, c);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let mut swapped = false;
    if area < 0.0 {
        std::mem::swap(&mut a, &mut b);
        area = -area;
        swapped = true;
    }
    let min_x = a[0].min(b[0]).min(c[0]).floor().max(0.0);
    let max_x = a[0].max(b[0]).max(c[0]).ceil().min(width as f32);
    let min_y = a[1].min(b[1]).min(c[1]).floor().max(0.0);
    let max_y = a[1].max(b[1]).max(c[1]).ceil().min(height as f32);
    if min_x >= max_x || min_y >= max_y {
        return;
    }
    let tl = [is_top_left(b, c), is_top_left(c, a), is_top_left(a, b)];
    for py in min_y as usize..max_y as usize {
        for px in min_x as usize..max_x as usize {
            let p = [px as f32 + 0.5, py as f32 + 0.5];
            let w = [edge(b, c, p), edge(c, a, p), edge(a, b, p)];
            let inside = (0..3).all(|i| w[i] > 0.0 || (w[i] == 0.0 && tl[i]));
            if !inside {
                continue;
            }
            let mut bary = [w[0] / area, w[1] / area, w[2] / area];
            if swapped {
                bary.swap(0, 1);
            }
            visit(px, py, bary);
        }
    }
}

/// Color and depth targets.
pub struct Rasterizer {
    pub width: usize,
    pub height: usize,
    color: Vec<f32>,
    depth: Vec<f32>,
}

impl Rasterizer {
    pub fn new(width: usize, height: usize, clear: [f32; 3]) -> Self {
        let mut color = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            color.extend_from_slice(&clear);
        }
        Self {
            width,
            height,
            color,
            depth: vec![f32::INFINITY; width * height],
        }
    }

    pub fn draw(&mut self, v: [ScreenVertex; 3], shader: Shader<'_>) {
        let (w, h) = (self.width, self.height);
        let tri = [[v[0].x, v[0].y], [v[1].x, v[1].y], [v[2].x, v[2].y]];
        let color = &mut self.color;
        let depth = &mut self.depth;
        for_each_covered(tri, w, h, |px, py, b| {
            let inv_w = b[0] * v[0].inv_w + b[1] * v[1].inv_w + b[2] * v[2].inv_w;
            if !(inv_w > 0.0) {
                return;
            }
            let z = 1.0 / inv_w;
            let idx = py * w + px;
            if !(z < depth[idx]) {
                return;
            }
            depth[idx] = z;
            let rgb = match shader {
                Shader::Flat(c) => c,
                Shader::Texture(tex) => {
                    let u = (b[0] * v[0].uv_over_w[0] + b[1] * v[1].uv_over_w[0] + b[2] * v[2].uv_over_w[0]) * z;
                    let t = (b[0] * v[0].uv_over_w[1] + b[1] * v[1].uv_over_w[1] + b[2] * v[2].uv_over_w[1]) * z;
                    tex.sample_nearest(u, t)
                }
            };
            color[idx * 3..idx * 3 + 3].copy_from_slice(&rgb);
        });
    }

    pub fn into_frame(self) -> Frame {
        let mut data = self.color;
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Frame {
            width: self.width,
            height: self.height,
            data,
        }
    }
}
