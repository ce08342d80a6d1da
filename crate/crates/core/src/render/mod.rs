//! Deterministic software renderer for the agent's camera.
//!
//! The chamber is a closed box of matte white surfaces (shade 0.9). Each
//! display wall carries a textured rectangle showing a [`DisplayTexture`]: a
//! small off-screen render of the stimulus object on a white ground, the way
//! a monitor shows a 3-D object in 2-D.

pub mod mesh;
pub mod raster;

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Scalar, Tensor};
use crate::world::{ChamberSpec, ObjectId, Pose};
use mesh::{object_mesh, Mesh};
use raster::{Rasterizer, ScreenVertex, Shader};

pub const FRAME_SIZE: usize = 96;
pub const WALL_SHADE: f32 = 0.9;
const STIMULUS_CAMERA_DISTANCE: f64 = 4.0;
const STIMULUS_FOV: f64 = 40.0;
const AMBIENT: f32 = 0.35;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("unknown display object {0:?} (expected A, B or blank)")]
    UnknownObject(String),
}

/// Row-major RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Image shown on a display wall.
pub type DisplayTexture = Frame;

impl Frame {
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Rasterizer::new(width, height, rgb).into_frame()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Nearest texel for texture coordinates in `[0, 1]²` (v = 0 at the top).
    pub fn sample_nearest(&self, u: f32, v: f32) -> [f32; 3] {
        let x = ((u * self.width as f32).floor() as isize).clamp(0, self.width as isize - 1) as usize;
        let y = ((v * self.height as f32).floor() as isize).clamp(0, self.height as isize - 1) as usize;
        self.pixel(x, y)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Binary PPM (P6, 8 bits per channel).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_rgb8());
        out
    }

    pub fn quantize(&self) -> Observation {
        Observation {
            width: self.width,
            height: self.height,
            rgb: self.to_rgb8(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.data.len() == self.width * self.height * 3 && self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// An 8-bit camera image as the agent receives it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub rgb: Vec<u8>,
}

impl Observation {
    /// Channels-first `[3, H, W]` tensor scaled to `[0, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let plane = self.width * self.height;
        let mut data = vec![T::ZERO; 3 * plane];
        for (i, px) in self.rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = T::from_f64(f64::from(px[c]) / 255.0);
            }
        }
        Tensor {
            shape: vec![3, self.height, self.width],
            data,
        }
    }
}

/// What a display wall shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DisplayContent {
    Blank,
    Object(ObjectId),
}

impl FromStr for DisplayContent {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(DisplayContent::Object(ObjectId::A)),
            "B" | "b" => Ok(DisplayContent::Object(ObjectId::B)),
            "blank" => Ok(DisplayContent::Blank),
            other => Err(RenderError::UnknownObject(other.to_string())),
        }
    }
}

/// Pinhole camera with square field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: [f64; 3],
    right: [f32; 3],
    up: [f32; 3],
    forward: [f32; 3],
    pub fov_deg: f64,
    pub near: f64,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn to_f32(a: [f64; 3]) -> [f32; 3] {
    a.map(|v| v as f32)
}

fn dot3(a: [f32; 3], b: [f32; 3]) -> f32 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Camera {
    pub fn look_at(eye: [f64; 3], target: [f64; 3], world_up: [f64; 3], fov_deg: f64, near: f64) -> Self {
        assert!(fov_deg > 0.0 && fov_deg < 180.0, "fov must be in (0, 180)");
        assert!(near > 0.0, "near plane must be positive");
        let f = normalize(sub(target, eye));
        let r = normalize(cross(f, world_up));
        let u = cross(r, f);
        Self {
            position: eye,
            right: to_f32(r),
            up: to_f32(u),
            forward: to_f32(f),
            fov_deg,
            near,
        }
    }

    /// Head camera of an agent: level, looking along the heading.
    pub fn from_pose(pose: &Pose, camera_height: f64, fov_deg: f64, near: f64) -> Self {
        let h = crate::world::wrap_degrees(pose.heading).to_radians();
        let eye = [pose.x, pose.y, camera_height];
        let dir = [libm::cos(h), libm::sin(h), 0.0];
        Self::look_at(
            eye,
            [eye[0] + dir[0], eye[1] + dir[1], eye[2]],
            [0.0, 0.0, 1.0],
            fov_deg,
            near,
        )
    }

    /// View-space coordinates `(right, up, depth)`.
    pub fn to_view(&self, p: [f64; 3]) -> [f32; 3] {
        let d = to_f32(sub(p, self.position));
        [dot3(d, self.right), dot3(d, self.up), dot3(d, self.forward)]
    }

    pub fn focal_px(&self, width: usize) -> f32 {
        (width as f32 / 2.0) / libm::tanf((self.fov_deg as f32 / 2.0).to_radians())
    }

    pub fn project(&self, view: [f32; 3], width: usize, height: usize) -> [f32; 2] {
        let f = self.focal_px(width);
        [
            width as f32 / 2.0 + f * view[0] / view[2],
            height as f32 / 2.0 - f * view[1] / view[2],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Material {
    Flat([f32; 3]),
    /// Index into the texture list passed to [`render_scene`].
    Texture(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneTriangle {
    pub vertices: [[f64; 3]; 3],
    pub uv: [[f32; 2]; 3],
    pub material: Material,
}

#[derive(Clone, Copy)]
struct ClipVertex {
    view: [f32; 3],
    uv: [f32; 2],
}

/// Clips a triangle against `depth >= near`; returns a convex polygon of up
/// to four vertices.
fn clip_near(tri: [ClipVertex; 3], near: f32) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let (ina, inb) = (a.view[2] >= near, b.view[2] >= near);
        if ina {
            out.push(a);
        }
        if ina != inb {
            // Interpolate from the inside vertex so an edge shared by two
            // triangles clips to the same point whatever its direction.
            let (s, e) = if ina { (a, b) } else { (b, a) };
            let t = (near - s.view[2]) / (e.view[2] - s.view[2]);
            let lerp = |x: f32, y: f32| x + t * (y - x);
            out.push(ClipVertex {
                view: [lerp(s.view[0], e.view[0]), lerp(s.view[1], e.view[1]), near],
                uv: [lerp(s.uv[0], e.uv[0]), lerp(s.uv[1], e.uv[1])],
            });
        }
    }
    out
}

/// Renders triangles with a z-buffer. Pixels no triangle covers keep `clear`.
pub fn render_scene(
    camera: &Camera,
    triangles: &[SceneTriangle],
    textures: &[&Frame],
    size: (usize, usize),
    clear: [f32; 3],
) -> Frame {
    let (w, h) = size;
    let mut r = Rasterizer::new(w, h, clear);
    let near = camera.near as f32;
    for t in triangles {
        let cv = [0, 1, 2].map(|i| ClipVertex {
            view: camera.to_view(t.vertices[i]),
            uv: t.uv[i],
        });
        let poly = clip_near(cv, near);
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<ScreenVertex> = poly
            .iter()
            .map(|v| {
                let p = camera.project(v.view, w, h);
                let inv_w = 1.0 / v.view[2];
                ScreenVertex {
                    x: p[0],
                    y: p[1],
                    inv_w,
                    uv_over_w: [v.uv[0] * inv_w, v.uv[1] * inv_w],
                }
            })
            .collect();
        let shader = match t.material {
            Material::Flat(c) => Shader::Flat(c),
            Material::Texture(i) => Shader::Texture(textures[i]),
        };
        for k in 1..screen.len() - 1 {
            r.draw([screen[0], screen[k], screen[k + 1]], shader);
        }
    }
    r.into_frame()
}

fn stimulus_camera(azimuth: f64, elevation: f64) -> Camera {
    let (az, el) = (azimuth.to_radians(), elevation.to_radians());
    let d = STIMULUS_CAMERA_DISTANCE;
    let eye = [
        d * libm::sin(az) * libm::cos(el),
        -d * libm::cos(az) * libm::cos(el),
        d * libm::sin(el),
    ];
    Camera::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], STIMULUS_FOV, 0.1)
}

fn shaded_mesh(mesh: &Mesh, camera: &Camera) -> Vec<SceneTriangle> {
    // Light sits up and to the left of the stimulus camera.
    let l = {
        let (r, u, f) = (camera.right, camera.up, camera.forward);
        let raw = [0, 1, 2].map(|k| f64::from(-0.4 * r[k] + 0.6 * u[k] - 0.7 * f[k]));
        to_f32(normalize(raw))
    };
    mesh.triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| mesh.vertices[i]);
            let n = to_f32(normalize(cross(sub(b, a), sub(c, a))));
            let shade = AMBIENT + (1.0 - AMBIENT) * dot3(n, l).abs();
            SceneTriangle {
                vertices: [a, b, c],
                uv: [[0.0; 2]; 3],
                material: Material::Flat(mesh.base_color.map(|v| v * shade)),
            }
        })
        .collect()
}

/// The object at `(azimuth, elevation)` on a white ground, or an all-white
/// image for a blank display.
pub fn render_display_texture(content: DisplayContent, azimuth: f64, elevation: f64) -> DisplayTexture {
    match content {
        DisplayContent::Blank => Frame::filled(FRAME_SIZE, FRAME_SIZE, [1.0; 3]),
        DisplayContent::Object(id) => {
            let cam = stimulus_camera(azimuth, elevation);
            let tris = shaded_mesh(&object_mesh(id), &cam);
            render_scene(&cam, &tris, &[], (FRAME_SIZE, FRAME_SIZE), [1.0; 3])
        }
    }
}

/// Memoizes display textures; a rocking stimulus revisits the same angles.
#[derive(Default)]
pub struct TextureCache {
    map: HashMap<(DisplayContent, u64, u64), DisplayTexture>,
}

impl TextureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, content: DisplayContent, azimuth: f64, elevation: f64) -> &DisplayTexture {
        let key = match content {
            DisplayContent::Blank => (content, 0, 0),
            _ => (content, azimuth.to_bits(), elevation.to_bits()),
        };
        self.map
            .entry(key)
            .or_insert_with(|| render_display_texture(content, azimuth, elevation))
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn quad(corners: [[f64; 3]; 4], uv: [[f32; 2]; 4], material: Material, out: &mut Vec<SceneTriangle>) {
    out.push(SceneTriangle {
        vertices: [corners[0], corners[1], corners[2]],
        uv: [uv[0], uv[1], uv[2]],
        material,
    });
    out.push(SceneTriangle {
        vertices: [corners[0], corners[2], corners[3]],
        uv: [uv[0], uv[2], uv[3]],
        material,
    });
}

/// Triangles of the chamber interior. Display rectangles use texture 0 on
/// the `x = 0` wall and texture 1 on the `x = length_x` wall; each wall is
/// split around its display so surfaces never overlap.
pub fn chamber_triangles(chamber: &ChamberSpec) -> Vec<SceneTriangle> {
    let (lx, wy, hz) = (chamber.length_x, chamber.width_y, chamber.wall_height);
    let d = &chamber.display_rect;
    let (y0, y1) = (d.center_y - d.width / 2.0, d.center_y + d.width / 2.0);
    let (z0, z1) = (d.center_z - d.height / 2.0, d.center_z + d.height / 2.0);
    let wall = Material::Flat([WALL_SHADE; 3]);
    let no_uv = [[0.0; 2]; 4];
    let mut out = Vec::new();

    // Floor, ceiling and the two plain side walls.
    quad(
        [[0.0, 0.0, 0.0], [lx, 0.0, 0.0], [lx, wy, 0.0], [0.0, wy, 0.0]],
        no_uv,
        wall,
        &mut out,
    );
    quad(
        [[0.0, 0.0, hz], [lx, 0.0, hz], [lx, wy, hz], [0.0, wy, hz]],
        no_uv,
        wall,
        &mut out,
    );
    quad(
        [[0.0, 0.0, 0.0], [lx, 0.0, 0.0], [lx, 0.0, hz], [0.0, 0.0, hz]],
        no_uv,
        wall,
        &mut out,
    );
    quad(
        [[0.0, wy, 0.0], [lx, wy, 0.0], [lx, wy, hz], [0.0, wy, hz]],
        no_uv,
        wall,
        &mut out,
    );

    for (x, tex, mirror) in [(0.0, 0usize, false), (lx, 1usize, true)] {
        let p = |y: f64, z: f64| [x, y, z];
        // Frame around the display.
        quad([p(0.0, 0.0), p(wy, 0.0), p(wy, z0), p(0.0, z0)], no_uv, wall, &mut out);
        quad([p(0.0, z1), p(wy, z1), p(wy, hz), p(0.0, hz)], no_uv, wall, &mut out);
        quad([p(0.0, z0), p(y0, z0), p(y0, z1), p(0.0, z1)], no_uv, wall, &mut out);
        quad([p(y1, z0), p(wy, z0), p(wy, z1), p(y1, z1)], no_uv, wall, &mut out);
        // Texture u runs left-to-right as seen from inside the chamber.
        let u = |y: f64| -> f32 {
            let t = ((y - y0) / (y1 - y0)) as f32;
            if mirror {
                1.0 - t
            } else {
                t
            }
        };
        quad(
            [p(y0, z0), p(y1, z0), p(y1, z1), p(y0, z1)],
            [[u(y0), 1.0], [u(y1), 1.0], [u(y1), 0.0], [u(y0), 0.0]],
            Material::Texture(tex),
            &mut out,
        );
    }
    out
}

/// The agent's 96×96 view of the chamber.
pub fn render_observation(
    chamber: &ChamberSpec,
    display_x0: &DisplayTexture,
    display_xl: &DisplayTexture,
    camera: &Camera,
) -> Frame {
    render_scene(
        camera,
        &chamber_triangles(chamber),
        &[display_x0, display_xl],
        (FRAME_SIZE, FRAME_SIZE),
        [0.0; 3],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(pose: Pose) -> Camera {
        Camera::from_pose(&pose, 3.2, 60.0, 0.1)
    }

    #[test]
    fn blank_texture_is_white() {
        let t = render_display_texture(DisplayContent::Blank, 0.0, 0.0);
        assert!(t.data.iter().all(|&v| v == 1.0));
        assert_eq!(t.data.len(), 96 * 96 * 3);
    }

    #[test]
    fn unknown_object_rejected() {
        assert_eq!(
            "C".parse::<DisplayContent>(),
            Err(RenderError::UnknownObject("C".into()))
        );
        assert_eq!("blank".parse::<DisplayContent>(), Ok(DisplayContent::Blank));
    }

    #[test]
    fn texture_deterministic() {
        let a = render_display_texture(DisplayContent::Object(ObjectId::A), 17.0, 45.0);
        let b = render_display_texture(DisplayContent::Object(ObjectId::A), 17.0, 45.0);
        assert_eq!(a.to_rgb8(), b.to_rgb8());
        assert!(a.is_valid());
    }

    #[test]
    fn plain_wall_is_uniform() {
        // Looking at the y = 0 side wall from close by: nothing but wall.
        let c = ChamberSpec::default();
        let white = Frame::filled(96, 96, [1.0; 3]);
        let f = render_observation(&c, &white, &white, &cam(Pose::new(10.0, 1.5, 270.0)));
        assert!(f.data.iter().all(|&v| v == WALL_SHADE));
    }

    #[test]
    fn display_visible_when_facing_it() {
        let c = ChamberSpec::default();
        let white = Frame::filled(96, 96, [1.0; 3]);
        let f = render_observation(&c, &white, &white, &cam(Pose::new(10.0, 7.0, 180.0)));
        let center = f.pixel(48, 48);
        assert_eq!(center, [1.0; 3]);
        assert!(f.data.iter().any(|&v| v == WALL_SHADE));
        assert!(f.is_valid());
    }

    #[test]
    fn full_turn_gives_identical_frame() {
        let c = ChamberSpec::default();
        let tex = render_display_texture(DisplayContent::Object(ObjectId::B), 10.0, 0.0);
        let white = Frame::filled(96, 96, [1.0; 3]);
        let a = render_observation(
            &c,
            &tex,
            &white,
            &cam(Pose {
                x: 6.0,
                y: 5.0,
                heading: 200.0,
            }),
        );
        let b = render_observation(
            &c,
            &tex,
            &white,
            &cam(Pose {
                x: 6.0,
                y: 5.0,
                heading: 560.0,
            }),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn ppm_header() {
        let f = Frame::filled(2, 1, [1.0, 0.0, 0.5]);
        assert_eq!(f.to_ppm(), b"P6\n2 1\n255\n\xff\x00\x80\xff\x00\x80".to_vec());
    }

    #[test]
    fn observation_tensor_layout() {
        let f = Frame {
            width: 2,
            height: 1,
            data: vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        };
        let t: Tensor<f32> = f.quantize().to_tensor();
        assert_eq!(t.shape, vec![3, 1, 2]);
        assert_eq!(t.data, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }
}
