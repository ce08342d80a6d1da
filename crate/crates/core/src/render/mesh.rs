//! Procedural stimulus objects.
//!
//! Both objects are normalized to the same bounding-sphere radius and share a
//! base color, so they differ only in shape.

use crate::world::ObjectId;

pub const OBJECT_COLOR: [f32; 3] = [0.20, 0.38, 0.85];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub base_color: [f32; 3],
}

impl Mesh {
    fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
            base_color: OBJECT_COLOR,
        }
    }

    fn append(&mut self, other: Mesh) {
        let off = self.vertices.len();
        self.vertices.extend(other.vertices);
        self.triangles.extend(
            other
                .triangles
                .into_iter()
                .map(|t| [t[0] + off, t[1] + off, t[2] + off]),
        );
    }

    fn transformed(mut self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        for v in &mut self.vertices {
            *v = f(*v);
        }
        self
    }

    /// Axis-aligned box centered at the origin.
    fn cuboid(sx: f64, sy: f64, sz: f64) -> Self {
        let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
        let vertices = (0..8)
            .map(|i| {
                [
                    if i & 1 == 0 { -hx } else { hx },
                    if i & 2 == 0 { -hy } else { hy },
                    if i & 4 == 0 { -hz } else { hz },
                ]
            })
            .collect();
        let quads = [
            [0, 1, 3, 2], // z-
            [4, 6, 7, 5], // z+
            [0, 4, 5, 1], // y-
            [2, 3, 7, 6], // y+
            [0, 2, 6, 4], // x-
            [1, 5, 7, 3], // x+
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self {
            vertices,
            triangles,
            base_color: OBJECT_COLOR,
        }
    }

    /// Closed prism around the z axis.
    fn prism(radius: f64, height: f64, sides: usize) -> Self {
        let mut m = Self::empty();
        let hz = height / 2.0;
        for i in 0..sides {
            let a = std::f64::consts::TAU * i as f64 / sides as f64;
            let (s, c) = (libm::sin(a), libm::cos(a));
            m.vertices.push([radius * c, radius * s, -hz]);
            m.vertices.push([radius * c, radius * s, hz]);
        }
        let bottom = m.vertices.len();
        m.vertices.push([0.0, 0.0, -hz]);
        m.vertices.push([0.0, 0.0, hz]);
        for i in 0..sides {
            let j = (i + 1) % sides;
            let (b0, t0, b1, t1) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            m.triangles.push([b0, b1, t1]);
            m.triangles.push([b0, t1, t0]);
            m.triangles.push([bottom, b1, b0]);
            m.triangles.push([bottom + 1, t0, t1]);
        }
        m
    }

    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Recenters on the bounding-box center and scales to unit bounding
    /// radius.
    fn normalized(self) -> Self {
        let (lo, hi) = self.bounding_box();
        let c = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
        let r = self
            .vertices
            .iter()
            .map(|v| ((v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2) + (v[2] - c[2]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        self.transformed(|v| [(v[0] - c[0]) / r, (v[1] - c[1]) / r, (v[2] - c[2]) / r])
    }

    pub fn bounding_radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    }
}

fn rotate_y(v: [f64; 3], deg: f64) -> [f64; 3] {
    let (s, c) = (libm::sin(deg.to_radians()), libm::cos(deg.to_radians()));
    [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]]
}

/// Object A: a vertical tube with two oblique rectangular fins.
fn object_a() -> Mesh {
    let mut m = Mesh::prism(0.3, 2.0, 12);
    let fin = || Mesh::cuboid(0.9, 0.08, 0.45);
    m.append(fin().transformed(|v| {
        let r = rotate_y(v, -35.0);
        [r[0] + 0.6, r[1], r[2] + 0.45]
    }));
    m.append(fin().transformed(|v| {
        let r = rotate_y(v, 35.0);
        [r[0] - 0.6, r[1], r[2] - 0.45]
    }));
    m.normalized()
}

/// Object B: a horizontal slab with two vertical pegs.
fn object_b() -> Mesh {
    let mut m = Mesh::cuboid(2.0, 0.7, 0.35).transformed(|v| [v[0], v[1], v[2] - 0.3]);
    for x in [-0.6, 0.55] {
        m.append(Mesh::cuboid(0.25, 0.25, 0.9).transformed(move |v| [v[0] + x, v[1], v[2] + 0.325]));
    }
    m.normalized()
}

pub fn object_mesh(id: ObjectId) -> Mesh {
    match id {
        ObjectId::A => object_a(),
        ObjectId::B => object_b(),
    }
}
