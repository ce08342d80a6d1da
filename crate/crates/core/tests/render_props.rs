mod oracles;

use proptest::prelude::*;

use nest_core::render::{
    render_display_texture, render_observation, render_scene, Camera, DisplayContent, Material, SceneTriangle,
    FRAME_SIZE,
};
use nest_core::world::{AgentBody, ChamberSpec, ObjectId, Pose};

use oracles::numeric::coverage_mask;

const RED: [f32; 3] = [1.0, 0.0, 0.0];
const BLUE: [f32; 3] = [0.0, 0.0, 1.0];

fn flat(vertices: [[f64; 3]; 3], rgb: [f32; 3]) -> SceneTriangle {
    SceneTriangle {
        vertices,
        uv: [[0.0; 2]; 3],
        material: Material::Flat(rgb),
    }
}

fn forward_camera() -> Camera {
    Camera::look_at([0.0; 3], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], 60.0, 0.1)
}

#[test]
fn nearer_triangle_occludes_in_either_order() {
    let cam = forward_camera();
    let n = FRAME_SIZE;
    let near = flat([[-1.03, 3.0, 0.97], [1.11, 3.0, 0.41], [-0.37, 3.0, -1.13]], RED);
    let far = flat([[-9.0, 6.0, 9.0], [9.0, 6.0, 9.0], [0.0, 6.0, -9.0]], BLUE);
    let screen = near.vertices.map(|p| {
        let s = cam.project(cam.to_view(p), n, n);
        [f64::from(s[0]), f64::from(s[1])]
    });
    let mask = coverage_mask(screen, n, n, 1e-3).expect("no pixel center on an edge");
    assert!(mask.iter().filter(|&&m| m).count() > 100);
    for order in [[near, far], [far, near]] {
        let f = render_scene(&cam, &order, &[], (n, n), [0.0; 3]);
        for (i, &inside) in mask.iter().enumerate() {
            if inside {
                assert_eq!(&f.data[3 * i..3 * i + 3], &RED);
            }
        }
    }
}

#[test]
fn rotated_object_changes_pixels() {
    let a = render_display_texture(DisplayContent::Object(ObjectId::A), 0.0, 0.0);
    let b = render_display_texture(DisplayContent::Object(ObjectId::A), 30.0, 0.0);
    let differing = a.to_rgb8().iter().zip(b.to_rgb8()).filter(|(x, y)| **x != *y).count();
    assert!(differing > 0);
}

#[test]
fn objects_share_size_and_color_but_not_shape() {
    let a = render_display_texture(DisplayContent::Object(ObjectId::A), 0.0, 0.0);
    let b = render_display_texture(DisplayContent::Object(ObjectId::B), 0.0, 0.0);
    assert_ne!(a.to_rgb8(), b.to_rgb8());
}

fn pose_strategy() -> impl Strategy<Value = Pose> {
    let c = ChamberSpec::default();
    let r = AgentBody::default().radius;
    (r..c.length_x - r, r..c.width_y - r, 0.0..360.0).prop_map(|(x, y, h)| Pose::new(x, y, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frames_are_finite_and_in_range(pose in pose_strategy(), az in -180.0f64..180.0) {
        let c = ChamberSpec::default();
        let t0 = render_display_texture(DisplayContent::Object(ObjectId::B), az, 0.0);
        let t1 = render_display_texture(DisplayContent::Blank, 0.0, 0.0);
        let f = render_observation(&c, &t0, &t1, &Camera::from_pose(&pose, 3.2, 60.0, 0.1));
        prop_assert!(f.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rendering_has_no_memory(p in pose_strategy(), q in pose_strategy()) {
        let c = ChamberSpec::default();
        let t0 = render_display_texture(DisplayContent::Object(ObjectId::A), 10.0, 0.0);
        let t1 = render_display_texture(DisplayContent::Object(ObjectId::B), -20.0, 0.0);
        let cam = |pose: &Pose| Camera::from_pose(pose, 3.2, 60.0, 0.1);
        let first = render_observation(&c, &t0, &t1, &cam(&p)).to_rgb8();
        render_observation(&c, &t1, &t0, &cam(&q));
        prop_assert_eq!(first, render_observation(&c, &t0, &t1, &cam(&p)).to_rgb8());
    }
}
