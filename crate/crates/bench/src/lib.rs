//! Inputs shared by the kernel benchmarks.

use egogen_core::scene::{PrimitiveScene, Primitive, Shape};
use egogen_core::{CameraIntrinsics, Frame, Point3, PointCloud, Pose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform cloud in a 1 m cube centred 0.6 m in front of the origin.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.1..1.1),
            )
        })
        .collect();
    PointCloud::new(points, Frame::Robot).expect("finite points")
}

pub fn wrist_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(60.0, 60.0, 32.0, 24.0, 64, 48).expect("valid intrinsics")
}

/// Table plane with a sphere, a box and a cylinder on it.
pub fn tabletop() -> PrimitiveScene {
    let prim = |shape, x, y, z| Primitive {
        shape,
        pose: Pose::from_translation(x, y, z),
        object: None,
        color: None,
    };
    PrimitiveScene {
        primitives: vec![
            prim(Shape::Sphere { radius: 0.03 }, 0.5, 0.0, 0.03),
            prim(Shape::Box { half_extents: [0.06, 0.06, 0.005] }, 0.4, 0.1, 0.005),
            prim(Shape::Cylinder { radius: 0.03, half_height: 0.05 }, 0.6, -0.1, 0.05),
        ],
        ground_plane: true,
        ..Default::default()
    }
}

/// Looking straight down from 0.3 m above the table.
pub fn overhead_camera() -> Pose {
    Pose::from_translation(0.5, 0.0, 0.3) * Pose::rot_x(std::f64::consts::PI)
}
