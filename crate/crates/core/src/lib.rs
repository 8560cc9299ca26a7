//! Egocentric point-cloud demonstration synthesis.
//!
//! Source demonstrations captured with a wrist camera are ingested into the
//! robot base frame ([`capture`]), split into skill and motion segments
//! ([`segment`]), re-targeted to new object configurations ([`generate`])
//! and cropped to what the wrist camera would actually see ([`vao`]).
//! [`scene`] renders primitive scenes to check all of this without hardware.

pub mod camera;
pub mod capture;
pub mod dataset;
pub mod error;
pub mod generate;
pub mod scene;
pub mod se3;
pub mod segment;
pub mod vao;

pub use camera::{in_bounds, project, CameraIntrinsics, PixelCoord};
pub use dataset::{
    count_generated, make_delta, read_demo, write_demo, Action, ConfigDelta, CropBox, DemoFrame,
    Demonstration, GenerationRecord, ObjectConfiguration, ObjectEntry, ObservationMode, VaoRecord,
    validate_demo, ValidationOptions, Violation,
};
pub use error::{Error, Result};
pub use generate::{generate, replan_motion_segment, sample_targets, GenerationSpec, MotionCaps, Perturbation};
pub use scene::{oracle_compare, render_depth, script_demo, PrimitiveScene, RenderOptions, Script};
pub use se3::{transform_cloud, Frame, Point3, PointCloud, Pose, Rgb};
pub use segment::{label_points, segment_by_gripper, PointLabels, Segment, SegmentKind, SegmentedTrajectory, SegmenterParams};
pub use vao::{apply_vao, fps, visibility_filter, PadPolicy, VaoConfig};
pub use nalgebra::{UnitQuaternion, Vector3};
