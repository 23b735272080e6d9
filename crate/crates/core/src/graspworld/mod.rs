//! Synthetic grasp world: a kinematic hand holding cuboid objects, filmed by
//! random pinhole cameras.

pub mod camera;
pub mod dataset;
pub mod hand;
pub mod objects;
pub mod sequence;

pub use camera::{project, Camera, Projection, ProjectionNoise};
pub use dataset::{read_manifest, Dataset, DatasetConfig, Manifest, Sequence, SequenceInfo};
pub use hand::{forward_kinematics, HandParams, Keypoints, SubjectStyle};
pub use objects::{contact_filter, generate_catalog, grasp_prototype, Obb, ObjectSpec};
pub use sequence::{generate_sequence, subject_style, RenderConfig, Sample, INPUT_DIM};
