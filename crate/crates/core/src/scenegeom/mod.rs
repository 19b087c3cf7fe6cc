//! Room layout as a camera-centered cuboid: layout edge maps, corner
//! detection, back-projection and texture transfer between the panorama
//! and the cuboid faces.
//!
//! The camera sits at the origin, level with the horizon, `CAMERA_HEIGHT_M`
//! above the floor plane `y = -CAMERA_HEIGHT_M`.

mod cuboid;
mod layout;
mod texture;

pub use cuboid::{backproject, fit_rectangle, CuboidGeom, CuboidManifest, Face, FaceKind};
pub use layout::{detect_corners, render_layout, Corners, LayoutMap};
pub use texture::{sphere_to_cuboid_texture, TexturedCuboid, DEFAULT_MAX_TEXELS};

pub const CAMERA_HEIGHT_M: f64 = 1.6;
