//! Editable indoor lighting: a single HDR parametric light plus an LDR
//! textured cuboid, with fitting, rendering and evaluation tools.

pub mod envmap;
pub mod error;
pub mod lightfit;
pub mod lightmodel;
pub mod metrics;
pub mod raster;
pub mod render;
pub mod scenegeom;
pub mod synthetic;

pub use envmap::{Direction, EquirectImage};
pub use error::{Error, Result};
pub use lightmodel::{LightEstimate, LightManifest, ParametricLight};
pub use raster::{Raster, Rgb};
pub use scenegeom::{CuboidGeom, LayoutMap, TexturedCuboid};
pub use glam::{DVec2, DVec3};
