#![allow(dead_code)]

use std::path::{Path, PathBuf};

use editlight::envmap::pfm;
use editlight::scenegeom::render_layout;
use editlight::synthetic::DiskLight;
use editlight::{Direction, EquirectImage, LightEstimate, ParametricLight};
use editlight_cli::bundle::{default_cuboid, LayoutSource, Provenance};
use editlight_cli::commands::ldr_texture;
use editlight_cli::Bundle;

pub fn disk(azimuth_deg: f64, elevation_deg: f64, radius_deg: f64) -> DiskLight {
    DiskLight {
        direction: Direction::from_angles(azimuth_deg.to_radians(), elevation_deg.to_radians()),
        angular_radius: radius_deg.to_radians(),
        radiance: [40.0, 36.0, 30.0],
        ambient: [0.2, 0.22, 0.25],
    }
}

pub fn write_pano(dir: &Path, name: &str, light: &DiskLight, height: usize) -> PathBuf {
    let path = dir.join(name);
    pfm::write(&path, light.render(height).unwrap().raster()).unwrap();
    path
}

/// A bundle built straight from a synthetic light, without fitting.
pub fn bundle_for(light: &DiskLight, height: usize) -> Bundle {
    let pano = light.render(height).unwrap();
    let (texture, scale) = ldr_texture(&pano).unwrap();
    let cuboid = default_cuboid();
    let layout = render_layout(&cuboid, pano.width(), pano.height()).unwrap();
    let p = ParametricLight::from_angular_radius(light.direction, 50.0, light.angular_radius, light.radiance, light.ambient)
        .unwrap();
    Bundle {
        estimate: LightEstimate::new(p, texture, layout, Some(cuboid)).unwrap(),
        provenance: Provenance::new(scale, 0, LayoutSource::Default),
        report: None,
    }
}

pub fn pano_of(light: &DiskLight, height: usize) -> EquirectImage {
    light.render(height).unwrap()
}
