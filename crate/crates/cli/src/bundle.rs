//! The on-disk estimate bundle and atomic output helpers.

use std::fs;
use std::path::{Path, PathBuf};

use editlight::envmap::pfm;
use editlight::lightfit::{rescale_texture, FitConfig, FitReport};
use editlight::scenegeom::{sphere_to_cuboid_texture, DEFAULT_MAX_TEXELS};
use editlight::{CuboidGeom, EquirectImage, LayoutMap, LightEstimate, ParametricLight, TexturedCuboid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};

pub const LIGHT_FILE: &str = "light.json";
pub const TEXTURE_FILE: &str = "texture.pfm";
pub const LAYOUT_FILE: &str = "layout.png";
pub const CUBOID_FILE: &str = "cuboid.json";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const REPORT_FILE: &str = "fit_report.json";

/// Room assumed when no layout is supplied: 6 m x 6 m, 3 m high, camera
/// at the center.
pub const DEFAULT_ROOM_M: (f64, f64, f64) = (6.0, 6.0, 3.0);

pub fn default_cuboid() -> CuboidGeom {
    let (w, d, h) = DEFAULT_ROOM_M;
    CuboidGeom::from_dimensions(Default::default(), w, d, 0.0, h).expect("valid default room")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutSource {
    Detected,
    Default,
    Edited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Factor that maps the source panorama's 90th luminance percentile
    /// to 0.8; renders multiplied by it match the texture's exposure.
    pub exposure_scale: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    pub layout: LayoutSource,
}

impl Provenance {
    pub fn new(exposure_scale: f64, seed: u64, layout: LayoutSource) -> Self {
        Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            source: None,
            exposure_scale,
            seed,
            fit: None,
            layout,
        }
    }
}

/// A light estimate with its provenance, as stored in a bundle directory.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub estimate: LightEstimate,
    pub provenance: Provenance,
    pub report: Option<FitReport>,
}

impl Bundle {
    pub fn cuboid(&self) -> CuboidGeom {
        self.estimate.cuboid.clone().unwrap_or_else(default_cuboid)
    }

    /// The LDR texture rescaled to `light`'s ambient and warped onto the
    /// cuboid faces.
    pub fn textured(&self, light: &ParametricLight) -> CliResult<TexturedCuboid> {
        let scaled = rescale_texture(&self.estimate.texture, light.ambient())?;
        Ok(sphere_to_cuboid_texture(&scaled, &self.cuboid(), DEFAULT_MAX_TEXELS)?)
    }

    pub fn read(dir: impl AsRef<Path>) -> CliResult<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(CliError::input(format!("{}: not a bundle directory", dir.display())));
        }
        let file = |name: &str| dir.join(name);
        let light: ParametricLight = read_json(&file(LIGHT_FILE))?;
        let texture = pfm::read(file(TEXTURE_FILE))
            .and_then(|r| EquirectImage::new(r, false))
            .context(file(TEXTURE_FILE).display())?;
        let layout = LayoutMap::load(file(LAYOUT_FILE)).context(file(LAYOUT_FILE).display())?;
        let cuboid: CuboidGeom = read_json(&file(CUBOID_FILE))?;
        let provenance: Provenance = read_json(&file(PROVENANCE_FILE))?;
        let report = if file(REPORT_FILE).exists() {
            Some(read_json(&file(REPORT_FILE))?)
        } else {
            None
        };
        let estimate = LightEstimate::new(light, texture, layout, Some(cuboid))
            .context(dir.display())?;
        Ok(Bundle {
            estimate,
            provenance,
            report,
        })
    }

    /// Writes every file into a fresh sibling directory, then swaps it in
    /// place of `dir`; a failure leaves `dir` untouched.
    pub fn write(&self, dir: impl AsRef<Path>) -> CliResult<()> {
        let dir = dir.as_ref();
        let parent = parent_of(dir);
        fs::create_dir_all(&parent)?;
        let staging = tempfile::Builder::new()
            .prefix(".bundle-")
            .tempdir_in(&parent)?;
        let file = |name: &str| staging.path().join(name);
        let e = &self.estimate;
        fs::write(file(LIGHT_FILE), to_json(&e.light)?)?;
        pfm::write(file(TEXTURE_FILE), e.texture.raster())?;
        fs::write(file(LAYOUT_FILE), e.layout.encode_png()?)?;
        fs::write(file(CUBOID_FILE), to_json(&self.cuboid())?)?;
        fs::write(file(PROVENANCE_FILE), to_json(&self.provenance)?)?;
        if let Some(report) = &self.report {
            fs::write(file(REPORT_FILE), to_json(report)?)?;
        }
        let staged = staging.keep();
        replace_dir(&staged, dir).inspect_err(|_| {
            let _ = fs::remove_dir_all(&staged);
        })
    }
}

fn parent_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn replace_dir(staged: &Path, dir: &Path) -> CliResult<()> {
    if !dir.exists() {
        fs::rename(staged, dir)?;
        return Ok(());
    }
    if !dir.is_dir() {
        return Err(CliError::input(format!("{} exists and is not a directory", dir.display())));
    }
    let old = tempfile::Builder::new()
        .prefix(".bundle-old-")
        .tempdir_in(parent_of(dir))?
        .keep();
    fs::remove_dir(&old)?;
    fs::rename(dir, &old)?;
    if let Err(e) = fs::rename(staged, dir) {
        fs::rename(&old, dir)?;
        return Err(e.into());
    }
    fs::remove_dir_all(&old)?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).context(path.display())?;
    serde_json::from_str(&text).context(path.display())
}

/// Writes `bytes` to a temporary file next to `path` and renames it over.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> CliResult<()> {
    use std::io::Write;
    let path = path.as_ref();
    let parent = parent_of(path);
    fs::create_dir_all(&parent)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&parent)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| CliError::from(e.error))?;
    Ok(())
}
