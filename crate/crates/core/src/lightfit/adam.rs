use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::FitContext;
use crate::envmap::Direction;
use crate::error::{Error, Result};
use crate::lightmodel::{LightManifest, ParametricLight};
use crate::render::{render_pass, Pass, SphereEmitter};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub iters: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            iters: 150,
            lr: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Loss exceeded ten times its initial value; the best iterate so far is
    /// reported.
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub initial: LightManifest,
    pub refined: LightManifest,
    /// Loss of every evaluated iterate, starting with the initial guess.
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub status: FitStatus,
    /// Fraction of the rendered probe energy due to the chosen light alone.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_ratio: Option<f64>,
    /// Set when the color/ambient initialization fell back to a flat
    /// ambient because its least-squares system was singular.
    pub color_fit_degenerate: bool,
}

const MIN_ALPHA: f64 = 0.1 * PI / 180.0;
const MAX_ALPHA: f64 = 80.0 * PI / 180.0;
const MAX_ELEVATION: f64 = FRAC_PI_2 - 1e-3;
const MIN_DISTANCE: f64 = 0.1;
const MAX_DISTANCE: f64 = 100.0;
/// Radiance floor before taking logarithms.
const RADIANCE_FLOOR: f64 = 1e-3;
const MAX_RADIANCE: f64 = 1e6;

/// Finite-difference steps for the geometric parameters.
const ANGLE_STEP: f64 = 0.5 * PI / 180.0;
const REL_STEP: f64 = 0.01;

// Parameter layout: azimuth, elevation, ln distance, angular radius,
// ln(color * sin^2(radius)) (3), ln ambient (3). The color enters scaled
// by the light's footprint so that resizing keeps the irradiance fixed.
const N: usize = 10;

/// Per-parameter step multipliers. Log distance has to travel from the
/// 3 m default to the far bound within a normal iteration budget.
const LR_SCALE: [f64; N] = [1.0, 1.0, 4.0, 1.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0];

fn encode(p: &ParametricLight) -> [f64; N] {
    let alpha = p.angular_radius().clamp(MIN_ALPHA, MAX_ALPHA);
    let footprint = alpha.sin().powi(2);
    let c = p.color().map(|x| (x.max(RADIANCE_FLOOR) * footprint).ln());
    let a = p.ambient().map(|x| x.max(RADIANCE_FLOOR).ln());
    project([
        p.azimuth(),
        p.elevation(),
        p.distance_m().ln(),
        alpha,
        c[0],
        c[1],
        c[2],
        a[0],
        a[1],
        a[2],
    ])
}

fn project(mut t: [f64; N]) -> [f64; N] {
    t[0] = (t[0] + PI).rem_euclid(2.0 * PI) - PI;
    t[1] = t[1].clamp(-MAX_ELEVATION, MAX_ELEVATION);
    t[2] = t[2].clamp(MIN_DISTANCE.ln(), MAX_DISTANCE.ln());
    t[3] = t[3].clamp(MIN_ALPHA, MAX_ALPHA);
    let ln_footprint = t[3].sin().powi(2).ln();
    for x in &mut t[4..7] {
        *x = x.clamp(RADIANCE_FLOOR.ln() + ln_footprint, MAX_RADIANCE.ln() + ln_footprint);
    }
    for x in &mut t[7..] {
        *x = x.clamp(RADIANCE_FLOOR.ln(), MAX_RADIANCE.ln());
    }
    t
}

fn emitter(t: &[f64; N]) -> SphereEmitter {
    let d = t[2].exp();
    SphereEmitter {
        center: Direction::from_angles(t[0], t[1]).vec() * d,
        radius: d * t[3].sin(),
    }
}

fn decode(t: &[f64; N]) -> Result<ParametricLight> {
    let (color, ambient) = colors(t);
    ParametricLight::from_angular_radius(
        Direction::from_angles(t[0], t[1]),
        t[2].exp(),
        t[3],
        color,
        ambient,
    )
}

struct Evaluation {
    loss: f64,
    /// Gradient of the loss with respect to the linear color and ambient.
    grad_color: [f64; 3],
    grad_ambient: [f64; 3],
}

impl FitContext {
    fn light_basis(&self, t: &[f64; N]) -> Result<Vec<f64>> {
        let img = render_pass(&self.scene, Pass::Sphere(emitter(t)), &self.settings)?;
        // The pass is gray: every channel holds the same value.
        Ok(img.raster().pixels().iter().map(|p| p[0] as f64).collect())
    }

    fn evaluate(&self, basis: &[f64], color: [f64; 3], ambient: [f64; 3]) -> Evaluation {
        let target = self.target.raster().pixels();
        let amb = self.ambient.raster().pixels();
        let n = (3 * target.len()) as f64;
        let mut loss = 0.0;
        let mut gc = [0.0; 3];
        let mut ga = [0.0; 3];
        for i in 0..target.len() {
            for c in 0..3 {
                let b = basis[i];
                let s = amb[i][c] as f64;
                let r = color[c] * b + ambient[c] * s - target[i][c] as f64;
                loss += r * r;
                gc[c] += 2.0 * r * b;
                ga[c] += 2.0 * r * s;
            }
        }
        Evaluation {
            loss: loss / n,
            grad_color: gc.map(|g| g / n),
            grad_ambient: ga.map(|g| g / n),
        }
    }

    fn loss_of(&self, t: &[f64; N]) -> Result<f64> {
        let basis = self.light_basis(t)?;
        let (c, a) = colors(t);
        Ok(self.evaluate(&basis, c, a).loss)
    }

    /// Loss of a light estimate against the target render.
    pub fn loss(&self, light: &ParametricLight) -> Result<f64> {
        let basis = self.light_basis(&encode(light))?;
        Ok(self.evaluate(&basis, light.color(), light.ambient()).loss)
    }
}

fn colors(t: &[f64; N]) -> ([f64; 3], [f64; 3]) {
    let footprint = t[3].sin().powi(2);
    (
        [t[4].exp() / footprint, t[5].exp() / footprint, t[6].exp() / footprint],
        [t[7].exp(), t[8].exp(), t[9].exp()],
    )
}

/// Minimizes the mean squared difference between the parametric render and
/// the target with Adam.
///
/// Geometric gradients are central differences with common random numbers
/// (every probe render reuses the context seed); color and ambient enter
/// the render linearly, so their gradients are exact. Parameters are
/// projected back to legal ranges after every step and the best iterate
/// is returned.
pub fn refine_adam(ctx: &FitContext, p0: &ParametricLight, config: &AdamConfig) -> Result<FitReport> {
    if !(config.lr > 0.0) || !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
        return Err(Error::invalid("invalid Adam hyper-parameters"));
    }
    let mut theta = encode(p0);
    let mut m = [0.0; N];
    let mut v = [0.0; N];
    let mut losses = Vec::with_capacity(config.iters + 1);
    let mut best = (f64::INFINITY, theta);
    let mut initial_loss = f64::NAN;
    let mut status = FitStatus::Converged;

    for step in 0..=config.iters {
        let basis = ctx.light_basis(&theta)?;
        let (color, ambient) = colors(&theta);
        let eval = ctx.evaluate(&basis, color, ambient);
        if !eval.loss.is_finite() {
            return Err(Error::Numerical(format!("loss became {} at step {step}", eval.loss)));
        }
        losses.push(eval.loss);
        if step == 0 {
            initial_loss = eval.loss;
        }
        if eval.loss < best.0 {
            best = (eval.loss, theta);
        }
        if eval.loss > 10.0 * initial_loss {
            status = FitStatus::Diverged;
            break;
        }
        if step == config.iters {
            break;
        }

        let mut grad = [0.0; N];
        for k in 0..4 {
            let h = match k {
                0 | 1 => ANGLE_STEP,
                2 => REL_STEP,
                _ => REL_STEP * theta[3],
            };
            let mut plus = theta;
            let mut minus = theta;
            plus[k] += h;
            minus[k] -= h;
            if k == 1 {
                plus[1] = plus[1].min(MAX_ELEVATION);
                minus[1] = minus[1].max(-MAX_ELEVATION);
            }
            let span = plus[k] - minus[k];
            grad[k] = (ctx.loss_of(&plus)? - ctx.loss_of(&minus)?) / span;
        }
        for c in 0..3 {
            grad[4 + c] = eval.grad_color[c] * color[c];
            grad[7 + c] = eval.grad_ambient[c] * ambient[c];
        }

        let t = (step + 1) as i32;
        let bc1 = 1.0 - config.beta1.powi(t);
        let bc2 = 1.0 - config.beta2.powi(t);
        for k in 0..N {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * grad[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * grad[k] * grad[k];
            theta[k] -= config.lr * LR_SCALE[k] * (m[k] / bc1) / ((v[k] / bc2).sqrt() + config.eps);
        }
        theta = project(theta);
    }

    let refined = if config.iters == 0 { p0.clone() } else { decode(&best.1)? };
    Ok(FitReport {
        initial: p0.to_manifest(),
        refined: refined.to_manifest(),
        losses,
        initial_loss,
        final_loss: best.0,
        status,
        energy_ratio: None,
        color_fit_degenerate: false,
    })
}
