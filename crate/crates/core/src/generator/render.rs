use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{band_layers, GeneratorSpec, LayerBand};
use crate::latent::LayeredLatent;
use crate::raster::Image;

/// Slope of the squashing from band activations to parameter ranges.
const GAIN: f64 = 3.0;
const SUPERSAMPLE: usize = 2;

#[derive(Debug, Clone, Copy)]
pub struct ParamRange {
    pub name: &'static str,
    pub band: LayerBand,
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    prior: Prior,
}

#[derive(Debug, Clone, Copy)]
enum Prior {
    None,
    /// Class `c` of `K` is centred at fraction `(c + 0.5) / K` of the range.
    PerClass,
    Fixed(f64),
}

/// Every render parameter, the band/dim it is read from and its closed range.
/// Positions and radius are fractions of the image size.
pub const PARAM_RANGES: [ParamRange; 13] = [
    ParamRange { name: "vertices", band: LayerBand::Coarse, dim: 0, lo: 2.5, hi: 7.5, prior: Prior::PerClass },
    ParamRange { name: "center_x", band: LayerBand::Coarse, dim: 1, lo: 0.25, hi: 0.75, prior: Prior::None },
    ParamRange { name: "center_y", band: LayerBand::Coarse, dim: 2, lo: 0.25, hi: 0.75, prior: Prior::None },
    ParamRange { name: "radius", band: LayerBand::Coarse, dim: 3, lo: 0.18, hi: 0.42, prior: Prior::PerClass },
    ParamRange { name: "aspect", band: LayerBand::Coarse, dim: 4, lo: 0.8, hi: 1.25, prior: Prior::None },
    ParamRange { name: "rotation", band: LayerBand::Coarse, dim: 5, lo: -0.5, hi: 0.5, prior: Prior::None },
    ParamRange { name: "polygon_blend", band: LayerBand::Coarse, dim: 6, lo: 0.0, hi: 1.0, prior: Prior::Fixed(0.85) },
    ParamRange { name: "stripe_frequency", band: LayerBand::Medium, dim: 0, lo: 1.0, hi: 8.0, prior: Prior::PerClass },
    ParamRange { name: "stripe_orientation", band: LayerBand::Medium, dim: 1, lo: 0.0, hi: PI, prior: Prior::None },
    ParamRange { name: "stripe_amplitude", band: LayerBand::Medium, dim: 2, lo: 0.1, hi: 0.5, prior: Prior::None },
    ParamRange { name: "brightness", band: LayerBand::Fine, dim: 0, lo: 0.0, hi: 0.25, prior: Prior::None },
    ParamRange { name: "contrast", band: LayerBand::Fine, dim: 1, lo: 0.6, hi: 1.0, prior: Prior::None },
    ParamRange { name: "gamma", band: LayerBand::Fine, dim: 2, lo: 0.7, hi: 1.4, prior: Prior::None },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub vertices: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub aspect: f64,
    pub rotation: f64,
    pub polygon_blend: f64,
    pub stripe_frequency: f64,
    pub stripe_orientation: f64,
    pub stripe_amplitude: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub gamma: f64,
}

impl RenderParams {
    fn from_values(v: &[f64; 13]) -> Self {
        RenderParams {
            vertices: v[0],
            center_x: v[1],
            center_y: v[2],
            radius: v[3],
            aspect: v[4],
            rotation: v[5],
            polygon_blend: v[6],
            stripe_frequency: v[7],
            stripe_orientation: v[8],
            stripe_amplitude: v[9],
            brightness: v[10],
            contrast: v[11],
            gamma: v[12],
        }
    }

    pub fn values(&self) -> [f64; 13] {
        [
            self.vertices,
            self.center_x,
            self.center_y,
            self.radius,
            self.aspect,
            self.rotation,
            self.polygon_blend,
            self.stripe_frequency,
            self.stripe_orientation,
            self.stripe_amplitude,
            self.brightness,
            self.contrast,
            self.gamma,
        ]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
pub struct Renderer {
    height: usize,
    width: usize,
    layers: usize,
    dims: usize,
}

impl Renderer {
    pub(super) fn new(spec: &GeneratorSpec) -> Self {
        Renderer {
            height: spec.height,
            width: spec.width,
            layers: spec.layers,
            dims: spec.dims,
        }
    }

    /// Mapping bias that centres latent dim `d` of `band` on the class prior, if
    /// a parameter with a prior reads that dim.
    pub(super) fn class_cue(&self, band: LayerBand, d: usize, class: usize, classes: usize) -> Option<f64> {
        let range = PARAM_RANGES
            .iter()
            .find(|r| r.band == band && r.dim % self.dims == d && !matches!(r.prior, Prior::None))?;
        let frac = match range.prior {
            Prior::PerClass => (class as f64 + 0.5) / classes as f64,
            Prior::Fixed(f) => f,
            Prior::None => unreachable!(),
        };
        let activation = ((frac / (1.0 - frac)).ln() / GAIN).clamp(-0.95, 0.95);
        Some(activation.atanh())
    }

    pub fn params(&self, latent: &LayeredLatent) -> RenderParams {
        let band_mean = |band: LayerBand| -> Vec<f64> {
            let rows = band_layers(self.layers, band);
            let count = rows.len() as f64;
            let mut mean = vec![0.0; self.dims];
            for n in rows {
                for (m, v) in mean.iter_mut().zip(latent.layer(n)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            mean
        };
        let means = [
            band_mean(LayerBand::Coarse),
            band_mean(LayerBand::Medium),
            band_mean(LayerBand::Fine),
        ];
        let mut values = [0.0; 13];
        for (v, r) in values.iter_mut().zip(PARAM_RANGES.iter()) {
            let mean = match r.band {
                LayerBand::Coarse => &means[0],
                LayerBand::Medium => &means[1],
                LayerBand::Fine => &means[2],
            };
            *v = r.lo + (r.hi - r.lo) * sigmoid(GAIN * mean[r.dim % self.dims]);
        }
        RenderParams::from_values(&values)
    }

    pub fn render(&self, p: &RenderParams) -> Image {
        let shape = Shape::new(p, self.height, self.width);
        let (sin_a, cos_a) = p.stripe_orientation.sin_cos();
        let omega = 2.0 * PI * p.stripe_frequency / self.width as f64;
        let samples = (SUPERSAMPLE * SUPERSAMPLE) as f64;
        let mut pixels = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                for (sx, sy) in subsamples(x, y) {
                    let cov = shape.coverage(sx, sy);
                    if cov > 0.0 {
                        let wave = 0.5 + 0.5 * (omega * (sx * cos_a + sy * sin_a)).sin();
                        acc += cov * (1.0 - p.stripe_amplitude * wave);
                    }
                }
                let base = acc / samples;
                let toned = (p.brightness + p.contrast * base).clamp(0.0, 1.0);
                pixels.push(toned.powf(p.gamma).clamp(0.0, 1.0));
            }
        }
        Image::new(self.height, self.width, 1, pixels).expect("rendered pixels are in range")
    }

    pub fn shape_mask(&self, p: &RenderParams) -> Vec<bool> {
        let shape = Shape::new(p, self.height, self.width);
        let samples = (SUPERSAMPLE * SUPERSAMPLE) as f64;
        let mut mask = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let cov: f64 = subsamples(x, y).map(|(sx, sy)| shape.coverage(sx, sy)).sum();
                mask.push(cov / samples > 0.5);
            }
        }
        mask
    }
}

fn subsamples(x: usize, y: usize) -> impl Iterator<Item = (f64, f64)> {
    let step = 1.0 / SUPERSAMPLE as f64;
    (0..SUPERSAMPLE * SUPERSAMPLE).map(move |k| {
        let i = (k % SUPERSAMPLE) as f64;
        let j = (k / SUPERSAMPLE) as f64;
        (x as f64 + (i + 0.5) * step, y as f64 + (j + 0.5) * step)
    })
}

/// Ellipse blended with a regular polygon of (possibly fractional) vertex count,
/// in pixel coordinates.
struct Shape {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos_t: f64,
    sin_t: f64,
    blend: f64,
    /// Neighbouring integer polygons and the weight of the upper one.
    lower: Polygon,
    upper: Polygon,
    upper_weight: f64,
    min_radius: f64,
    edge_scale: f64,
}

impl Shape {
    fn new(p: &RenderParams, height: usize, width: usize) -> Self {
        let size = height.min(width) as f64;
        let root = p.aspect.sqrt();
        let rx = p.radius * size * root;
        let ry = p.radius * size / root;
        // Fractional counts blend two regular polygons, so the outline moves
        // continuously with the count; below three sides it stays a triangle.
        let n = p.vertices.max(3.0);
        let lower = Polygon::new(n.floor());
        let upper = Polygon::new(n.ceil());
        let (sin_t, cos_t) = p.rotation.sin_cos();
        Shape {
            cx: p.center_x * width as f64,
            cy: p.center_y * height as f64,
            rx,
            ry,
            cos_t,
            sin_t,
            blend: p.polygon_blend,
            lower,
            upper,
            upper_weight: n - n.floor(),
            min_radius: (1.0 - p.polygon_blend) + p.polygon_blend * lower.apothem,
            edge_scale: rx.min(ry),
        }
    }

    /// Soft coverage in `[0, 1]` with a one-pixel linear edge ramp.
    fn coverage(&self, sx: f64, sy: f64) -> f64 {
        let px = sx - self.cx;
        let py = sy - self.cy;
        let u = (self.cos_t * px + self.sin_t * py) / self.rx;
        let v = (-self.sin_t * px + self.cos_t * py) / self.ry;
        let rho = u.hypot(v);
        // the boundary radius lies in [min_radius, 1]
        if (rho - 1.0) * self.edge_scale >= 0.5 {
            return 0.0;
        }
        if (rho - self.min_radius) * self.edge_scale <= -0.5 {
            return 1.0;
        }
        let angle = v.atan2(u).rem_euclid(2.0 * PI);
        let w = self.upper_weight;
        let polygon = (1.0 - w) * self.lower.radius(angle) + w * self.upper.radius(angle);
        let boundary = (1.0 - self.blend) + self.blend * polygon;
        (0.5 - (rho - boundary) * self.edge_scale).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Polygon {
    sector: f64,
    apothem: f64,
}

impl Polygon {
    fn new(sides: f64) -> Self {
        Polygon { sector: 2.0 * PI / sides, apothem: (PI / sides).cos() }
    }

    /// Unit-circumradius boundary at `angle` in `[0, 2pi)`.
    fn radius(&self, angle: f64) -> f64 {
        let phi = angle % self.sector;
        self.apothem / (phi - self.sector / 2.0).cos()
    }
}
