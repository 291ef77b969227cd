//! Class-conditional layered generator.
//!
//! Sampling works in two stages, mirroring a style-based GAN: a class label and
//! a noise vector are mapped to a layered latent, and the latent is rendered
//! into an image. The built-in renderer ("ProcGen") draws a striped polygon
//! whose shape is driven by the coarse latent layers, its texture by the medium
//! layers and its tone by the fine layers.

mod render;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{ClassLabel, LayeredLatent};
use crate::raster::Image;

pub use render::{RenderParams, Renderer, PARAM_RANGES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub layers: usize,
    pub dims: usize,
    pub noise_dims: usize,
    pub master_seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            classes: 5,
            height: 32,
            width: 32,
            channels: 1,
            layers: 6,
            dims: 8,
            noise_dims: 8,
            master_seed: 7,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("generator needs at least 2 classes".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config("image must be at least 8x8".into()));
        }
        if self.channels != 1 {
            return Err(Error::Config("only single-channel images are rendered".into()));
        }
        if self.layers < 3 {
            return Err(Error::Config(
                "at least 3 latent layers are needed for coarse/medium/fine bands".into(),
            ));
        }
        if self.dims == 0 || self.noise_dims == 0 {
            return Err(Error::Config("latent and noise dims must be positive".into()));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width * self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerBand {
    Coarse,
    Medium,
    Fine,
}

/// Partitions `[0, L)` into coarse, medium and fine bands of sizes
/// `L/3`, `L/3` and the remainder.
pub fn layer_band(layers: usize, n: usize) -> Result<LayerBand> {
    if n >= layers {
        return Err(Error::domain(format!("layer {n} out of range for {layers} layers")));
    }
    let third = layers / 3;
    Ok(if n < third {
        LayerBand::Coarse
    } else if n < 2 * third {
        LayerBand::Medium
    } else {
        LayerBand::Fine
    })
}

pub fn band_layers(layers: usize, band: LayerBand) -> std::ops::Range<usize> {
    let third = layers / 3;
    match band {
        LayerBand::Coarse => 0..third,
        LayerBand::Medium => third..2 * third,
        LayerBand::Fine => 2 * third..layers,
    }
}

/// A sampled seed: the noise is fully determined by `seed_id`, and the latent
/// by `(label, noise)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSeed {
    pub label: ClassLabel,
    pub seed_id: u64,
    pub noise: Vec<f64>,
    pub latent: LayeredLatent,
}

/// Affine map for one (class, layer): `w = tanh(A z + b)`.
#[derive(Debug, Clone)]
struct LayerMap {
    matrix: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Generator {
    spec: GeneratorSpec,
    // indexed [class][layer]
    maps: Vec<Vec<LayerMap>>,
    renderer: Renderer,
}

// Pre-activation spread of class-cue dims vs nuisance dims.
const CUE_SPREAD: f64 = 0.12;
const NUISANCE_SPREAD: f64 = 0.35;

impl Generator {
    pub fn new(spec: GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let renderer = Renderer::new(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.master_seed ^ 0x6D61_7070_696E_6721);
        let bias_noise = Normal::new(0.0, 0.25).expect("valid normal");
        let mut maps = Vec::with_capacity(spec.classes);
        for class in 0..spec.classes {
            let mut per_layer = Vec::with_capacity(spec.layers);
            for layer in 0..spec.layers {
                let band = layer_band(spec.layers, layer)?;
                let mut matrix = Vec::with_capacity(spec.dims * spec.noise_dims);
                let mut bias = Vec::with_capacity(spec.dims);
                for d in 0..spec.dims {
                    let cue = renderer.class_cue(band, d, class, spec.classes);
                    let spread = if cue.is_some() {
                        CUE_SPREAD
                    } else {
                        NUISANCE_SPREAD
                    };
                    let scale = spread / (spec.noise_dims as f64).sqrt();
                    for _ in 0..spec.noise_dims {
                        let a: f64 = rng.sample(StandardNormal);
                        matrix.push(a * scale);
                    }
                    let jitter = bias_noise.sample(&mut rng);
                    bias.push(match cue {
                        Some(center) => center,
                        None => jitter,
                    });
                }
                per_layer.push(LayerMap { matrix, bias });
            }
            maps.push(per_layer);
        }
        Ok(Generator {
            spec,
            maps,
            renderer,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn noise_from_id(&self, seed_id: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_id);
        (0..self.spec.noise_dims)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Class-conditional mapping from noise to the layered latent.
    pub fn map(&self, label: ClassLabel, noise: &[f64]) -> Result<LayeredLatent> {
        let label = ClassLabel::checked(label.index(), self.spec.classes)?;
        if noise.len() != self.spec.noise_dims {
            return Err(Error::dim(format!(
                "noise has {} dims, generator expects {}",
                noise.len(),
                self.spec.noise_dims
            )));
        }
        let mut values = Vec::with_capacity(self.spec.layers * self.spec.dims);
        for map in &self.maps[label.index()] {
            for (row, b) in map.matrix.chunks(self.spec.noise_dims).zip(&map.bias) {
                let pre: f64 = row.iter().zip(noise).map(|(a, z)| a * z).sum::<f64>() + b;
                values.push(pre.tanh());
            }
        }
        LayeredLatent::new(self.spec.layers, self.spec.dims, values)
    }

    pub fn seed_from_id(&self, label: ClassLabel, seed_id: u64) -> Result<LatentSeed> {
        let noise = self.noise_from_id(seed_id);
        let latent = self.map(label, &noise)?;
        Ok(LatentSeed {
            label,
            seed_id,
            noise,
            latent,
        })
    }

    pub fn sample_seed<R: Rng + ?Sized>(&self, label: ClassLabel, rng: &mut R) -> Result<LatentSeed> {
        ClassLabel::checked(label.index(), self.spec.classes)?;
        let seed_id = rng.random::<u64>();
        self.seed_from_id(label, seed_id)
    }

    pub fn render_params(&self, latent: &LayeredLatent) -> Result<RenderParams> {
        self.check_latent(latent)?;
        Ok(self.renderer.params(latent))
    }

    pub fn synthesize(&self, latent: &LayeredLatent) -> Result<Image> {
        self.check_latent(latent)?;
        let params = self.renderer.params(latent);
        Ok(self.renderer.render(&params))
    }

    /// Binary mask of the untextured, untoned shape (coverage above 0.5).
    pub fn shape_mask(&self, latent: &LayeredLatent) -> Result<Vec<bool>> {
        self.check_latent(latent)?;
        let params = self.renderer.params(latent);
        Ok(self.renderer.shape_mask(&params))
    }

    pub fn layer_band(&self, n: usize) -> Result<LayerBand> {
        layer_band(self.spec.layers, n)
    }

    fn check_latent(&self, latent: &LayeredLatent) -> Result<()> {
        if latent.shape() != (self.spec.layers, self.spec.dims) {
            return Err(Error::dim(format!(
                "latent shape {:?}, generator expects ({}, {})",
                latent.shape(),
                self.spec.layers,
                self.spec.dims
            )));
        }
        if latent.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite latent"));
        }
        Ok(())
    }
}
