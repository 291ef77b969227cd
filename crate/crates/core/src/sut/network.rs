//! Built-in dense classifier and its weight-file format.
//!
//! Weight file layout (all little-endian):
//! `"BSW1"`, `u32` layer count `n`, `n + 1` `u32` layer sizes, then for every
//! layer its `out x in` row-major `f32` matrix followed by its `out` `f32` biases.

use std::path::Path;

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::raster::Image;
use crate::sut::{Classifier, ProbVector, SutInfo};

pub const WEIGHT_MAGIC: &[u8; 4] = b"BSW1";

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Dense network: ReLU between layers, softmax after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    layers: Vec<DenseLayer>,
}

impl NetworkWeights {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dim("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::dim(format!("layer {i} buffers do not match its shape")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("layer {i} has non-finite weights")));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::dim("consecutive layer sizes disagree"));
            }
        }
        Ok(NetworkWeights { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let layers = dims
            .windows(2)
            .map(|d| DenseLayer {
                inputs: d[0],
                outputs: d[1],
                weights: vec![0.0; d[0] * d[1]],
                bias: vec![0.0; d[1]],
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Forward pass in double precision over the stored single-precision weights.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut act = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.outputs);
            for (row, b) in layer.weights.chunks_exact(layer.inputs).zip(&layer.bias) {
                let z = row.iter().zip(&act).map(|(w, x)| f64::from(*w) * x).sum::<f64>() + f64::from(*b);
                next.push(if i < last { z.max(0.0) } else { z });
            }
            act = next;
        }
        softmax(&act)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for d in self.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Reader { bytes, pos: 0 };
        if cursor.take(4)? != WEIGHT_MAGIC {
            return Err(Error::Data("not a BSW1 weight file".into()));
        }
        let count = cursor.u32()? as usize;
        if count == 0 || count > 64 {
            return Err(Error::Data(format!("implausible layer count {count}")));
        }
        let dims = (0..=count)
            .map(|_| cursor.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(count);
        for d in dims.windows(2) {
            let weights = cursor.f32s(d[0] * d[1])?;
            let bias = cursor.f32s(d[1])?;
            layers.push(DenseLayer {
                inputs: d[0],
                outputs: d[1],
                weights,
                bias,
            });
        }
        if cursor.pos != bytes.len() {
            return Err(Error::Data("trailing bytes after weight data".into()));
        }
        Self::new(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.bytes.len())
            .ok_or_else(|| Error::Data("weight file truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Data("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// In-process classifier backed by [`NetworkWeights`].
#[derive(Debug, Clone)]
pub struct BuiltinSut {
    weights: NetworkWeights,
    info: SutInfo,
    execution: Execution,
}

impl BuiltinSut {
    pub fn new(weights: NetworkWeights, height: usize, width: usize) -> Result<Self> {
        if weights.inputs() != height * width {
            return Err(Error::Config(format!(
                "network takes {} inputs, images have {}",
                weights.inputs(),
                height * width
            )));
        }
        if weights.outputs() < 2 {
            return Err(Error::Config("network must output at least 2 classes".into()));
        }
        let info = SutInfo {
            classes: weights.outputs(),
            height,
            width,
            channels: 1,
        };
        Ok(BuiltinSut {
            weights,
            info,
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    pub fn predict_one(&self, image: &Image) -> Result<ProbVector> {
        if image.shape() != (self.info.height, self.info.width, self.info.channels) {
            return Err(Error::dim(format!(
                "image {:?} does not match SUT input {:?}",
                image.shape(),
                (self.info.height, self.info.width, self.info.channels)
            )));
        }
        ProbVector::new(self.weights.forward(image.pixels()))
    }
}

impl Classifier for BuiltinSut {
    fn info(&self) -> SutInfo {
        self.info
    }

    fn classify(&self, images: &[Image]) -> Result<Vec<ProbVector>> {
        self.execution
            .map(images, |img| self.predict_one(img))
            .into_iter()
            .collect()
    }
}
