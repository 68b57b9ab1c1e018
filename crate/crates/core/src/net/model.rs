use rand::Rng;

use crate::{seeds, Error, Result};

/// Layer widths. `embed` starts at the input dimension (3) and its last
/// entry is the pooled feature width; `head` starts at that width and ends
/// at the class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    pub embed: Vec<usize>,
    pub head: Vec<usize>,
}

impl NetShape {
    /// 3→32→64→128, max-pool, 128→64→32→C.
    pub fn standard(num_classes: usize) -> Self {
        Self {
            embed: vec![3, 32, 64, 128],
            head: vec![128, 64, 32, num_classes],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed.len() < 2 || self.embed[0] != 3 {
            return Err(Error::Config("embedding widths must start at 3 and have >= 1 layer".into()));
        }
        if self.head.len() < 3 {
            return Err(Error::Config("classifier needs at least one hidden layer".into()));
        }
        if self.head[0] != *self.embed.last().unwrap() {
            return Err(Error::Config("classifier input width must equal pooled width".into()));
        }
        if self.embed.iter().chain(&self.head).any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        *self.head.last().unwrap()
    }

    pub fn embed_layers(&self) -> usize {
        self.embed.len() - 1
    }

    pub fn head_layers(&self) -> usize {
        self.head.len() - 1
    }

    pub fn fl_dim(&self) -> usize {
        *self.embed.last().unwrap()
    }

    pub fn fh_dim(&self) -> usize {
        self.head[self.head.len() - 2]
    }

    /// (fan_in, fan_out) of every layer, embedding layers first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.embed
            .windows(2)
            .chain(self.head.windows(2))
            .map(|w| (w[0], w[1]))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Borrowed weights (`fan_in × fan_out`, row-major by input) and biases of one layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub weights: &'a [f64],
    pub bias: &'a [f64],
    pub fan_in: usize,
    pub fan_out: usize,
}

/// All trainable parameters as one flat vector in declaration order:
/// for every layer, weights then biases; embedding layers before the head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    shape: NetShape,
    values: Vec<f64>,
    offsets: Vec<usize>,
    /// Set once step-1 training has completed.
    pub trained: bool,
}

impl ModelParams {
    pub fn zeros(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        let n = shape.param_count();
        Self::from_values(shape, vec![0.0; n])
    }

    /// He-uniform weights, zero biases.
    pub fn init(shape: NetShape, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(shape)?;
        let mut rng = seeds::rng(seed);
        for (l, (fan_in, fan_out)) in params.shape.layer_dims().into_iter().enumerate() {
            let bound = (6.0 / fan_in as f64).sqrt();
            let start = params.offsets[l];
            for w in &mut params.values[start..start + fan_in * fan_out] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(params)
    }

    pub fn from_values(shape: NetShape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.param_count() {
            return Err(Error::Contract(format!(
                "{} parameter values for a shape needing {}",
                values.len(),
                shape.param_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameter vector".into()));
        }
        let mut offsets = Vec::new();
        let mut at = 0;
        for (i, o) in shape.layer_dims() {
            offsets.push(at);
            at += i * o + o;
        }
        Ok(Self {
            shape,
            values,
            offsets,
            trained: false,
        })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Layer `l` counting embedding layers first.
    pub fn layer(&self, l: usize) -> LayerView<'_> {
        let (fan_in, fan_out) = self.shape.layer_dims()[l];
        let start = self.offsets[l];
        let mid = start + fan_in * fan_out;
        LayerView {
            weights: &self.values[start..mid],
            bias: &self.values[mid..mid + fan_out],
            fan_in,
            fan_out,
        }
    }

    /// Flat-vector range covered by layer `l`.
    pub fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        let (i, o) = self.shape.layer_dims()[l];
        self.offsets[l]..self.offsets[l] + i * o + o
    }

    pub(crate) fn offset(&self, l: usize) -> usize {
        self.offsets[l]
    }
}
