//! Parameter wiring for the model zoo.
//!
//! Parameters live in a flat, ordered [`ParamSet`]; the wire structs below
//! hold indices into it. Construction order is canonical per architecture,
//! so checkpoints, optimizer state, and gradient buffers all align by
//! position.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};

/// Ordered, named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.entries.push((name.into(), value));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn value(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor)> {
        self.entries.iter()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn set_tensors(&mut self, tensors: &[Tensor]) -> Result<()> {
        if tensors.len() != self.entries.len() {
            return Err(Error::invalid(format!(
                "set_tensors: {} tensors for {} parameters",
                tensors.len(),
                self.entries.len()
            )));
        }
        for ((name, slot), t) in self.entries.iter_mut().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::shape(format!(
                    "set_tensors: `{name}` expects {:?}, got {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(())
    }

    /// Record every parameter as a tape leaf, in order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// How to fill new parameters.
pub(crate) enum Init<'a> {
    Glorot(&'a mut Rng),
    /// Structural zeros; used when a checkpoint will overwrite the values.
    Zeros,
}

impl Init<'_> {
    fn weights(&mut self, fan_in: usize, fan_out: usize) -> Result<Tensor> {
        match self {
            Init::Glorot(rng) => Tensor::glorot_uniform(fan_in, fan_out, rng),
            Init::Zeros => Ok(Tensor::zeros(fan_in, fan_out)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DenseWires {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AffineWires {
    pub gamma: usize,
    pub beta: usize,
}

/// Residual block: dense -> layer norm -> relu, twice, plus the input.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockWires {
    pub fc1: DenseWires,
    pub ln1: AffineWires,
    pub fc2: DenseWires,
    pub ln2: AffineWires,
}

/// Shared feature extractor: stem projection into the block width, four
/// residual blocks, then a relu-activated feature layer.
#[derive(Debug, Clone)]
pub(crate) struct ExtractorWires {
    pub stem: DenseWires,
    pub blocks: Vec<BlockWires>,
    pub feat: DenseWires,
}

pub(crate) struct Builder<'a, 'b> {
    pub params: &'a mut ParamSet,
    pub init: &'a mut Init<'b>,
    pub prefix: String,
}

impl Builder<'_, '_> {
    fn name(&self, suffix: &str) -> String {
        if self.prefix.is_empty() {
            suffix.to_string()
        } else {
            format!("{}.{suffix}", self.prefix)
        }
    }

    pub fn dense(&mut self, suffix: &str, fan_in: usize, fan_out: usize) -> Result<DenseWires> {
        let w = self.init.weights(fan_in, fan_out)?;
        let w = self.params.push(self.name(&format!("{suffix}.w")), w);
        let b = self
            .params
            .push(self.name(&format!("{suffix}.b")), Tensor::zeros(1, fan_out));
        Ok(DenseWires { w, b })
    }

    /// Dense layer whose weights are forced positive (|Glorot| draw).
    ///
    /// Used for the scalar layers that sit on non-negative inputs: with
    /// predictions clamped into (0, 1) before the loss, a negative initial
    /// polarity would push every score into the clamp's dead zone and
    /// freeze training.
    pub fn dense_positive(
        &mut self,
        suffix: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<DenseWires> {
        let mut w = self.init.weights(fan_in, fan_out)?;
        for v in w.data_mut() {
            *v = v.abs();
        }
        let w = self.params.push(self.name(&format!("{suffix}.w")), w);
        let b = self
            .params
            .push(self.name(&format!("{suffix}.b")), Tensor::zeros(1, fan_out));
        Ok(DenseWires { w, b })
    }

    /// Dense layer with every weight at a fixed value and zero bias; used
    /// for the joint model's combiner, which starts as an averaging
    /// mechanism and barely moves at the fine-tune rate.
    pub fn dense_constant(
        &mut self,
        suffix: &str,
        fan_in: usize,
        fan_out: usize,
        weight: f64,
    ) -> Result<DenseWires> {
        let w = self
            .params
            .push(self.name(&format!("{suffix}.w")), Tensor::full(fan_in, fan_out, weight));
        let b = self
            .params
            .push(self.name(&format!("{suffix}.b")), Tensor::zeros(1, fan_out));
        Ok(DenseWires { w, b })
    }

    pub fn affine(&mut self, suffix: &str, width: usize) -> AffineWires {
        let gamma = self
            .params
            .push(self.name(&format!("{suffix}.gamma")), Tensor::full(1, width, 1.0));
        let beta = self
            .params
            .push(self.name(&format!("{suffix}.beta")), Tensor::zeros(1, width));
        AffineWires { gamma, beta }
    }

    pub fn block(&mut self, suffix: &str, width: usize) -> Result<BlockWires> {
        Ok(BlockWires {
            fc1: self.dense(&format!("{suffix}.fc1"), width, width)?,
            ln1: self.affine(&format!("{suffix}.ln1"), width),
            fc2: self.dense(&format!("{suffix}.fc2"), width, width)?,
            ln2: self.affine(&format!("{suffix}.ln2"), width),
        })
    }

    pub fn extractor(
        &mut self,
        input_width: usize,
        block_width: usize,
        n_blocks: usize,
        feat_out: usize,
    ) -> Result<ExtractorWires> {
        let stem = self.dense("stem", input_width, block_width)?;
        let blocks = (0..n_blocks)
            .map(|i| self.block(&format!("block{}", i + 1), block_width))
            .collect::<Result<Vec<_>>>()?;
        // A single-unit relu feature layer can draw a weight vector that
        // silences the unit for every input (the residual stream has a
        // non-negative coordinate-wise mean, so the sign of w . mean(h)
        // decides its life); the positive draw keeps it responsive.
        let feat = if feat_out == 1 {
            self.dense_positive("feat", block_width, feat_out)?
        } else {
            self.dense("feat", block_width, feat_out)?
        };
        Ok(ExtractorWires { stem, blocks, feat })
    }

    pub fn scalar(&mut self, suffix: &str, value: f64) -> usize {
        self.params.push(self.name(suffix), Tensor::scalar(value))
    }
}

/// Layer-norm epsilon used throughout the zoo.
pub const LN_EPS: f64 = 1e-5;
/// l2-normalization guard.
pub const L2_EPS: f64 = 1e-12;

pub(crate) fn dense_forward(
    tape: &mut Tape,
    vars: &[Var],
    wires: DenseWires,
    x: Var,
) -> Result<Var> {
    let h = tape.matmul(x, vars[wires.w])?;
    tape.add_rows(h, vars[wires.b])
}

/// `y = x + relu(ln2(fc2(relu(ln1(fc1(x))))))`, exactly this layer order.
pub(crate) fn block_forward(
    tape: &mut Tape,
    vars: &[Var],
    wires: &BlockWires,
    x: Var,
) -> Result<Var> {
    let h = dense_forward(tape, vars, wires.fc1, x)?;
    let h = tape.layer_norm(h, vars[wires.ln1.gamma], vars[wires.ln1.beta], LN_EPS)?;
    let h = tape.relu(h);
    let h = dense_forward(tape, vars, wires.fc2, h)?;
    let h = tape.layer_norm(h, vars[wires.ln2.gamma], vars[wires.ln2.beta], LN_EPS)?;
    let h = tape.relu(h);
    tape.add(x, h)
}

/// Stem projection followed by the residual blocks.
pub(crate) fn trunk_forward(
    tape: &mut Tape,
    vars: &[Var],
    stem: DenseWires,
    blocks: &[BlockWires],
    x: Var,
) -> Result<Var> {
    let mut h = dense_forward(tape, vars, stem, x)?;
    for block in blocks {
        h = block_forward(tape, vars, block, h)?;
    }
    Ok(h)
}

/// Stem, residual blocks, then the relu feature layer.
pub(crate) fn extractor_forward(
    tape: &mut Tape,
    vars: &[Var],
    wires: &ExtractorWires,
    x: Var,
) -> Result<Var> {
    let h = trunk_forward(tape, vars, wires.stem, &wires.blocks, x)?;
    let f = dense_forward(tape, vars, wires.feat, h)?;
    Ok(tape.relu(f))
}
