//! The model zoo: the base classifier and the four self-contrastive tiers.
//!
//! All five architectures share the residual block (dense -> layer norm ->
//! relu, twice, plus the input) and differ in what they compare:
//!
//! * `base` — all 44 features through a 256-wide trunk, sigmoid head;
//! * `lmwr` — each of 18 (skin, internal) points through one shared
//!   64-wide extractor to a scalar feature; all 153 unordered pair absolute
//!   differences are threshold-gated, averaged, and fed to a tanh head;
//! * `rmwr` — left and right 24-vectors through one shared 256-wide
//!   extractor; the l2-normalized embeddings' gated absolute difference is
//!   summed into a tanh head;
//! * `gmwr` — the same comparison between the full 44-vector and its
//!   breast-swapped counterpart;
//! * `jmwr` — the three pre-trained tiers, each score passed through its
//!   own 1-unit weighting layer, concatenated, and combined by a tanh head.
//!
//! Every model exposes an embedding hook: the comparison-stage vector for
//! the self-contrastive tiers (153-d for lmwr, 256-d for rmwr/gmwr, the 3-d
//! weighted score vector for jmwr) and the post-trunk activations for the
//! base model.

mod blocks;
mod checkpoint;

pub use blocks::{ParamSet, L2_EPS, LN_EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint, write_atomic, Checkpoint, CHECKPOINT_VERSION};

use serde::{Deserialize, Serialize};

use crate::data::{layout_global, layout_local, layout_regional, FEATURES};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{GateMode, ReduceKind, Tape, Tensor, Var};
use blocks::{
    dense_forward, extractor_forward, trunk_forward, Builder, DenseWires, ExtractorWires, Init,
};

/// Width of the base / regional / global trunks.
pub const WIDE: usize = 256;
/// Width of the local extractor.
pub const NARROW: usize = 64;
/// Residual blocks per trunk.
pub const N_BLOCKS: usize = 4;
/// Local-model inputs (points 0-8 of each breast) and their pair count.
pub const LOCAL_INPUTS: usize = 18;
pub const LOCAL_PAIRS: usize = LOCAL_INPUTS * (LOCAL_INPUTS - 1) / 2;
/// Soft threshold gate steepness.
pub const GATE_STEEPNESS: f64 = 10.0;
/// Rows per forward chunk during evaluation.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Base,
    Lmwr,
    Rmwr,
    Gmwr,
    Jmwr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Base,
        ModelKind::Lmwr,
        ModelKind::Rmwr,
        ModelKind::Gmwr,
        ModelKind::Jmwr,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Base => "base",
            ModelKind::Lmwr => "lmwr",
            ModelKind::Rmwr => "rmwr",
            ModelKind::Gmwr => "gmwr",
            ModelKind::Jmwr => "jmwr",
        }
    }

    /// Dimension of the exported embedding hook.
    pub fn embedding_dim(&self) -> usize {
        match self {
            ModelKind::Base => WIDE,
            ModelKind::Lmwr => LOCAL_PAIRS,
            ModelKind::Rmwr | ModelKind::Gmwr => WIDE,
            ModelKind::Jmwr => 3,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(ModelKind::Base),
            "lmwr" | "l-mwr" => Ok(ModelKind::Lmwr),
            "rmwr" | "r-mwr" => Ok(ModelKind::Rmwr),
            "gmwr" | "g-mwr" => Ok(ModelKind::Gmwr),
            "jmwr" | "j-mwr" => Ok(ModelKind::Jmwr),
            other => Err(Error::invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

struct BaseWires {
    stem: DenseWires,
    blocks: Vec<blocks::BlockWires>,
    head: DenseWires,
}

struct ContrastiveWires {
    extractor: ExtractorWires,
    threshold: usize,
    head: DenseWires,
}

struct JointWires {
    lmwr: ContrastiveWires,
    rmwr: ContrastiveWires,
    gmwr: ContrastiveWires,
    combine: [DenseWires; 3],
    head: DenseWires,
    /// First parameter index belonging to the newly initialized joint
    /// layers (everything before it is a pre-trained sub-model parameter).
    fresh_start: usize,
}

enum Wires {
    Base(BaseWires),
    Local(ContrastiveWires),
    Pairwise(ContrastiveWires),
    Joint(JointWires),
}

/// A named architecture with its parameters.
pub struct ModelBundle {
    pub kind: ModelKind,
    pub params: ParamSet,
    wires: Wires,
}

fn build_base(params: &mut ParamSet, init: &mut Init) -> Result<BaseWires> {
    let mut b = Builder { params, init, prefix: String::new() };
    let stem = b.dense("stem", FEATURES, WIDE)?;
    let blocks = (0..N_BLOCKS)
        .map(|i| b.block(&format!("block{}", i + 1), WIDE))
        .collect::<Result<Vec<_>>>()?;
    let head = b.dense("head", WIDE, 1)?;
    Ok(BaseWires { stem, blocks, head })
}

fn build_contrastive(
    params: &mut ParamSet,
    init: &mut Init,
    prefix: &str,
    input_width: usize,
    block_width: usize,
    feat_out: usize,
) -> Result<ContrastiveWires> {
    let ext_prefix = if prefix.is_empty() { "ext".to_string() } else { format!("{prefix}.ext") };
    let extractor = {
        let mut b = Builder { params, init, prefix: ext_prefix };
        b.extractor(input_width, block_width, N_BLOCKS, feat_out)?
    };
    let mut b = Builder { params, init, prefix: prefix.to_string() };
    // The threshold starts at zero: the gate initially passes (half of)
    // every positive difference, a "no filtering" starting point.
    let threshold = b.scalar("gate.threshold", 0.0);
    let head = b.dense_positive("head", 1, 1)?;
    Ok(ContrastiveWires { extractor, threshold, head })
}

fn build_kind(kind: ModelKind, params: &mut ParamSet, init: &mut Init) -> Result<Wires> {
    match kind {
        ModelKind::Base => Ok(Wires::Base(build_base(params, init)?)),
        ModelKind::Lmwr => Ok(Wires::Local(build_contrastive(params, init, "", 2, NARROW, 1)?)),
        ModelKind::Rmwr => {
            Ok(Wires::Pairwise(build_contrastive(params, init, "", 24, WIDE, WIDE)?))
        }
        ModelKind::Gmwr => {
            Ok(Wires::Pairwise(build_contrastive(params, init, "", FEATURES, WIDE, WIDE)?))
        }
        ModelKind::Jmwr => {
            let lmwr = build_contrastive(params, init, "lmwr", 2, NARROW, 1)?;
            let rmwr = build_contrastive(params, init, "rmwr", 24, WIDE, WIDE)?;
            let gmwr = build_contrastive(params, init, "gmwr", FEATURES, WIDE, WIDE)?;
            let fresh_start = params.len();
            let mut b = Builder { params, init, prefix: String::new() };
            // Unit per-tier weightings and an averaging head: at the
            // fine-tune rate the combiner stays near this starting point,
            // so it must already be the score-averaging mechanism.
            let combine = [
                b.dense_constant("combine.l", 1, 1, 1.0)?,
                b.dense_constant("combine.r", 1, 1, 1.0)?,
                b.dense_constant("combine.g", 1, 1, 1.0)?,
            ];
            let head = b.dense_constant("head", 3, 1, 1.0 / 3.0)?;
            Ok(Wires::Joint(JointWires { lmwr, rmwr, gmwr, combine, head, fresh_start }))
        }
    }
}

impl ModelBundle {
    /// Fresh Glorot-initialized model (biases zero, layer-norm affine at
    /// identity, gate threshold zero).
    pub fn new(kind: ModelKind, rng: &mut Rng) -> Result<ModelBundle> {
        let mut params = ParamSet::new();
        let mut init = Init::Glorot(rng);
        let wires = build_kind(kind, &mut params, &mut init)?;
        Ok(ModelBundle { kind, params, wires })
    }

    /// Structure with zeroed parameters; used by checkpoint loading.
    pub(crate) fn new_zeroed(kind: ModelKind) -> Result<ModelBundle> {
        let mut params = ParamSet::new();
        let mut init = Init::Zeros;
        let wires = build_kind(kind, &mut params, &mut init)?;
        Ok(ModelBundle { kind, params, wires })
    }

    /// Joint model over three pre-trained sub-models. The sub-model
    /// parameters are copied in; the per-tier weighting layers and the
    /// final head are freshly initialized.
    pub fn new_joint(
        lmwr: &ModelBundle,
        rmwr: &ModelBundle,
        gmwr: &ModelBundle,
        rng: &mut Rng,
    ) -> Result<ModelBundle> {
        for (bundle, want) in [
            (lmwr, ModelKind::Lmwr),
            (rmwr, ModelKind::Rmwr),
            (gmwr, ModelKind::Gmwr),
        ] {
            if bundle.kind != want {
                return Err(Error::config(format!(
                    "new_joint: expected a {want} sub-model, got {}",
                    bundle.kind
                )));
            }
        }
        let mut joint = ModelBundle::new(ModelKind::Jmwr, rng)?;
        let mut cursor = 0;
        for sub in [lmwr, rmwr, gmwr] {
            for i in 0..sub.params.len() {
                *joint.params.value_mut(cursor) = sub.params.value(i).clone();
                cursor += 1;
            }
        }
        debug_assert_eq!(cursor, joint.fine_tune_boundary().unwrap());
        Ok(joint)
    }

    /// For the joint model: index of the first freshly initialized
    /// parameter (the weighting layers and head). `None` for other kinds.
    pub fn fine_tune_boundary(&self) -> Option<usize> {
        match &self.wires {
            Wires::Joint(j) => Some(j.fresh_start),
            _ => None,
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.bind(tape)
    }

    /// Forward pass over a prepared batch; `vars` are the bound parameters
    /// in canonical order (usually from [`ModelBundle::bind`]).
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        inputs: &BatchInputs,
    ) -> Result<ForwardOut> {
        if vars.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "forward: {} bound vars for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        match (&self.wires, inputs) {
            (Wires::Base(w), BatchInputs::Base(x)) => base_forward(tape, vars, w, x),
            (Wires::Local(w), BatchInputs::Local { stacked, batch }) => {
                local_forward(tape, vars, w, stacked, *batch)
            }
            (Wires::Pairwise(w), BatchInputs::Pair { first, second }) => {
                pairwise_forward(tape, vars, w, first, second)
            }
            (Wires::Joint(w), BatchInputs::Joint(j)) => joint_forward(tape, vars, w, j),
            _ => Err(Error::invalid(format!(
                "forward: inputs do not match a {} model",
                self.kind
            ))),
        }
    }

    /// Scores for a normalized feature matrix, evaluated in fixed-size
    /// chunks (deterministic and memory-bounded).
    pub fn scores(&self, features: &[[f64; FEATURES]]) -> Result<Vec<f64>> {
        Ok(self.scores_and_embeddings(features)?.0)
    }

    /// Scores and embedding-hook rows for a normalized feature matrix.
    pub fn scores_and_embeddings(
        &self,
        features: &[[f64; FEATURES]],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut scores = Vec::with_capacity(features.len());
        let mut embeddings = Vec::with_capacity(features.len());
        for chunk in features.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let inputs = build_inputs(self.kind, chunk)?;
            let out = self.forward(&mut tape, &vars, &inputs)?;
            let score_t = tape.value(out.score);
            let emb_t = tape.value(out.embedding);
            for i in 0..chunk.len() {
                scores.push(score_t.get(i, 0));
                embeddings.push(emb_t.row_slice(i).to_vec());
            }
        }
        Ok((scores, embeddings))
    }
}

/// One prepared batch of model inputs.
pub enum BatchInputs {
    /// n x 44 feature rows.
    Base(Tensor),
    /// The 18 per-point two-vectors of every sample, stacked sample-major
    /// into an (18 n) x 2 matrix.
    Local { stacked: Tensor, batch: usize },
    /// Two n x d input matrices fed to the shared extractor.
    Pair { first: Tensor, second: Tensor },
    Joint(JointInputs),
}

pub struct JointInputs {
    pub local_stacked: Tensor,
    pub batch: usize,
    pub left: Tensor,
    pub right: Tensor,
    pub original: Tensor,
    pub swapped: Tensor,
}

/// Assemble the inputs a model kind consumes from normalized 44-vectors.
pub fn build_inputs(kind: ModelKind, features: &[[f64; FEATURES]]) -> Result<BatchInputs> {
    if features.is_empty() {
        return Err(Error::invalid("build_inputs: empty batch"));
    }
    let n = features.len();
    match kind {
        ModelKind::Base => {
            let rows: Vec<Vec<f64>> = features.iter().map(|f| f.to_vec()).collect();
            Ok(BatchInputs::Base(Tensor::from_rows(&rows)?))
        }
        ModelKind::Lmwr => Ok(BatchInputs::Local { stacked: stack_local(features)?, batch: n }),
        ModelKind::Rmwr => {
            let (left, right) = regional_pair(features)?;
            Ok(BatchInputs::Pair { first: left, second: right })
        }
        ModelKind::Gmwr => {
            let (original, swapped) = global_pair(features)?;
            Ok(BatchInputs::Pair { first: original, second: swapped })
        }
        ModelKind::Jmwr => {
            let (left, right) = regional_pair(features)?;
            let (original, swapped) = global_pair(features)?;
            Ok(BatchInputs::Joint(JointInputs {
                local_stacked: stack_local(features)?,
                batch: n,
                left,
                right,
                original,
                swapped,
            }))
        }
    }
}

/// Global-model inputs from an explicit (original, swapped) pair of feature
/// matrices; rejects a second input that is not the breast swap of the
/// first.
pub fn global_pair_checked(original: &Tensor, swapped: &Tensor) -> Result<BatchInputs> {
    if original.shape() != swapped.shape() || original.cols() != FEATURES {
        return Err(Error::shape(format!(
            "global_pair_checked: expected matching n x {FEATURES} matrices, got {:?} and {:?}",
            original.shape(),
            swapped.shape()
        )));
    }
    for i in 0..original.rows() {
        let mut row = [0.0; FEATURES];
        row.copy_from_slice(original.row_slice(i));
        let expect = crate::data::swap_features(&row);
        if swapped.row_slice(i) != expect {
            return Err(Error::invalid(format!(
                "global_pair_checked: row {i} of the second input is not the breast swap of the first"
            )));
        }
    }
    Ok(BatchInputs::Pair { first: original.clone(), second: swapped.clone() })
}

fn stack_local(features: &[[f64; FEATURES]]) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(features.len() * LOCAL_INPUTS);
    for f in features {
        for pair in layout_local(f) {
            rows.push(pair.to_vec());
        }
    }
    Tensor::from_rows(&rows)
}

fn regional_pair(features: &[[f64; FEATURES]]) -> Result<(Tensor, Tensor)> {
    let mut left = Vec::with_capacity(features.len());
    let mut right = Vec::with_capacity(features.len());
    for f in features {
        let (l, r) = layout_regional(f);
        left.push(l.to_vec());
        right.push(r.to_vec());
    }
    Ok((Tensor::from_rows(&left)?, Tensor::from_rows(&right)?))
}

fn global_pair(features: &[[f64; FEATURES]]) -> Result<(Tensor, Tensor)> {
    let mut orig = Vec::with_capacity(features.len());
    let mut swap = Vec::with_capacity(features.len());
    for f in features {
        let (o, s) = layout_global(f);
        orig.push(o.to_vec());
        swap.push(s.to_vec());
    }
    Ok((Tensor::from_rows(&orig)?, Tensor::from_rows(&swap)?))
}

/// Result of a batch forward: per-sample scores (n x 1) and the embedding
/// hook (n x d).
pub struct ForwardOut {
    pub score: Var,
    pub embedding: Var,
}

fn base_forward(tape: &mut Tape, vars: &[Var], w: &BaseWires, x: &Tensor) -> Result<ForwardOut> {
    if x.cols() != FEATURES {
        return Err(Error::shape(format!(
            "base: expected {FEATURES} features, got {}",
            x.cols()
        )));
    }
    let xv = tape.leaf(x.clone());
    let emb = trunk_forward(tape, vars, w.stem, &w.blocks, xv)?;
    let logits = dense_forward(tape, vars, w.head, emb)?;
    let score = tape.sigmoid(logits);
    Ok(ForwardOut { score, embedding: emb })
}

/// 18 x 153 pair selector matrices, transposed for right-multiplication:
/// pairs are enumerated i < j lexicographically over the documented input
/// order (left points 0-8, then right points 0-8).
fn local_pair_selectors() -> (Tensor, Tensor) {
    let mut first = Tensor::zeros(LOCAL_INPUTS, LOCAL_PAIRS);
    let mut second = Tensor::zeros(LOCAL_INPUTS, LOCAL_PAIRS);
    let mut k = 0;
    for i in 0..LOCAL_INPUTS {
        for j in (i + 1)..LOCAL_INPUTS {
            first.set(i, k, 1.0);
            second.set(j, k, 1.0);
            k += 1;
        }
    }
    debug_assert_eq!(k, LOCAL_PAIRS);
    (first, second)
}

fn local_forward(
    tape: &mut Tape,
    vars: &[Var],
    w: &ContrastiveWires,
    stacked: &Tensor,
    batch: usize,
) -> Result<ForwardOut> {
    if stacked.cols() != 2 || stacked.rows() != batch * LOCAL_INPUTS {
        return Err(Error::shape(format!(
            "lmwr: expected ({batch} * {LOCAL_INPUTS}) x 2 stacked inputs, got {:?}",
            stacked.shape()
        )));
    }
    let xv = tape.leaf(stacked.clone());
    // One shared extractor maps every (skin, internal) pair to a scalar.
    let feats = extractor_forward(tape, vars, &w.extractor, xv)?;
    let per_sample = tape.reshape(feats, batch, LOCAL_INPUTS)?;
    let (sel_a, sel_b) = local_pair_selectors();
    let sel_a = tape.leaf(sel_a);
    let sel_b = tape.leaf(sel_b);
    let a = tape.matmul(per_sample, sel_a)?;
    let b = tape.matmul(per_sample, sel_b)?;
    let diff = tape.sub(a, b)?;
    let diff = tape.abs(diff);
    let gated = tape.threshold_gate(diff, vars[w.threshold], GateMode::Soft, GATE_STEEPNESS)?;
    let mean = tape.reduce_rows(gated, ReduceKind::Mean)?;
    let logits = dense_forward(tape, vars, w.head, mean)?;
    let score = tape.tanh(logits);
    Ok(ForwardOut { score, embedding: gated })
}

fn pairwise_forward(
    tape: &mut Tape,
    vars: &[Var],
    w: &ContrastiveWires,
    first: &Tensor,
    second: &Tensor,
) -> Result<ForwardOut> {
    if first.shape() != second.shape() {
        return Err(Error::shape(format!(
            "pairwise: input shapes {:?} and {:?} differ",
            first.shape(),
            second.shape()
        )));
    }
    let a = tape.leaf(first.clone());
    let b = tape.leaf(second.clone());
    // Shared weights: the same extractor wires run both inputs.
    let ea = extractor_forward(tape, vars, &w.extractor, a)?;
    let eb = extractor_forward(tape, vars, &w.extractor, b)?;
    let ea = tape.l2_normalize_rows(ea, L2_EPS);
    let eb = tape.l2_normalize_rows(eb, L2_EPS);
    let diff = tape.sub(ea, eb)?;
    let diff = tape.abs(diff);
    let gated = tape.threshold_gate(diff, vars[w.threshold], GateMode::Soft, GATE_STEEPNESS)?;
    let sum = tape.reduce_rows(gated, ReduceKind::Sum)?;
    let logits = dense_forward(tape, vars, w.head, sum)?;
    let score = tape.tanh(logits);
    Ok(ForwardOut { score, embedding: gated })
}

fn joint_forward(
    tape: &mut Tape,
    vars: &[Var],
    w: &JointWires,
    inputs: &JointInputs,
) -> Result<ForwardOut> {
    let l = local_forward(tape, vars, &w.lmwr, &inputs.local_stacked, inputs.batch)?;
    let r = pairwise_forward(tape, vars, &w.rmwr, &inputs.left, &inputs.right)?;
    let g = pairwise_forward(tape, vars, &w.gmwr, &inputs.original, &inputs.swapped)?;
    let weighted = [
        dense_forward(tape, vars, w.combine[0], l.score)?,
        dense_forward(tape, vars, w.combine[1], r.score)?,
        dense_forward(tape, vars, w.combine[2], g.score)?,
    ];
    let features = tape.concat_cols(&weighted)?;
    let logits = dense_forward(tape, vars, w.head, features)?;
    let score = tape.tanh(logits);
    Ok(ForwardOut { score, embedding: features })
}

#[cfg(test)]
mod tests;
