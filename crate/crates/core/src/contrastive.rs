//! Contrastive warm-up: a two-layer feature encoder over Infomax vectors,
//! temperature-scaled cosine density ratios, and the InfoNCE objective
//! combined with BPR into the warm-up loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{glorot_init, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{KirsError, Result};

/// Default number of in-batch negatives per anchor.
pub const DEFAULT_NEGATIVES: usize = 127;

/// The two-layer encoder `W₅(ReLU(W₄d + b₄)) + b₅` mapping an Infomax
/// vector into item-embedding space.
pub struct ContrastiveEncoder {
    pub w4: ParamId,
    pub b4: ParamId,
    pub w5: ParamId,
    pub b5: ParamId,
    input_dim: usize,
    output_dim: usize,
}

impl ContrastiveEncoder {
    /// Hidden width equals the input width; output width must match the
    /// item-embedding dimension so anchors and encodings are comparable.
    pub fn init(store: &mut ParamStore, input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let hidden = input_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w4 = store.insert("enc_w4", glorot_init(&mut rng, hidden, input_dim));
        let b4 = store.insert("enc_b4", Tensor::zeros(1, hidden));
        let w5 = store.insert("enc_w5", glorot_init(&mut rng, output_dim, hidden));
        let b5 = store.insert("enc_b5", Tensor::zeros(1, output_dim));
        ContrastiveEncoder {
            w4,
            b4,
            w5,
            b5,
            input_dim,
            output_dim,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w4, self.b4, self.w5, self.b5]
    }

    /// Encode a single vector without gradients.
    pub fn encode(&self, store: &ParamStore, d: &[f64]) -> Result<Vec<f64>> {
        if d.len() != self.input_dim {
            return Err(KirsError::contract(format!(
                "encoder input dim {} != expected {}",
                d.len(),
                self.input_dim
            )));
        }
        let w4 = store.value(self.w4);
        let b4 = store.value(self.b4);
        let w5 = store.value(self.w5);
        let b5 = store.value(self.b5);
        let mut hidden = vec![0.0; w4.rows()];
        for (h, out) in hidden.iter_mut().enumerate() {
            let row = w4.row(h);
            let z: f64 = row.iter().zip(d.iter()).map(|(a, b)| a * b).sum::<f64>() + b4.data()[h];
            *out = z.max(0.0);
        }
        let mut out = vec![0.0; self.output_dim];
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = w5.row(o);
            *out_v =
                row.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>() + b5.data()[o];
        }
        Ok(out)
    }

    /// Encode a batch of rows on the tape: ReLU(D·W₄ᵀ + b₄)·W₅ᵀ + b₅.
    pub fn encode_on_tape(&self, tape: &mut Tape, store: &ParamStore, d_rows: Var) -> EncoderVars {
        let w4 = tape.leaf(store.value(self.w4).clone());
        let b4 = tape.leaf(store.value(self.b4).clone());
        let w5 = tape.leaf(store.value(self.w5).clone());
        let b5 = tape.leaf(store.value(self.b5).clone());
        let z1 = tape.matmul_nt(d_rows, w4);
        let z1b = tape.add_row_broadcast(z1, b4);
        let h = tape.relu(z1b);
        let z2 = tape.matmul_nt(h, w5);
        let encoded = tape.add_row_broadcast(z2, b5);
        EncoderVars {
            encoded,
            w4,
            b4,
            w5,
            b5,
        }
    }
}

/// Tape bindings for one encoded batch.
pub struct EncoderVars {
    pub encoded: Var,
    pub w4: Var,
    pub b4: Var,
    pub w5: Var,
    pub b5: Var,
}

impl EncoderVars {
    pub fn grad_targets(&self, enc: &ContrastiveEncoder) -> Vec<(ParamId, Var)> {
        vec![
            (enc.w4, self.w4),
            (enc.b4, self.b4),
            (enc.w5, self.w5),
            (enc.b5, self.b5),
        ]
    }
}

/// exp(cos(i, c)/τ). Both vectors must be nonzero and τ positive.
pub fn density_ratio(i: &[f64], c: &[f64], tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Err(KirsError::contract("temperature must be positive"));
    }
    let ni: f64 = i.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nc: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ni == 0.0 || nc == 0.0 {
        return Err(KirsError::contract(
            "density ratio of a zero vector is undefined",
        ));
    }
    let dot: f64 = i.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
    Ok((dot / (ni * nc) / tau).exp())
}

/// One anchor's InfoNCE term from raw cosine scores:
/// −ln( e^{s⁺/τ} / (e^{s⁺/τ} + Σ e^{sⱼ/τ}) ). The positive term is included
/// in the denominator, keeping the loss nonnegative.
pub fn infonce_from_cosines(positive: f64, negatives: &[f64], tau: f64) -> Result<f64> {
    if negatives.is_empty() {
        return Err(KirsError::contract("InfoNCE needs at least one negative"));
    }
    if tau <= 0.0 {
        return Err(KirsError::contract("temperature must be positive"));
    }
    let scores: Vec<f64> = std::iter::once(positive / tau)
        .chain(negatives.iter().map(|&s| s / tau))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(lse - scores[0])
}

/// Mean InfoNCE over anchors, without gradients. `anchors[k]` pairs with
/// `candidates[k]` as its positive; all other candidate rows and the extra
/// negatives drawn per anchor are in-batch negatives, capped at `max_neg`.
pub fn infonce_loss(
    anchors: &[Vec<f64>],
    candidates: &[Vec<f64>],
    tau: f64,
    max_neg: usize,
) -> Result<f64> {
    if anchors.len() != candidates.len() || anchors.is_empty() {
        return Err(KirsError::contract(
            "anchors and candidates must align and be nonempty",
        ));
    }
    if anchors.len() < 2 {
        return Err(KirsError::contract("InfoNCE needs at least one negative"));
    }
    let mut total = 0.0;
    for (a, anchor) in anchors.iter().enumerate() {
        let pos = cosine(anchor, &candidates[a])?;
        let negs: Vec<f64> = (0..candidates.len())
            .filter(|&j| j != a)
            .take(max_neg)
            .map(|j| cosine(anchor, &candidates[j]))
            .collect::<Result<_>>()?;
        total += infonce_from_cosines(pos, &negs, tau)?;
    }
    Ok(total / anchors.len() as f64)
}

/// The final warm-up objective L_w = L_r + L_con (unweighted sum).
pub fn warmup_loss(bpr: f64, infonce: f64) -> f64 {
    bpr + infonce
}

/// Tape-side mean InfoNCE: anchors are item-embedding rows, candidates the
/// encoded Infomax rows, positive k ↔ k.
pub fn infonce_on_tape(
    tape: &mut Tape,
    anchor_rows: Var,
    candidate_rows: Var,
    tau: f64,
    max_neg: usize,
) -> Var {
    let n = tape.value(anchor_rows).rows();
    assert_eq!(n, tape.value(candidate_rows).rows(), "anchor/candidate count");
    assert!(n >= 2, "InfoNCE needs at least one negative in the batch");

    let mut anchor_norm = Vec::with_capacity(n);
    let mut cand_norm = Vec::with_capacity(n);
    for k in 0..n {
        let a = tape.mean_rows(anchor_rows, k, k + 1);
        let c = tape.mean_rows(candidate_rows, k, k + 1);
        anchor_norm.push((a, tape.l2_norm(a)));
        cand_norm.push((c, tape.l2_norm(c)));
    }

    let mut terms = Vec::with_capacity(n);
    for a in 0..n {
        let (av, an) = anchor_norm[a];
        let mut scores = Vec::new();
        let mut push_score = |tape: &mut Tape, j: usize| {
            let (cv, cn) = cand_norm[j];
            let dot = tape.dot(av, cv);
            let denom = tape.smul(an, cn);
            let cos = tape.sdiv(dot, denom);
            scores.push(tape.scale(cos, 1.0 / tau));
        };
        push_score(tape, a);
        for j in (0..n).filter(|&j| j != a).take(max_neg) {
            push_score(tape, j);
        }
        let stacked = tape.stack_scalars(scores);
        let lse = tape.logsumexp(stacked);
        // lse − s⁺ (s⁺ is the first stacked coordinate).
        let first = first_coordinate(tape, stacked);
        terms.push(tape.sub(lse, first));
    }
    let total = tape.sum_nodes(terms);
    tape.scale(total, 1.0 / n as f64)
}

/// Extract coordinate 0 of a vector node (differentiably).
fn first_coordinate(tape: &mut Tape, v: Var) -> Var {
    let len = tape.value(v).len();
    let mut mask = vec![0.0; len];
    mask[0] = 1.0;
    let m = tape.leaf(Tensor::from_vec(mask));
    tape.dot(v, m)
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(KirsError::contract(
            "cosine of a zero vector is undefined",
        ));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}
