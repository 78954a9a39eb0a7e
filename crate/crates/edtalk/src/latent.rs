//! Component-aware latent navigation: jointly orthonormal basis banks for
//! mouth / pose / expression, weight-prediction heads, and the weighted-sum
//! navigation that turns weights into latent motion offsets.
//!
//! All three banks are rows of one shared raw parameter matrix. Orthonormality
//! is enforced by construction with a differentiable modified Gram-Schmidt
//! pass in fixed order (mouth, pose, expression), so inter-bank orthogonality
//! holds exactly for every reachable parameter state, and later banks never
//! perturb earlier ones.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{EdTalkError, Result};
use crate::nn::{self, Graph, ParamStore};
use crate::tape::Var;

pub const RAW_BANK_PARAM: &str = "banks.raw";

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BankLabel {
    Mouth,
    Pose,
    Expression,
}

impl BankLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BankLabel::Mouth => "mouth",
            BankLabel::Pose => "pose",
            BankLabel::Expression => "expression",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LatentRole {
    TowardCanonical,
    FromCanonical,
    Combined,
    Driven,
}

#[derive(Clone, Debug)]
pub struct LatentVector {
    pub role: LatentRole,
    pub values: Array1<f64>,
}

impl LatentVector {
    pub fn new(role: LatentRole, values: Array1<f64>) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(EdTalkError::Numerical("non-finite latent".into()));
        }
        Ok(Self { role, values })
    }

    pub fn zeros(role: LatentRole, d: usize) -> Self {
        Self {
            role,
            values: Array1::zeros(d),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MotionWeights {
    pub label: BankLabel,
    pub values: Array1<f64>,
}

impl MotionWeights {
    pub fn new(label: BankLabel, values: Array1<f64>) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(EdTalkError::Numerical("non-finite weights".into()));
        }
        Ok(Self { label, values })
    }
}

/// One bank's orthonormal bases, sliced out of the shared matrix.
#[derive(Clone, Debug)]
pub struct BasisBank {
    pub label: BankLabel,
    pub bases: Array2<f64>,
}

/// All three banks derived from the shared raw matrix.
#[derive(Clone, Debug)]
pub struct Banks {
    pub bases: Array2<f64>, // n_total x d, orthonormal rows
    pub n_mouth: usize,
    pub n_pose: usize,
    pub n_expression: usize,
}

impl Banks {
    pub fn bank(&self, label: BankLabel) -> BasisBank {
        let (start, n) = self.range(label);
        BasisBank {
            label,
            bases: self.bases.slice(ndarray::s![start..start + n, ..]).to_owned(),
        }
    }

    pub fn range(&self, label: BankLabel) -> (usize, usize) {
        match label {
            BankLabel::Mouth => (0, self.n_mouth),
            BankLabel::Pose => (self.n_mouth, self.n_pose),
            BankLabel::Expression => (self.n_mouth + self.n_pose, self.n_expression),
        }
    }

    pub fn size(&self, label: BankLabel) -> usize {
        self.range(label).1
    }
}

/// Modified Gram-Schmidt on plain arrays. Returns orthonormal rows.
fn mgs(raw: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, d) = raw.dim();
    if n > d {
        return Err(EdTalkError::Dimension(format!(
            "cannot orthonormalize {n} rows in dimension {d}"
        )));
    }
    let mut q = raw.clone();
    for i in 0..n {
        for j in 0..i {
            let qj = q.row(j).to_owned();
            let c = q.row(i).dot(&qj);
            let ri = &q.row(i) - &(qj * c);
            q.row_mut(i).assign(&ri);
        }
        let norm = q.row(i).dot(&q.row(i)).sqrt();
        if !norm.is_finite() || norm < 1e-10 {
            return Err(EdTalkError::Numerical(format!(
                "rank-deficient raw bank matrix at row {i}"
            )));
        }
        let ri = &q.row(i) / norm;
        q.row_mut(i).assign(&ri);
    }
    Ok(q)
}

/// Orthonormalize the shared raw matrix, with a small diagonal jitter retry
/// when near-singular.
pub fn orthonormalize(raw: &Array2<f64>) -> Result<Array2<f64>> {
    match mgs(raw) {
        Ok(q) => Ok(q),
        Err(EdTalkError::Dimension(e)) => Err(EdTalkError::Dimension(e)),
        Err(_) => {
            let mut jittered = raw.clone();
            let (n, _) = raw.dim();
            for i in 0..n {
                jittered[(i, i)] += 1e-8;
            }
            mgs(&jittered)
        }
    }
}

/// Differentiable modified Gram-Schmidt on the tape; same math as
/// [`orthonormalize`] minus the jitter retry (callers check singularity on
/// values first). Returns an (n_total, d) node.
pub fn orthonormalize_var(g: &mut Graph, raw: Var) -> Var {
    let shape = g.tape.value(raw).shape().to_vec();
    let (n, d) = (shape[0], shape[1]);
    assert!(n <= d, "raw bank matrix has more rows than dimensions");
    let mut rows: Vec<Var> = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = g.tape.slice_axis(raw, 0, i, i + 1); // (1, d)
        for &qj in rows.iter().take(i) {
            let prod = g.tape.mul(r, qj);
            let c = g.tape.sum(prod);
            let proj = g.tape.mul(qj, c);
            r = g.tape.sub(r, proj);
        }
        let sq = g.tape.sq_norm(r);
        let norm = g.tape.sqrt(sq);
        let q = g.tape.div(r, norm);
        rows.push(q);
    }
    g.tape.concat(&rows, 0)
}

/// Initialize the shared raw bank matrix and the three weight heads.
pub fn init_params(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) {
    let n_total = cfg.bank_sizes.total();
    let d = cfg.latent_dim;
    store.insert(RAW_BANK_PARAM, nn::randn(rng, &[n_total, d], 1.0));
    for label in [BankLabel::Mouth, BankLabel::Pose, BankLabel::Expression] {
        let n = match label {
            BankLabel::Mouth => cfg.bank_sizes.mouth,
            BankLabel::Pose => cfg.bank_sizes.pose,
            BankLabel::Expression => cfg.bank_sizes.expression,
        };
        let name = head_name(label);
        nn::init_linear(store, &format!("{name}.l1"), d, d, rng);
        nn::init_linear(store, &format!("{name}.l2"), n, d, rng);
    }
}

pub fn head_name(label: BankLabel) -> String {
    format!("head.{}", label.as_str())
}

/// Current banks from the store (orthonormalized raw matrix).
pub fn banks_from_store(store: &ParamStore, cfg: &ModelConfig) -> Result<Banks> {
    let raw = store
        .get(RAW_BANK_PARAM)
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("raw bank matrix is 2-d")
        .to_owned();
    Ok(Banks {
        bases: orthonormalize(&raw)?,
        n_mouth: cfg.bank_sizes.mouth,
        n_pose: cfg.bank_sizes.pose,
        n_expression: cfg.bank_sizes.expression,
    })
}

/// Weight-prediction head on the tape: two affine layers with tanh between.
/// `latent` is (B, d); output (B, n).
pub fn head_fwd(g: &mut Graph, label: BankLabel, latent: Var) -> Var {
    let name = head_name(label);
    let h = nn::linear_fwd(g, &format!("{name}.l1"), latent);
    let h = g.tape.tanh(h);
    nn::linear_fwd(g, &format!("{name}.l2"), h)
}

/// Head -> weights -> weighted basis sum, on the tape.
/// `banks_var` is the orthonormalized (n_total, d) node; output (B, d).
pub fn navigate_fwd(
    g: &mut Graph,
    label: BankLabel,
    latent: Var,
    banks_var: Var,
    sizes: &crate::config::BankSizes,
) -> Var {
    let w = head_fwd(g, label, latent);
    navigate_weights_fwd(g, label, w, banks_var, sizes)
}

/// Weighted basis sum for precomputed weights (B, n) -> (B, d).
pub fn navigate_weights_fwd(
    g: &mut Graph,
    label: BankLabel,
    weights: Var,
    banks_var: Var,
    sizes: &crate::config::BankSizes,
) -> Var {
    let (start, n) = match label {
        BankLabel::Mouth => (0, sizes.mouth),
        BankLabel::Pose => (sizes.mouth, sizes.pose),
        BankLabel::Expression => (sizes.mouth + sizes.pose, sizes.expression),
    };
    let bank = g.tape.slice_axis(banks_var, 0, start, start + n);
    g.tape.matmul(weights, bank)
}

/// Evaluate a weight head on plain values.
pub fn predict_weights(
    store: &ParamStore,
    label: BankLabel,
    latent: &LatentVector,
) -> Result<MotionWeights> {
    if latent.role != LatentRole::TowardCanonical {
        return Err(EdTalkError::Label(
            "predict_weights expects a toward-canonical latent".into(),
        ));
    }
    let name = head_name(label);
    let d_expected = store.get(&format!("{name}.l1.w")).shape()[1];
    if latent.values.len() != d_expected {
        return Err(EdTalkError::Dimension(format!(
            "latent length {} != {d_expected}",
            latent.values.len()
        )));
    }
    let mut g = Graph::new(store);
    let x = g.constant(
        latent
            .values
            .clone()
            .into_shape((1, latent.values.len()))
            .expect("latent reshape")
            .into_dyn(),
    );
    let y = head_fwd(&mut g, label, x);
    let out = g.tape.value(y).iter().cloned().collect::<Array1<f64>>();
    MotionWeights::new(label, out)
}

/// f^{r->*} = sum_i w_i b_i.
pub fn navigate(bank: &BasisBank, weights: &MotionWeights) -> Result<LatentVector> {
    if bank.label != weights.label {
        return Err(EdTalkError::Label(format!(
            "bank {} vs weights {}",
            bank.label.as_str(),
            weights.label.as_str()
        )));
    }
    if bank.bases.nrows() != weights.values.len() {
        return Err(EdTalkError::Dimension(format!(
            "bank has {} bases, weights length {}",
            bank.bases.nrows(),
            weights.values.len()
        )));
    }
    LatentVector::new(LatentRole::FromCanonical, weights.values.dot(&bank.bases))
}

/// Recover a bank's weights from a latent by projection onto its rows.
pub fn project(bank: &BasisBank, latent: &Array1<f64>) -> Result<MotionWeights> {
    if bank.bases.ncols() != latent.len() {
        return Err(EdTalkError::Dimension(format!(
            "latent length {} != basis dim {}",
            latent.len(),
            bank.bases.ncols()
        )));
    }
    MotionWeights::new(bank.label, bank.bases.dot(latent))
}

/// f^{r->d} = f^{r->m} + f^{r->p} + f^{r->e}.
pub fn combine_motion(
    f_m: &LatentVector,
    f_p: &LatentVector,
    f_e: &LatentVector,
) -> Result<LatentVector> {
    for f in [f_m, f_p, f_e] {
        if f.role != LatentRole::FromCanonical {
            return Err(EdTalkError::Label(
                "combine_motion expects from-canonical latents".into(),
            ));
        }
    }
    if f_m.values.len() != f_p.values.len() || f_p.values.len() != f_e.values.len() {
        return Err(EdTalkError::Dimension("combine_motion length mismatch".into()));
    }
    LatentVector::new(
        LatentRole::Combined,
        &f_m.values + &f_p.values + &f_e.values,
    )
}

/// alpha * W1 + (1 - alpha) * W2 over expression weights.
pub fn interpolate_expression(
    w1: &MotionWeights,
    w2: &MotionWeights,
    alpha: f64,
) -> Result<MotionWeights> {
    if w1.label != BankLabel::Expression || w2.label != BankLabel::Expression {
        return Err(EdTalkError::Label(
            "interpolate_expression expects expression weights".into(),
        ));
    }
    if w1.values.len() != w2.values.len() {
        return Err(EdTalkError::Dimension("weight length mismatch".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(EdTalkError::Range(format!("alpha {alpha} outside [0,1]")));
    }
    if alpha == 1.0 {
        return Ok(w1.clone());
    }
    if alpha == 0.0 {
        return Ok(w2.clone());
    }
    MotionWeights::new(
        BankLabel::Expression,
        &w1.values * alpha + &w2.values * (1.0 - alpha),
    )
}

/// Max off-diagonal |<b_i, b_j>| over all bases (the joint orthogonality gauge).
pub fn max_off_diagonal_dot(bases: &Array2<f64>) -> f64 {
    let gram = bases.dot(&bases.t());
    let n = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.max(gram[(i, j)].abs());
            }
        }
    }
    worst
}

/// Row-trainability mask for the shared raw matrix: only `label`'s rows update.
pub fn bank_row_mask(sizes: &crate::config::BankSizes, trainable: &[BankLabel]) -> Vec<bool> {
    let mut mask = vec![false; sizes.total()];
    for label in trainable {
        let (start, n) = match label {
            BankLabel::Mouth => (0, sizes.mouth),
            BankLabel::Pose => (sizes.mouth, sizes.pose),
            BankLabel::Expression => (sizes.mouth + sizes.pose, sizes.expression),
        };
        for m in mask.iter_mut().skip(start).take(n) {
            *m = true;
        }
    }
    mask
}

pub fn raw_from_store(store: &ParamStore) -> Array2<f64> {
    store
        .get(RAW_BANK_PARAM)
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("raw bank matrix is 2-d")
        .to_owned()
}

#[allow(unused)]
fn gram(bases: &Array2<f64>) -> Array2<f64> {
    bases.dot(&bases.t())
}
