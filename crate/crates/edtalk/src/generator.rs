//! Visual autoencoder stack: encoder E (canonical latent + multi-scale
//! identity features), generator G with skip connections, the emotion
//! enhancement module (affine -> AdaIN styles on the deepest skip levels),
//! and the discriminator D.
//!
//! Encoder: stem conv then four stride-2 stages with ResBlocks; each stage's
//! ResBlock output is one identity-feature level. The generator mirrors the
//! stages with nearest-neighbor upsampling.

use ndarray::{Array1, Array2, ArrayD, Axis, IxDyn};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{EdTalkError, Result};
use crate::nn::{self, Graph, ParamStore};
use crate::synth::Frame;
use crate::tape::Var;

pub const ADAIN_EPS: f64 = 1e-5;

/// Identity features on the tape, shallowest first (level i at S / 2^(i+1)).
pub struct FeatVars(pub Vec<Var>);

/// Per-level AdaIN styles on the tape, ordered to match the modulated levels
/// (deepest last, aligned with `FeatVars` indices `4 - eem_levels ..`).
pub struct StyleVars {
    pub scales: Vec<Var>, // each (B, C_level)
    pub biases: Vec<Var>,
}

/// Plain-value identity features.
#[derive(Clone, Debug)]
pub struct Feats(pub Vec<ArrayD<f64>>);

/// Plain-value emotion style.
#[derive(Clone, Debug)]
pub struct EmotionStyle {
    pub scales: Vec<Array2<f64>>, // (B, C_level) per modulated level
    pub biases: Vec<Array2<f64>>,
}

pub fn init_encoder(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) {
    let c = &cfg.channels;
    nn::init_conv(store, "enc.stem", c[0], 3, 3, rng);
    let mut prev = c[0];
    for (i, &ci) in c.iter().enumerate() {
        nn::init_conv(store, &format!("enc.down{i}"), ci, prev, 3, rng);
        nn::init_resblock(store, &format!("enc.res{i}"), ci, rng);
        prev = ci;
    }
    let side = cfg.image_size / 16;
    nn::init_linear(store, "enc.latent", cfg.latent_dim, c[3] * side * side, rng);
}

pub fn init_generator(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) {
    let c = &cfg.channels;
    let side = cfg.image_size / 16;
    nn::init_linear(store, "gen.fc", c[3] * side * side, cfg.latent_dim, rng);
    for i in (0..4).rev() {
        nn::init_resblock(store, &format!("gen.res{i}"), c[i], rng);
        let out_c = if i == 0 { c[0] } else { c[i - 1] };
        nn::init_conv(store, &format!("gen.up{i}"), out_c, c[i], 3, rng);
    }
    nn::init_conv(store, "gen.out", 3, c[0], 3, rng);
}

pub fn init_discriminator(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) {
    let c = &cfg.channels;
    nn::init_conv(store, "disc.stem", c[0], 3, 3, rng);
    for i in 1..4 {
        nn::init_conv(store, &format!("disc.d{i}"), c[i], c[i - 1], 3, rng);
    }
    let side = cfg.image_size / 16;
    nn::init_linear(store, "disc.fc", 1, c[3] * side * side, rng);
}

/// EEM affine map; zero weights with an identity offset in the bias so the
/// produced style is exactly (scale 1, bias 0) at initialization.
pub fn init_eem(store: &mut ParamStore, cfg: &ModelConfig) {
    let chans = eem_channels(cfg);
    let total: usize = chans.iter().map(|c| 2 * c).sum();
    store.insert("eem.w", ArrayD::zeros(IxDyn(&[total, cfg.latent_dim])));
    let mut b = Array1::<f64>::zeros(total);
    let mut off = 0usize;
    for c in &chans {
        for i in 0..*c {
            b[off + i] = 1.0; // scale part
        }
        off += 2 * c;
    }
    store.insert("eem.b", b.into_dyn());
}

/// Channel widths of the modulated levels, shallowest-of-the-modulated first.
pub fn eem_channels(cfg: &ModelConfig) -> Vec<usize> {
    let start = 4 - cfg.eem_levels;
    cfg.channels[start..].to_vec()
}

pub fn init_all(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) {
    init_encoder(store, cfg, rng);
    init_generator(store, cfg, rng);
    init_discriminator(store, cfg, rng);
    init_eem(store, cfg);
    crate::latent::init_params(store, cfg, rng);
}

/// E: image batch (B,3,S,S) -> (latent (B,d), identity features).
pub fn encode_fwd(g: &mut Graph, cfg: &ModelConfig, x: Var) -> (Var, FeatVars) {
    let mut h = nn::conv_fwd(g, "enc.stem", x, 1, 1);
    h = g.tape.leaky_relu(h, 0.2);
    let mut feats = Vec::with_capacity(4);
    for i in 0..4 {
        h = nn::conv_fwd(g, &format!("enc.down{i}"), h, 2, 1);
        h = g.tape.leaky_relu(h, 0.2);
        h = nn::resblock_fwd(g, &format!("enc.res{i}"), h);
        feats.push(h);
    }
    let shape = g.tape.value(h).shape().to_vec();
    let flat = g.tape.reshape(h, &[shape[0], shape[1] * shape[2] * shape[3]]);
    let latent = nn::linear_fwd(g, "enc.latent", flat);
    (latent, FeatVars(feats))
}

/// Per-channel AdaIN: scale * (x - mu_c) / sqrt(var_c + eps^2) + bias.
/// `scale`/`bias` are (B, C); statistics are spatial, per sample and channel.
pub fn adain_fwd(g: &mut Graph, feat: Var, scale: Var, bias: Var) -> Var {
    let shape = g.tape.value(feat).shape().to_vec();
    let (b, c) = (shape[0], shape[1]);
    let mu = g.tape.mean_axis(feat, 3);
    let mu = g.tape.mean_axis(mu, 2); // (B,C,1,1)
    let centered = g.tape.sub(feat, mu);
    let sq = g.tape.mul(centered, centered);
    let var = g.tape.mean_axis(sq, 3);
    let var = g.tape.mean_axis(var, 2);
    let var = g.tape.add_scalar(var, ADAIN_EPS * ADAIN_EPS);
    let std = g.tape.sqrt(var);
    let xhat = g.tape.div(centered, std);
    let s4 = g.tape.reshape(scale, &[b, c, 1, 1]);
    let b4 = g.tape.reshape(bias, &[b, c, 1, 1]);
    let scaled = g.tape.mul(xhat, s4);
    g.tape.add(scaled, b4)
}

/// EEM: expression latent (B,d) -> per-level (scale, bias) styles.
pub fn eem_style_fwd(g: &mut Graph, cfg: &ModelConfig, f_exp: Var) -> StyleVars {
    let w = g.p("eem.w");
    let b = g.p("eem.b");
    let y = g.tape.linear(f_exp, w, b); // (B, total)
    let mut scales = Vec::new();
    let mut biases = Vec::new();
    let mut off = 0usize;
    for c in eem_channels(cfg) {
        scales.push(g.tape.slice_axis(y, 1, off, off + c));
        biases.push(g.tape.slice_axis(y, 1, off + c, off + 2 * c));
        off += 2 * c;
    }
    StyleVars { scales, biases }
}

/// G: driven latent (B,d) + identity features (+ optional emotion style)
/// -> image batch (B,3,S,S) in [-1,1].
pub fn generate_fwd(
    g: &mut Graph,
    cfg: &ModelConfig,
    driven: Var,
    feats: &FeatVars,
    style: Option<&StyleVars>,
) -> Var {
    let c = &cfg.channels;
    let side = cfg.image_size / 16;
    let bsz = g.tape.value(driven).shape()[0];
    let mut h = nn::linear_fwd(g, "gen.fc", driven);
    h = g.tape.reshape(h, &[bsz, c[3], side, side]);
    let eem_start = 4 - cfg.eem_levels;
    for i in (0..4).rev() {
        let mut skip = feats.0[i];
        if let Some(style) = style {
            if i >= eem_start {
                let k = i - eem_start;
                skip = adain_fwd(g, skip, style.scales[k], style.biases[k]);
            }
        }
        h = g.tape.add(h, skip);
        h = nn::resblock_fwd(g, &format!("gen.res{i}"), h);
        h = g.tape.upsample_nearest2(h);
        h = nn::conv_fwd(g, &format!("gen.up{i}"), h, 1, 1);
        h = g.tape.leaky_relu(h, 0.2);
    }
    let out = nn::conv_fwd(g, "gen.out", h, 1, 1);
    g.tape.tanh(out)
}

/// D: image batch -> (B,1) realness logits.
pub fn discriminate_fwd(g: &mut Graph, x: Var) -> Var {
    let mut h = nn::conv_fwd(g, "disc.stem", x, 2, 1);
    h = g.tape.leaky_relu(h, 0.2);
    for i in 1..4 {
        h = nn::conv_fwd(g, &format!("disc.d{i}"), h, 2, 1);
        h = g.tape.leaky_relu(h, 0.2);
    }
    let shape = g.tape.value(h).shape().to_vec();
    let flat = g.tape.reshape(h, &[shape[0], shape[1] * shape[2] * shape[3]]);
    nn::linear_fwd(g, "disc.fc", flat)
}

// ----- plain-value wrappers (forward only) -----

pub fn frames_to_batch(frames: &[&Frame]) -> ArrayD<f64> {
    let (c, h, w) = frames[0].0.dim();
    let mut out = ArrayD::<f64>::zeros(IxDyn(&[frames.len(), c, h, w]));
    for (i, f) in frames.iter().enumerate() {
        out.index_axis_mut(Axis(0), i).assign(&f.0.clone().into_dyn());
    }
    out
}

pub fn batch_to_frames(batch: &ArrayD<f64>) -> Vec<Frame> {
    let b = batch.shape()[0];
    (0..b)
        .map(|i| {
            Frame(
                batch
                    .index_axis(Axis(0), i)
                    .to_owned()
                    .into_dimensionality::<ndarray::Ix3>()
                    .expect("frame is 3-d"),
            )
        })
        .collect()
}

fn check_resolution(cfg: &ModelConfig, frames: &[&Frame]) -> Result<()> {
    for f in frames {
        if f.size() != cfg.image_size {
            return Err(EdTalkError::Dimension(format!(
                "frame resolution {} != configured {}",
                f.size(),
                cfg.image_size
            )));
        }
    }
    Ok(())
}

/// Encode a batch of frames on a throwaway tape. Returns latents (B,d) and
/// plain identity features.
pub fn encode(store: &ParamStore, cfg: &ModelConfig, frames: &[&Frame]) -> Result<(Array2<f64>, Feats)> {
    check_resolution(cfg, frames)?;
    let mut g = Graph::new(store);
    let x = g.constant(frames_to_batch(frames));
    let (latent, feats) = encode_fwd(&mut g, cfg, x);
    let lat = g
        .tape
        .value(latent)
        .to_owned()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("latent is 2-d");
    let fv = Feats(feats.0.iter().map(|&v| g.tape.value(v).clone()).collect());
    Ok((lat, fv))
}

/// Generate frames from plain driven latents and identity features.
pub fn generate(
    store: &ParamStore,
    cfg: &ModelConfig,
    driven: &Array2<f64>,
    feats: &Feats,
    style: Option<&EmotionStyle>,
) -> Result<Vec<Frame>> {
    if driven.ncols() != cfg.latent_dim {
        return Err(EdTalkError::Dimension(format!(
            "driven latent dim {} != {}",
            driven.ncols(),
            cfg.latent_dim
        )));
    }
    let mut g = Graph::new(store);
    let d = g.constant(driven.clone().into_dyn());
    let fv = FeatVars(feats.0.iter().map(|f| g.constant(f.clone())).collect());
    let sv = style.map(|s| StyleVars {
        scales: s.scales.iter().map(|x| g.constant(x.clone().into_dyn())).collect(),
        biases: s.biases.iter().map(|x| g.constant(x.clone().into_dyn())).collect(),
    });
    let out = generate_fwd(&mut g, cfg, d, &fv, sv.as_ref());
    Ok(batch_to_frames(g.tape.value(out)))
}

/// Evaluate the EEM style for plain expression latents (B,d).
pub fn eem_style(store: &ParamStore, cfg: &ModelConfig, f_exp: &Array2<f64>) -> Result<EmotionStyle> {
    if f_exp.ncols() != cfg.latent_dim {
        return Err(EdTalkError::Dimension(format!(
            "expression latent dim {} != {}",
            f_exp.ncols(),
            cfg.latent_dim
        )));
    }
    let mut g = Graph::new(store);
    let x = g.constant(f_exp.clone().into_dyn());
    let style = eem_style_fwd(&mut g, cfg, x);
    let grab = |v: Var, g: &Graph| {
        g.tape
            .value(v)
            .to_owned()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("style is 2-d")
    };
    Ok(EmotionStyle {
        scales: style.scales.iter().map(|&v| grab(v, &g)).collect(),
        biases: style.biases.iter().map(|&v| grab(v, &g)).collect(),
    })
}

pub fn discriminate(store: &ParamStore, cfg: &ModelConfig, frame: &Frame) -> Result<f64> {
    check_resolution(cfg, &[frame])?;
    let mut g = Graph::new(store);
    let x = g.constant(frames_to_batch(&[frame]));
    let logit = discriminate_fwd(&mut g, x);
    Ok(g.tape.value(logit)[[0, 0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BankSizes, Config};
    use ndarray::Array;
    use rand::{Rng, SeedableRng};

    pub(crate) fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            latent_dim: 16,
            image_size: 16,
            bank_sizes: BankSizes {
                mouth: 4,
                pose: 3,
                expression: 2,
            },
            channels: vec![4, 6, 8, 10],
            ..Config::default().model
        }
    }

    fn setup(seed: u64) -> (ParamStore, ModelConfig) {
        let cfg = tiny_cfg();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_all(&mut store, &cfg, &mut rng);
        (store, cfg)
    }

    fn test_frame(seed: u64, size: usize) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame(Array::from_shape_fn((3, size, size), |_| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn encode_is_deterministic_with_correct_shapes() {
        let (store, cfg) = setup(1);
        let f = test_frame(2, 16);
        let (l1, ft1) = encode(&store, &cfg, &[&f]).unwrap();
        let (l2, ft2) = encode(&store, &cfg, &[&f]).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(l1.dim(), (1, 16));
        assert_eq!(ft1.0.len(), 4);
        assert_eq!(ft1.0[0].shape(), &[1, 4, 8, 8]);
        assert_eq!(ft1.0[3].shape(), &[1, 10, 1, 1]);
        for (a, b) in ft1.0.iter().zip(ft2.0.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn encode_distinguishes_single_pixel_change() {
        let (store, cfg) = setup(3);
        let f = test_frame(4, 16);
        let mut f2 = f.clone();
        f2.0[(0, 8, 8)] = -f2.0[(0, 8, 8)].signum().max(0.1);
        let (l1, _) = encode(&store, &cfg, &[&f]).unwrap();
        let (l2, _) = encode(&store, &cfg, &[&f2]).unwrap();
        assert!((&l1 - &l2).mapv(f64::abs).sum() > 0.0);
    }

    #[test]
    fn encode_rejects_wrong_resolution() {
        let (store, cfg) = setup(5);
        let f = test_frame(6, 8);
        assert!(matches!(
            encode(&store, &cfg, &[&f]),
            Err(EdTalkError::Dimension(_))
        ));
    }

    #[test]
    fn adain_statistics_contract() {
        // channel values {1, 3}: mean 2, std 1; scale 2, bias 5 -> {3, 7}
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let mut x = ArrayD::<f64>::zeros(IxDyn(&[1, 1, 1, 2]));
        x[[0, 0, 0, 0]] = 1.0;
        x[[0, 0, 0, 1]] = 3.0;
        let xv = g.constant(x);
        let s = g.constant(ndarray::arr2(&[[2.0]]).into_dyn());
        let b = g.constant(ndarray::arr2(&[[5.0]]).into_dyn());
        let y = adain_fwd(&mut g, xv, s, b);
        let yv = g.tape.value(y);
        assert!((yv[[0, 0, 0, 0]] - 3.0).abs() < 1e-4);
        assert!((yv[[0, 0, 0, 1]] - 7.0).abs() < 1e-4);
    }

    #[test]
    fn adain_identity_style_standardizes() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array::from_shape_fn(IxDyn(&[2, 3, 4, 4]), |_| rng.gen_range(-2.0..2.0));
        let xv = g.constant(x);
        let s = g.constant(Array2::<f64>::ones((2, 3)).into_dyn());
        let b = g.constant(Array2::<f64>::zeros((2, 3)).into_dyn());
        let y = adain_fwd(&mut g, xv, s, b);
        let yv = g.tape.value(y);
        for bi in 0..2 {
            for ci in 0..3 {
                let ch: Vec<f64> = (0..4)
                    .flat_map(|i| (0..4).map(move |j| (i, j)))
                    .map(|(i, j)| yv[[bi, ci, i, j]])
                    .collect();
                let mean = ch.iter().sum::<f64>() / 16.0;
                let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
                assert!(mean.abs() < 1e-4);
                assert!((var.sqrt() - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn adain_constant_channel_degenerates_to_bias() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = ArrayD::<f64>::from_elem(IxDyn(&[1, 1, 3, 3]), 4.2);
        let xv = g.constant(x);
        let s = g.constant(ndarray::arr2(&[[3.0]]).into_dyn());
        let b = g.constant(ndarray::arr2(&[[0.7]]).into_dyn());
        let y = adain_fwd(&mut g, xv, s, b);
        for v in g.tape.value(y).iter() {
            assert!((v - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn eem_initializes_to_identity_style() {
        let (store, cfg) = setup(11);
        let f_exp = Array2::<f64>::from_elem((1, 16), 0.37);
        let style = eem_style(&store, &cfg, &f_exp).unwrap();
        assert_eq!(style.scales.len(), 2);
        assert_eq!(style.scales[0].ncols(), 8);
        assert_eq!(style.scales[1].ncols(), 10);
        for s in &style.scales {
            assert!(s.iter().all(|&v| v == 1.0));
        }
        for b in &style.biases {
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn eem_seeded_matches_direct_affine() {
        let (mut store, cfg) = setup(12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let total = 2 * (8 + 10);
        store.set("eem.w", nn::randn(&mut rng, &[total, 16], 0.2));
        store.set("eem.b", nn::randn(&mut rng, &[total], 0.2));
        // f_exp = 0 -> style equals bias terms
        let zero = Array2::<f64>::zeros((1, 16));
        let style = eem_style(&store, &cfg, &zero).unwrap();
        let b = store.get("eem.b");
        for (i, &v) in style.scales[0].iter().enumerate() {
            assert!((v - b[[i]]).abs() < 1e-12);
        }
        // seeded input: direct matrix arithmetic oracle
        let x = Array2::from_shape_fn((1, 16), |(_, j)| (j as f64 * 0.11).cos());
        let style = eem_style(&store, &cfg, &x).unwrap();
        let w = store.get("eem.w").view().into_dimensionality::<ndarray::Ix2>().unwrap().to_owned();
        let bv = store.get("eem.b").view().into_dimensionality::<ndarray::Ix1>().unwrap().to_owned();
        let y = w.dot(&x.row(0).to_owned()) + &bv;
        assert!((style.scales[0][[0, 0]] - y[0]).abs() < 1e-12);
        assert!((style.biases[0][[0, 0]] - y[8]).abs() < 1e-12);
        assert!((style.scales[1][[0, 0]] - y[16]).abs() < 1e-12);
    }

    #[test]
    fn generate_output_contract_and_determinism() {
        let (store, cfg) = setup(15);
        let f = test_frame(16, 16);
        let (lat, feats) = encode(&store, &cfg, &[&f]).unwrap();
        let out1 = generate(&store, &cfg, &lat, &feats, None).unwrap();
        let out2 = generate(&store, &cfg, &lat, &feats, None).unwrap();
        assert_eq!(out1[0].0, out2[0].0);
        assert_eq!(out1[0].0.dim(), (3, 16, 16));
        assert!(out1[0].0.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn generate_without_style_is_eem_bypass() {
        // zero driven latent: output depends only on the identity features
        let (store, cfg) = setup(17);
        let f = test_frame(18, 16);
        let (_, feats) = encode(&store, &cfg, &[&f]).unwrap();
        let zeros = Array2::<f64>::zeros((1, 16));
        let a = generate(&store, &cfg, &zeros, &feats, None).unwrap();
        let b = generate(&store, &cfg, &zeros, &feats, None).unwrap();
        assert_eq!(a[0].0, b[0].0);
        // identity style is NOT a bypass (it standardizes); bypass = None
        let style = eem_style(&store, &cfg, &zeros).unwrap();
        let c = generate(&store, &cfg, &zeros, &feats, Some(&style)).unwrap();
        assert_ne!(a[0].0, c[0].0);
    }

    #[test]
    fn discriminator_scalar_and_deterministic() {
        let (store, cfg) = setup(19);
        let f = test_frame(20, 16);
        let l1 = discriminate(&store, &cfg, &f).unwrap();
        let l2 = discriminate(&store, &cfg, &f).unwrap();
        assert_eq!(l1, l2);
        assert!(l1.is_finite());
    }

    #[test]
    fn reconstruction_gradient_matches_finite_difference() {
        // L1 reconstruction w.r.t. a sampled subset of generator parameters,
        // on an 8x8-ish tiny config (here 16x16 with 4-channel stages)
        let (store, cfg) = setup(21);
        let f = test_frame(22, 16);
        let target = test_frame(23, 16);
        let eval_with = |w: &ArrayD<f64>| -> f64 {
            let mut s2 = store.clone();
            s2.insert_raw("gen.out.w", w.clone());
            let mut g = Graph::new(&s2);
            let x = g.constant(frames_to_batch(&[&f]));
            let (lat, feats) = encode_fwd(&mut g, &cfg, x);
            let out = generate_fwd(&mut g, &cfg, lat, &feats, None);
            let t = g.constant(frames_to_batch(&[&target]));
            let loss = g.tape.l1_mean(out, t);
            g.tape.scalar(loss)
        };
        let w0 = store.get("gen.out.w").clone();
        let mut g = Graph::new(&store);
        let x = g.constant(frames_to_batch(&[&f]));
        let (lat, feats) = encode_fwd(&mut g, &cfg, x);
        let out = generate_fwd(&mut g, &cfg, lat, &feats, None);
        let t = g.constant(frames_to_batch(&[&target]));
        let loss = g.tape.l1_mean(out, t);
        let grads = g.tape.backward(loss);
        let analytic = g.param_grads(&grads)["gen.out.w"].clone();
        // sampled subset of weight entries
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..6 {
            let idx: Vec<usize> = w0.shape().iter().map(|&d| rng.gen_range(0..d)).collect();
            let mut wp = w0.clone();
            let eps = 1e-5;
            wp[IxDyn(&idx)] += eps;
            let fp = eval_with(&wp);
            wp[IxDyn(&idx)] -= 2.0 * eps;
            let fm = eval_with(&wp);
            let num = (fp - fm) / (2.0 * eps);
            let ana = analytic[IxDyn(&idx)];
            let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
            assert!(rel < 1e-3, "rel {rel} at {idx:?} (num {num}, ana {ana})");
        }
    }
}
