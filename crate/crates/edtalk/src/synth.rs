//! Procedural synthetic-face data with analytic ground truth.
//!
//! Faces are rasterized from three controllable attributes (mouth openness,
//! head yaw, expression valence) plus a per-identity appearance record. Each
//! factor touches a known pixel region, which is what makes disentanglement
//! leakage measurable downstream. Audio features are a synthetic stand-in for
//! mel spectrograms with band energies coupled to the mouth trajectory and a
//! spectral tilt coupled to valence.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EdTalkError, Result};

pub const MEL_BINS: usize = 26;
pub const FRAME_RATE_HZ: f64 = 25.0;

/// H x W x 3 image in [-1, 1], stored channel-first (3, H, W).
#[derive(Clone, Debug, PartialEq)]
pub struct Frame(pub Array3<f64>);

impl Frame {
    pub fn size(&self) -> usize {
        self.0.shape()[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Identity {
    pub head_aspect: f64,  // [0.85, 1.15]
    pub hue: f64,          // [0, 1]
    pub eye_spacing: f64,  // [0.85, 1.15]
    pub tone: f64,         // [0, 1] background/skin lightness
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceAttrs {
    pub mouth_open: f64,   // [0, 1]
    pub pose_yaw: f64,     // degrees, [-45, 45]
    pub expr_valence: f64, // [-1, 1]
    pub identity: Identity,
}

impl FaceAttrs {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mouth_open)
            || !(-45.0..=45.0).contains(&self.pose_yaw)
            || !(-1.0..=1.0).contains(&self.expr_valence)
        {
            return Err(EdTalkError::Range(format!(
                "face attributes out of range: mouth={} yaw={} valence={}",
                self.mouth_open, self.pose_yaw, self.expr_valence
            )));
        }
        Ok(())
    }

    /// (mouth, yaw/45, valence) — the probe/eval target triple.
    pub fn normalized(&self) -> [f64; 3] {
        [self.mouth_open, self.pose_yaw / 45.0, self.expr_valence]
    }
}

// Face-space layout constants (unit square coordinates).
const MOUTH_CY: f64 = 0.70;
const MOUTH_RX: f64 = 0.11;
const MOUTH_RY_MIN: f64 = 0.015;
const MOUTH_RY_RANGE: f64 = 0.085;
const CURVE_GAIN: f64 = 0.06;

/// Map image coords (u, v) into canonical face space under the yaw transform.
fn to_face_space(u: f64, v: f64, yaw_norm: f64) -> (f64, f64) {
    let shift = 0.08 * yaw_norm;
    let shear = 0.18 * yaw_norm;
    let wscale = 1.0 - 0.15 * yaw_norm.abs();
    let uf = (u - 0.5 - shift - shear * (v - 0.5)) / wscale + 0.5;
    (uf, v)
}

fn skin_color(id: &Identity) -> [f64; 3] {
    let h = id.hue;
    [
        0.75 + 0.15 * (h * std::f64::consts::TAU).cos() * 0.5,
        0.55 + 0.12 * ((h + 0.33) * std::f64::consts::TAU).cos() * 0.5,
        0.45 + 0.10 * ((h + 0.66) * std::f64::consts::TAU).cos() * 0.5,
    ]
}

fn bg_color(id: &Identity) -> [f64; 3] {
    let t = 0.25 + 0.35 * id.tone;
    [t * 0.9, t, t * 1.1]
}

/// Color at a face-space point, or None for background.
fn face_color(uf: f64, vf: f64, a: &FaceAttrs) -> Option<[f64; 3]> {
    let id = &a.identity;
    let rx = 0.30 * id.head_aspect;
    let ry = 0.40;
    let du = (uf - 0.5) / rx;
    let dv = (vf - 0.5) / ry;
    if du * du + dv * dv > 1.0 {
        return None;
    }
    // mouth
    let mrx = MOUTH_RX;
    let mry = MOUTH_RY_MIN + MOUTH_RY_RANGE * a.mouth_open;
    let mx = (uf - 0.5) / mrx;
    let mcy = MOUTH_CY - CURVE_GAIN * a.expr_valence * mx * mx;
    let my = (vf - mcy) / mry;
    if mx * mx + my * my <= 1.0 {
        return Some([0.55, 0.15, 0.18]);
    }
    // eyes
    let ex = 0.11 * id.eye_spacing;
    for side in [-1.0f64, 1.0] {
        let du = uf - (0.5 + side * ex);
        let dv = vf - 0.40;
        if du * du + dv * dv < 0.035 * 0.035 {
            return Some([0.10, 0.12, 0.25]);
        }
        // brow: slanted bar above the eye, slope tied to valence
        let bx0 = 0.5 + side * ex - 0.06;
        let bx1 = 0.5 + side * ex + 0.06;
        if uf >= bx0 && uf <= bx1 {
            let t = (uf - bx0) / (bx1 - bx0);
            let inner = 0.315 + 0.030 * a.expr_valence;
            let outer = 0.315 - 0.030 * a.expr_valence;
            let by = if side < 0.0 {
                outer + (inner - outer) * t
            } else {
                inner + (outer - inner) * t
            };
            if (vf - by).abs() < 0.012 {
                return Some([0.20, 0.14, 0.10]);
            }
        }
    }
    Some(skin_color(id))
}

/// Mouth-region membership in face space, independent of mouth_open
/// (bounding box of the fully open mouth, widened by the curvature offset).
fn in_mouth_box(uf: f64, vf: f64, a: &FaceAttrs) -> bool {
    let v = a.expr_valence;
    let ry_max = MOUTH_RY_MIN + MOUTH_RY_RANGE;
    let y_top = MOUTH_CY - ry_max - CURVE_GAIN * v.max(0.0);
    let y_bot = MOUTH_CY + ry_max + CURVE_GAIN * (-v).max(0.0);
    (uf - 0.5).abs() <= MOUTH_RX && vf >= y_top && vf <= y_bot
}

fn dilate(mask: &Array2<f64>, radius: usize) -> Array2<f64> {
    let (h, w) = mask.dim();
    let r = radius as isize;
    let mut out = Array2::<f64>::zeros((h, w));
    for i in 0..h as isize {
        for j in 0..w as isize {
            let mut v: f64 = 0.0;
            for di in -r..=r {
                for dj in -r..=r {
                    let (ii, jj) = (i + di, j + dj);
                    if ii >= 0 && ii < h as isize && jj >= 0 && jj < w as isize {
                        v = v.max(mask[(ii as usize, jj as usize)]);
                    }
                }
            }
            out[(i as usize, j as usize)] = v;
        }
    }
    out
}

/// Rasterize a face. Returns the frame and the analytic mouth mask
/// (mouth bounding box under the pose transform, dilated by 2 px).
pub fn render_face(attrs: &FaceAttrs, size: usize) -> Result<(Frame, Array2<f64>)> {
    attrs.validate()?;
    let yaw_norm = attrs.pose_yaw / 45.0;
    let bg = bg_color(&attrs.identity);
    let mut img = Array3::<f64>::zeros((3, size, size));
    let mut mask = Array2::<f64>::zeros((size, size));
    let sub = [0.25, 0.75];
    for py in 0..size {
        for px in 0..size {
            let mut acc = [0.0f64; 3];
            let mut mask_hit = false;
            for sy in sub {
                for sx in sub {
                    let u = (px as f64 + sx) / size as f64;
                    let v = (py as f64 + sy) / size as f64;
                    let (uf, vf) = to_face_space(u, v, yaw_norm);
                    let c = face_color(uf, vf, attrs).unwrap_or(bg);
                    acc[0] += c[0];
                    acc[1] += c[1];
                    acc[2] += c[2];
                    if in_mouth_box(uf, vf, attrs) {
                        mask_hit = true;
                    }
                }
            }
            for ch in 0..3 {
                img[(ch, py, px)] = (acc[ch] / 4.0) * 2.0 - 1.0;
            }
            if mask_hit {
                mask[(py, px)] = 1.0;
            }
        }
    }
    img.mapv_inplace(|x| x.clamp(-1.0, 1.0));
    Ok((Frame(img), dilate(&mask, 2)))
}

fn rand_identity(rng: &mut ChaCha8Rng) -> Identity {
    Identity {
        head_aspect: rng.gen_range(0.85..1.15),
        hue: rng.gen_range(0.0..1.0),
        eye_spacing: rng.gen_range(0.85..1.15),
        tone: rng.gen_range(0.0..1.0),
    }
}

/// A stage-1 training sample: two expression-neutral frames of one identity
/// plus their mouth-swap composites and a third identity frame.
#[derive(Clone, Debug)]
pub struct SwapPair {
    pub img_a: Frame,
    pub img_b: Frame,
    pub mouth_mask: Array2<f64>,
    pub composite_ab: Frame, // mouth of a on body of b
    pub composite_ba: Frame, // mouth of b on body of a
    pub id_frame: Frame,
    pub attrs_a: FaceAttrs,
    pub attrs_b: FaceAttrs,
}

/// Pixel compositing: mask * fg + (1 - mask) * bg, exact arithmetic.
pub fn composite(fg: &Frame, bg: &Frame, mask: &Array2<f64>) -> Result<Frame> {
    if fg.0.dim() != bg.0.dim() || fg.0.shape()[1] != mask.dim().0 {
        return Err(EdTalkError::Dimension("composite resolution mismatch".into()));
    }
    let (c, h, w) = fg.0.dim();
    let mut out = Array3::<f64>::zeros((c, h, w));
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                let m = mask[(i, j)];
                out[(ch, i, j)] = m * fg.0[(ch, i, j)] + (1.0 - m) * bg.0[(ch, i, j)];
            }
        }
    }
    Ok(Frame(out))
}

/// Superimpose the mouth region of `img_a` onto `img_b` and vice versa.
/// Returns (composite_ba, composite_ab) = (mouth of b on a, mouth of a on b).
pub fn composite_mouth_swap(
    img_a: &Frame,
    img_b: &Frame,
    mouth_mask: &Array2<f64>,
) -> Result<(Frame, Frame)> {
    if mouth_mask.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
        return Err(EdTalkError::Range("mask values outside [0,1]".into()));
    }
    let ba = composite(img_b, img_a, mouth_mask)?;
    let ab = composite(img_a, img_b, mouth_mask)?;
    Ok((ba, ab))
}

pub fn sample_stage1_pair(seed: u64, size: usize) -> Result<SwapPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
    let identity = rand_identity(&mut rng);
    let mut draw = |rng: &mut ChaCha8Rng| FaceAttrs {
        mouth_open: rng.gen_range(0.0..1.0),
        pose_yaw: rng.gen_range(-45.0..45.0),
        expr_valence: 0.0, // stage 1 is expression-neutral
        identity,
    };
    let attrs_a = draw(&mut rng);
    let attrs_b = draw(&mut rng);
    let attrs_id = draw(&mut rng);
    let (img_a, mask_a) = render_face(&attrs_a, size)?;
    let (img_b, mask_b) = render_face(&attrs_b, size)?;
    let (id_frame, _) = render_face(&attrs_id, size)?;
    // union of both frames' mouth regions so the swap moves both mouths
    let mut mouth_mask = mask_a;
    mouth_mask.zip_mut_with(&mask_b, |a, b| *a = a.max(*b));
    let (composite_ba, composite_ab) = composite_mouth_swap(&img_a, &img_b, &mouth_mask)?;
    Ok(SwapPair {
        img_a,
        img_b,
        mouth_mask,
        composite_ab,
        composite_ba,
        id_frame,
        attrs_a,
        attrs_b,
    })
}

#[derive(Clone, Debug)]
pub struct AudioFeatureSequence {
    /// N x F band-energy matrix, one row per video frame.
    pub frames: Array2<f64>,
    pub frame_rate: f64,
}

impl AudioFeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }
}

pub const VOCAB: &[&str] = &[
    "the", "a", "and", "to", "we", "say", "talk", "see", "go", "now",
    "happy", "joy", "cheerful", "smile", "delight",
    "sad", "gloomy", "cry", "frown", "misery",
];
pub const HAPPY_TOKENS: std::ops::Range<usize> = 10..15;
pub const SAD_TOKENS: std::ops::Range<usize> = 15..20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptTokens {
    pub tokens: Vec<u16>,
    /// Marks emotion-bearing keywords.
    pub keyword_flags: Vec<bool>,
}

impl TranscriptTokens {
    pub fn from_ids(tokens: Vec<u16>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(EdTalkError::Data("empty transcript".into()));
        }
        if tokens.iter().any(|&t| (t as usize) >= VOCAB.len()) {
            return Err(EdTalkError::Data("transcript token out of vocabulary".into()));
        }
        let keyword_flags = tokens
            .iter()
            .map(|&t| HAPPY_TOKENS.contains(&(t as usize)) || SAD_TOKENS.contains(&(t as usize)))
            .collect();
        Ok(Self {
            tokens,
            keyword_flags,
        })
    }

    pub fn from_words(words: &[&str]) -> Result<Self> {
        let mut ids = Vec::with_capacity(words.len());
        for w in words {
            let id = VOCAB
                .iter()
                .position(|v| v == w)
                .ok_or_else(|| EdTalkError::Data(format!("unknown word '{w}'")))?;
            ids.push(id as u16);
        }
        Self::from_ids(ids)
    }
}

/// Synthetic band energies: bands 0-7 track mouth openness, the upper-band
/// spectral tilt tracks valence; seeded noise sigma = 0.05.
pub fn synth_audio_features(
    mouth: &Array1<f64>,
    valence: &Array1<f64>,
    seed: u64,
) -> Result<(AudioFeatureSequence, TranscriptTokens)> {
    if mouth.len() != valence.len() || mouth.is_empty() {
        return Err(EdTalkError::Dimension("mouth/valence trajectory mismatch".into()));
    }
    let n = mouth.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xd1342543de82ef95).wrapping_add(3));
    let mut feats = Array2::<f64>::zeros((n, MEL_BINS));
    for t in 0..n {
        for b in 0..MEL_BINS {
            let noise: f64 = rng.gen_range(-1.0..1.0) * 0.05 * (3.0f64).sqrt(); // sigma 0.05
            feats[(t, b)] = if b < 8 {
                0.2 + 0.6 * mouth[t] + noise
            } else {
                let tilt = (b as f64 - 16.5) / 8.5;
                0.35 + 0.12 * valence[t] * tilt + noise
            };
        }
    }
    let mean_valence = valence.mean().unwrap_or(0.0);
    let mut ids: Vec<u16> = Vec::new();
    let n_fill = rng.gen_range(4..8);
    for _ in 0..n_fill {
        ids.push(rng.gen_range(0..10) as u16);
    }
    if mean_valence > 0.1 {
        ids.push(rng.gen_range(HAPPY_TOKENS.start..HAPPY_TOKENS.end) as u16);
    } else if mean_valence < -0.1 {
        ids.push(rng.gen_range(SAD_TOKENS.start..SAD_TOKENS.end) as u16);
    }
    let transcript = TranscriptTokens::from_ids(ids)?;
    Ok((
        AudioFeatureSequence {
            frames: feats,
            frame_rate: FRAME_RATE_HZ,
        },
        transcript,
    ))
}

#[derive(Clone, Debug)]
pub struct ClipSample {
    pub frames: Vec<Frame>,
    pub attrs: Vec<FaceAttrs>,
    pub masks: Vec<Array2<f64>>,
    pub audio: AudioFeatureSequence,
    pub transcript: TranscriptTokens,
    pub seed: u64,
}

/// Per-frame attribute trajectories: smooth mouth/pose random walks, valence
/// piecewise-constant over segments of at least 2K frames.
pub fn sample_clip_attrs(seed: u64, length: usize, window_k: usize, rng_id: &mut ChaCha8Rng)
    -> (Vec<FaceAttrs>, Identity)
{
    let identity = rand_identity(rng_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xa0761d6478bd642f).wrapping_add(7));
    let mut mouth = rng.gen_range(0.0..1.0);
    let mut yaw = rng.gen_range(-30.0..30.0);
    let seg_min = 2 * window_k;
    let mut valence = rng.gen_range(-1.0..1.0);
    let mut seg_left = seg_min + rng.gen_range(0..seg_min);
    let mut attrs = Vec::with_capacity(length);
    for _ in 0..length {
        if seg_left == 0 {
            valence = rng.gen_range(-1.0..1.0);
            seg_left = seg_min + rng.gen_range(0..seg_min);
        }
        seg_left -= 1;
        attrs.push(FaceAttrs {
            mouth_open: mouth,
            pose_yaw: yaw,
            expr_valence: valence,
            identity,
        });
        mouth = (mouth + rng.gen_range(-0.15..0.15)).clamp(0.0, 1.0);
        yaw = (yaw + rng.gen_range(-5.0..5.0)).clamp(-45.0, 45.0);
    }
    (attrs, identity)
}

pub fn sample_stage2_clip(seed: u64, length: usize, window_k: usize, size: usize) -> Result<ClipSample> {
    if length == 0 {
        return Err(EdTalkError::Data("empty clip".into()));
    }
    let mut rng_id = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xe7037ed1a0b428db).wrapping_add(11));
    let (attrs, _) = sample_clip_attrs(seed, length, window_k, &mut rng_id);
    let mut frames = Vec::with_capacity(length);
    let mut masks = Vec::with_capacity(length);
    for a in &attrs {
        let (f, m) = render_face(a, size)?;
        frames.push(f);
        masks.push(m);
    }
    let mouth: Array1<f64> = attrs.iter().map(|a| a.mouth_open).collect();
    let valence: Array1<f64> = attrs.iter().map(|a| a.expr_valence).collect();
    let (audio, transcript) = synth_audio_features(&mouth, &valence, seed)?;
    Ok(ClipSample {
        frames,
        attrs,
        masks,
        audio,
        transcript,
        seed,
    })
}

/// Pixel-diff audit regions for the factor-locality property.
pub mod regions {
    use super::*;

    /// Fraction of differing pixels (any channel, beyond `tol`) that fall
    /// inside `region`.
    pub fn containment(a: &Frame, b: &Frame, region: &Array2<f64>, tol: f64) -> f64 {
        let (c, h, w) = a.0.dim();
        let mut changed = 0usize;
        let mut inside = 0usize;
        for i in 0..h {
            for j in 0..w {
                let mut diff = false;
                for ch in 0..c {
                    if (a.0[(ch, i, j)] - b.0[(ch, i, j)]).abs() > tol {
                        diff = true;
                        break;
                    }
                }
                if diff {
                    changed += 1;
                    if region[(i, j)] > 0.5 {
                        inside += 1;
                    }
                }
            }
        }
        if changed == 0 {
            1.0
        } else {
            inside as f64 / changed as f64
        }
    }

    /// Brow + mouth-corner region for a given pose/identity (expression audit).
    pub fn expression_region(attrs: &FaceAttrs, size: usize) -> Array2<f64> {
        let yaw_norm = attrs.pose_yaw / 45.0;
        let mut mask = Array2::<f64>::zeros((size, size));
        let ex = 0.11 * attrs.identity.eye_spacing;
        for py in 0..size {
            for px in 0..size {
                let u = (px as f64 + 0.5) / size as f64;
                let v = (py as f64 + 0.5) / size as f64;
                let (uf, vf) = to_face_space(u, v, yaw_norm);
                let brow = (vf - 0.315).abs() < 0.06
                    && ((uf - (0.5 - ex)).abs() < 0.08 || (uf - (0.5 + ex)).abs() < 0.08);
                let mouth = (uf - 0.5).abs() <= MOUTH_RX + 0.02
                    && (vf - MOUTH_CY).abs() <= MOUTH_RY_MIN + MOUTH_RY_RANGE + CURVE_GAIN + 0.02;
                if brow || mouth {
                    mask[(py, px)] = 1.0;
                }
            }
        }
        super::dilate(&mask, 2)
    }

    /// Whole-head region union over two poses (pose audit).
    pub fn head_region(a1: &FaceAttrs, a2: &FaceAttrs, size: usize) -> Array2<f64> {
        let mut mask = Array2::<f64>::zeros((size, size));
        for attrs in [a1, a2] {
            let yaw_norm = attrs.pose_yaw / 45.0;
            let rx = 0.30 * attrs.identity.head_aspect;
            for py in 0..size {
                for px in 0..size {
                    let u = (px as f64 + 0.5) / size as f64;
                    let v = (py as f64 + 0.5) / size as f64;
                    let (uf, vf) = to_face_space(u, v, yaw_norm);
                    let du = (uf - 0.5) / rx;
                    let dv = (vf - 0.5) / 0.40;
                    if du * du + dv * dv <= 1.15 {
                        mask[(py, px)] = 1.0;
                    }
                }
            }
        }
        super::dilate(&mask, 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(mouth: f64, yaw: f64, val: f64) -> FaceAttrs {
        FaceAttrs {
            mouth_open: mouth,
            pose_yaw: yaw,
            expr_valence: val,
            identity: Identity {
                head_aspect: 1.0,
                hue: 0.3,
                eye_spacing: 1.0,
                tone: 0.5,
            },
        }
    }

    #[test]
    fn render_is_deterministic() {
        let a = attrs(0.5, 10.0, 0.3);
        let (f1, m1) = render_face(&a, 32).unwrap();
        let (f2, m2) = render_face(&a, 32).unwrap();
        assert_eq!(f1.0, f2.0);
        assert_eq!(m1, m2);
        assert!(f1.0.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn out_of_range_attrs_error() {
        let a = attrs(1.5, 0.0, 0.0);
        assert!(matches!(render_face(&a, 32), Err(EdTalkError::Range(_))));
        let b = attrs(0.5, 90.0, 0.0);
        assert!(matches!(render_face(&b, 32), Err(EdTalkError::Range(_))));
    }

    #[test]
    fn mouth_changes_stay_inside_mouth_mask() {
        // pixel-diff audit: mouth_open 0 vs 1 differs only inside the mask
        for yaw in [0.0, -25.0, 35.0] {
            let a0 = attrs(0.0, yaw, 0.4);
            let a1 = attrs(1.0, yaw, 0.4);
            let (f0, mask) = render_face(&a0, 48).unwrap();
            let (f1, _) = render_face(&a1, 48).unwrap();
            let frac = regions::containment(&f0, &f1, &mask, 1e-9);
            assert!(frac >= 0.99, "containment {frac} at yaw {yaw}");
        }
    }

    #[test]
    fn expression_changes_stay_inside_expression_region() {
        let a0 = attrs(0.4, 5.0, -0.8);
        let a1 = attrs(0.4, 5.0, 0.8);
        let (f0, _) = render_face(&a0, 48).unwrap();
        let (f1, _) = render_face(&a1, 48).unwrap();
        let region = regions::expression_region(&a0, 48);
        let frac = regions::containment(&f0, &f1, &region, 1e-9);
        assert!(frac >= 0.99, "containment {frac}");
    }

    #[test]
    fn pose_changes_stay_inside_head_region() {
        let a0 = attrs(0.4, -30.0, 0.2);
        let a1 = attrs(0.4, 20.0, 0.2);
        let (f0, _) = render_face(&a0, 48).unwrap();
        let (f1, _) = render_face(&a1, 48).unwrap();
        let region = regions::head_region(&a0, &a1, 48);
        let frac = regions::containment(&f0, &f1, &region, 1e-9);
        assert!(frac >= 0.99, "containment {frac}");
    }

    #[test]
    fn composite_identities() {
        let (fa, mask) = render_face(&attrs(0.2, 0.0, 0.0), 32).unwrap();
        let (fb, _) = render_face(&attrs(0.9, 15.0, 0.0), 32).unwrap();
        // self-swap returns the input
        let (ba, ab) = composite_mouth_swap(&fa, &fa, &mask).unwrap();
        assert_eq!(ba.0, fa.0);
        assert_eq!(ab.0, fa.0);
        // zero mask leaves both unchanged
        let zero = Array2::<f64>::zeros((32, 32));
        let (ba, ab) = composite_mouth_swap(&fa, &fb, &zero).unwrap();
        assert_eq!(ba.0, fa.0);
        assert_eq!(ab.0, fb.0);
    }

    #[test]
    fn composite_formula_spot_check() {
        // direct pixel arithmetic at sampled positions
        let (fa, _) = render_face(&attrs(0.2, -10.0, 0.0), 32).unwrap();
        let (fb, _) = render_face(&attrs(0.8, 20.0, 0.0), 32).unwrap();
        let mut mask = Array2::<f64>::zeros((32, 32));
        for i in 18..26 {
            for j in 10..22 {
                mask[(i, j)] = 1.0;
            }
        }
        mask[(20, 15)] = 0.5;
        let (_, ab) = composite_mouth_swap(&fa, &fb, &mask).unwrap();
        for (i, j) in [(20usize, 15usize), (19, 12), (5, 5)] {
            for ch in 0..3 {
                let m = mask[(i, j)];
                let expect = m * fa.0[(ch, i, j)] + (1.0 - m) * fb.0[(ch, i, j)];
                assert_eq!(ab.0[(ch, i, j)], expect);
            }
        }
    }

    #[test]
    fn swap_symmetry() {
        let (fa, ma) = render_face(&attrs(0.1, 0.0, 0.0), 32).unwrap();
        let (fb, mb) = render_face(&attrs(0.9, 10.0, 0.0), 32).unwrap();
        let mut mask = ma;
        mask.zip_mut_with(&mb, |a, b| *a = a.max(*b));
        let (ba, ab) = composite_mouth_swap(&fa, &fb, &mask).unwrap();
        let (ab2, ba2) = composite_mouth_swap(&fb, &fa, &mask).unwrap();
        assert_eq!(ba.0, ba2.0);
        assert_eq!(ab.0, ab2.0);
    }

    #[test]
    fn stage1_pair_contract() {
        let p1 = sample_stage1_pair(123, 32).unwrap();
        let p2 = sample_stage1_pair(123, 32).unwrap();
        assert_eq!(p1.img_a.0, p2.img_a.0);
        assert_eq!(p1.composite_ab.0, p2.composite_ab.0);
        assert_eq!(p1.attrs_a.expr_valence, 0.0);
        assert_eq!(p1.attrs_b.expr_valence, 0.0);
        assert_ne!(p1.attrs_a.mouth_open, p1.attrs_b.mouth_open);
        assert_ne!(p1.attrs_a.pose_yaw, p1.attrs_b.pose_yaw);
        let p3 = sample_stage1_pair(124, 32).unwrap();
        assert_ne!(p1.img_a.0, p3.img_a.0);
    }

    #[test]
    fn clip_valence_segments_and_walk_continuity() {
        let clip = sample_stage2_clip(9, 40, 5, 32).unwrap();
        assert_eq!(clip.frames.len(), 40);
        assert_eq!(clip.audio.len(), 40);
        // valence changes are segment boundaries at least 2K apart
        let mut last_change = 0usize;
        for t in 1..40 {
            if clip.attrs[t].expr_valence != clip.attrs[t - 1].expr_valence {
                assert!(t - last_change >= 10, "segment shorter than 2K at {t}");
                last_change = t;
            }
            assert!((clip.attrs[t].pose_yaw - clip.attrs[t - 1].pose_yaw).abs() <= 5.0);
        }
    }

    #[test]
    fn audio_mouth_correlation() {
        // 200-frame clip: corr(band-0 energy, mouth_open) >= 0.9
        let clip = sample_stage2_clip(41, 200, 5, 16).unwrap();
        let band0: Vec<f64> = (0..200).map(|t| clip.audio.frames[(t, 0)]).collect();
        let mouth: Vec<f64> = clip.attrs.iter().map(|a| a.mouth_open).collect();
        let mb = band0.iter().sum::<f64>() / 200.0;
        let mm = mouth.iter().sum::<f64>() / 200.0;
        let mut num = 0.0;
        let mut vb = 0.0;
        let mut vm = 0.0;
        for t in 0..200 {
            num += (band0[t] - mb) * (mouth[t] - mm);
            vb += (band0[t] - mb).powi(2);
            vm += (mouth[t] - mm).powi(2);
        }
        let corr = num / (vb.sqrt() * vm.sqrt());
        assert!(corr >= 0.9, "corr {corr}");
    }

    #[test]
    fn transcript_keywords_follow_valence_sign() {
        let mouth = Array1::from_elem(30, 0.5);
        let pos = Array1::from_elem(30, 0.8);
        let (_, t) = synth_audio_features(&mouth, &pos, 5).unwrap();
        assert!(t
            .tokens
            .iter()
            .any(|&id| HAPPY_TOKENS.contains(&(id as usize))));
        let neg = Array1::from_elem(30, -0.8);
        let (_, t) = synth_audio_features(&mouth, &neg, 5).unwrap();
        assert!(t.tokens.iter().any(|&id| SAD_TOKENS.contains(&(id as usize))));
        assert!(TranscriptTokens::from_ids(vec![]).is_err());
    }
}
