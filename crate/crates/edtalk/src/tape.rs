//! Reverse-mode autodiff over dynamic-dimension f64 arrays.
//!
//! Define-by-run tape: every op appends a node holding its value; `backward`
//! walks the tape in reverse and accumulates gradients. All math is f64 and
//! single-threaded so results are bitwise reproducible.

use ndarray::{Array2, Array4, ArrayD, Axis, IxDyn};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    PowConst(Var, f64),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Abs(Var),
    Clamp(Var, f64, f64),
    MatMul(Var, Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize, usize),
    Transpose2(Var),
    Conv2d {
        x: Var,
        w: Var,
        stride: usize,
        pad_h: usize,
        pad_w: usize,
    },
    UpsampleNearest2(Var),
}

struct Node {
    op: Op,
    value: ArrayD<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by `Var`.
pub struct Gradients {
    g: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.g[v.0].as_ref()
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "incompatible broadcast shapes {:?} vs {:?}",
            a,
            b
        );
        out[i] = da.max(db);
    }
    out
}

fn broadcast_to(x: &ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    x.broadcast(IxDyn(shape))
        .expect("broadcast failed")
        .to_owned()
}

/// Sum `g` down to `shape` (inverse of broadcasting).
fn reduce_to(g: &ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    let mut out = g.clone();
    while out.ndim() > shape.len() {
        out = out.sum_axis(Axis(0));
    }
    for (ax, &d) in shape.iter().enumerate() {
        if out.shape()[ax] != d {
            debug_assert_eq!(d, 1);
            out = out.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    out
}

fn as4(x: &ArrayD<f64>) -> Array4<f64> {
    x.view()
        .into_dimensionality::<ndarray::Ix4>()
        .expect("expected 4-d array")
        .to_owned()
}

fn as2(x: &ArrayD<f64>) -> Array2<f64> {
    x.view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("expected 2-d array")
        .to_owned()
}

fn conv_out(h: usize, k: usize, s: usize, p: usize) -> usize {
    (h + 2 * p - k) / s + 1
}

fn im2col(
    x: &Array4<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
) -> Array2<f64> {
    let (b, c, h, w) = x.dim();
    let oh = conv_out(h, kh, stride, pad_h);
    let ow = conv_out(w, kw, stride, pad_w);
    let mut cols = Array2::<f64>::zeros((c * kh * kw, b * oh * ow));
    for bi in 0..b {
        for ci in 0..c {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = ci * kh * kw + ki * kw + kj;
                    for oi in 0..oh {
                        let ih = (oi * stride + ki) as isize - pad_h as isize;
                        if ih < 0 || ih as usize >= h {
                            continue;
                        }
                        for oj in 0..ow {
                            let iw = (oj * stride + kj) as isize - pad_w as isize;
                            if iw < 0 || iw as usize >= w {
                                continue;
                            }
                            cols[(row, bi * oh * ow + oi * ow + oj)] =
                                x[(bi, ci, ih as usize, iw as usize)];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    cols: &Array2<f64>,
    bchw: (usize, usize, usize, usize),
    kh: usize,
    kw: usize,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
) -> Array4<f64> {
    let (b, c, h, w) = bchw;
    let oh = conv_out(h, kh, stride, pad_h);
    let ow = conv_out(w, kw, stride, pad_w);
    let mut x = Array4::<f64>::zeros((b, c, h, w));
    for bi in 0..b {
        for ci in 0..c {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = ci * kh * kw + ki * kw + kj;
                    for oi in 0..oh {
                        let ih = (oi * stride + ki) as isize - pad_h as isize;
                        if ih < 0 || ih as usize >= h {
                            continue;
                        }
                        for oj in 0..ow {
                            let iw = (oj * stride + kj) as isize - pad_w as isize;
                            if iw < 0 || iw as usize >= w {
                                continue;
                            }
                            x[(bi, ci, ih as usize, iw as usize)] +=
                                cols[(row, bi * oh * ow + oi * ow + oj)];
                        }
                    }
                }
            }
        }
    }
    x
}

fn conv2d_forward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
) -> Array4<f64> {
    let (b, _c, h, wd) = x.dim();
    let (oc, _ic, kh, kw) = w.dim();
    let oh = conv_out(h, kh, stride, pad_h);
    let ow = conv_out(wd, kw, stride, pad_w);
    let cols = im2col(x, kh, kw, stride, pad_h, pad_w);
    let w2 = w
        .view()
        .into_shape((oc, w.len() / oc))
        .expect("weight reshape");
    let out2 = w2.dot(&cols); // (oc, b*oh*ow)
    let out3 = out2.into_shape((oc, b, oh * ow)).expect("conv reshape");
    let out = out3.permuted_axes([1, 0, 2]);
    out.as_standard_layout()
        .to_owned()
        .into_shape((b, oc, oh, ow))
        .expect("conv output reshape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: ArrayD<f64>) -> Var {
        debug_assert!(value.iter().all(|v| v.is_finite()) || matches!(op, Op::Leaf));
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn scalar_leaf(&mut self, v: f64) -> Var {
        self.leaf(ndarray::arr0(v).into_dyn())
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let a = &self.nodes[v.0].value;
        debug_assert_eq!(a.len(), 1);
        *a.iter().next().expect("empty scalar node")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let shape = broadcast_shape(self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        let v = broadcast_to(&self.nodes[a.0].value, &shape)
            + &broadcast_to(&self.nodes[b.0].value, &shape);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let shape = broadcast_shape(self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        let v = broadcast_to(&self.nodes[a.0].value, &shape)
            - &broadcast_to(&self.nodes[b.0].value, &shape);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let shape = broadcast_shape(self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        let v = broadcast_to(&self.nodes[a.0].value, &shape)
            * &broadcast_to(&self.nodes[b.0].value, &shape);
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let shape = broadcast_shape(self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        let v = broadcast_to(&self.nodes[a.0].value, &shape)
            / &broadcast_to(&self.nodes[b.0].value, &shape);
        self.push(Op::Div(a, b), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x + c);
        self.push(Op::AddScalar(a, c), v)
    }

    pub fn pow_const(&mut self, a: Var, p: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.powf(p));
        self.push(Op::PowConst(a, p), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(a, slope), v)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::abs);
        self.push(Op::Abs(a), v)
    }

    /// Gradient passes through strictly inside (lo, hi), zero outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v)
    }

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = as2(&self.nodes[a.0].value);
        let bv = as2(&self.nodes[b.0].value);
        let v = av.dot(&bv).into_dyn();
        self.push(Op::MatMul(a, b), v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = ndarray::arr0(self.nodes[a.0].value.sum()).into_dyn();
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len() as f64;
        let v = ndarray::arr0(self.nodes[a.0].value.sum() / n).into_dyn();
        self.push(Op::Mean(a), v)
    }

    /// Sum over `axis`, keeping it as size 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Var {
        let v = self.nodes[a.0]
            .value
            .sum_axis(Axis(axis))
            .insert_axis(Axis(axis));
        self.push(Op::SumAxis(a, axis), v)
    }

    /// Mean over `axis`, keeping it as size 1.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Var {
        let n = self.nodes[a.0].value.shape()[axis] as f64;
        let v = self.nodes[a.0]
            .value
            .sum_axis(Axis(axis))
            .insert_axis(Axis(axis))
            / n;
        self.push(Op::MeanAxis(a, axis), v)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self.nodes[a.0]
            .value
            .as_standard_layout()
            .to_owned()
            .into_shape(IxDyn(shape))
            .expect("reshape size mismatch");
        self.push(Op::Reshape(a), v)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let v = ndarray::concatenate(Axis(axis), &views).expect("concat shape mismatch");
        self.push(Op::Concat(parts.to_vec(), axis), v)
    }

    pub fn slice_axis(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Var {
        let v = self.nodes[a.0]
            .value
            .slice_axis(Axis(axis), ndarray::Slice::from(start..end))
            .to_owned();
        self.push(Op::Slice(a, axis, start, end), v)
    }

    pub fn transpose2(&mut self, a: Var) -> Var {
        let v = as2(&self.nodes[a.0].value).t().to_owned().into_dyn();
        self.push(Op::Transpose2(a), v)
    }

    /// x: (B,C,H,W), w: (OC,C,KH,KW); zero padding, square stride.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad_h: usize, pad_w: usize) -> Var {
        let xv = as4(&self.nodes[x.0].value);
        let wv = as4(&self.nodes[w.0].value);
        let v = conv2d_forward(&xv, &wv, stride, pad_h, pad_w).into_dyn();
        self.push(
            Op::Conv2d {
                x,
                w,
                stride,
                pad_h,
                pad_w,
            },
            v,
        )
    }

    pub fn upsample_nearest2(&mut self, a: Var) -> Var {
        let x = as4(&self.nodes[a.0].value);
        let (b, c, h, w) = x.dim();
        let mut out = Array4::<f64>::zeros((b, c, 2 * h, 2 * w));
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let v = x[(bi, ci, i, j)];
                        out[(bi, ci, 2 * i, 2 * j)] = v;
                        out[(bi, ci, 2 * i, 2 * j + 1)] = v;
                        out[(bi, ci, 2 * i + 1, 2 * j)] = v;
                        out[(bi, ci, 2 * i + 1, 2 * j + 1)] = v;
                    }
                }
            }
        }
        self.push(Op::UpsampleNearest2(a), out.into_dyn())
    }

    pub fn backward(&self, out: Var) -> Gradients {
        let mut g: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        g[out.0] = Some(ArrayD::ones(self.nodes[out.0].value.raw_dim()));
        for i in (0..=out.0).rev() {
            let go = match g[i].take() {
                Some(x) => x,
                None => continue,
            };
            self.accumulate(i, &go, &mut g);
            g[i] = Some(go);
        }
        Gradients { g }
    }

    fn acc(&self, g: &mut Vec<Option<ArrayD<f64>>>, v: Var, delta: ArrayD<f64>) {
        let delta = reduce_to(&delta, self.nodes[v.0].value.shape());
        match &mut g[v.0] {
            Some(existing) => *existing += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate(&self, i: usize, go: &ArrayD<f64>, g: &mut Vec<Option<ArrayD<f64>>>) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(g, *a, go.clone());
                self.acc(g, *b, go.clone());
            }
            Op::Sub(a, b) => {
                self.acc(g, *a, go.clone());
                self.acc(g, *b, go.mapv(|x| -x));
            }
            Op::Mul(a, b) => {
                let bv = broadcast_to(val(*b), go.shape());
                let av = broadcast_to(val(*a), go.shape());
                self.acc(g, *a, go * &bv);
                self.acc(g, *b, go * &av);
            }
            Op::Div(a, b) => {
                let bv = broadcast_to(val(*b), go.shape());
                let av = broadcast_to(val(*a), go.shape());
                self.acc(g, *a, go / &bv);
                self.acc(g, *b, -(go * &av) / (&bv * &bv));
            }
            Op::Neg(a) => self.acc(g, *a, go.mapv(|x| -x)),
            Op::Scale(a, c) => self.acc(g, *a, go.mapv(|x| x * c)),
            Op::AddScalar(a, _) => self.acc(g, *a, go.clone()),
            Op::PowConst(a, p) => {
                let d = val(*a).mapv(|x| p * x.powf(p - 1.0));
                self.acc(g, *a, go * &d);
            }
            Op::Exp(a) => self.acc(g, *a, go * &self.nodes[i].value),
            Op::Ln(a) => self.acc(g, *a, go / val(*a)),
            Op::Sqrt(a) => {
                let d = self.nodes[i].value.mapv(|y| 0.5 / y);
                self.acc(g, *a, go * &d);
            }
            Op::Tanh(a) => {
                let d = self.nodes[i].value.mapv(|y| 1.0 - y * y);
                self.acc(g, *a, go * &d);
            }
            Op::Sigmoid(a) => {
                let d = self.nodes[i].value.mapv(|y| y * (1.0 - y));
                self.acc(g, *a, go * &d);
            }
            Op::Relu(a) => {
                let d = val(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                self.acc(g, *a, go * &d);
            }
            Op::LeakyRelu(a, s) => {
                let s = *s;
                let d = val(*a).mapv(|x| if x > 0.0 { 1.0 } else { s });
                self.acc(g, *a, go * &d);
            }
            Op::Abs(a) => {
                let d = val(*a).mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                self.acc(g, *a, go * &d);
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let d = val(*a).mapv(|x| if x > lo && x < hi { 1.0 } else { 0.0 });
                self.acc(g, *a, go * &d);
            }
            Op::MatMul(a, b) => {
                let g2 = as2(go);
                let av = as2(val(*a));
                let bv = as2(val(*b));
                self.acc(g, *a, g2.dot(&bv.t()).into_dyn());
                self.acc(g, *b, av.t().dot(&g2).into_dyn());
            }
            Op::Sum(a) => {
                let s = *go.iter().next().expect("scalar grad");
                self.acc(g, *a, ArrayD::from_elem(val(*a).raw_dim(), s));
            }
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                let s = *go.iter().next().expect("scalar grad") / n;
                self.acc(g, *a, ArrayD::from_elem(val(*a).raw_dim(), s));
            }
            Op::SumAxis(a, _axis) => {
                self.acc(g, *a, broadcast_to(go, val(*a).shape()));
            }
            Op::MeanAxis(a, axis) => {
                let n = val(*a).shape()[*axis] as f64;
                self.acc(g, *a, broadcast_to(go, val(*a).shape()) / n);
            }
            Op::Reshape(a) => {
                let ga = go
                    .as_standard_layout()
                    .to_owned()
                    .into_shape(val(*a).raw_dim())
                    .expect("reshape grad");
                self.acc(g, *a, ga);
            }
            Op::Concat(parts, axis) => {
                let mut start = 0usize;
                for p in parts {
                    let len = val(*p).shape()[*axis];
                    let gp = go
                        .slice_axis(Axis(*axis), ndarray::Slice::from(start..start + len))
                        .to_owned();
                    self.acc(g, *p, gp);
                    start += len;
                }
            }
            Op::Slice(a, axis, start, end) => {
                let mut ga = ArrayD::zeros(val(*a).raw_dim());
                ga.slice_axis_mut(Axis(*axis), ndarray::Slice::from(*start..*end))
                    .assign(go);
                self.acc(g, *a, ga);
            }
            Op::Transpose2(a) => {
                self.acc(g, *a, as2(go).t().to_owned().into_dyn());
            }
            Op::Conv2d {
                x,
                w,
                stride,
                pad_h,
                pad_w,
            } => {
                let xv = as4(val(*x));
                let wv = as4(val(*w));
                let (b, c, h, wd) = xv.dim();
                let (oc, _ic, kh, kw) = wv.dim();
                let oh = conv_out(h, kh, *stride, *pad_h);
                let ow = conv_out(wd, kw, *stride, *pad_w);
                let g4 = as4(go);
                // (B,OC,OH,OW) -> (OC, B*OH*OW)
                let g2 = g4
                    .permuted_axes([1, 0, 2, 3])
                    .as_standard_layout()
                    .to_owned()
                    .into_shape((oc, b * oh * ow))
                    .expect("conv grad reshape");
                let cols = im2col(&xv, kh, kw, *stride, *pad_h, *pad_w);
                let dw = g2
                    .dot(&cols.t())
                    .into_shape((oc, c, kh, kw))
                    .expect("dw reshape");
                let w2 = wv
                    .view()
                    .into_shape((oc, c * kh * kw))
                    .expect("w reshape");
                let dcols = w2.t().dot(&g2);
                let dx = col2im(&dcols, (b, c, h, wd), kh, kw, *stride, *pad_h, *pad_w);
                self.acc(g, *x, dx.into_dyn());
                self.acc(g, *w, dw.into_dyn());
            }
            Op::UpsampleNearest2(a) => {
                let g4 = as4(go);
                let (b, c, h2, w2) = g4.dim();
                let (h, w) = (h2 / 2, w2 / 2);
                let mut ga = Array4::<f64>::zeros((b, c, h, w));
                for bi in 0..b {
                    for ci in 0..c {
                        for i in 0..h {
                            for j in 0..w {
                                ga[(bi, ci, i, j)] = g4[(bi, ci, 2 * i, 2 * j)]
                                    + g4[(bi, ci, 2 * i, 2 * j + 1)]
                                    + g4[(bi, ci, 2 * i + 1, 2 * j)]
                                    + g4[(bi, ci, 2 * i + 1, 2 * j + 1)];
                            }
                        }
                    }
                }
                self.acc(g, *a, ga.into_dyn());
            }
        }
    }

    // ----- composite helpers -----

    /// Row-wise affine map: x (B,I) * w^T (I,O) + b (O).
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let wt = self.transpose2(w);
        let y = self.matmul(x, wt);
        self.add(y, b)
    }

    /// Squared L2 norm of the whole array.
    pub fn sq_norm(&mut self, x: Var) -> Var {
        let s = self.mul(x, x);
        self.sum(s)
    }

    /// Euclidean norm with epsilon floor inside the sqrt for stability.
    pub fn l2_norm(&mut self, x: Var, eps: f64) -> Var {
        let s = self.sq_norm(x);
        let s = self.add_scalar(s, eps);
        self.sqrt(s)
    }

    /// Cosine similarity of two flat vectors with epsilon-stabilized norms.
    pub fn cosine(&mut self, a: Var, b: Var, eps: f64) -> Var {
        let p = self.mul(a, b);
        let dot = self.sum(p);
        let na = self.l2_norm(a, eps * eps);
        let nb = self.l2_norm(b, eps * eps);
        let denom = self.mul(na, nb);
        let denom = self.add_scalar(denom, eps);
        self.div(dot, denom)
    }

    /// Mean absolute difference.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let d = self.abs(d);
        self.mean(d)
    }

    /// Mean squared difference.
    pub fn l2_mean_sq(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let d = self.mul(d, d);
        self.mean(d)
    }
}

/// Central finite-difference gradient of `f` at `x0` (test-side oracle).
pub fn finite_diff<F: FnMut(&ArrayD<f64>) -> f64>(
    x0: &ArrayD<f64>,
    eps: f64,
    mut f: F,
) -> ArrayD<f64> {
    let mut g = ArrayD::zeros(x0.raw_dim());
    let mut x = x0.clone();
    for idx in 0..x0.len() {
        let orig = x.as_slice_mut().expect("contiguous")[idx];
        x.as_slice_mut().expect("contiguous")[idx] = orig + eps;
        let fp = f(&x);
        x.as_slice_mut().expect("contiguous")[idx] = orig - eps;
        let fm = f(&x);
        x.as_slice_mut().expect("contiguous")[idx] = orig;
        g.as_slice_mut().expect("contiguous")[idx] = (fp - fm) / (2.0 * eps);
    }
    g
}
