//! Dense feed-forward networks on column batches (features × samples) with
//! hand-written backpropagation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Linear,
    Softplus,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Self::Tanh, Self::Sigmoid, Self::Linear, Self::Softplus];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Tanh => "tanh",
            Self::Sigmoid => "sigmoid",
            Self::Linear => "linear",
            Self::Softplus => "softplus",
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Self::Tanh => x.tanh(),
            Self::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Self::Linear => x,
            Self::Softplus => {
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    #[inline]
    pub fn derivative(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - y * y,
            Self::Sigmoid => y * (1.0 - y),
            Self::Linear => 1.0,
            Self::Softplus => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown activation `{s}`")))
    }
}

/// Column-major operand of [`gemm`], optionally read transposed.
#[derive(Clone, Copy)]
struct Op<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    trans: bool,
}

impl<'a> Op<'a> {
    fn of(m: &'a DMatrix<f64>) -> Self {
        Self {
            data: m.as_slice(),
            rows: m.nrows(),
            cols: m.ncols(),
            trans: false,
        }
    }

    fn t(self) -> Self {
        Self { trans: !self.trans, ..self }
    }

    /// Logical shape and `(row, column)` strides.
    fn layout(&self) -> (usize, usize, isize, isize) {
        if self.trans {
            (self.cols, self.rows, self.rows as isize, 1)
        } else {
            (self.rows, self.cols, 1, self.rows as isize)
        }
    }
}

/// `c ← a·b + beta·c` with `c` column-major `m × n`; transposes are read
/// through strides instead of copies.
fn gemm(a: Op, b: Op, beta: f64, c: &mut [f64]) {
    let (m, k, rsa, csa) = a.layout();
    let (kb, n, rsb, csb) = b.layout();
    assert!(k == kb && c.len() == m * n, "gemm: dimension mismatch");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the shapes and strides above describe exactly the three
    // slices, whose lengths were checked.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Layer {
    /// `W·h + b` for every column of `h`.
    fn affine(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.b.len();
        let mut z = DMatrix::zeros(n, h.ncols());
        for col in z.as_mut_slice().chunks_exact_mut(n.max(1)) {
            col.copy_from_slice(self.b.as_slice());
        }
        gemm(Op::of(&self.w), Op::of(h), 1.0, z.as_mut_slice());
        z
    }
}

/// Hidden layers share one activation; the last layer uses `output`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Pre- and post-activation values of every layer for one batch.
pub struct Cache {
    input: DMatrix<f64>,
    pre: Vec<DMatrix<f64>>,
    post: Vec<DMatrix<f64>>,
}

impl Cache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.post.last().unwrap_or(&self.input)
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    w: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-lim..lim)),
                    b: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self { layers, hidden, output }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.ncols()];
        s.extend(self.layers.iter().map(|l| l.w.nrows()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.nrows()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            let mut z = l.affine(&h);
            z.apply(|v| *v = act.apply(*v));
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Cache {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<DMatrix<f64>> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            let h = post.last().unwrap_or(x);
            let z = l.affine(h);
            let y = z.map(|v| act.apply(v));
            pre.push(z);
            post.push(y);
        }
        Cache {
            input: x.clone(),
            pre,
            post,
        }
    }

    /// Accumulates parameter gradients into `grad` (same layout as
    /// [`Self::params`]) given `∂L/∂output`, and returns `∂L/∂input`.
    pub fn backward(&self, cache: &Cache, grad_out: &DMatrix<f64>, grad: &mut [f64]) -> DMatrix<f64> {
        assert_eq!(grad.len(), self.n_params());
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.w.len() + l.b.len();
        }
        let mut delta = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let act = self.activation(i);
            if act != Activation::Linear {
                let (z, y) = (&cache.pre[i], &cache.post[i]);
                for ((d, &zv), &yv) in delta.as_mut_slice().iter_mut().zip(z.as_slice()).zip(y.as_slice()) {
                    *d *= act.derivative(zv, yv);
                }
            }
            let h = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            let l = &self.layers[i];
            let o = offsets[i];
            let (nw, nb) = (l.w.len(), l.b.len());
            gemm(Op::of(&delta), Op::of(h).t(), 1.0, &mut grad[o..o + nw]);
            let gb = &mut grad[o + nw..o + nw + nb];
            for col in delta.as_slice().chunks_exact(nb) {
                for (g, v) in gb.iter_mut().zip(col) {
                    *g += v;
                }
            }
            let mut back = DMatrix::zeros(l.w.ncols(), delta.ncols());
            gemm(Op::of(&l.w).t(), Op::of(&delta), 0.0, back.as_mut_slice());
            delta = back;
        }
        delta
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Column-major weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
    }
}
