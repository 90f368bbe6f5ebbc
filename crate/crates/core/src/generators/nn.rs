//! Dense and spiral-convolution layers with hand-written backward passes.
//!
//! Vectors are column vectors; per-vertex features are `V x C` matrices with
//! one row per vertex.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub const LEAKY_SLOPE: f64 = 0.01;

/// Named parameter tensors. Gradients and optimizer moments share the layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<DMatrix<f64>>,
}

impl Params {
    pub fn push(&mut self, name: impl Into<String>, tensor: DMatrix<f64>) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn get(&self, index: usize) -> &DMatrix<f64> {
        &self.tensors[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut DMatrix<f64> {
        &mut self.tensors[index]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[DMatrix<f64>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.tensors
    }

    pub fn zeros_like(&self) -> Params {
        Params {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| DMatrix::zeros(t.nrows(), t.ncols()))
                .collect(),
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b * scale;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            *t *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// All scalars in tensor order (column-major within a tensor).
    pub fn flat(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.scalar_count());
        let mut it = values.iter();
        for t in &mut self.tensors {
            for v in t.iter_mut() {
                *v = *it.next().unwrap();
            }
        }
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.fill(value);
        }
    }
}

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

/// Affine map `y = W x + b` with `W` of shape `out x in`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
}

impl Linear {
    /// Weights uniform in `+-1/sqrt(input)`, zero bias.
    pub fn new(
        params: &mut Params,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            weight: params.push(format!("{name}.weight"), uniform(output, input, bound, rng)),
            bias: params.push(format!("{name}.bias"), DMatrix::zeros(output, 1)),
        }
    }

    pub fn input_dim(&self, p: &Params) -> usize {
        p.get(self.weight).ncols()
    }

    pub fn output_dim(&self, p: &Params) -> usize {
        p.get(self.weight).nrows()
    }

    pub fn forward(&self, p: &Params, x: &DVector<f64>) -> DVector<f64> {
        p.get(self.weight) * x + p.get(self.bias).column(0)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(
        &self,
        p: &Params,
        x: &DVector<f64>,
        dy: &DVector<f64>,
        grads: &mut Params,
    ) -> DVector<f64> {
        grads.get_mut(self.weight).ger(1.0, dy, x, 1.0);
        let mut db = grads.get_mut(self.bias).column_mut(0);
        db += dy;
        p.get(self.weight).tr_mul(dy)
    }
}

/// Spiral convolution: each vertex gathers the features of its fixed-length
/// spiral (`length` entries), concatenates them and applies one shared affine
/// map, `Y = gather(X) W + 1 b^T` with `W` of shape `(length * in) x out`.
#[derive(Clone, Copy, Debug)]
pub struct SpiralConv {
    pub weight: usize,
    pub bias: usize,
    pub length: usize,
    pub input: usize,
    pub output: usize,
}

impl SpiralConv {
    pub fn new(
        params: &mut Params,
        name: &str,
        length: usize,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = length * input;
        let bound = 1.0 / (fan_in as f64).sqrt();
        SpiralConv {
            weight: params.push(
                format!("{name}.weight"),
                uniform(fan_in, output, bound, rng),
            ),
            bias: params.push(format!("{name}.bias"), DMatrix::zeros(1, output)),
            length,
            input,
            output,
        }
    }

    /// `V x (length * C)` matrix of spiral-ordered neighbor features.
    pub fn gather(&self, x: &DMatrix<f64>, spiral: &[u32]) -> DMatrix<f64> {
        let (v, c) = (x.nrows(), x.ncols());
        assert_eq!(c, self.input, "spiral conv input width");
        assert_eq!(spiral.len(), v * self.length, "spiral table size");
        let mut g = DMatrix::zeros(v, self.length * c);
        for l in 0..self.length {
            for ch in 0..c {
                let src = x.column(ch);
                let mut dst = g.column_mut(l * c + ch);
                for row in 0..v {
                    dst[row] = src[spiral[row * self.length + l] as usize];
                }
            }
        }
        g
    }

    /// Returns the gathered input (needed by [`SpiralConv::backward`]) and the output.
    pub fn forward(
        &self,
        p: &Params,
        x: &DMatrix<f64>,
        spiral: &[u32],
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let g = self.gather(x, spiral);
        let mut y = &g * p.get(self.weight);
        let b = p.get(self.bias);
        for mut row in y.row_iter_mut() {
            row += b;
        }
        (g, y)
    }

    pub fn backward(
        &self,
        p: &Params,
        gathered: &DMatrix<f64>,
        spiral: &[u32],
        dy: &DMatrix<f64>,
        grads: &mut Params,
    ) -> DMatrix<f64> {
        grads.get_mut(self.weight).gemm_tr(1.0, gathered, dy, 1.0);
        let mut db = grads.get_mut(self.bias).row_mut(0);
        db += dy.row_sum();
        let dg = dy * p.get(self.weight).transpose();
        let v = dy.nrows();
        let c = self.input;
        let mut dx = DMatrix::zeros(v, c);
        for l in 0..self.length {
            for ch in 0..c {
                let src = dg.column(l * c + ch);
                for row in 0..v {
                    dx[(spiral[row * self.length + l] as usize, ch)] += src[row];
                }
            }
        }
        dx
    }
}

pub fn leaky_relu<R: nalgebra::Dim, C: nalgebra::Dim, S>(
    x: &nalgebra::Matrix<f64, R, C, S>,
) -> nalgebra::OMatrix<f64, R, C>
where
    S: nalgebra::storage::Storage<f64, R, C>,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<R, C>,
{
    x.map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
}

/// Gradient through [`leaky_relu`] given the pre-activation `x`.
pub fn leaky_relu_backward<R: nalgebra::Dim, C: nalgebra::Dim, S1, S2>(
    x: &nalgebra::Matrix<f64, R, C, S1>,
    dy: &nalgebra::Matrix<f64, R, C, S2>,
) -> nalgebra::OMatrix<f64, R, C>
where
    S1: nalgebra::storage::Storage<f64, R, C>,
    S2: nalgebra::storage::Storage<f64, R, C>,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<R, C>,
{
    x.zip_map(dy, |v, d| if v > 0.0 { d } else { LEAKY_SLOPE * d })
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Gradient through [`sigmoid`] given its output `y`.
pub fn sigmoid_backward(y: f64, dy: f64) -> f64 {
    dy * y * (1.0 - y)
}

/// `[a; b]` for column vectors.
pub fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}
