//! The structured per-step network and its hand-written backward pass.

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::check_dim;
use crate::geom::HyperRect;
use crate::{Error, Result};

/// Offsets of every parameter block inside the flat parameter vector.
///
/// Order: hidden layers `(W_i, b_i)`, then the multiplication layer
/// `(W, b)`, then the output matrix, then the scale `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    n: usize,
    m: usize,
    hidden: Vec<usize>,
    /// `(weight offset, bias offset)` per hidden layer.
    hidden_at: Vec<(usize, usize)>,
    mult_at: (usize, usize),
    out_at: usize,
    scale_at: usize,
    len: usize,
}

impl Layout {
    pub fn new(n: usize, m: usize, hidden: &[usize]) -> Result<Self> {
        if n == 0 || m == 0 || hidden.contains(&0) {
            return Err(Error::Invalid(format!(
                "layer sizes must be positive: n={n}, m={m}, hidden={hidden:?}"
            )));
        }
        let mut at = 0;
        let mut prev = n;
        let mut hidden_at = Vec::with_capacity(hidden.len());
        for &h in hidden {
            hidden_at.push((at, at + h * prev));
            at += h * prev + h;
            prev = h;
        }
        let mult_at = (at, at + n * prev);
        at += n * prev + n;
        let out_at = at;
        at += m * n;
        let scale_at = at;
        at += m;
        Ok(Self {
            n,
            m,
            hidden: hidden.to_vec(),
            hidden_at,
            mult_at,
            out_at,
            scale_at,
            len: at,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    /// Number of trainable parameters.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Input width of the multiplication layer.
    fn last_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.n)
    }

    /// Range of the scale vector `R` in the flat parameters.
    pub fn scale_range(&self) -> std::ops::Range<usize> {
        self.scale_at..self.scale_at + self.m
    }

    /// Every parameter block in storage order.
    pub fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        let mut prev = self.n;
        for (i, (&(w, b), &h)) in self.hidden_at.iter().zip(&self.hidden).enumerate() {
            out.push(Block::matrix(format!("W{}", i + 1), w, h, prev));
            out.push(Block::vector(format!("b{}", i + 1), b, h));
            prev = h;
        }
        out.push(Block::matrix("W_mult".into(), self.mult_at.0, self.n, prev));
        out.push(Block::vector("b_mult".into(), self.mult_at.1, self.n));
        out.push(Block::matrix("W_out".into(), self.out_at, self.m, self.n));
        out.push(Block::vector("R".into(), self.scale_at, self.m));
        out
    }

    /// Ranges holding weight matrices (everything except biases and `R`).
    pub fn weight_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out: Vec<_> = self.hidden_at.iter().map(|&(w, b)| w..b).collect();
        out.push(self.mult_at.0..self.mult_at.1);
        out.push(self.out_at..self.scale_at);
        out
    }
}

/// A named slice of the flat parameters; vectors have `cols == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    fn matrix(name: String, start: usize, rows: usize, cols: usize) -> Self {
        Self { name, start, rows, cols }
    }

    fn vector(name: String, start: usize, len: usize) -> Self {
        Self {
            name,
            start,
            rows: len,
            cols: 0,
        }
    }

    pub fn len(&self) -> usize {
        if self.cols == 0 {
            self.rows
        } else {
            self.rows * self.cols
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    a0: Vec<f64>,
    /// Hidden activations after ReLU, one per layer.
    acts: Vec<Vec<f64>>,
    /// Multiplication-layer pre-product `W a + b`.
    pre_mult: Vec<f64>,
    mult: Vec<f64>,
    tanh: Vec<f64>,
}

/// One step's controller `x -> u`.
///
/// `x0 = x - x_nom`, hidden ReLU layers, then `x0 .* (W a + b)`, then
/// `tanh(W_out .)` scaled by `R` and shifted by `u_nom`. The product with
/// `x0` makes the output exactly `u_nom` at `x_nom`, and `tanh` bounds it by
/// `u_nom +- |R|`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNet {
    pub k: usize,
    layout: Layout,
    params: Vec<f64>,
    x_nom: DVector<f64>,
    u_nom: DVector<f64>,
}

impl StepNet {
    /// Kaiming-normal weights, zero biases, and `R = scale`.
    pub fn init(
        k: usize,
        layout: Layout,
        x_nom: DVector<f64>,
        u_nom: DVector<f64>,
        scale: &DVector<f64>,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        check_dim(layout.n, x_nom.len(), "network state anchor")?;
        check_dim(layout.m, u_nom.len(), "network input anchor")?;
        check_dim(layout.m, scale.len(), "network output scale")?;
        let mut params = vec![0.0; layout.len];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, rng: &mut crate::Rng| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for p in &mut params[range] {
                *p = normal.sample(rng);
            }
        };
        let mut prev = layout.n;
        for (i, &(w, b)) in layout.hidden_at.iter().enumerate() {
            fill(w..b, prev, rng);
            prev = layout.hidden[i];
        }
        fill(layout.mult_at.0..layout.mult_at.1, prev, rng);
        fill(layout.out_at..layout.scale_at, layout.n, rng);
        params[layout.scale_range()].copy_from_slice(scale.as_slice());
        Ok(Self {
            k,
            layout,
            params,
            x_nom,
            u_nom,
        })
    }

    /// Uniformly random parameters in `[-a, a]`, for property tests.
    pub fn random(
        k: usize,
        layout: Layout,
        x_nom: DVector<f64>,
        u_nom: DVector<f64>,
        a: f64,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        let params = (0..layout.len).map(|_| rng.random_range(-a..=a)).collect();
        Self::from_parts(k, layout, params, x_nom, u_nom)
    }

    pub fn from_parts(
        k: usize,
        layout: Layout,
        params: Vec<f64>,
        x_nom: DVector<f64>,
        u_nom: DVector<f64>,
    ) -> Result<Self> {
        check_dim(layout.len, params.len(), "network parameters")?;
        check_dim(layout.n, x_nom.len(), "network state anchor")?;
        check_dim(layout.m, u_nom.len(), "network input anchor")?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("non-finite network parameter".into()));
        }
        Ok(Self {
            k,
            layout,
            params,
            x_nom,
            u_nom,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn x_nom(&self) -> &DVector<f64> {
        &self.x_nom
    }

    pub fn u_nom(&self) -> &DVector<f64> {
        &self.u_nom
    }

    pub fn scale(&self) -> &[f64] {
        &self.params[self.layout.scale_range()]
    }

    /// The untrimmed controller.
    pub fn forward_raw(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.layout.m);
        self.forward_into(x.as_slice(), u.as_mut_slice(), &mut Cache::default());
        u
    }

    /// The raw output clamped coordinate-wise to `inputs`.
    pub fn forward_trimmed(&self, x: &DVector<f64>, inputs: &HyperRect) -> DVector<f64> {
        inputs.clamp(&self.forward_raw(x))
    }

    /// Forward pass on slices, recording activations in `cache`.
    pub fn forward_into(&self, x: &[f64], u: &mut [f64], cache: &mut Cache) {
        let l = &self.layout;
        let p = &self.params;
        cache.a0.clear();
        cache.a0.extend(x.iter().zip(self.x_nom.iter()).map(|(a, b)| a - b));
        cache.acts.resize(l.hidden.len(), Vec::new());
        for i in 0..l.hidden.len() {
            let (w, b) = l.hidden_at[i];
            let rows = l.hidden[i];
            let (input, rest) = split_input(&cache.a0, &mut cache.acts, i);
            affine(&p[w..b], &p[b..b + rows], input, rest);
            for v in rest.iter_mut() {
                *v = v.max(0.0);
            }
        }
        let last = cache.acts.last().unwrap_or(&cache.a0);
        let (w, b) = l.mult_at;
        cache.pre_mult.resize(l.n, 0.0);
        affine(&p[w..b], &p[b..b + l.n], last, &mut cache.pre_mult);
        cache.mult.clear();
        cache
            .mult
            .extend(cache.a0.iter().zip(&cache.pre_mult).map(|(a, q)| a * q));
        cache.tanh.resize(l.m, 0.0);
        let wo = &p[l.out_at..l.scale_at];
        for r in 0..l.m {
            let row = &wo[r * l.n..(r + 1) * l.n];
            cache.tanh[r] = dot(row, &cache.mult).tanh();
        }
        let scale = &p[l.scale_range()];
        for r in 0..l.m {
            u[r] = scale[r] * cache.tanh[r] + self.u_nom[r];
        }
    }

    /// Accumulates `d loss / d params` into `grad`, given `g_out = d loss /
    /// d u` and the cache of the matching forward pass.
    pub fn backward_into(&self, cache: &Cache, g_out: &[f64], grad: &mut [f64], work: &mut Vec<f64>) {
        let l = &self.layout;
        let p = &self.params;
        let scale_at = l.scale_at;
        // Output layer.
        let mut g_mult = vec![0.0; l.n];
        for r in 0..l.m {
            let y = cache.tanh[r];
            grad[scale_at + r] += g_out[r] * y;
            let gz = g_out[r] * p[scale_at + r] * (1.0 - y * y);
            if gz == 0.0 {
                continue;
            }
            let w = l.out_at + r * l.n;
            for c in 0..l.n {
                grad[w + c] += gz * cache.mult[c];
                g_mult[c] += gz * p[w + c];
            }
        }
        // Multiplication layer.
        let last = cache.acts.last().unwrap_or(&cache.a0);
        let width = l.last_width();
        let (w, b) = l.mult_at;
        let mut g_prev = vec![0.0; width];
        for r in 0..l.n {
            let gp = g_mult[r] * cache.a0[r];
            if gp == 0.0 {
                continue;
            }
            grad[b + r] += gp;
            let row = w + r * width;
            for c in 0..width {
                grad[row + c] += gp * last[c];
                g_prev[c] += gp * p[row + c];
            }
        }
        // Hidden layers, last to first.
        for i in (0..l.hidden.len()).rev() {
            let (w, b) = l.hidden_at[i];
            let rows = l.hidden[i];
            let input = if i == 0 { &cache.a0 } else { &cache.acts[i - 1] };
            let cols = input.len();
            work.clear();
            work.resize(cols, 0.0);
            for r in 0..rows {
                // ReLU'(0) = 0.
                if cache.acts[i][r] <= 0.0 {
                    continue;
                }
                let gz = g_prev[r];
                if gz == 0.0 {
                    continue;
                }
                grad[b + r] += gz;
                let row = w + r * cols;
                for c in 0..cols {
                    grad[row + c] += gz * input[c];
                    work[c] += gz * p[row + c];
                }
            }
            g_prev.clear();
            g_prev.extend_from_slice(work);
        }
    }
}

fn split_input<'a>(a0: &'a [f64], acts: &'a mut [Vec<f64>], i: usize) -> (&'a [f64], &'a mut Vec<f64>) {
    if i == 0 {
        (a0, &mut acts[0])
    } else {
        let (before, after) = acts.split_at_mut(i);
        (&before[i - 1], &mut after[0])
    }
}

/// `out = W x + b` with `W` row-major `out.len() x x.len()`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let cols = x.len();
    out.resize(b.len(), 0.0);
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
