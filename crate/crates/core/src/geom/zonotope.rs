use nalgebra::{DMatrix, DVector};

use super::HyperRect;
use crate::error::check_dim;
use crate::numerics::{bounded_feasible, BoundedLp, LpOutcome};
use crate::{Error, Result};

/// Generator columns with Euclidean norm below this are dropped.
pub const PRUNE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Factors uniform on `[-1, 1]^q`. Uniform in factor space, not in volume.
    Uniform,
    /// Factors uniform on the sign vectors `{-1, 1}^q`.
    Extreme,
}

/// The set `{ c + G b : |b|_inf <= 1 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
}

/// Objective weight of the inscribed box in
/// [`Zonotope::shrink_into_box_per_generator`], relative to the hull fill.
pub const INSCRIBED_WEIGHT: f64 = 10.0;

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self> {
        check_dim(center.len(), generators.nrows(), "zonotope generator rows")?;
        if center.is_empty() {
            return Err(Error::Invalid("zonotope must have dimension >= 1".into()));
        }
        if center.iter().chain(generators.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("zonotope entries must be finite".into()));
        }
        Ok(Self { center, generators })
    }

    /// Singleton `{c}`.
    pub fn point(center: DVector<f64>) -> Self {
        let n = center.len();
        Self {
            center,
            generators: DMatrix::zeros(n, 0),
        }
    }

    /// Box as a zonotope with diagonal generators; zero-width axes are dropped.
    pub fn from_box(b: &HyperRect) -> Self {
        let r = b.radius();
        Self {
            center: b.center(),
            generators: DMatrix::from_diagonal(&r),
        }
        .pruned()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Number of generators `q`.
    pub fn order(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn pruned(&self) -> Self {
        let keep: Vec<usize> = (0..self.order())
            .filter(|&j| self.generators.column(j).norm() >= PRUNE_TOL)
            .collect();
        if keep.len() == self.order() {
            return self.clone();
        }
        let g = DMatrix::from_fn(self.dim(), keep.len(), |i, j| self.generators[(i, keep[j])]);
        Self {
            center: self.center.clone(),
            generators: g,
        }
    }

    /// Exact image `<M c, M G>`.
    pub fn linear_map(&self, m: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.dim(), m.ncols(), "linear map columns")?;
        Ok(Self {
            center: m * &self.center,
            generators: m * &self.generators,
        })
    }

    pub fn translate(&self, v: &DVector<f64>) -> Result<Self> {
        check_dim(self.dim(), v.len(), "translation")?;
        Ok(Self {
            center: &self.center + v,
            generators: self.generators.clone(),
        })
    }

    /// `<c, s G>`.
    pub fn scale_generators(&self, s: f64) -> Self {
        Self {
            center: self.center.clone(),
            generators: &self.generators * s,
        }
    }

    /// Exact Minkowski sum: centers add, generators concatenate.
    pub fn minkowski_sum(&self, other: &Zonotope) -> Result<Self> {
        check_dim(self.dim(), other.dim(), "minkowski sum")?;
        let (n, q1, q2) = (self.dim(), self.order(), other.order());
        let mut g = DMatrix::zeros(n, q1 + q2);
        g.columns_mut(0, q1).copy_from(&self.generators);
        g.columns_mut(q1, q2).copy_from(&other.generators);
        Ok(Self {
            center: &self.center + &other.center,
            generators: g,
        }
        .pruned())
    }

    pub fn minkowski_sum_box(&self, b: &HyperRect) -> Result<Self> {
        self.minkowski_sum(&Zonotope::from_box(b))
    }

    /// Tightest enclosing box: `c +- |G| 1`.
    pub fn interval_hull(&self) -> HyperRect {
        let r = self.generators.abs().column_sum();
        HyperRect::from_center_radius(&self.center, &r).expect("radius is nonnegative")
    }

    /// Factor vector `b` with `x = c + G b`, if `x` is a member.
    pub fn factors_of(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        if x.len() != self.dim() {
            return None;
        }
        bounded_feasible(&self.generators, &(x - &self.center))
    }

    /// Exact membership via the bounded feasibility LP.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.factors_of(x).is_some()
    }

    pub fn point_at(&self, factors: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.generators * factors
    }

    /// Under-approximates the Minkowski difference `Z - [-w, w]`.
    ///
    /// Finds the cheapest per-generator reductions `beta` in `[0, 1]^q` such
    /// that `[-w, w]` is contained in `G diag(beta) B` under the generator
    /// containment condition (`diag(w) = G Y` with row sums
    /// `sum_j |Y_ij| <= beta_i`), and returns `<c, G diag(1 - beta)>`.
    /// Each axis is solved as an independent l1 problem first; the coupled LP
    /// only runs when those answers violate `beta <= 1`. If no decomposition
    /// exists, falls back to uniform scaling `<c, s G>` with the largest `s`
    /// whose complement still absorbs the box.
    pub fn minkowski_diff_under(&self, w: &DVector<f64>) -> Result<Self> {
        check_dim(self.dim(), w.len(), "minkowski difference")?;
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("subtracted box half-widths must be >= 0".into()));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Ok(self.clone());
        }
        let beta = match self.axis_decomposition(w) {
            Some(beta) if beta.max() <= 1.0 => Some(beta),
            Some(_) => self.coupled_decomposition(w),
            None => None,
        };
        match beta {
            Some(beta) => {
                let mut g = self.generators.clone();
                for (j, mut col) in g.column_iter_mut().enumerate() {
                    col *= (1.0 - beta[j]).max(0.0);
                }
                Ok(Self {
                    center: self.center.clone(),
                    generators: g,
                })
            }
            None => self.uniform_diff(w),
        }
    }

    /// Same as [`Self::minkowski_diff_under`] with a box centered at the origin.
    pub fn minkowski_diff_box(&self, b: &HyperRect) -> Result<Self> {
        if !b.is_symmetric() {
            return Err(Error::Invalid("subtracted box must be centered at the origin".into()));
        }
        self.minkowski_diff_under(b.upper())
    }

    fn axis_decomposition(&self, w: &DVector<f64>) -> Option<DVector<f64>> {
        let (n, q) = (self.dim(), self.order());
        let mut a = DMatrix::zeros(n, 2 * q);
        a.columns_mut(0, q).copy_from(&self.generators);
        a.columns_mut(q, q).copy_from(&(-&self.generators));
        let mut beta = DVector::zeros(q);
        for j in 0..n {
            if w[j] == 0.0 {
                continue;
            }
            let mut rhs = DVector::zeros(n);
            rhs[j] = w[j];
            let lp = BoundedLp {
                a: a.clone(),
                b: rhs,
                cost: DVector::from_element(2 * q, 1.0),
                lower: DVector::zeros(2 * q),
                upper: DVector::from_element(2 * q, 1.0),
            };
            let LpOutcome::Optimal { x, .. } = lp.solve() else {
                return None;
            };
            for i in 0..q {
                beta[i] += x[i] + x[q + i];
            }
        }
        Some(beta)
    }

    fn coupled_decomposition(&self, w: &DVector<f64>) -> Option<DVector<f64>> {
        let (n, q) = (self.dim(), self.order());
        let axes: Vec<usize> = (0..n).filter(|&j| w[j] > 0.0).collect();
        let na = axes.len();
        // Variables: for each active axis a, Y+ (q) then Y- (q); then q slacks.
        let nv = 2 * q * na + q;
        let rows = n * na + q;
        let mut a = DMatrix::zeros(rows, nv);
        let mut b = DVector::zeros(rows);
        for (ai, &j) in axes.iter().enumerate() {
            let off = 2 * q * ai;
            for r in 0..n {
                for i in 0..q {
                    a[(n * ai + r, off + i)] = self.generators[(r, i)];
                    a[(n * ai + r, off + q + i)] = -self.generators[(r, i)];
                }
            }
            b[n * ai + j] = w[j];
        }
        for i in 0..q {
            let row = n * na + i;
            for ai in 0..na {
                a[(row, 2 * q * ai + i)] = 1.0;
                a[(row, 2 * q * ai + q + i)] = 1.0;
            }
            a[(row, 2 * q * na + i)] = 1.0;
            b[row] = 1.0;
        }
        let mut cost = DVector::from_element(nv, 1.0);
        cost.rows_mut(2 * q * na, q).fill(0.0);
        let lp = BoundedLp {
            a,
            b,
            cost,
            lower: DVector::zeros(nv),
            upper: DVector::from_element(nv, 1.0),
        };
        let LpOutcome::Optimal { x, .. } = lp.solve() else {
            return None;
        };
        Some(DVector::from_fn(q, |i, _| {
            (0..na)
                .map(|ai| x[2 * q * ai + i] + x[2 * q * ai + q + i])
                .sum::<f64>()
                .min(1.0)
        }))
    }

    /// Largest `t` with `t [-w, w]` inside `G B`, via one LP per box vertex
    /// (half of them, by symmetry).
    fn box_scale_capacity(&self, w: &DVector<f64>) -> f64 {
        let (n, q) = (self.dim(), self.order());
        let mut best = f64::INFINITY;
        for mask in 0..(1usize << (n - 1)) {
            let v = DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { -w[i] } else { w[i] });
            let mut a = DMatrix::zeros(n, q + 1);
            a.columns_mut(0, q).copy_from(&self.generators);
            a.set_column(q, &(-v));
            let mut cost = DVector::zeros(q + 1);
            cost[q] = -1.0;
            let mut lower = DVector::from_element(q + 1, -1.0);
            lower[q] = 0.0;
            let mut upper = DVector::from_element(q + 1, 1.0);
            upper[q] = f64::INFINITY;
            let lp = BoundedLp {
                a,
                b: DVector::zeros(n),
                cost,
                lower,
                upper,
            };
            let t = match lp.solve() {
                LpOutcome::Optimal { x, .. } => x[q],
                LpOutcome::Unbounded => f64::INFINITY,
                LpOutcome::Infeasible => 0.0,
            };
            best = best.min(t);
        }
        best
    }

    fn uniform_diff(&self, w: &DVector<f64>) -> Result<Self> {
        let t = self.box_scale_capacity(w);
        if !(t >= 1.0) {
            return Err(Error::EmptySet(format!(
                "box with half-widths {:?} does not fit in the zonotope (capacity {t:.4})",
                w.as_slice()
            )));
        }
        Ok(self.scale_generators(1.0 - 1.0 / t))
    }

    /// Uniformly scales the generators by the largest `alpha` in `[0, 1]`
    /// whose interval hull fits in `b`. The result lies in `Z` and in `b`.
    pub fn shrink_into_box(&self, b: &HyperRect) -> Result<(Self, f64)> {
        check_dim(self.dim(), b.dim(), "shrink into box")?;
        let c = &self.center;
        let h = self.generators.abs().column_sum();
        let mut alpha: f64 = 1.0;
        for i in 0..self.dim() {
            let slack = (c[i] - b.lower()[i]).min(b.upper()[i] - c[i]);
            if !(slack > 0.0) {
                return Err(Error::EmptySet(format!(
                    "zonotope center is not strictly inside the box (axis {i})"
                )));
            }
            if h[i] > 0.0 {
                alpha = alpha.min(slack / h[i]);
            }
        }
        // Rounding may push the scaled hull an ulp past a face.
        loop {
            let z = self.scale_generators(alpha);
            if alpha == 0.0 || b.contains_box(&z.interval_hull()) {
                return Ok((z, alpha));
            }
            alpha *= 1.0 - 1e-12;
        }
    }

    /// Scales each generator by its own factor in `[0, 1]` so that the hull
    /// fits in `b`, maximizing the summed hull fill `sum_i h_i / slack_i`
    /// (one LP). Keeps generators that do not touch a binding axis intact,
    /// where [`Self::shrink_into_box`] would scale them with the rest.
    ///
    /// When `core` is given, the result must also contain a centered box
    /// `[-t, t]` with `core <= t <= slack`, encoded through generator
    /// containment as in [`Self::minkowski_diff_under`]. The objective then
    /// weights that inscribed box by [`INSCRIBED_WEIGHT`] over the fill, so
    /// the scaling keeps room for later box differences instead of long thin
    /// generators.
    pub fn shrink_into_box_per_generator(
        &self,
        b: &HyperRect,
        core: Option<&DVector<f64>>,
    ) -> Result<(Self, DVector<f64>)> {
        check_dim(self.dim(), b.dim(), "shrink into box")?;
        let (n, q) = (self.dim(), self.order());
        let c = &self.center;
        let slack = DVector::from_fn(n, |i, _| (c[i] - b.lower()[i]).min(b.upper()[i] - c[i]));
        if let Some(i) = slack.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::EmptySet(format!(
                "zonotope center is not strictly inside the box (axis {i})"
            )));
        }
        let abs = self.generators.abs();
        let fits = (0..n).all(|i| abs.row(i).sum() <= slack[i]);
        if let Some(w) = core {
            check_dim(n, w.len(), "intersection core")?;
            if let Some(i) = (0..n).find(|&i| !(w[i] >= 0.0) || w[i] > slack[i]) {
                return Err(Error::EmptySet(format!(
                    "core half-width {} exceeds the box slack {} on axis {i}",
                    w[i], slack[i]
                )));
            }
        }
        if fits && core.is_none() {
            return Ok((self.clone(), DVector::from_element(q, 1.0)));
        }
        let na = if core.is_some() { n } else { 0 };
        // Variables: scales (q), containment weights Y+/Y- per axis (2 q
        // each), inscribed half-widths (na), hull slacks (n), containment
        // slacks (q if na > 0).
        let ny = 2 * q * na;
        let t0 = q + ny;
        let s0 = t0 + na;
        let nt = if na > 0 { q } else { 0 };
        let nv = s0 + n + nt;
        let rows = n + n * na + nt;
        let mut a = DMatrix::zeros(rows, nv);
        let mut rhs = DVector::zeros(rows);
        for i in 0..n {
            for j in 0..q {
                a[(i, j)] = abs[(i, j)];
            }
            a[(i, s0 + i)] = 1.0;
            rhs[i] = slack[i];
        }
        for axis in 0..na {
            let off = q + 2 * q * axis;
            for r in 0..n {
                for j in 0..q {
                    a[(n + n * axis + r, off + j)] = self.generators[(r, j)];
                    a[(n + n * axis + r, off + q + j)] = -self.generators[(r, j)];
                }
            }
            a[(n + n * axis + axis, t0 + axis)] = -1.0;
        }
        for j in 0..nt {
            let row = n + n * na + j;
            for axis in 0..na {
                let off = q + 2 * q * axis;
                a[(row, off + j)] = 1.0;
                a[(row, off + q + j)] = 1.0;
            }
            a[(row, j)] = -1.0;
            a[(row, s0 + n + j)] = 1.0;
        }
        let mut cost = DVector::zeros(nv);
        for j in 0..q {
            cost[j] = -(0..n).map(|i| abs[(i, j)] / slack[i]).sum::<f64>();
        }
        let mut lower = DVector::zeros(nv);
        let mut upper = DVector::from_element(nv, 1.0);
        upper.rows_mut(s0, n + nt).fill(f64::INFINITY);
        if let Some(w) = core {
            for i in 0..n {
                cost[t0 + i] = -INSCRIBED_WEIGHT / slack[i];
                lower[t0 + i] = w[i];
                upper[t0 + i] = slack[i];
            }
        }
        let lp = BoundedLp {
            a,
            b: rhs,
            cost,
            lower,
            upper,
        };
        let LpOutcome::Optimal { x, .. } = lp.solve() else {
            return Err(Error::EmptySet(if na > 0 {
                "no scaling fits the box while keeping the core".into()
            } else {
                "per-generator intersection LP failed".into()
            }));
        };
        let mut lambda = DVector::from_fn(q, |j, _| x[j].clamp(0.0, 1.0));
        loop {
            let mut g = self.generators.clone();
            for (j, mut col) in g.column_iter_mut().enumerate() {
                col *= lambda[j];
            }
            let z = Self {
                center: c.clone(),
                generators: g,
            };
            if b.contains_box(&z.interval_hull()) {
                return Ok((z, lambda));
            }
            lambda *= 1.0 - 1e-12;
        }
    }

    /// Deterministic samples for a given seed.
    pub fn sample(&self, n: usize, mode: SampleMode, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = crate::rng_from_seed(seed);
        self.sample_with(n, mode, &mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(
        &self,
        n: usize,
        mode: SampleMode,
        rng: &mut R,
    ) -> Vec<DVector<f64>> {
        let q = self.order();
        (0..n)
            .map(|_| {
                let b = DVector::from_fn(q, |_, _| match mode {
                    SampleMode::Uniform => rng.random_range(-1.0..=1.0),
                    SampleMode::Extreme => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                });
                self.point_at(&b)
            })
            .collect()
    }

    /// Vertices of the projection onto axes `(i, j)`, counterclockwise,
    /// by sorting generator directions by angle.
    pub fn projected_polygon(&self, i: usize, j: usize) -> Vec<[f64; 2]> {
        let mut gens: Vec<[f64; 2]> = (0..self.order())
            .map(|k| {
                let (x, y) = (self.generators[(i, k)], self.generators[(j, k)]);
                if y < 0.0 || (y == 0.0 && x < 0.0) {
                    [-x, -y]
                } else {
                    [x, y]
                }
            })
            .filter(|g| g[0].hypot(g[1]) >= PRUNE_TOL)
            .collect();
        let c = [self.center[i], self.center[j]];
        if gens.is_empty() {
            return vec![c];
        }
        gens.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));
        let sum = gens
            .iter()
            .fold([0.0, 0.0], |s, g| [s[0] + g[0], s[1] + g[1]]);
        // Lowest point; walk counterclockwise along +2g then -2g.
        let mut p = [c[0] - sum[0], c[1] - sum[1]];
        let mut out = Vec::with_capacity(2 * gens.len());
        for g in gens.iter() {
            out.push(p);
            p = [p[0] + 2.0 * g[0], p[1] + 2.0 * g[1]];
        }
        for g in gens.iter() {
            out.push(p);
            p = [p[0] - 2.0 * g[0], p[1] - 2.0 * g[1]];
        }
        out
    }
}
