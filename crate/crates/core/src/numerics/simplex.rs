//! Dense bounded-variable primal simplex.
//!
//! Solves `min c'x  s.t.  A x = b,  l <= x <= u` with finite lower bounds and
//! possibly infinite upper bounds. Nonbasic variables sit at either bound, so
//! box constraints never become rows. Phase 1 minimizes the sum of one
//! artificial per row; phase 2 runs on the original cost with artificials
//! fixed at zero. Dantzig pricing switches to Bland's rule after a run of
//! degenerate pivots.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-10;
const BLAND_AFTER: usize = 40;

#[derive(Debug, Clone)]
pub struct BoundedLp {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub cost: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn solution(&self) -> Option<&DVector<f64>> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols`, equal to `B^-1 [A | I]`.
    t: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    /// Shifted upper bounds (lower bounds are all zero after shifting).
    ub: Vec<f64>,
    /// Values of the basic variables, indexed by row.
    xb: Vec<f64>,
    /// Columns that may never enter the basis.
    frozen: Vec<bool>,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn value(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::Lower => 0.0,
            Status::Upper => self.ub[j],
            Status::Basic => {
                let r = self.basis.iter().position(|&b| b == j).unwrap();
                self.xb[r]
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.t[r * cols + j];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for chunk in before.chunks_mut(cols).chain(after.chunks_mut(cols)) {
            let f = chunk[j];
            if f != 0.0 {
                for (v, pv) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                chunk[j] = 0.0;
            }
        }
    }

    /// One pricing + ratio-test iteration.
    fn iterate(&mut self, cost: &[f64], bland: bool) -> Step {
        let (rows, cols) = (self.rows, self.cols);
        // Simplex multipliers folded into reduced costs column by column.
        let cb: Vec<f64> = self.basis.iter().map(|&b| cost[b]).collect();
        let mut enter: Option<(usize, f64)> = None;
        for j in 0..cols {
            if self.status[j] == Status::Basic || self.frozen[j] || self.ub[j] <= 0.0 {
                continue;
            }
            let mut d = cost[j];
            for i in 0..rows {
                d -= cb[i] * self.at(i, j);
            }
            let gain = match self.status[j] {
                Status::Lower if d < -COST_TOL => -d,
                Status::Upper if d > COST_TOL => d,
                _ => continue,
            };
            match enter {
                None => enter = Some((j, gain)),
                Some((_, g)) if !bland && gain > g => enter = Some((j, gain)),
                _ => {}
            }
            if bland && enter.is_some() {
                break;
            }
        }
        let Some((j, _)) = enter else {
            return Step::Optimal;
        };
        let dir = if self.status[j] == Status::Lower { 1.0 } else { -1.0 };

        let mut t_max = self.ub[j];
        let mut leave: Option<(usize, Status)> = None;
        for i in 0..rows {
            let alpha = dir * self.at(i, j);
            let (ratio, to) = if alpha > PIVOT_TOL {
                (self.xb[i].max(0.0) / alpha, Status::Lower)
            } else if alpha < -PIVOT_TOL {
                let ubb = self.ub[self.basis[i]];
                if !ubb.is_finite() {
                    continue;
                }
                ((ubb - self.xb[i]).max(0.0) / -alpha, Status::Upper)
            } else {
                continue;
            };
            let tie = (ratio - t_max).abs() <= 1e-14;
            let better = ratio < t_max - 1e-14
                || match leave {
                    Some((li, _)) if tie => {
                        if bland {
                            self.basis[i] < self.basis[li]
                        } else {
                            alpha.abs() > self.at(li, j).abs()
                        }
                    }
                    _ => false,
                };
            if better {
                t_max = ratio;
                leave = Some((i, to));
            }
        }
        if !t_max.is_finite() {
            return Step::Unbounded;
        }

        for i in 0..rows {
            let a = self.at(i, j);
            if a != 0.0 {
                self.xb[i] -= dir * t_max * a;
            }
        }
        match leave {
            None => {
                // Bound flip; the basis is unchanged.
                self.status[j] = if dir > 0.0 { Status::Upper } else { Status::Lower };
            }
            Some((r, to)) => {
                let entering_value = if dir > 0.0 { t_max } else { self.ub[j] - t_max };
                let leaving = self.basis[r];
                self.status[leaving] = to;
                self.pivot(r, j);
                self.basis[r] = j;
                self.status[j] = Status::Basic;
                self.xb[r] = entering_value;
            }
        }
        Step::Moved
    }

    fn run(&mut self, cost: &[f64]) -> Step {
        let mut degenerate = 0usize;
        let limit = 50 * (self.rows + self.cols) + 1000;
        for _ in 0..limit {
            let before = objective(self, cost);
            match self.iterate(cost, degenerate >= BLAND_AFTER) {
                Step::Moved => {
                    let after = objective(self, cost);
                    if after < before - 1e-13 * (1.0 + before.abs()) {
                        degenerate = 0;
                    } else {
                        degenerate += 1;
                    }
                }
                other => return other,
            }
        }
        // Bland's rule terminates; reaching here means numerical trouble.
        Step::Optimal
    }
}

fn objective(tab: &Tableau, cost: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..tab.cols {
        match tab.status[j] {
            Status::Upper => s += cost[j] * tab.ub[j],
            Status::Lower | Status::Basic => {}
        }
    }
    for (i, &b) in tab.basis.iter().enumerate() {
        s += cost[b] * tab.xb[i];
    }
    s
}

impl BoundedLp {
    pub fn solve(&self) -> LpOutcome {
        let m = self.a.nrows();
        let nv = self.a.ncols();
        assert_eq!(self.b.len(), m);
        assert_eq!(self.cost.len(), nv);
        assert_eq!(self.lower.len(), nv);
        assert_eq!(self.upper.len(), nv);
        if (0..nv).any(|j| self.lower[j] > self.upper[j] || !self.lower[j].is_finite()) {
            return LpOutcome::Infeasible;
        }

        let cols = nv + m;
        let mut rhs = &self.b - &self.a * &self.lower;
        let mut t = vec![0.0; m * cols];
        for i in 0..m {
            let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
            rhs[i] *= sign;
            for j in 0..nv {
                t[i * cols + j] = sign * self.a[(i, j)];
            }
            t[i * cols + nv + i] = 1.0;
        }
        let mut ub: Vec<f64> = (0..nv).map(|j| self.upper[j] - self.lower[j]).collect();
        ub.extend(std::iter::repeat_n(f64::INFINITY, m));
        let mut status = vec![Status::Lower; cols];
        for s in &mut status[nv..] {
            *s = Status::Basic;
        }
        let mut tab = Tableau {
            rows: m,
            cols,
            t,
            basis: (nv..cols).collect(),
            status,
            ub,
            xb: rhs.iter().copied().collect(),
            frozen: vec![false; cols],
        };

        let mut phase1 = vec![0.0; cols];
        for c in &mut phase1[nv..] {
            *c = 1.0;
        }
        tab.run(&phase1);
        let infeas = objective(&tab, &phase1);
        let scale = 1.0 + rhs.amax();
        if infeas > FEAS_TOL * scale {
            return LpOutcome::Infeasible;
        }

        // Drive zero-valued artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] < nv {
                continue;
            }
            let pick = (0..nv)
                .filter(|&j| tab.status[j] != Status::Basic && tab.at(r, j).abs() > 1e-9)
                .max_by(|&a, &b| tab.at(r, a).abs().total_cmp(&tab.at(r, b).abs()));
            if let Some(j) = pick {
                let value = tab.value(j);
                let art = tab.basis[r];
                tab.pivot(r, j);
                tab.basis[r] = j;
                tab.status[j] = Status::Basic;
                tab.status[art] = Status::Lower;
                tab.xb[r] = value;
            }
        }
        for j in nv..cols {
            tab.ub[j] = 0.0;
            tab.frozen[j] = true;
        }

        let mut phase2 = vec![0.0; cols];
        phase2[..nv].copy_from_slice(self.cost.as_slice());
        if let Step::Unbounded = tab.run(&phase2) {
            return LpOutcome::Unbounded;
        }

        let mut x = self.lower.clone();
        for j in 0..nv {
            let v = match tab.status[j] {
                Status::Lower => 0.0,
                Status::Upper => tab.ub[j],
                Status::Basic => 0.0,
            };
            x[j] += v;
        }
        for (r, &b) in tab.basis.iter().enumerate() {
            if b < nv {
                x[b] = self.lower[b] + tab.xb[r].clamp(0.0, tab.ub[b]);
            }
        }
        let objective = self.cost.dot(&x);
        LpOutcome::Optimal { x, objective }
    }
}

/// Finds `b` in `[-1, 1]^q` with `G b = y`, or `None` if none exists.
///
/// This is the zonotope membership test: `c + y` lies in `<c, G>` exactly
/// when the system is feasible.
pub fn bounded_feasible(g: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let q = g.ncols();
    assert_eq!(g.nrows(), y.len(), "bounded_feasible: row mismatch");
    if y.iter().all(|v| *v == 0.0) {
        return Some(DVector::zeros(q));
    }
    let lp = BoundedLp {
        a: g.clone(),
        b: y.clone(),
        cost: DVector::zeros(q),
        lower: DVector::from_element(q, -1.0),
        upper: DVector::from_element(q, 1.0),
    };
    let b = lp.solve().solution()?.clone();
    // Tableau drift is tiny at these sizes; reject anything that slipped past.
    let residual = (g * &b - y).amax();
    if residual <= 1e-8 * (1.0 + y.amax()) {
        Some(b)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::Rng as _;

    #[test]
    fn feasible_examples() {
        let g = DMatrix::<f64>::identity(2, 2);
        let b = bounded_feasible(&g, &dvector![0.0, 0.0]).unwrap();
        assert_eq!(b, dvector![0.0, 0.0]);
        let b = bounded_feasible(&g, &dvector![0.5, -1.0]).unwrap();
        assert!((b - dvector![0.5, -1.0]).amax() < 1e-12);
        assert!(bounded_feasible(&g, &dvector![1.5, 0.0]).is_none());
    }

    #[test]
    fn lp_with_cost_and_infinite_upper() {
        // min x + 2y  s.t. x + y = 3, x in [0, 2], y >= 0  -> x = 2, y = 1
        let lp = BoundedLp {
            a: dmatrix![1.0, 1.0],
            b: dvector![3.0],
            cost: dvector![1.0, 2.0],
            lower: dvector![0.0, 0.0],
            upper: dvector![2.0, f64::INFINITY],
        };
        match lp.solve() {
            LpOutcome::Optimal { x, objective } => {
                assert!((x - dvector![2.0, 1.0]).amax() < 1e-10);
                assert!((objective - 4.0).abs() < 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lp_unbounded_and_infeasible() {
        let lp = BoundedLp {
            a: dmatrix![1.0, -1.0],
            b: dvector![0.0],
            cost: dvector![-1.0, 0.0],
            lower: dvector![0.0, 0.0],
            upper: dvector![f64::INFINITY, f64::INFINITY],
        };
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
        let lp = BoundedLp {
            a: dmatrix![1.0, 1.0],
            b: dvector![5.0],
            cost: dvector![0.0, 0.0],
            lower: dvector![0.0, 0.0],
            upper: dvector![1.0, 1.0],
        };
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
    }

    #[test]
    fn redundant_rows() {
        let lp = BoundedLp {
            a: dmatrix![1.0, 1.0; 2.0, 2.0],
            b: dvector![1.0, 2.0],
            cost: dvector![1.0, 0.0],
            lower: dvector![-1.0, -1.0],
            upper: dvector![1.0, 1.0],
        };
        let x = lp.solve().solution().unwrap().clone();
        // x1 <= 1 forces x0 >= 0
        assert!(x[0].abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }

    /// 2D zonotope membership by brute force: a point is inside iff it
    /// satisfies every facet inequality. Facets of a 2D zonotope have normals
    /// perpendicular to some generator.
    fn brute_member(g: &DMatrix<f64>, y: &DVector<f64>) -> Option<bool> {
        let mut margin = f64::INFINITY;
        for k in 0..g.ncols() {
            let n = dvector![-g[(1, k)], g[(0, k)]];
            if n.norm() < 1e-12 {
                continue;
            }
            let support: f64 = (0..g.ncols())
                .map(|i| (n[0] * g[(0, i)] + n[1] * g[(1, i)]).abs())
                .sum();
            margin = margin.min(support - n.dot(y).abs());
        }
        // Points within rounding of the boundary are ambiguous.
        if margin.abs() < 1e-9 {
            None
        } else {
            Some(margin > 0.0)
        }
    }

    #[test]
    fn membership_matches_facet_oracle_on_grid() {
        let mut rng = crate::rng_from_seed(5);
        for _ in 0..12 {
            let q = rng.random_range(2..=3);
            let g = DMatrix::from_fn(2, q, |_, _| rng.random_range(-1.0..1.0));
            let reach: f64 = g.iter().map(|v: &f64| v.abs()).sum();
            for a in 0..50 {
                for b in 0..50 {
                    let y = dvector![
                        -reach + 2.0 * reach * a as f64 / 49.0,
                        -reach + 2.0 * reach * b as f64 / 49.0
                    ];
                    let Some(expected) = brute_member(&g, &y) else {
                        continue;
                    };
                    let got = bounded_feasible(&g, &y);
                    assert_eq!(got.is_some(), expected, "g={g} y={y}");
                    if let Some(bv) = got {
                        assert!(bv.amax() <= 1.0 + 1e-9);
                        assert!((&g * bv - &y).amax() <= 1e-8);
                    }
                }
            }
        }
    }
}
