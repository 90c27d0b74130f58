//! Forward safe boxes, trajectory scores, and the conformal quantile.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::geom::HyperRect;
use crate::model::ProblemSpec;
use crate::nominal::NominalTrajectory;
use crate::rollout::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Radii stop at the nearest unsafe face ahead or behind, and at the
    /// domain.
    Separating,
    /// Radii stop at the domain only.
    NonSeparating,
}

impl Role {
    /// First two axes separating, the rest not.
    pub fn planar(n: usize) -> Vec<Role> {
        (0..n)
            .map(|j| if j < 2 { Role::Separating } else { Role::NonSeparating })
            .collect()
    }
}

/// `S_k = [x_k - r_minus, x_k + r_plus]` for `k < N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSetSequence {
    pub centers: Vec<DVector<f64>>,
    pub r_plus: Vec<DVector<f64>>,
    pub r_minus: Vec<DVector<f64>>,
    pub epsilon: f64,
    pub roles: Vec<Role>,
}

impl SafeSetSequence {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn boxes(&self) -> Vec<HyperRect> {
        (0..self.len()).map(|k| self.get(k)).collect()
    }

    pub fn get(&self, k: usize) -> HyperRect {
        HyperRect::new(&self.centers[k] - &self.r_minus[k], &self.centers[k] + &self.r_plus[k])
            .expect("radii are nonnegative")
    }

    /// Canonical text of the geometry, for hashing.
    pub fn write_text(&self) -> String {
        let mut s = format!("safe_sets {} {:?}\n", self.len(), self.epsilon);
        for b in self.boxes() {
            let lo: Vec<String> = b.lower().iter().map(|v| format!("{v:?}")).collect();
            let hi: Vec<String> = b.upper().iter().map(|v| format!("{v:?}")).collect();
            writeln!(s, "{} | {}", lo.join(" "), hi.join(" ")).unwrap();
        }
        s
    }

    /// Checks that each box lies in the operating domain and, for every
    /// unsafe piece, is strictly disjoint from it in some separating
    /// coordinate. Returns the violations.
    pub fn lemma_violations(&self, spec: &ProblemSpec) -> Vec<String> {
        let mut out = Vec::new();
        for k in 0..self.len() {
            let s = self.get(k);
            if !spec.operating.contains_box(&s) {
                out.push(format!("S_{k} leaves the operating domain"));
            }
            for (i, p) in spec.unsafe_region.pieces().iter().enumerate() {
                if separating_axis(&s, p, &self.roles).is_none() {
                    out.push(format!("S_{k} is not separated from unsafe piece {i}"));
                }
            }
        }
        out
    }

    /// A single separating coordinate that clears every piece at step `k`,
    /// if one exists.
    pub fn common_separating_axis(&self, k: usize, spec: &ProblemSpec) -> Option<usize> {
        let s = self.get(k);
        (0..self.roles.len()).find(|&j| {
            self.roles[j] == Role::Separating
                && spec
                    .unsafe_region
                    .pieces()
                    .iter()
                    .all(|p| strictly_apart(&s, p, j))
        })
    }
}

fn strictly_apart(a: &HyperRect, b: &HyperRect, j: usize) -> bool {
    a.upper()[j] < b.lower()[j] || b.upper()[j] < a.lower()[j]
}

fn separating_axis(s: &HyperRect, p: &HyperRect, roles: &[Role]) -> Option<usize> {
    (0..roles.len()).find(|&j| roles[j] == Role::Separating && strictly_apart(s, p, j))
}

/// Safe boxes around `x_0 .. x_{N-1}` with margin `epsilon`.
pub fn build_safe_sets(
    traj: &NominalTrajectory,
    spec: &ProblemSpec,
    epsilon: f64,
    roles: &[Role],
) -> Result<SafeSetSequence> {
    let n = spec.state_dim();
    if roles.len() != n {
        return Err(Error::Invalid(format!("{} roles for {n} coordinates", roles.len())));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Invalid(format!("safety margin must be >= 0, got {epsilon}")));
    }
    let o = &spec.operating;
    let mut seq = SafeSetSequence {
        centers: Vec::new(),
        r_plus: Vec::new(),
        r_minus: Vec::new(),
        epsilon,
        roles: roles.to_vec(),
    };
    for k in 0..traj.horizon() {
        let x = traj.state(k);
        let mut rp = DVector::zeros(n);
        let mut rm = DVector::zeros(n);
        for j in 0..n {
            let mut up = o.upper()[j] - x[j];
            let mut down = x[j] - o.lower()[j];
            if roles[j] == Role::Separating {
                for p in spec.unsafe_region.pieces() {
                    if p.lower()[j] - x[j] > 0.0 {
                        up = up.min(p.lower()[j] - x[j]);
                    }
                    if x[j] - p.upper()[j] > 0.0 {
                        down = down.min(x[j] - p.upper()[j]);
                    }
                }
            }
            rp[j] = up - epsilon;
            rm[j] = down - epsilon;
            if rp[j] < 0.0 || rm[j] < 0.0 {
                return Err(Error::Invalid(format!(
                    "safe set radius is negative at step {k}, coordinate {j} (r+ = {:.4}, r- = {:.4})",
                    rp[j], rm[j]
                )));
            }
        }
        seq.centers.push(x.clone());
        seq.r_plus.push(rp);
        seq.r_minus.push(rm);
    }
    let bad = seq.lemma_violations(spec);
    if !bad.is_empty() {
        return Err(Error::Invalid(format!("safe sets fail their invariants: {}", bad.join("; "))));
    }
    Ok(seq)
}

/// Per-step violations `s_k` and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub steps: Vec<f64>,
    pub total: f64,
}

/// `s_k = dist(x_k, S_k)` for `k < N`, `s_N = dist(x_N, target)`.
pub fn score(traj: &Trajectory, sets: &SafeSetSequence, target: &HyperRect) -> Result<Score> {
    if traj.horizon() != sets.len() {
        return Err(Error::Invalid(format!(
            "trajectory has {} steps, safe sets cover {}",
            traj.horizon(),
            sets.len()
        )));
    }
    let mut steps = Vec::with_capacity(sets.len() + 1);
    for k in 0..sets.len() {
        steps.push(sets.get(k).distance(&traj.states[k])?);
    }
    steps.push(target.distance(traj.last())?);
    let total = steps.iter().sum();
    Ok(Score { steps, total })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// `q = 0`: a new trajectory meets every certificate with probability at
    /// least `1 - delta`.
    ReachAvoid,
    /// `q > 0`: the violation of a new trajectory is at most `q` with
    /// probability at least `1 - delta`.
    Bounded,
    /// `l > H`: too few trajectories for this `delta`.
    Vacuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformalReport {
    pub scores: Vec<f64>,
    pub sorted: Vec<f64>,
    pub delta: f64,
    /// 1-based order-statistic index.
    pub l: usize,
    /// `s_(l)`, or infinity when vacuous.
    pub q: f64,
    pub verdict: Verdict,
}

impl ConformalReport {
    pub fn h(&self) -> usize {
        self.scores.len()
    }

    pub fn statement(&self) -> String {
        match self.verdict {
            Verdict::Vacuous => format!(
                "vacuous: l = {} exceeds H = {}; no guarantee at delta = {}",
                self.l,
                self.h(),
                self.delta
            ),
            _ => format!(
                "P[s(tau_new) <= {}] >= {} (H = {}, l = {}){}",
                self.q,
                1.0 - self.delta,
                self.h(),
                self.l,
                if self.verdict == Verdict::ReachAvoid {
                    "; q = 0, so a new trajectory satisfies the reach-avoid certificate with that probability"
                } else {
                    ""
                }
            ),
        }
    }
}

/// `l = ceil((1 - delta)(H + 1))`. Products that are integers in exact
/// arithmetic (`0.95 * 20 = 19`) are snapped first, so floating-point
/// error cannot push them up by one.
pub fn quantile_index(h: usize, delta: f64) -> usize {
    let v = (1.0 - delta) * (h as f64 + 1.0);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// The split-free conformal quantile of `scores` at level `1 - delta`.
pub fn certify(scores: &[f64], delta: f64) -> Result<ConformalReport> {
    if scores.is_empty() {
        return Err(Error::Invalid("certification needs at least one score".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if scores.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Invalid("scores must be nonnegative".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let l = quantile_index(scores.len(), delta);
    let (q, verdict) = if l > scores.len() {
        (f64::INFINITY, Verdict::Vacuous)
    } else {
        let q = sorted[l - 1];
        (q, if q == 0.0 { Verdict::ReachAvoid } else { Verdict::Bounded })
    };
    Ok(ConformalReport {
        scores: scores.to_vec(),
        sorted,
        delta,
        l,
        q,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_index_examples() {
        assert_eq!(quantile_index(1000, 0.001), 1000);
        assert_eq!(quantile_index(19, 0.05), 19);
        assert_eq!(quantile_index(5, 0.01), 6);
        assert_eq!(quantile_index(200, 0.05), 191);
    }

    #[test]
    fn certify_examples() {
        let r = certify(&vec![0.0; 1000], 0.001).unwrap();
        assert_eq!((r.l, r.q, r.verdict.clone()), (1000, 0.0, Verdict::ReachAvoid));
        let scores: Vec<f64> = (0..19).map(|i| i as f64 * 0.1).collect();
        let r = certify(&scores, 0.05).unwrap();
        assert_eq!(r.q, 1.8);
        let r = certify(&[0.0; 5], 0.01).unwrap();
        assert_eq!(r.verdict, Verdict::Vacuous);
        assert!(r.q.is_infinite());
        assert!(certify(&[], 0.1).is_err());
    }
}
