use nalgebra::DVector;

use crate::geom::HyperRect;
use crate::numerics::Interval;

use super::DynamicsModel;

/// Euler-discretized unicycle: state `(px, py, heading)`, input
/// `(speed, turn rate)`.
#[derive(Debug, Clone)]
pub struct Dubins {
    pub tau: f64,
    disturbance: HyperRect,
}

impl Dubins {
    pub const DEFAULT_TAU: f64 = 0.05;

    /// `half_widths` is the disturbance amplitude per state coordinate.
    pub fn new(tau: f64, half_widths: [f64; 3]) -> Self {
        assert!(tau > 0.0 && tau.is_finite());
        let disturbance = HyperRect::symmetric(&DVector::from_column_slice(&half_widths))
            .expect("disturbance half-widths must be non-negative");
        Self { tau, disturbance }
    }

    /// `tau = 0.05` with disturbance `tau * ([-0.02, 0.02]^2 x [-0.1, 0.1])`.
    pub fn standard() -> Self {
        let t = Self::DEFAULT_TAU;
        Self::new(t, [0.02 * t, 0.02 * t, 0.1 * t])
    }

    pub fn with_disturbance(&self, half_widths: [f64; 3]) -> Self {
        Self::new(self.tau, half_widths)
    }
}

impl DynamicsModel for Dubins {
    fn name(&self) -> &str {
        "dubins"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (s, c) = x[2].sin_cos();
        out[0] = x[0] + self.tau * u[0] * c;
        out[1] = x[1] + self.tau * u[0] * s;
        out[2] = x[2] + self.tau * u[1];
    }

    fn jacobians_into(&self, x: &[f64], u: &[f64], a: &mut [f64], b: &mut [f64]) {
        let t = self.tau;
        let (s, c) = x[2].sin_cos();
        a.copy_from_slice(&[
            1.0, 0.0, -t * u[0] * s, //
            0.0, 1.0, t * u[0] * c, //
            0.0, 0.0, 1.0,
        ]);
        b.copy_from_slice(&[
            t * c, 0.0, //
            t * s, 0.0, //
            0.0, t,
        ]);
    }

    fn interval_hessian(&self, component: usize, z: &[Interval]) -> Vec<Interval> {
        // z = (px, py, heading, speed, turn); only heading/speed interact.
        let zero = Interval::point(0.0);
        let mut h = vec![zero; 25];
        let (th, v) = (z[2], z[3]);
        let t = self.tau;
        let (hh, hv) = match component {
            0 => (-(t * (v * th.cos())), -(t * th.sin())),
            1 => (-(t * (v * th.sin())), t * th.cos()),
            _ => return h,
        };
        h[2 * 5 + 2] = hh;
        h[2 * 5 + 3] = hv;
        h[3 * 5 + 2] = hv;
        h
    }

    fn disturbance(&self) -> &HyperRect {
        &self.disturbance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn step_examples() {
        let d = Dubins::standard();
        let y = d.step(&dvector![0.0, 0.0, 0.0], &dvector![1.0, 0.0]);
        assert_eq!(y, dvector![0.05, 0.0, 0.0]);
        let x = dvector![0.3, -1.0, 2.0];
        assert_eq!(d.step(&x, &dvector![0.0, 0.0]), x);
        let y = d.step(&dvector![0.0, 0.0, FRAC_PI_2], &dvector![1.0, 0.0]);
        assert!((y - dvector![0.0, 0.05, FRAC_PI_2]).amax() < 1e-15);
    }

    #[test]
    fn jacobian_at_zero_heading() {
        let d = Dubins::standard();
        let (a, _) = d.jacobians(&dvector![0.0, 0.0, 0.0], &dvector![1.0, 0.0]);
        let expect = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.05; 0.0, 0.0, 1.0];
        assert!((a - expect).amax() < 1e-15);
    }

    #[test]
    fn hessian_bound_of_first_component() {
        let d = Dubins::standard();
        let (u1, r) = (2.0, 0.5);
        let tx = HyperRect::from_slices(&[0.0, 0.0, -0.3], &[1.0, 1.0, 0.4]).unwrap();
        let tu = HyperRect::from_slices(&[u1 - r, -1.0], &[u1 + r, 1.0]).unwrap();
        let h = d.hessian_bound(0, &tx, &tu);
        // |d2 f1 / d heading^2| = tau |u1 cos(heading)| <= tau (|u1| + r)
        let bound = h[(2, 2)];
        assert!(bound <= d.tau * (u1 + r) * (1.0 + 1e-12));
        let mut sup: f64 = 0.0;
        for i in 0..=200 {
            let th = -0.3 + 0.7 * i as f64 / 200.0;
            for j in 0..=20 {
                let v = u1 - r + 2.0 * r * j as f64 / 20.0;
                sup = sup.max((d.tau * v * th.cos()).abs());
            }
        }
        assert!(bound >= sup && bound - sup < 1e-6, "{bound} {sup}");
        assert_eq!(h[(0, 0)], 0.0);
        assert_eq!(d.hessian_bound(2, &tx, &tu).amax(), 0.0);
    }
}
