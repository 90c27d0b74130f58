//! Nominal (disturbance-free) reference trajectories.

mod rrt;

use std::fmt;
use std::path::Path;

use nalgebra::DVector;

use crate::error::check_dim;
use crate::geom::text::{fmt_values, LineReader};
use crate::model::{DynamicsModel, ProblemSpec};
use crate::{Error, Result};

pub use rrt::{plan_rrt, RrtParams};

/// Largest accepted `|x_{k+1} - f(x_k, u_k)|` in any coordinate.
pub const DYNAMICS_TOL: f64 = 1e-9;

/// States `x_0..x_N` and inputs `u_0..u_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalTrajectory {
    states: Vec<DVector<f64>>,
    inputs: Vec<DVector<f64>>,
}

impl NominalTrajectory {
    pub fn new(states: Vec<DVector<f64>>, inputs: Vec<DVector<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Invalid("trajectory needs at least one input".into()));
        }
        check_dim(inputs.len() + 1, states.len(), "trajectory states vs inputs")?;
        let n = states[0].len();
        let m = inputs[0].len();
        for x in &states {
            check_dim(n, x.len(), "trajectory state")?;
        }
        for u in &inputs {
            check_dim(m, u.len(), "trajectory input")?;
        }
        if states.iter().chain(&inputs).any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Invalid("trajectory contains non-finite values".into()));
        }
        Ok(Self { states, inputs })
    }

    /// Rolls the nominal dynamics forward from `x0`.
    pub fn simulate(model: &dyn DynamicsModel, x0: DVector<f64>, inputs: Vec<DVector<f64>>) -> Result<Self> {
        let mut states = vec![x0];
        for u in &inputs {
            let next = model.step(states.last().unwrap(), u);
            states.push(next);
        }
        Self::new(states, inputs)
    }

    /// `N`.
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn state(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    pub fn input(&self, k: usize) -> &DVector<f64> {
        &self.inputs[k]
    }

    /// Lists every violated nominal condition. `margin[i]` is the strict
    /// interior margin used for the operating domain and the target.
    pub fn validate(
        &self,
        spec: &ProblemSpec,
        model: &dyn DynamicsModel,
        margin: &DVector<f64>,
    ) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.state_dim() != spec.state_dim()
            || self.input_dim() != spec.input_dim()
            || model.state_dim() != self.state_dim()
            || model.input_dim() != self.input_dim()
        {
            out.push(Violation::Dimension);
            return out;
        }
        let n = self.horizon();
        if !spec.initial.contains(&self.states[0]) {
            out.push(Violation::InitialOutside);
        }
        let mut next = DVector::zeros(self.state_dim());
        for k in 0..n {
            let x = &self.states[k];
            if !spec.operating.contains_with_margin(x, margin) {
                out.push(Violation::OutsideOperating { k });
            }
            for (piece, p) in spec.unsafe_region.pieces().iter().enumerate() {
                if p.contains(x) {
                    out.push(Violation::Unsafe { k, piece });
                }
            }
            if !spec.inputs.contains(&self.inputs[k]) {
                out.push(Violation::InputOutside { k });
            }
            model.step_into(x.as_slice(), self.inputs[k].as_slice(), next.as_mut_slice());
            let residual = (&self.states[k + 1] - &next).amax();
            if !(residual <= DYNAMICS_TOL) {
                out.push(Violation::DynamicsResidual { k, residual });
            }
        }
        if !spec.target.contains_with_margin(&self.states[n], margin) {
            out.push(Violation::TerminalOutsideTarget);
        }
        out
    }

    pub fn write_text(&self) -> String {
        let mut s = format!(
            "trajectory {} {} {}\n",
            self.state_dim(),
            self.input_dim(),
            self.horizon()
        );
        for x in &self.states {
            s.push_str(&format!("x {}\n", fmt_values(x.iter())));
        }
        for u in &self.inputs {
            s.push_str(&format!("u {}\n", fmt_values(u.iter())));
        }
        s
    }

    /// Parses [`write_text`](Self::write_text) output. When `expected` is
    /// given as `(n, m)`, a header with other dimensions is rejected.
    pub fn parse(text: &str, expected: Option<(usize, usize)>) -> Result<Self> {
        let mut r = LineReader::new(text);
        let h = r.expect_usizes("trajectory", 3)?;
        let (n, m, horizon) = (h[0], h[1], h[2]);
        if let Some((en, em)) = expected {
            check_dim(en, n, "trajectory header state dimension")?;
            check_dim(em, m, "trajectory header input dimension")?;
        }
        let mut states = Vec::with_capacity(horizon + 1);
        for _ in 0..=horizon {
            states.push(DVector::from_vec(r.expect_values("x", n)?));
        }
        let mut inputs = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            inputs.push(DVector::from_vec(r.expect_values("u", m)?));
        }
        if !r.is_done() {
            r.expect("end-of-file")?;
        }
        Self::new(states, inputs).map_err(|e| r.error(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.write_text())?;
        Ok(())
    }

    pub fn load(path: &Path, expected: Option<(usize, usize)>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, expected)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension,
    InitialOutside,
    OutsideOperating { k: usize },
    Unsafe { k: usize, piece: usize },
    InputOutside { k: usize },
    DynamicsResidual { k: usize, residual: f64 },
    TerminalOutsideTarget,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dimension => write!(f, "dimensions do not match the problem"),
            Self::InitialOutside => write!(f, "initial state outside the initial set"),
            Self::OutsideOperating { k } => write!(f, "state at k={k} not interior to the operating domain"),
            Self::Unsafe { k, piece } => write!(f, "state at k={k} inside unsafe piece {piece}"),
            Self::InputOutside { k } => write!(f, "input at k={k} outside the input set"),
            Self::DynamicsResidual { k, residual } => {
                write!(f, "dynamics residual at k={k} ({residual:e})")
            }
            Self::TerminalOutsideTarget => write!(f, "terminal state not interior to the target"),
        }
    }
}
