use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use crate::geom::text::{fmt_values, write_box, write_zonotope, LineReader};
use crate::{Error, Result};

use super::{BrsResult, Tubes};

impl BrsResult {
    /// Plain-text checkpoint: a `brs <N> <gamma>` header, then per step the
    /// state tube, input tube, sets and error vector.
    pub fn write_text(&self) -> String {
        let mut out = Vec::new();
        let n = self.horizon();
        writeln!(out, "brs {} {:?}", n, self.gamma).unwrap();
        for k in 0..=n {
            writeln!(out, "step {k}").unwrap();
            write_box(&mut out, &self.tubes.x[k]).unwrap();
            write_zonotope(&mut out, &self.lambda[k]).unwrap();
            write_zonotope(&mut out, &self.deflated[k]).unwrap();
            if k < n {
                write_box(&mut out, &self.tubes.u[k]).unwrap();
                write_zonotope(&mut out, &self.psi[k]).unwrap();
                writeln!(out, "error {}", fmt_values(self.errors[k].iter())).unwrap();
                writeln!(out, "alpha {:?}", self.alphas[k]).unwrap();
            }
        }
        for line in &self.trace {
            writeln!(out, "# {line}").unwrap();
        }
        String::from_utf8(out).unwrap()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = LineReader::new(text);
        let (line, toks) = r.expect("brs")?;
        let bad = |msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        if toks.len() != 2 {
            return Err(bad("`brs` expects a horizon and a gamma"));
        }
        let n: usize = toks[0].parse().map_err(|_| bad("invalid horizon"))?;
        let gamma: f64 = toks[1].parse().map_err(|_| bad("invalid gamma"))?;
        let mut res = BrsResult {
            gamma,
            lambda: Vec::new(),
            deflated: Vec::new(),
            psi: Vec::new(),
            tubes: Tubes {
                x: Vec::new(),
                u: Vec::new(),
            },
            errors: Vec::new(),
            alphas: Vec::new(),
            trace: Vec::new(),
        };
        for k in 0..=n {
            let idx = r.expect_usizes("step", 1)?[0];
            if idx != k {
                return Err(r.error(format!("expected step {k}, found {idx}")));
            }
            res.tubes.x.push(r.read_box()?);
            res.lambda.push(r.read_zonotope()?);
            res.deflated.push(r.read_zonotope()?);
            if k < n {
                res.tubes.u.push(r.read_box()?);
                res.psi.push(r.read_zonotope()?);
                let dim = res.lambda[k].dim();
                res.errors.push(DVector::from_vec(r.expect_values("error", dim)?));
                res.alphas.push(r.expect_values("alpha", 1)?[0]);
            }
        }
        if !r.is_done() {
            r.expect("end-of-file")?;
        }
        res.trace = text
            .lines()
            .filter_map(|l| l.strip_prefix("# "))
            .map(str::to_string)
            .collect();
        Ok(res)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.write_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
