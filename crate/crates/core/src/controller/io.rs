//! Weight files and the controller manifest.
//!
//! ```text
//! stepnet <k>
//! sizes <n> <m> <h_1> ... <h_L>
//! x_nom <...>
//! u_nom <...>
//! matrix <name> <rows> <cols>
//! row <...>                     (rows lines)
//! vector <name> <len>
//! values <...>
//! ```
//!
//! The manifest is `controllers <N>` followed by `step <k> <file>` lines.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use super::net::{Layout, StepNet};
use crate::geom::text::{fmt_values, LineReader};
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.txt";

impl StepNet {
    pub fn write_text(&self) -> String {
        let l = self.layout();
        let mut s = String::new();
        writeln!(s, "stepnet {}", self.k).unwrap();
        let sizes: Vec<String> = [l.state_dim(), l.input_dim()]
            .iter()
            .chain(l.hidden())
            .map(|v| v.to_string())
            .collect();
        writeln!(s, "sizes {}", sizes.join(" ")).unwrap();
        writeln!(s, "x_nom {}", fmt_values(self.x_nom().iter())).unwrap();
        writeln!(s, "u_nom {}", fmt_values(self.u_nom().iter())).unwrap();
        let p = self.params();
        for b in l.blocks() {
            if b.cols == 0 {
                writeln!(s, "vector {} {}", b.name, b.rows).unwrap();
                writeln!(s, "values {}", fmt_values(&p[b.start..b.start + b.rows])).unwrap();
            } else {
                writeln!(s, "matrix {} {} {}", b.name, b.rows, b.cols).unwrap();
                for r in 0..b.rows {
                    let at = b.start + r * b.cols;
                    writeln!(s, "row {}", fmt_values(&p[at..at + b.cols])).unwrap();
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = LineReader::new(text);
        let k = r.expect_usizes("stepnet", 1)?[0];
        let (line, toks) = r.expect("sizes")?;
        let sizes: Vec<usize> = toks
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line,
                msg: "invalid layer size".into(),
            })?;
        if sizes.len() < 2 {
            return Err(Error::Parse {
                line,
                msg: "`sizes` needs at least n and m".into(),
            });
        }
        let layout = Layout::new(sizes[0], sizes[1], &sizes[2..]).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let x_nom = r.expect_values("x_nom", layout.state_dim())?;
        let u_nom = r.expect_values("u_nom", layout.input_dim())?;
        let mut params = vec![0.0; layout.len()];
        for b in layout.blocks() {
            let (line, toks) = r.expect(if b.cols == 0 { "vector" } else { "matrix" })?;
            let want: Vec<String> = if b.cols == 0 {
                vec![b.name.clone(), b.rows.to_string()]
            } else {
                vec![b.name.clone(), b.rows.to_string(), b.cols.to_string()]
            };
            if toks != want {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected block `{}`, found `{}`", want.join(" "), toks.join(" ")),
                });
            }
            if b.cols == 0 {
                let v = r.expect_values("values", b.rows)?;
                params[b.start..b.start + b.rows].copy_from_slice(&v);
            } else {
                for row in 0..b.rows {
                    let v = r.expect_values("row", b.cols)?;
                    let at = b.start + row * b.cols;
                    params[at..at + b.cols].copy_from_slice(&v);
                }
            }
        }
        if !r.is_done() {
            return Err(r.error("trailing content after the last block"));
        }
        StepNet::from_parts(k, layout, params, DVector::from_vec(x_nom), DVector::from_vec(u_nom))
            .map_err(|e| r.error(e.to_string()))
    }
}

/// Writes one weight file per step plus the manifest into `dir`.
pub fn save_controllers(dir: &Path, nets: &[StepNet]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = format!("controllers {}\n", nets.len());
    for (k, net) in nets.iter().enumerate() {
        if net.k != k {
            return Err(Error::Invalid(format!("controller {k} is labelled step {}", net.k)));
        }
        let name = format!("controller_{k:04}.txt");
        std::fs::write(dir.join(&name), net.write_text())?;
        writeln!(manifest, "step {k} {name}").unwrap();
    }
    std::fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

/// Reads the manifest in `dir` and every weight file it lists.
pub fn load_controllers(dir: &Path) -> Result<Vec<StepNet>> {
    let text = std::fs::read_to_string(dir.join(MANIFEST))?;
    let mut r = LineReader::new(&text);
    let n = r.expect_usizes("controllers", 1)?[0];
    let mut nets = Vec::with_capacity(n);
    for k in 0..n {
        let (line, toks) = r.expect("step")?;
        if toks.len() != 2 || toks[0].parse::<usize>().ok() != Some(k) {
            return Err(Error::Parse {
                line,
                msg: format!("expected `step {k} <file>`"),
            });
        }
        let body = std::fs::read_to_string(dir.join(toks[1]))?;
        let net = StepNet::parse(&body)?;
        if net.k != k {
            return Err(Error::Parse {
                line,
                msg: format!("{} holds step {}, expected {k}", toks[1], net.k),
            });
        }
        nets.push(net);
    }
    Ok(nets)
}
