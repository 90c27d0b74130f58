//! Plain-text records for boxes and zonotopes.
//!
//! ```text
//! zonotope <n> <q>
//! center <c_1> ... <c_n>
//! row <G_11> ... <G_1q>      (n rows)
//! box <n>
//! lower <l_1> ... <l_n>
//! upper <u_1> ... <u_n>
//! ```
//!
//! Numbers are written in shortest round-trip form, so reading back is
//! bit-exact. Blank lines and lines starting with `#` are ignored.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use super::{HyperRect, Zonotope};
use crate::{Error, Result};

pub fn fmt_values<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&format!("{v:?}"));
    }
    s
}

pub fn write_zonotope<W: Write>(w: &mut W, z: &Zonotope) -> io::Result<()> {
    writeln!(w, "zonotope {} {}", z.dim(), z.order())?;
    writeln!(w, "center {}", fmt_values(z.center().iter()))?;
    for row in z.generators().row_iter() {
        let vals: Vec<f64> = row.iter().copied().collect();
        if vals.is_empty() {
            writeln!(w, "row")?;
        } else {
            writeln!(w, "row {}", fmt_values(&vals))?;
        }
    }
    Ok(())
}

pub fn write_box<W: Write>(w: &mut W, b: &HyperRect) -> io::Result<()> {
    writeln!(w, "box {}", b.dim())?;
    writeln!(w, "lower {}", fmt_values(b.lower().iter()))?;
    writeln!(w, "upper {}", fmt_values(b.upper().iter()))
}

/// Line cursor that skips blanks and comments and remembers line numbers.
pub struct LineReader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str) -> Self {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let last_line = text.lines().count();
        Self {
            lines,
            pos: 0,
            last_line,
        }
    }

    pub fn is_done(&self) -> bool {
        self.pos >= self.lines.len()
    }

    /// Keyword of the next line without consuming it.
    pub fn peek_keyword(&self) -> Option<&'a str> {
        self.lines
            .get(self.pos)
            .and_then(|(_, l)| l.split_whitespace().next())
    }

    pub fn error(&self, msg: impl Into<String>) -> Error {
        let line = self
            .lines
            .get(self.pos.saturating_sub(1))
            .map(|(n, _)| *n)
            .unwrap_or(self.last_line);
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Consumes a line starting with `keyword`; returns its line number and
    /// the remaining tokens.
    pub fn expect(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
        let Some(&(n, line)) = self.lines.get(self.pos) else {
            return Err(Error::Parse {
                line: self.last_line + 1,
                msg: format!("unexpected end of file, expected `{keyword}`"),
            });
        };
        self.pos += 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(k) if k == keyword => Ok((n, toks.collect())),
            other => Err(Error::Parse {
                line: n,
                msg: format!("expected `{keyword}`, found `{}`", other.unwrap_or("")),
            }),
        }
    }

    pub fn expect_values(&mut self, keyword: &str, count: usize) -> Result<Vec<f64>> {
        let (n, toks) = self.expect(keyword)?;
        let vals = parse_f64s(n, &toks)?;
        if vals.len() != count {
            return Err(Error::Parse {
                line: n,
                msg: format!("`{keyword}` expects {count} values, found {}", vals.len()),
            });
        }
        Ok(vals)
    }

    pub fn expect_usizes(&mut self, keyword: &str, count: usize) -> Result<Vec<usize>> {
        let (n, toks) = self.expect(keyword)?;
        if toks.len() != count {
            return Err(Error::Parse {
                line: n,
                msg: format!("`{keyword}` expects {count} integers, found {}", toks.len()),
            });
        }
        toks.iter()
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    line: n,
                    msg: format!("invalid integer `{t}`"),
                })
            })
            .collect()
    }

    pub fn read_zonotope(&mut self) -> Result<Zonotope> {
        let dims = self.expect_usizes("zonotope", 2)?;
        let (n, q) = (dims[0], dims[1]);
        let c = self.expect_values("center", n)?;
        let mut g = DMatrix::zeros(n, q);
        for i in 0..n {
            let row = self.expect_values("row", q)?;
            for (j, v) in row.into_iter().enumerate() {
                g[(i, j)] = v;
            }
        }
        Zonotope::new(DVector::from_vec(c), g).map_err(|e| self.error(e.to_string()))
    }

    pub fn read_box(&mut self) -> Result<HyperRect> {
        let n = self.expect_usizes("box", 1)?[0];
        let lo = self.expect_values("lower", n)?;
        let hi = self.expect_values("upper", n)?;
        HyperRect::new(DVector::from_vec(lo), DVector::from_vec(hi))
            .map_err(|e| self.error(e.to_string()))
    }
}

pub fn parse_f64s(line: usize, toks: &[&str]) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid number `{t}`"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn zonotope_round_trip_is_bit_exact(
            c in prop::collection::vec(-1e6f64..1e6, 3),
            g in prop::collection::vec(-1e3f64..1e3, 0..12),
        ) {
            let q = g.len() / 3;
            let z = Zonotope::new(
                DVector::from_vec(c),
                DMatrix::from_row_slice(3, q, &g[..3 * q]),
            ).unwrap();
            let mut buf = Vec::new();
            write_zonotope(&mut buf, &z).unwrap();
            let text = String::from_utf8(buf).unwrap();
            let back = LineReader::new(&text).read_zonotope().unwrap();
            prop_assert_eq!(back, z);
        }
    }

    #[test]
    fn box_round_trip_and_errors() {
        let b = HyperRect::from_slices(&[0.1, -2.0], &[0.3, 1e-300]).unwrap();
        let mut buf = Vec::new();
        write_box(&mut buf, &b).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(LineReader::new(&text).read_box().unwrap(), b);

        let bad = "box 2\nlower 0 0\nupper 1\n";
        match LineReader::new(bad).read_box() {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let truncated = "zonotope 2 1\ncenter 0 0\nrow 1\n";
        assert!(matches!(
            LineReader::new(truncated).read_zonotope(),
            Err(Error::Parse { line: 4, .. })
        ));
        let p = Zonotope::point(dvector![1.0, 2.0]);
        let mut buf = Vec::new();
        write_zonotope(&mut buf, &p).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(LineReader::new(&text).read_zonotope().unwrap(), p);
    }
}
