//! CSV tables and an SVG of the x-y plane.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;

use safetrack::brs::BrsResult;
use safetrack::conformal::SafeSetSequence;
use safetrack::geom::HyperRect;
use safetrack::model::ProblemSpec;
use safetrack::nominal::NominalTrajectory;
use safetrack::rollout::Trajectory;

/// Traces drawn in the figure; the CSV keeps all of them.
const MAX_TRACES: usize = 50;
const WIDTH: f64 = 640.0;

pub fn write_all(
    dir: &Path,
    spec: &ProblemSpec,
    traj: &NominalTrajectory,
    brs: &BrsResult,
    sets: &SafeSetSequence,
    runs: &[Trajectory],
    probe: Option<&Trajectory>,
) -> Result<()> {
    std::fs::write(dir.join("nominal.csv"), nominal_csv(traj))?;
    std::fs::write(dir.join("lambda_xy.csv"), polygons_csv(brs))?;
    std::fs::write(dir.join("safe_sets.csv"), safe_sets_csv(sets))?;
    std::fs::write(dir.join("xy.svg"), svg(spec, traj, brs, sets, runs, probe))?;
    Ok(())
}

fn nominal_csv(traj: &NominalTrajectory) -> String {
    let mut s = String::from("k,x,y,theta,v,omega\n");
    for (k, x) in traj.states().iter().enumerate() {
        write!(s, "{k},{},{},{}", x[0], x[1], x[2]).unwrap();
        if k < traj.horizon() {
            let u = traj.input(k);
            writeln!(s, ",{},{}", u[0], u[1]).unwrap();
        } else {
            s.push_str(",,\n");
        }
    }
    s
}

fn polygons_csv(brs: &BrsResult) -> String {
    let mut s = String::from("k,vertex,x,y\n");
    for (k, z) in brs.lambda.iter().enumerate() {
        for (i, p) in z.projected_polygon(0, 1).iter().enumerate() {
            writeln!(s, "{k},{i},{},{}", p[0], p[1]).unwrap();
        }
    }
    s
}

fn safe_sets_csv(sets: &SafeSetSequence) -> String {
    let mut s = String::from("k,lower_x,lower_y,lower_theta,upper_x,upper_y,upper_theta\n");
    for (k, b) in sets.boxes().iter().enumerate() {
        let (l, u) = (b.lower(), b.upper());
        writeln!(s, "{k},{},{},{},{},{},{}", l[0], l[1], l[2], u[0], u[1], u[2]).unwrap();
    }
    s
}

struct Frame {
    lo: [f64; 2],
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(b: &HyperRect) -> Self {
        let lo = [b.lower()[0], b.lower()[1]];
        let w = b.upper()[0] - lo[0];
        let h = b.upper()[1] - lo[1];
        let scale = WIDTH / w;
        Self {
            lo,
            scale,
            height: h * scale,
        }
    }

    fn pt(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.lo[0]) * self.scale, self.height - (y - self.lo[1]) * self.scale)
    }

    fn rect(&self, b: &HyperRect, style: &str) -> String {
        let (x0, y1) = self.pt(b.lower()[0], b.lower()[1]);
        let (x1, y0) = self.pt(b.upper()[0], b.upper()[1]);
        format!(
            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" {style}/>\n",
            x1 - x0,
            y1 - y0
        )
    }

    fn path(&self, pts: impl Iterator<Item = [f64; 2]>, closed: bool, style: &str) -> String {
        let mut d = String::new();
        for (i, p) in pts.enumerate() {
            let (x, y) = self.pt(p[0], p[1]);
            write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" }).unwrap();
        }
        if closed {
            d.push('Z');
        }
        format!("<path d=\"{}\" {style}/>\n", d.trim_end())
    }
}

fn svg(
    spec: &ProblemSpec,
    traj: &NominalTrajectory,
    brs: &BrsResult,
    sets: &SafeSetSequence,
    runs: &[Trajectory],
    probe: Option<&Trajectory>,
) -> String {
    let f = Frame::new(&spec.operating);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{:.0}\" viewBox=\"0 0 {WIDTH:.0} {:.0}\">\n",
        f.height, f.height
    );
    s += &f.rect(&spec.operating, "fill=\"white\" stroke=\"black\"");
    for b in spec.unsafe_region.pieces() {
        s += &f.rect(b, "fill=\"#d62728\" fill-opacity=\"0.6\" stroke=\"none\"");
    }
    s += &f.rect(&spec.target, "fill=\"#2ca02c\" fill-opacity=\"0.4\" stroke=\"#2ca02c\"");
    for b in sets.boxes() {
        s += &f.rect(&b, "fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"0.5\"");
    }
    for z in &brs.lambda {
        s += &f.path(z.projected_polygon(0, 1).into_iter(), true, "fill=\"#ff7f0e\" fill-opacity=\"0.3\" stroke=\"#ff7f0e\" stroke-width=\"0.5\"");
    }
    for r in runs.iter().take(MAX_TRACES) {
        s += &f.path(r.states.iter().map(|x| [x[0], x[1]]), false, "fill=\"none\" stroke=\"gray\" stroke-width=\"0.5\"");
    }
    s += &f.path(traj.states().iter().map(|x| [x[0], x[1]]), false, "fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"");
    if let Some(p) = probe {
        s += &f.path(p.states.iter().map(|x| [x[0], x[1]]), false, "fill=\"none\" stroke=\"#9467bd\" stroke-width=\"1.5\" stroke-dasharray=\"4 2\"");
    }
    s.push_str("</svg>\n");
    s
}
