//! Export to the Conic Benchmark Format (CBF, version 3) for cross-checking
//! with external solvers.

use std::fmt::Write;

use super::{tri_index, Cone, ConicProgram};

/// Renders `prog` as CBF text. Scalar cones become `A x + b` rows; PSD
/// constraints become `PSDCON` blocks.
pub fn to_cbf(prog: &ConicProgram) -> String {
    let mut out = String::new();
    let n = prog.column_count();
    writeln!(out, "VER\n3\n").unwrap();
    writeln!(out, "OBJSENSE\nMAX\n").unwrap();
    writeln!(out, "VAR\n{n} 1\nF {n}\n").unwrap();

    let mut scalar_cones: Vec<(String, usize)> = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut psd_dims = Vec::new();
    let mut h = Vec::new();
    let mut d = Vec::new();
    let mut row = 0usize;

    for c in prog.constraints() {
        match c.cone {
            Cone::PsdTriangle(dim) => {
                let idx = psd_dims.len();
                psd_dims.push(dim);
                for k in 0..dim {
                    for l in 0..=k {
                        let e = c.rows[tri_index(k, l)].compact();
                        for (col, v) in e.terms {
                            h.push(format!("{idx} {col} {k} {l} {v:e}"));
                        }
                        if e.constant != 0.0 {
                            d.push(format!("{idx} {k} {l} {:e}", e.constant));
                        }
                    }
                }
                continue;
            }
            Cone::Exponential => {
                // CBF orders the exponential cone as (z, y, x)
                for e in c.rows.iter().rev() {
                    push_row(&mut a, &mut b, row, e);
                    row += 1;
                }
                scalar_cones.push(("EXP".into(), 3));
                continue;
            }
            _ => {}
        }
        for e in &c.rows {
            push_row(&mut a, &mut b, row, e);
            row += 1;
        }
        let tag = match c.cone {
            Cone::Zero => "L=",
            Cone::Nonnegative => "L+",
            Cone::SecondOrder => "Q",
            _ => unreachable!(),
        };
        match scalar_cones.last_mut() {
            Some((t, k)) if t == tag && tag.starts_with('L') => *k += c.rows.len(),
            _ => scalar_cones.push((tag.to_string(), c.rows.len())),
        }
    }

    if !psd_dims.is_empty() {
        writeln!(out, "PSDCON\n{}", psd_dims.len()).unwrap();
        for dim in &psd_dims {
            writeln!(out, "{dim}").unwrap();
        }
        writeln!(out).unwrap();
    }
    if row > 0 {
        writeln!(out, "CON\n{row} {}", scalar_cones.len()).unwrap();
        for (t, k) in &scalar_cones {
            writeln!(out, "{t} {k}").unwrap();
        }
        writeln!(out).unwrap();
    }

    let obj = prog.objective().compact();
    if !obj.terms.is_empty() {
        writeln!(out, "OBJACOORD\n{}", obj.terms.len()).unwrap();
        for (c, v) in &obj.terms {
            writeln!(out, "{c} {v:e}").unwrap();
        }
        writeln!(out).unwrap();
    }
    if obj.constant != 0.0 {
        writeln!(out, "OBJBCOORD\n{:e}\n", obj.constant).unwrap();
    }
    for (name, lines) in [("ACOORD", &a), ("BCOORD", &b), ("HCOORD", &h), ("DCOORD", &d)] {
        if !lines.is_empty() {
            writeln!(out, "{name}\n{}", lines.len()).unwrap();
            for l in lines.iter() {
                writeln!(out, "{l}").unwrap();
            }
            writeln!(out).unwrap();
        }
    }
    out
}

fn push_row(a: &mut Vec<String>, b: &mut Vec<String>, row: usize, e: &super::Affine) {
    let e = e.compact();
    for (c, v) in e.terms {
        a.push(format!("{row} {c} {v:e}"));
    }
    if e.constant != 0.0 {
        b.push(format!("{row} {:e}", e.constant));
    }
}
