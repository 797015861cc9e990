//! CSV output. Every table has a header row and every number is written
//! with 17 significant digits, so a rerun with the same seed reproduces the
//! file byte for byte.

use std::io::Write;

use fsvjj_core::engine::DecompositionReport;
use fsvjj_core::{ApproxComponents, McStatistics};

use crate::study::{ScalingReport, SmileRow};
use crate::Result;

/// `x` with 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn components<W: Write>(out: W, c: &ApproxComponents) -> Result<()> {
    let rows: Vec<Vec<String>> = [
        ("bs_base", c.bs_base),
        ("skew_term", c.skew_term),
        ("jump_term", c.jump_term),
        ("total", c.total),
        ("v0", c.v0),
        ("kernel_a0", c.kernel_a0),
        ("phi0", c.phi0),
        ("l_wm0", c.l_wm0),
        ("d_mm0", c.d_mm0),
        ("zeta", c.zeta),
    ]
    .into_iter()
    .chain(c.jump_term_stderr.map(|s| ("jump_term_stderr", s)))
    .map(|(k, v)| vec![k.to_string(), num(v)])
    .collect();
    write_table(out, &["component", "value"], &rows)
}

pub fn mc_statistics<W: Write>(out: W, rows: &[(&str, McStatistics)]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, s)| {
            vec![
                name.to_string(),
                num(s.estimate),
                num(s.stderr),
                num(s.ci95.0),
                num(s.ci95.1),
                s.n_paths.to_string(),
                s.n_steps.to_string(),
                s.seed.to_string(),
            ]
        })
        .collect();
    write_table(
        out,
        &["estimator", "estimate", "stderr", "ci95_low", "ci95_high", "n_paths", "n_steps", "seed"],
        &rows,
    )
}

/// One row per term; the last row carries the expansion total next to the
/// simulated price and the agreement flag.
pub fn decomposition<W: Write>(out: W, r: &DecompositionReport) -> Result<()> {
    let mut rows = vec![vec!["bs_base".into(), num(r.bs_base), num(0.0), String::new(), String::new()]];
    for t in &r.terms {
        rows.push(vec![t.name.clone(), num(t.estimate), num(t.stderr), String::new(), String::new()]);
    }
    rows.push(vec![
        "payoff_minus_expansion".into(),
        num(r.paired_difference.estimate),
        num(r.paired_difference.stderr),
        String::new(),
        String::new(),
    ]);
    rows.push(vec![
        "sum".into(),
        num(r.expansion.estimate),
        num(r.combined_stderr),
        num(r.mc_price.estimate),
        r.agrees.to_string(),
    ]);
    write_table(out, &["term", "estimate", "stderr", "mc_price", "agrees"], &rows)
}

pub fn scaling<W: Write>(out: W, r: &ScalingReport) -> Result<()> {
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| vec![num(row.param), num(row.v_approx), num(row.v_mc), num(row.stderr), num(row.abs_gap)])
        .collect();
    write_table(out, &[r.variable.name(), "v_approx", "v_mc", "stderr", "abs_gap"], &rows)
}

pub fn smile<W: Write>(out: W, rows: &[SmileRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.strike), num(r.price), opt(r.implied_vol), r.within_bounds.to_string()])
        .collect();
    write_table(out, &["strike", "price", "implied_vol", "within_bounds"], &rows)
}
