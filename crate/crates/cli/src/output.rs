//! Curve files.

use std::io::Write;

use entangled_mdi::optimize::CurvePoint;

pub const HEADER: [&str; 10] =
    ["loss_db", "key_rate", "mu_a", "mu_b", "mu_c", "split_a", "split_b", "q_z", "e_z", "e11_x"];

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn record(p: &CurvePoint) -> Vec<String> {
    let v = &p.variables;
    vec![
        format!("{}", p.total_loss_db),
        num(p.r_optimal),
        num(v.mu_a),
        num(v.mu_b),
        num(v.mu_c),
        num(v.split_a),
        num(v.split_b),
        num(p.diagnostics.q_z),
        opt(p.diagnostics.e_z),
        opt(p.diagnostics.e11_x),
    ]
}

/// Writes the header and one row per point. With `alpha_db_per_km`, a
/// trailing `fiber_km` column is added.
pub fn write_curve<W: Write>(out: W, points: &[CurvePoint], alpha_db_per_km: Option<f64>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = HEADER.to_vec();
    if alpha_db_per_km.is_some() {
        header.push("fiber_km");
    }
    w.write_record(&header)?;
    for p in points {
        let mut row = record(p);
        if let Some(alpha) = alpha_db_per_km {
            row.push(format!("{}", p.fiber_km(alpha)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn curve_to_string(points: &[CurvePoint], alpha_db_per_km: Option<f64>) -> String {
    let mut buf = Vec::new();
    write_curve(&mut buf, points, alpha_db_per_km).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}
