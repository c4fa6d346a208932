//! Path comparisons and run metrics. Everything here works from the rows of
//! an emitted CSV, so a report can be recomputed from the file alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of the window treated as the final orbit, s.
pub const FINAL_WINDOW_S: f64 = 3.0;
/// Window used to estimate the final oscillation period, s.
pub const PERIOD_WINDOW_S: f64 = 10.0;
/// Points the final orbit is resampled to.
pub const RESAMPLE_POINTS: usize = 1000;
/// Relative half-width of the energy band.
pub const ENERGY_BAND: f64 = 0.02;
/// Slack on the torque bound before a sample counts as a violation, N·m.
pub const BOUND_SLACK: f64 = 1e-9;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn directed_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().map(|p| b.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("hausdorff distance of an empty point set".into()));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// Largest perpendicular distance from `path` to the line `x_eq + s·c`.
pub fn straightness(path: &[Vec<f64>], c: &[f64], x_eq: &[f64]) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::InvalidArgument("straightness of an empty path".into()));
    }
    let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(cn > 0.0) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    Ok(path
        .iter()
        .map(|p| {
            let d: Vec<f64> = p.iter().zip(x_eq).map(|(a, b)| a - b).collect();
            let s = d.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() / cn;
            let perp2 = d.iter().map(|v| v * v).sum::<f64>() - s * s;
            perp2.max(0.0).sqrt()
        })
        .fold(0.0, f64::max))
}

/// One parsed row of a closed-loop CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    pub tau: Vec<f64>,
    pub e: f64,
}

/// Parses the trajectory columns of a closed-loop or open-loop CSV.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Config(format!("CSV header: {e}")))?.clone();
    let n = header.iter().filter(|h| h.starts_with("th") && !h.ends_with("dot")).count();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Config(format!("CSV has no column `{name}`")))
    };
    let t_col = col("t")?;
    let e_col = col("E")?;
    let x_cols = (1..=n).map(|i| col(&format!("th{i}"))).collect::<Result<Vec<_>>>()?;
    let v_cols = (1..=n).map(|i| col(&format!("th{i}dot"))).collect::<Result<Vec<_>>>()?;
    let u_cols = (1..=n).map(|i| col(&format!("tau{i}"))).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("CSV row {}: {e}", k + 2)))?;
        let f: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("CSV row {}: {e}", k + 2)))?;
        let pick = |cols: &[usize]| cols.iter().map(|&c| f[c]).collect::<Vec<f64>>();
        rows.push(CsvRow { t: f[t_col], x: pick(&x_cols), xdot: pick(&v_cols), tau: pick(&u_cols), e: f[e_col] });
    }
    if rows.is_empty() {
        return Err(Error::Config("CSV has no data rows".into()));
    }
    Ok(rows)
}

/// What the metrics are measured against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricContext {
    pub e_ref: f64,
    pub tau_min: Vec<f64>,
    pub tau_max: Vec<f64>,
    /// Linear-mode direction and equilibrium.
    pub direction: Vec<f64>,
    pub x_eq: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// `None` if the band never holds for a full final period.
    pub settling_time_s: Option<f64>,
    #[serde(rename = "final_torque_rms_Nm")]
    pub final_torque_rms_nm: f64,
    /// Against the mode found at the final orbit's mean energy; `None` if
    /// no such mode exists.
    pub hausdorff_to_mode_rad: Option<f64>,
    pub max_perp_dist_rad: f64,
    #[serde(rename = "energy_error_J")]
    pub energy_error_j: f64,
    pub bound_violations: usize,
    /// Estimated final oscillation period, s.
    pub final_period_s: Option<f64>,
    /// Mean energy over the final orbit, J.
    pub final_energy_j: f64,
}

fn final_window(rows: &[CsvRow], len: f64) -> &[CsvRow] {
    let t_end = rows.last().map_or(0.0, |r| r.t);
    let start = rows.partition_point(|r| r.t < t_end - len - 1e-9);
    &rows[start.min(rows.len() - 1)..]
}

/// Final-orbit configurations resampled uniformly in time.
pub fn final_path(rows: &[CsvRow]) -> Vec<Vec<f64>> {
    let w = final_window(rows, FINAL_WINDOW_S);
    if w.len() < 2 {
        return w.iter().map(|r| r.x.clone()).collect();
    }
    let (t0, t1) = (w[0].t, w[w.len() - 1].t);
    let mut j = 0;
    (0..RESAMPLE_POINTS)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / (RESAMPLE_POINTS - 1) as f64;
            while j + 2 < w.len() && w[j + 1].t < t {
                j += 1;
            }
            let (a, b) = (&w[j], &w[j + 1]);
            let s = if b.t > a.t { ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0) } else { 0.0 };
            a.x.iter().zip(&b.x).map(|(p, q)| p + s * (q - p)).collect()
        })
        .collect()
}

/// Oscillation period from sign changes of the velocity along `c` in the
/// last [`PERIOD_WINDOW_S`] seconds.
pub fn final_period(rows: &[CsvRow], c: &[f64]) -> Option<f64> {
    let w = final_window(rows, PERIOD_WINDOW_S);
    let v = |r: &CsvRow| r.xdot.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
    let mut crossings = Vec::new();
    for pair in w.windows(2) {
        let (va, vb) = (v(&pair[0]), v(&pair[1]));
        if va != 0.0 && (va < 0.0) != (vb < 0.0) {
            crossings.push(pair[0].t + (pair[1].t - pair[0].t) * va / (va - vb));
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Some(2.0 * span / (crossings.len() - 1) as f64)
}

/// First time from which the energy stays in the band for `hold` seconds.
pub fn settling_time(rows: &[CsvRow], e_ref: f64, hold: f64) -> Option<f64> {
    let band = ENERGY_BAND * e_ref;
    let t_end = rows.last()?.t;
    let mut next_exit = f64::INFINITY;
    let mut best = None;
    for r in rows.iter().rev() {
        if (r.e - e_ref).abs() > band {
            next_exit = r.t;
            continue;
        }
        if r.t + hold <= t_end + 1e-9 && next_exit > r.t + hold {
            best = Some(r.t);
        }
    }
    best
}

/// Metrics of one run. `mode_path` is the mode matching the final energy.
pub fn compute_metrics(rows: &[CsvRow], ctx: &MetricContext, mode_path: Option<&[Vec<f64>]>) -> Result<RunMetrics> {
    let w = final_window(rows, FINAL_WINDOW_S);
    let path = final_path(rows);
    let rms = (w.iter().map(|r| r.tau.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / w.len() as f64).sqrt();
    let final_energy = w.iter().map(|r| r.e).sum::<f64>() / w.len() as f64;
    let period = final_period(rows, &ctx.direction);
    let bound_violations = rows
        .iter()
        .filter(|r| {
            r.tau.iter().enumerate().any(|(i, &u)| u > ctx.tau_max[i] + BOUND_SLACK || u < ctx.tau_min[i] - BOUND_SLACK)
        })
        .count();
    Ok(RunMetrics {
        settling_time_s: settling_time(rows, ctx.e_ref, period.unwrap_or(FINAL_WINDOW_S)),
        final_torque_rms_nm: rms,
        hausdorff_to_mode_rad: mode_path.map(|m| hausdorff_distance(&path, m)).transpose()?,
        max_perp_dist_rad: straightness(&path, &ctx.direction, &ctx.x_eq)?,
        energy_error_j: (final_energy - ctx.e_ref).abs(),
        bound_violations,
        final_period_s: period,
        final_energy_j: final_energy,
    })
}
