//! CSV logs, run summaries and comparison reports.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use pmsm_smo::analysis::{Report, ScenarioSummary};
use pmsm_smo::engine::{Record, RunLog};

/// Format with at most 9 significant digits, trailing zeros trimmed.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let s = format!("{v:.8e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
    if (-5..9).contains(&exp) {
        // re-render in positional form from the rounded mantissa
        let digits: f64 = format!("{mantissa}e{exp}").parse().expect("valid float");
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{digits:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        format!("{mantissa}e{exp}")
    }
}

pub fn write_log_csv<W: io::Write>(log: &RunLog, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(Record::COLUMNS)?;
    for r in &log.records {
        w.write_record(r.values().iter().map(|&v| sig9(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a log written by [`write_log_csv`].
pub fn read_log_csv<R: io::Read>(input: R, pole_pairs: u32) -> csv::Result<RunLog> {
    let mut rd = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row?;
        let mut v = [0.0; Record::COLUMNS.len()];
        for (slot, field) in v.iter_mut().zip(row.iter()) {
            *slot = field.trim().parse().map_err(|e| {
                csv::Error::from(io::Error::new(io::ErrorKind::InvalidData, format!("{field}: {e}")))
            })?;
        }
        records.push(Record::from_values(v));
    }
    Ok(RunLog { pole_pairs, records })
}

/// Write `contents` to a temporary sibling and rename it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

fn ms(t: Option<f64>) -> String {
    t.map_or_else(|| "unsettled".to_string(), |t| format!("{:.2} ms", t * 1e3))
}

/// Plain-text summary of one run.
pub fn summary_text(label: &str, log: &RunLog, s: &ScenarioSummary, event_window: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run: {label}");
    let _ = writeln!(out, "horizon: {} s, records: {}", sig9(log.horizon()), log.len());
    let _ = writeln!(out, "speed steps:");
    for st in &s.steps {
        match &st.metrics {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "  t = {:.4} s  {:.1} -> {:.1} r/min  overshoot {:.2} %  settling {}  steady-state error {:.3} r/min",
                    st.time,
                    m.initial_rpm,
                    st.setpoint_rpm,
                    m.overshoot_pct,
                    ms(m.settling_time_s),
                    m.steady_state_error
                );
            }
            None => {
                let _ = writeln!(out, "  t = {:.4} s  -> {:.1} r/min  (window too short or no change)", st.time, st.setpoint_rpm);
            }
        }
    }
    if !s.loads.is_empty() {
        let _ = writeln!(out, "load events:");
        for l in &s.loads {
            let status = match l.recovered_at_s {
                Some(t) => format!("recovered to the 5% band at {t:.4} s"),
                None => "NOT recovered to the 5% band".to_string(),
            };
            let _ = writeln!(
                out,
                "  t = {:.4} s  {} N*m  max deviation {:.2} %  {status}",
                l.time,
                sig9(l.torque),
                l.max_deviation_pct
            );
        }
    }
    let tr = &s.tracking;
    let _ = writeln!(
        out,
        "tracking (excluding {:.1} ms after each event): max angle error {:.3} deg, mean speed error {:.3} %, converged at {:.4} s",
        event_window * 1e3,
        tr.max_angle_error_deg,
        tr.mean_speed_error_pct,
        tr.convergence_time_s
    );
    out
}

const REPORT_HEADER: [&str; 7] = [
    "label",
    "setpoint_rpm",
    "overshoot_pct",
    "settling_time_s",
    "settled_at_s",
    "steady_state_error_rpm",
    "ripple_pct",
];

fn report_rows(r: &Report) -> Vec<[String; 7]> {
    r.rows
        .iter()
        .map(|row| {
            let m = &row.metrics;
            [
                row.label.clone(),
                sig9(m.setpoint_rpm),
                sig9(m.overshoot_pct),
                m.settling_time_s.map_or("unsettled".into(), sig9),
                m.settled_at_s.map_or("unsettled".into(), sig9),
                sig9(m.steady_state_error),
                sig9(row.ripple_pct),
            ]
        })
        .collect()
}

/// Aligned plain-text table.
pub fn report_text(r: &Report) -> String {
    let rows = report_rows(r);
    let widths: Vec<usize> = (0..REPORT_HEADER.len())
        .map(|i| rows.iter().map(|row| row[i].len()).chain([REPORT_HEADER[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let cols: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", cols.join("  ").trim_end());
    };
    line(&REPORT_HEADER, &mut out);
    for row in &rows {
        line(&row.each_ref().map(String::as_str), &mut out);
    }
    out
}

pub fn report_csv(r: &Report) -> csv::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for row in report_rows(r) {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1000.0), "1000");
        assert_eq!(sig9(2e-7), "2e-7");
        assert_eq!(sig9(0.123456789123), "0.123456789");
        assert_eq!(sig9(-std::f64::consts::PI), "-3.14159265");
        assert_eq!(sig9(123456789012.0), "1.23456789e11");
        assert_eq!(sig9(0.00001), "0.00001");
    }

    #[test]
    fn csv_round_trip_keeps_nine_digits() {
        let log = RunLog {
            pole_pairs: 4,
            records: vec![
                Record { t: 0.0, omega_m: 104.719755119, ..Default::default() },
                Record { t: 2e-6, theta_e: -std::f64::consts::PI, ..Default::default() },
            ],
        };
        let mut buf = Vec::new();
        write_log_csv(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,i_d,i_q,omega_m,theta_e"));
        let back = read_log_csv(buf.as_slice(), 4).unwrap();
        assert_eq!(back.len(), 2);
        assert!((back.records[0].omega_m - 104.719755).abs() < 1e-6);
        assert!((back.records[1].theta_e + std::f64::consts::PI).abs() < 1e-8);
    }
}
