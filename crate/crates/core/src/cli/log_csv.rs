//! Run logs as CSV.
//!
//! One header row, then one row per control tick. Reals are written with nine
//! significant digits, flags as `0`/`1`.

use std::io::{Read, Write};

use crate::mathcore::Vec6;
use crate::sim::LogRecord;

use super::scenario_file::DOF_NAMES;

/// Per-DoF column groups, in file order.
pub const GROUPS: [&str; 21] = [
    "pose",
    "twist",
    "e_p",
    "e_v",
    "tau_c",
    "tau_a",
    "p_flow",
    "p_bar",
    "lle_pose",
    "lle_wrench",
    "qp_slack",
    "tau_ext",
    "input_slack",
    "u_ref",
    "u",
    "e_tau",
    "wrench_mode",
    "input_active",
    "jerk_active",
    "qp_iterations",
    "qp_fallback",
];

const VEC_GROUPS: usize = 16;
const FLAG_GROUPS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for CsvError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => CsvError::Io(io),
                _ => unreachable!(),
            }
        } else {
            CsvError::SchemaMismatch(e.to_string())
        }
    }
}

/// Column names in file order.
pub fn header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for g in &GROUPS[..VEC_GROUPS + FLAG_GROUPS] {
        h.extend(DOF_NAMES.iter().map(|d| format!("{g}_{d}")));
    }
    h.extend(GROUPS[VEC_GROUPS + FLAG_GROUPS..].iter().map(|g| g.to_string()));
    h
}

/// `x` with nine significant digits, in the shorter of fixed or exponent form
/// and without trailing zeros, like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn vec_groups(r: &LogRecord) -> [&Vec6<f64>; VEC_GROUPS] {
    [
        &r.pose,
        &r.twist,
        &r.e_p,
        &r.e_v,
        &r.tau_c,
        &r.tau_a,
        &r.p_flow,
        &r.p_bar,
        &r.lle_pose,
        &r.lle_wrench,
        &r.power_slack,
        &r.tau_ext,
        &r.input_slack,
        &r.u_ref,
        &r.u,
        &r.e_tau,
    ]
}

fn row(r: &LogRecord) -> Vec<String> {
    let mut out = Vec::with_capacity(header().len());
    out.push(format_sig9(r.t));
    for v in vec_groups(r) {
        out.extend(v.0.iter().map(|x| format_sig9(*x)));
    }
    for flags in [&r.wrench_mode, &r.input_active, &r.jerk_active] {
        out.extend(flags.iter().map(|b| if *b { "1" } else { "0" }.to_string()));
    }
    out.push(r.qp_iterations.to_string());
    out.push(if r.qp_fallback { "1" } else { "0" }.to_string());
    out
}

pub fn write_log<W: Write>(w: W, log: &[LogRecord]) -> Result<(), CsvError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header())?;
    for r in log {
        wr.write_record(row(r))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_log<R: Read>(r: R) -> Result<Vec<LogRecord>, CsvError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let expected = header();
    let got: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        let at = got.iter().zip(&expected).position(|(a, b)| a != b).unwrap_or(got.len().min(expected.len()));
        return Err(CsvError::SchemaMismatch(format!(
            "header differs at column {} (expected {:?}, found {:?})",
            at + 1,
            expected.get(at),
            got.get(at)
        )));
    }
    let mut log = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let num = |k: usize| -> Result<f64, CsvError> {
            rec[k]
                .parse()
                .map_err(|_| CsvError::SchemaMismatch(format!("line {line}: column {} is not a number: {:?}", expected[k], &rec[k])))
        };
        let flag = |k: usize| -> Result<bool, CsvError> {
            match &rec[k] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(CsvError::SchemaMismatch(format!("line {line}: column {} is not a flag: {other:?}", expected[k]))),
            }
        };
        let mut col = 1;
        let mut vecs = [Vec6::zeros(); VEC_GROUPS];
        for v in vecs.iter_mut() {
            for i in 0..6 {
                v[i] = num(col)?;
                col += 1;
            }
        }
        let mut flags = [[false; 6]; FLAG_GROUPS];
        for f in flags.iter_mut() {
            for b in f.iter_mut() {
                *b = flag(col)?;
                col += 1;
            }
        }
        let qp_iterations = rec[col]
            .parse()
            .map_err(|_| CsvError::SchemaMismatch(format!("line {line}: qp_iterations is not a count: {:?}", &rec[col])))?;
        let qp_fallback = flag(col + 1)?;
        let [pose, twist, e_p, e_v, tau_c, tau_a, p_flow, p_bar, lle_pose, lle_wrench, power_slack, tau_ext, input_slack, u_ref, u, e_tau] =
            vecs;
        let [wrench_mode, input_active, jerk_active] = flags;
        log.push(LogRecord {
            t: num(0)?,
            pose,
            twist,
            e_p,
            e_v,
            tau_c,
            tau_a,
            p_flow,
            p_bar,
            lle_pose,
            lle_wrench,
            power_slack,
            tau_ext,
            input_slack,
            u_ref,
            u,
            e_tau,
            wrench_mode,
            input_active,
            jerk_active,
            qp_iterations,
            qp_fallback,
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run, Scenario};

    const GOLDEN_HEADER: &str = "t,pose_x,pose_y,pose_z,pose_roll,pose_pitch,pose_yaw,twist_x,twist_y,twist_z,twist_roll,twist_pitch,twist_yaw,e_p_x,e_p_y,e_p_z,e_p_roll,e_p_pitch,e_p_yaw,e_v_x,e_v_y,e_v_z,e_v_roll,e_v_pitch,e_v_yaw,tau_c_x,tau_c_y,tau_c_z,tau_c_roll,tau_c_pitch,tau_c_yaw,tau_a_x,tau_a_y,tau_a_z,tau_a_roll,tau_a_pitch,tau_a_yaw,p_flow_x,p_flow_y,p_flow_z,p_flow_roll,p_flow_pitch,p_flow_yaw,p_bar_x,p_bar_y,p_bar_z,p_bar_roll,p_bar_pitch,p_bar_yaw,lle_pose_x,lle_pose_y,lle_pose_z,lle_pose_roll,lle_pose_pitch,lle_pose_yaw,lle_wrench_x,lle_wrench_y,lle_wrench_z,lle_wrench_roll,lle_wrench_pitch,lle_wrench_yaw,qp_slack_x,qp_slack_y,qp_slack_z,qp_slack_roll,qp_slack_pitch,qp_slack_yaw,tau_ext_x,tau_ext_y,tau_ext_z,tau_ext_roll,tau_ext_pitch,tau_ext_yaw,input_slack_x,input_slack_y,input_slack_z,input_slack_roll,input_slack_pitch,input_slack_yaw,u_ref_x,u_ref_y,u_ref_z,u_ref_roll,u_ref_pitch,u_ref_yaw,u_x,u_y,u_z,u_roll,u_pitch,u_yaw,e_tau_x,e_tau_y,e_tau_z,e_tau_roll,e_tau_pitch,e_tau_yaw,wrench_mode_x,wrench_mode_y,wrench_mode_z,wrench_mode_roll,wrench_mode_pitch,wrench_mode_yaw,input_active_x,input_active_y,input_active_z,input_active_roll,input_active_pitch,input_active_yaw,jerk_active_x,jerk_active_y,jerk_active_z,jerk_active_roll,jerk_active_pitch,jerk_active_yaw,qp_iterations,qp_fallback";

    #[test]
    fn header_is_golden() {
        assert_eq!(header().join(","), GOLDEN_HEADER);
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(std::f64::consts::PI), "3.14159265");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1234567894.0), "1.23456789e+09");
        assert_eq!(format_sig9(1.5e-7), "1.5e-07");
        assert_eq!(format_sig9(0.000123456789123), "0.000123456789");
        assert_eq!(format_sig9(9.999999999), "10");
    }

    #[test]
    fn round_trip_within_nine_digits() {
        let sc = Scenario { duration: 0.5, ..Default::default() };
        let log = run(&sc).unwrap();
        let mut buf = Vec::new();
        write_log(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let ncols = header().len();
        assert!(text.lines().all(|l| l.split(',').count() == ncols));
        let back = read_log(&buf[..]).unwrap();
        assert_eq!(back.len(), log.len());
        for (a, b) in log.iter().zip(&back) {
            assert!((a.t - b.t).abs() <= 1e-8 * a.t.abs().max(1e-300));
            for (x, y) in a.p_flow.0.iter().zip(b.p_flow.0) {
                assert!((x - y).abs() <= 1e-8 * x.abs());
            }
            assert_eq!(a.wrench_mode, b.wrench_mode);
            assert_eq!(a.qp_iterations, b.qp_iterations);
        }
        // Rewriting the parsed log is a fixed point.
        let mut again = Vec::new();
        write_log(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn schema_mismatch() {
        assert!(matches!(read_log("t,pose_x\n0,0\n".as_bytes()), Err(CsvError::SchemaMismatch(_))));
        assert!(matches!(read_log("".as_bytes()), Err(CsvError::SchemaMismatch(_))));
        let bad = format!("{}\n{}\n", GOLDEN_HEADER, vec!["x"; header().len()].join(","));
        assert!(matches!(read_log(bad.as_bytes()), Err(CsvError::SchemaMismatch(_))));
    }
}
