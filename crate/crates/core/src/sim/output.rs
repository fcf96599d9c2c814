use std::fmt::Write as _;
use std::io::{Read, Write};

use super::SimRow;
use crate::controller::QpStatus;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 15] = [
    "t",
    "s_ref",
    "v_ref",
    "a_ref",
    "s",
    "v",
    "a",
    "u_bar",
    "du",
    "e_s",
    "model",
    "switched",
    "backup",
    "qp_status",
    "solve_time",
];

/// Shortest rendering of `x` rounded to 9 significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    let e = rounded.abs().log10().floor() as i32;
    if (-5..15).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        let mut s = format!("{rounded:.decimals$}");
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        if s == "-0" {
            s = "0".into();
        }
        s
    } else {
        let s = format!("{rounded:.8e}");
        let (m, ex) = s.split_once('e').unwrap_or((&s, "0"));
        let mut m = m.to_string();
        if m.contains('.') {
            while m.ends_with('0') {
                m.pop();
            }
            if m.ends_with('.') {
                m.pop();
            }
        }
        format!("{m}e{ex}")
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_csv<W: Write>(rows: &[SimRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(map)?;
    for r in rows {
        let rec = [
            format_sig(r.t),
            format_sig(r.s_ref),
            format_sig(r.v_ref),
            format_sig(r.a_ref),
            format_sig(r.s),
            format_sig(r.v),
            format_sig(r.a),
            format_sig(r.u_bar),
            format_sig(r.du),
            format_sig(r.e_s),
            r.model.clone(),
            flag(r.switched).into(),
            flag(r.backup).into(),
            r.qp_status.as_str().into(),
            format_sig(r.solve_time),
        ];
        w.write_record(&rec).map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_status(s: &str) -> Result<QpStatus> {
    [
        QpStatus::Optimal,
        QpStatus::Infeasible,
        QpStatus::MaxIter,
        QpStatus::Relaxed,
    ]
    .into_iter()
    .find(|q| q.as_str() == s)
    .ok_or_else(|| Error::Config(format!("unknown qp_status '{s}'")))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SimRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let bad = |e: csv::Error| Error::Config(format!("log: {e}"));
    let header = rd.headers().map_err(bad)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config("log header does not match the SimLog layout".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(bad)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Config(format!("log row {}: bad value in column {}", line + 1, CSV_HEADER[i])))
        };
        let boolean = |i: usize| -> Result<bool> {
            match &rec[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Config(format!("log row {}: bad flag '{other}'", line + 1))),
            }
        };
        rows.push(SimRow {
            t: num(0)?,
            s_ref: num(1)?,
            v_ref: num(2)?,
            a_ref: num(3)?,
            s: num(4)?,
            v: num(5)?,
            a: num(6)?,
            u_bar: num(7)?,
            du: num(8)?,
            e_s: num(9)?,
            model: rec[10].to_string(),
            switched: boolean(11)?,
            backup: boolean(12)?,
            qp_status: parse_status(&rec[13])?,
            solve_time: num(14)?,
        });
    }
    Ok(rows)
}

const PANEL_W: f64 = 900.0;
const PANEL_H: f64 = 160.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_T: f64 = 24.0;

fn polyline(out: &mut String, t: &[f64], y: &[f64], top: f64, color: &str) {
    let t0 = t.first().copied().unwrap_or(0.0);
    let t1 = t.last().copied().unwrap_or(1.0).max(t0 + 1e-9);
    let (mut lo, mut hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let _ = write!(
        out,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\""
    );
    for (ti, yi) in t.iter().zip(y) {
        let px = MARGIN_L + (ti - t0) / (t1 - t0) * (PANEL_W - MARGIN_L - 20.0);
        let py = top + PANEL_H - (yi - lo) / (hi - lo) * PANEL_H;
        let _ = write!(out, "{px:.2},{py:.2} ");
    }
    out.push_str("\"/>\n");
    let _ = writeln!(
        out,
        "<text x=\"4\" y=\"{:.1}\" font-size=\"10\">{}</text><text x=\"4\" y=\"{:.1}\" font-size=\"10\">{}</text>",
        top + 10.0,
        format_sig(hi),
        top + PANEL_H,
        format_sig(lo)
    );
}

/// Four stacked panels: command, acceleration, position error and switch
/// markers.
pub fn render_svg(rows: &[SimRow]) -> String {
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let height = 4.0 * (PANEL_H + MARGIN_T) + MARGIN_T;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PANEL_W}\" height=\"{height}\" font-family=\"sans-serif\">"
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    type Series = fn(&SimRow) -> f64;
    let panels: [(&str, Series, &str); 3] = [
        ("u_bar [m/s^2]", |r| r.u_bar, "green"),
        ("a [m/s^2]", |r| r.a, "blue"),
        ("e_s [m]", |r| r.e_s, "black"),
    ];
    for (i, (label, f, color)) in panels.iter().enumerate() {
        let top = MARGIN_T + i as f64 * (PANEL_H + MARGIN_T);
        let _ = writeln!(
            out,
            "<rect x=\"{MARGIN_L}\" y=\"{top}\" width=\"{}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"#999\"/>",
            PANEL_W - MARGIN_L - 20.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{MARGIN_L}\" y=\"{:.1}\" font-size=\"12\">{label}</text>",
            top - 6.0
        );
        let y: Vec<f64> = rows.iter().map(f).collect();
        polyline(&mut out, &t, &y, top, color);
    }
    let top = MARGIN_T + 3.0 * (PANEL_H + MARGIN_T);
    let _ = writeln!(
        out,
        "<rect x=\"{MARGIN_L}\" y=\"{top}\" width=\"{}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"#999\"/>",
        PANEL_W - MARGIN_L - 20.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{MARGIN_L}\" y=\"{:.1}\" font-size=\"12\">switches</text>",
        top - 6.0
    );
    let t0 = t.first().copied().unwrap_or(0.0);
    let t1 = t.last().copied().unwrap_or(1.0).max(t0 + 1e-9);
    for r in rows.iter().filter(|r| r.switched) {
        let px = MARGIN_L + (r.t - t0) / (t1 - t0) * (PANEL_W - MARGIN_L - 20.0);
        let color = if r.backup { "red" } else { "magenta" };
        let _ = writeln!(
            out,
            "<line x1=\"{px:.2}\" y1=\"{top}\" x2=\"{px:.2}\" y2=\"{:.1}\" stroke=\"{color}\"/>",
            top + PANEL_H
        );
    }
    out.push_str("</svg>\n");
    out
}
