//! CSV and SVG outputs for training histories and noise sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::train::{EpochRecord, SweepRow};

pub fn metrics_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,ce,sao,total,train_acc,test_acc\n");
    for r in history {
        let test = r.test_acc.map_or(String::new(), |a| a.to_string());
        let _ = writeln!(out, "{},{},{},{},{},{}", r.epoch, r.ce, r.sao, r.total, r.train_acc, test);
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("snr,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.snr, r.accuracy);
    }
    out
}

/// A named polyline for [`line_plot`].
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal standalone SVG line chart with axes, tick labels and a legend.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let (w, h) = (640.0, 400.0);
    let (l, r, t, b) = (60.0, 150.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| l + (x - x0) / (x1 - x0) * (w - l - r);
    let py = |y: f64| h - b - (y - y0) / (y1 - y0) * (h - t - b);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} V{} H{}" fill="none" stroke="black"/>"#,
        h - b,
        w - r
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(xv),
            h - b + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            l - 6.0,
            py(yv) + 4.0,
            tick(yv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{l}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            w - r,
            py(yv),
            py(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + w - r) / 2.0,
        h - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (t + h - b) / 2.0,
        (t + h - b) / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
        let ly = t + 16.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            w - r + 10.0,
            w - r + 30.0,
            w - r + 36.0,
            ly + 4.0,
            escape(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn loss_plot(history: &[EpochRecord]) -> String {
    let pick = |f: fn(&EpochRecord) -> f64| history.iter().map(|r| (r.epoch as f64, f(r))).collect();
    line_plot(
        "Training loss",
        "epoch",
        "loss",
        &[
            Series { name: "ce", points: pick(|r| r.ce) },
            Series { name: "sao", points: pick(|r| r.sao) },
            Series { name: "total", points: pick(|r| r.total) },
        ],
    )
}

pub fn accuracy_plot(history: &[EpochRecord]) -> String {
    line_plot(
        "Accuracy",
        "epoch",
        "accuracy",
        &[
            Series {
                name: "train",
                points: history.iter().map(|r| (r.epoch as f64, r.train_acc)).collect(),
            },
            Series {
                name: "test",
                points: history.iter().filter_map(|r| Some((r.epoch as f64, r.test_acc?))).collect(),
            },
        ],
    )
}

pub fn sweep_plot(rows: &[SweepRow]) -> String {
    line_plot(
        "Accuracy under noise",
        "SNR (dB)",
        "accuracy",
        &[Series {
            name: "accuracy",
            points: rows.iter().map(|r| (r.snr, r.accuracy)).collect(),
        }],
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, test: Option<f64>) -> EpochRecord {
        EpochRecord {
            epoch,
            ce: 1.0 / epoch as f64,
            sao: 0.5,
            total: 1.0 / epoch as f64 + 0.5,
            train_acc: 0.5,
            test_acc: test,
        }
    }

    #[test]
    fn csv_headers_and_rows() {
        let csv = metrics_csv(&[rec(1, Some(0.25)), rec(2, None)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,ce,sao,total,train_acc,test_acc");
        assert_eq!(lines[1], "1,1,0.5,1.5,0.5,0.25");
        assert!(lines[2].ends_with(','));
        let s = sweep_csv(&[SweepRow { snr: 10.0, accuracy: 0.75 }]);
        assert_eq!(s, "snr,accuracy\n10,0.75\n");
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let svg = loss_plot(&[rec(1, None), rec(2, None)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        let empty = sweep_plot(&[]);
        assert!(!empty.contains("<polyline"));
        assert!(!empty.contains("NaN"));
    }
}
