//! Minimal SVG line plot of training curves.

use std::fmt::Write;

use dld_core::trainer::{EpochRow, TrainLog};

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;

type Series = (&'static str, &'static str, fn(&EpochRow) -> f64);

/// ACC and clean accuracy against epoch, with the EL epoch marked.
pub fn curves(log: &TrainLog) -> String {
    let n = log.rows.len().max(2) as f64;
    let x = |e: f64| PAD + (e - 1.0) / (n - 1.0) * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - v * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {} V{} H{}" fill="none" stroke="black"/>"#,
        PAD,
        H - PAD,
        W - PAD
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, PAD - 6.0, y(v) + 4.0);
    }
    let step = ((n / 6.0).ceil() as usize).max(1);
    for e in (1..=log.rows.len()).step_by(step) {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{e}</text>"#, x(e as f64), H - PAD + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, W / 2.0, H - 8.0);

    let series: [Series; 2] =
        [("ACC (noisy labels)", "#c0392b", |r| r.acc), ("clean accuracy", "#2471a3", |r| r.clean_acc)];
    for (k, (name, color, f)) in series.iter().enumerate() {
        let pts: Vec<String> = log.rows.iter().map(|r| format!("{:.2},{:.2}", x(f64::from(r.epoch)), y(f(r)))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        let ly = PAD + 14.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{name}</text>"#, W - PAD - 120.0);
    }
    if let Some(el) = log.el {
        let ex = x(f64::from(el));
        let _ = writeln!(s, r#"<line x1="{ex}" y1="{PAD}" x2="{ex}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#, H - PAD);
        let _ = writeln!(s, r#"<text x="{}" y="{}">EL={el}</text>"#, ex + 4.0, PAD - 6.0);
    }
    s.push_str("</svg>\n");
    s
}
