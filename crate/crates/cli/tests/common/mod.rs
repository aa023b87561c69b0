#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dld_core::annotations::parse_dota;

pub const CLASSES: [&str; 5] = ["plane", "ship", "storage-tank", "harbor", "bridge"];

pub fn dld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dld")).args(args).output().expect("run dld")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `images` label files with `per_image` non-overlapping rotated boxes each.
pub fn write_gt(dir: &Path, images: usize, per_image: usize) -> usize {
    fs::create_dir_all(dir).unwrap();
    for i in 0..images {
        let mut text = String::from("imagesource:synthetic\ngsd:0.5\n");
        for j in 0..per_image {
            let (cx, cy) = (100.0 * (j % 8) as f64 + 50.0, 100.0 * (j / 8) as f64 + 50.0);
            let (w, h) = (20.0 + ((i * 3 + j * 5) % 17) as f64, 12.0 + ((i + j * 7) % 11) as f64);
            let a = ((i * 13 + j * 29) % 90) as f64 * std::f64::consts::PI / 180.0;
            let (s, c) = a.sin_cos();
            let mut coords = Vec::new();
            for (u, v) in [(w / 2.0, h / 2.0), (-w / 2.0, h / 2.0), (-w / 2.0, -h / 2.0), (w / 2.0, -h / 2.0)] {
                coords.push(format!("{:.1}", cx + u * c - v * s));
                coords.push(format!("{:.1}", cy + u * s + v * c));
            }
            let cat = CLASSES[(i * 7 + j * 3 + (i * j) % 4) % CLASSES.len()];
            let diff = u8::from((i + j) % 13 == 0);
            text.push_str(&format!("{} {cat} {diff}\n", coords.join(" ")));
        }
        fs::write(dir.join(format!("P{i:04}.txt")), text).unwrap();
    }
    images * per_image
}

/// Detections identical to the ground truth, score 1.
pub fn write_perfect_predictions(gt: &Path, pred: &Path) {
    fs::create_dir_all(pred).unwrap();
    for entry in sorted_txt(gt) {
        let id = entry.file_stem().unwrap().to_str().unwrap().to_string();
        let ann = parse_dota(&fs::read_to_string(&entry).unwrap(), &id).unwrap();
        let mut out = String::new();
        for inst in &ann.instances {
            out.push_str(&format!("{} {} 1.0\n", inst.corners, inst.category));
        }
        fs::write(pred.join(format!("{id}.txt")), out).unwrap();
    }
}

pub fn sorted_txt(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|x| x == "txt")).collect();
    v.sort();
    v
}

pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).map(|p| (p.clone(), fs::read(&p).unwrap())).collect()
}

/// `key=value` pairs of a one-line summary.
pub fn field(summary: &str, key: &str) -> Option<String> {
    summary.split_whitespace().find_map(|t| t.strip_prefix(&format!("{key}=")).map(String::from))
}

pub fn write_series(path: &Path, metric: &str, values: &[f64]) {
    let mut s = format!("epoch,{metric}\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, v));
    }
    fs::write(path, s).unwrap();
}
