#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fmds::dissim::euclidean_series;
use fmds::io;
use fmds::nalgebra::DMatrix;
use fmds::sim::realizing_prices;
use fmds::{BasisSpec, CoeffSet, DissimilaritySeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn fmds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmds"))
        .args(args)
        .output()
        .expect("spawn fmds")
}

pub fn ok(args: &[&str]) -> Output {
    let out = fmds(args);
    assert!(
        out.status.success(),
        "fmds {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&read(p)).unwrap()
}

/// Data rows of a CSV file (header dropped), split on commas.
pub fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    read(p)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Smooth 2-D trajectories on [1, 12] with `L = 5`, small enough that their
/// distances are valid correlation dissimilarities.
pub fn stock_truth(n: usize, spread: f64, seed: u64) -> (CoeffSet, BasisSpec, DissimilaritySeries) {
    let spec = BasisSpec::new(5, 1.0, 12.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = CoeffSet::new(
        (0..n)
            .map(|_| {
                DMatrix::from_fn(2, spec.q(), |_, _| {
                    spread * rng.sample::<f64, _>(StandardNormal)
                })
            })
            .collect(),
    )
    .unwrap();
    let grid: Vec<f64> = (1..=12).map(f64::from).collect();
    let series = euclidean_series(&truth, &spec, &grid).unwrap();
    (truth, spec, series)
}

/// Writes a `date,ticker,close` file whose monthly correlation
/// dissimilarities equal `series`.
pub fn write_stock_prices(dir: &Path, series: &DissimilaritySeries, seed: u64) -> PathBuf {
    let start = chrono::NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
    let records = realizing_prices(series, start, 21, seed).unwrap();
    let path = dir.join("prices.csv");
    io::write_file(&path, |w| io::write_prices(w, &records)).unwrap();
    path
}
