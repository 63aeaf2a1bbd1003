#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fnn_cli::{run, Cli};
use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes a toy long-format data set: `x_l(t) = a_l + b_l sin(2πt)` at 21
/// points, one scalar `z`, and the response `y = 2a − b + z/2`.
pub fn write_toy_data(dir: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curves = String::from("id,covariate,time,value\n");
    let mut scalars = String::from("id,name,value\n");
    let mut resp = String::from("id,y\n");
    for l in 0..n {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let z: f64 = rng.random_range(-1.0..1.0);
        for i in 0..21 {
            let t = i as f64 / 20.0;
            let v = a + b * (2.0 * std::f64::consts::PI * t).sin();
            writeln!(curves, "obs{l},x,{t},{v}").unwrap();
        }
        writeln!(scalars, "obs{l},z,{z}").unwrap();
        writeln!(resp, "obs{l},{}", 2.0 * a - b + 0.5 * z).unwrap();
    }
    fs::write(dir.join("curves.csv"), curves).unwrap();
    fs::write(dir.join("scalars.csv"), scalars).unwrap();
    fs::write(dir.join("response.csv"), resp).unwrap();
}

pub const DATA_SECTION: &str = r#"
[data]
scalars = "scalars.csv"
response = "response.csv"
[[data.covariates]]
name = "x"
path = "curves.csv"
basis = { kind = "fourier", size = 5 }
"#;

pub const FNN_SECTION: &str = r#"
[fnn]
weight_bases = [{ kind = "fourier", size = 3 }]
layers = [{ units = 8, activation = "sigmoid" }]
learning_rate = 0.01
batch_size = 16
epochs = 40
record_weights = true
"#;

pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

pub fn cli(args: &[&str]) -> Cli {
    Cli::parse_from(std::iter::once("fnn").chain(args.iter().copied()))
}

pub fn run_ok(args: &[&str]) -> Vec<PathBuf> {
    run(&cli(args)).unwrap_or_else(|e| panic!("{args:?} failed: {e}"))
}

/// Data lines of a CSV table (metadata stripped).
pub fn table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}
