//! Reading delimited data files into a [`FunctionalDataset`].
//!
//! Every diagnostic names the file and, where one exists, the offending line
//! or observation id.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fnn_core::{smooth_curve, BasisSystem, Domain, FunctionalCovariate, FunctionalCurve, FunctionalDataset, LongitudinalSample};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{CovariateConfig, DataConfig, DataFormat};
use crate::error::{CliError, Result};

/// Per-observation samples of one covariate in first-appearance order.
pub type Series = Vec<(String, Vec<(f64, f64)>)>;

/// How a covariate was turned into curves; stored with fitted models so new
/// data is smoothed onto the same basis and domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariatePlan {
    pub name: String,
    pub basis: BasisSystem,
    pub derivative: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestPlan {
    pub covariates: Vec<CovariatePlan>,
    pub scalar_names: Vec<String>,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn columns(path: &Path, rdr: &mut csv::Reader<std::fs::File>, wanted: &[&str]) -> Result<Vec<usize>> {
    let headers = rdr
        .headers()
        .map_err(|e| CliError::data(format!("{}: unreadable header: {e}", path.display())))?
        .clone();
    wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h == *w)
                .ok_or_else(|| CliError::data(format!("{}: missing column '{w}'", path.display())))
        })
        .collect()
}

fn number(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::data(format!(
            "{}:{line}: non-numeric value '{cell}' in column '{column}'",
            path.display()
        ))),
    }
}

fn records(path: &Path, rdr: &mut csv::Reader<std::fs::File>) -> Result<Vec<(u64, csv::StringRecord)>> {
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let line = r.position().map_or(0, |p| p.line());
            Ok((line, r))
        })
        .collect()
}

/// Reads the rows of `covariate` from a long-format file.
pub fn read_long(path: &Path, covariate: &str) -> Result<Series> {
    let mut rdr = reader(path)?;
    let cols = columns(path, &mut rdr, &["id", "covariate", "time", "value"])?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<(f64, f64)>> = HashMap::new();
    let mut seen: HashMap<(String, u64), u64> = HashMap::new();
    for (line, rec) in records(path, &mut rdr)? {
        if &rec[cols[1]] != covariate {
            continue;
        }
        let id = rec[cols[0]].to_string();
        let t = number(path, line, "time", &rec[cols[2]])?;
        let v = number(path, line, "value", &rec[cols[3]])?;
        if let Some(first) = seen.insert((id.clone(), t.to_bits()), line) {
            return Err(CliError::data(format!(
                "{}:{line}: duplicate measurement for id '{id}', covariate '{covariate}', time {t} (first on line {first})",
                path.display()
            )));
        }
        by_id
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id.clone());
                Vec::new()
            })
            .push((t, v));
    }
    if order.is_empty() {
        return Err(CliError::data(format!(
            "{}: no rows for covariate '{covariate}'",
            path.display()
        )));
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let mut s = by_id.remove(&id).expect("id recorded");
            s.sort_by(|a, b| a.0.total_cmp(&b.0));
            (id, s)
        })
        .collect())
}

/// Reads a wide-format file: `id` then one column per sampling time. Empty
/// cells are treated as missing.
pub fn read_wide(path: &Path) -> Result<Series> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::data(format!("{}: unreadable header: {e}", path.display())))?
        .clone();
    let id_col = headers
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| CliError::data(format!("{}: missing column 'id'", path.display())))?;
    let mut times = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        if c == id_col {
            continue;
        }
        let t = number(path, 1, "header", h)?;
        if times.iter().any(|&(_, s)| s == t) {
            return Err(CliError::data(format!(
                "{}:1: duplicate time column {t}",
                path.display()
            )));
        }
        times.push((c, t));
    }
    let mut out: Series = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for (line, rec) in records(path, &mut rdr)? {
        let id = rec[id_col].to_string();
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(CliError::data(format!(
                "{}:{line}: duplicate row for id '{id}' (first on line {first})",
                path.display()
            )));
        }
        let mut s = Vec::with_capacity(times.len());
        for &(c, t) in &times {
            let cell = rec.get(c).unwrap_or("");
            if !cell.is_empty() {
                s.push((t, number(path, line, &headers[c], cell)?));
            }
        }
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.push((id, s));
    }
    Ok(out)
}

/// Long-format scalars `id, name, value`; names in first-appearance order.
pub fn read_scalars(path: &Path) -> Result<(Vec<String>, HashMap<String, BTreeMap<String, f64>>)> {
    let mut rdr = reader(path)?;
    let cols = columns(path, &mut rdr, &["id", "name", "value"])?;
    let mut names = Vec::new();
    let mut values: HashMap<String, BTreeMap<String, f64>> = HashMap::new();
    for (line, rec) in records(path, &mut rdr)? {
        let id = rec[cols[0]].to_string();
        let name = rec[cols[1]].to_string();
        let v = number(path, line, "value", &rec[cols[2]])?;
        if !names.contains(&name) {
            names.push(name.clone());
        }
        if values.entry(id.clone()).or_default().insert(name.clone(), v).is_some() {
            return Err(CliError::data(format!(
                "{}:{line}: duplicate scalar '{name}' for id '{id}'",
                path.display()
            )));
        }
    }
    Ok((names, values))
}

/// Responses `id, y`.
pub fn read_response(path: &Path) -> Result<HashMap<String, f64>> {
    let mut rdr = reader(path)?;
    let cols = columns(path, &mut rdr, &["id", "y"])?;
    let mut out = HashMap::new();
    for (line, rec) in records(path, &mut rdr)? {
        let id = rec[cols[0]].to_string();
        let y = number(path, line, "y", &rec[cols[1]])?;
        if out.insert(id.clone(), y).is_some() {
            return Err(CliError::data(format!(
                "{}:{line}: duplicate response for id '{id}'",
                path.display()
            )));
        }
    }
    Ok(out)
}

fn read_series(cfg: &CovariateConfig, path: &Path) -> Result<Series> {
    match cfg.format {
        DataFormat::Long => read_long(path, &cfg.name),
        DataFormat::Wide => read_wide(path),
    }
}

fn observed_domain(name: &str, series: &Series) -> Result<Domain> {
    let (lo, hi) = series
        .iter()
        .flat_map(|(_, s)| s.iter().map(|p| p.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    Domain::new(lo, hi).map_err(|e| CliError::data(format!("covariate '{name}': {e}")))
}

/// Smooths every observation of one covariate onto `plan.basis` and applies
/// the configured derivative.
pub fn smooth_series(plan: &CovariatePlan, series: &Series) -> Result<FunctionalCovariate> {
    let basis = Arc::new(plan.basis.clone());
    let d = basis.domain();
    let mut curves: Vec<FunctionalCurve> = Vec::with_capacity(series.len());
    for (id, s) in series {
        if s.len() < basis.size() {
            return Err(CliError::data(format!(
                "id '{id}', covariate '{}': {} points but the basis has {} functions",
                plan.name,
                s.len(),
                basis.size()
            )));
        }
        if let Some(&(t, _)) = s.iter().find(|(t, _)| *t < d.min || *t > d.max) {
            return Err(CliError::data(format!(
                "id '{id}', covariate '{}': time {t} outside the domain {d}",
                plan.name
            )));
        }
        let sample = LongitudinalSample::new(s.iter().map(|p| p.0).collect(), s.iter().map(|p| p.1).collect())
            .map_err(|e| CliError::data(format!("id '{id}', covariate '{}': {e}", plan.name)))?;
        let curve = smooth_curve(&sample, &basis)
            .map_err(|e| CliError::data(format!("id '{id}', covariate '{}': {e}", plan.name)))?;
        curves.push(curve);
    }
    let mut cov = FunctionalCovariate::from_curves(plan.name.clone(), &curves)?;
    if plan.derivative > 0 {
        let (db, map) = basis
            .derivative_map(plan.derivative)
            .map_err(|e| CliError::data(format!("covariate '{}': {e}", plan.name)))?;
        cov = FunctionalCovariate::new(plan.name.clone(), Arc::new(db), cov.coefs() * map.transpose())?;
    }
    Ok(cov)
}

/// Reads and smooths the configured data. With `plan` the bases, domains
/// and scalar names of an earlier fit are reused; otherwise they are derived
/// from the configuration and the observed times.
pub fn ingest(
    data: &DataConfig,
    resolve: impl Fn(&Path) -> PathBuf,
    plan: Option<&IngestPlan>,
    require_response: bool,
) -> Result<(FunctionalDataset, IngestPlan)> {
    if let Some(p) = plan {
        let names: Vec<&str> = data.covariates.iter().map(|c| c.name.as_str()).collect();
        let want: Vec<&str> = p.covariates.iter().map(|c| c.name.as_str()).collect();
        if names != want {
            return Err(CliError::data(format!(
                "covariates {names:?} do not match the model's {want:?}"
            )));
        }
    }
    let mut plans = Vec::new();
    let mut functional = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    for (k, cfg) in data.covariates.iter().enumerate() {
        let path = resolve(&cfg.path);
        let series = read_series(cfg, &path)?;
        let cp = match plan {
            Some(p) => p.covariates[k].clone(),
            None => {
                let domain = match cfg.domain {
                    Some(d) => d,
                    None => observed_domain(&cfg.name, &series)?,
                };
                CovariatePlan {
                    name: cfg.name.clone(),
                    basis: cfg.basis.build(domain).map_err(|e| CliError::config(format!("covariate '{}': {e}", cfg.name)))?,
                    derivative: cfg.derivative,
                }
            }
        };
        if k == 0 {
            ids = series.iter().map(|(id, _)| id.clone()).collect();
        }
        let series = align(&cfg.name, &ids, series)?;
        functional.push(smooth_series(&cp, &series)?);
        plans.push(cp);
    }

    let n = ids.len();
    let (scalar_names, scalars) = match &data.scalars {
        Some(p) => {
            let path = resolve(p);
            let (names, values) = read_scalars(&path)?;
            let names = match plan {
                Some(pl) => pl.scalar_names.clone(),
                None => names,
            };
            let mut z = DMatrix::zeros(n, names.len());
            for (l, id) in ids.iter().enumerate() {
                for (j, name) in names.iter().enumerate() {
                    z[(l, j)] = *values.get(id).and_then(|m| m.get(name)).ok_or_else(|| {
                        CliError::data(format!("{}: id '{id}' has no value for scalar '{name}'", path.display()))
                    })?;
                }
            }
            (names, z)
        }
        None => {
            if plan.is_some_and(|p| !p.scalar_names.is_empty()) {
                return Err(CliError::data("the model needs scalar covariates but [data] has no scalars file"));
            }
            (Vec::new(), DMatrix::zeros(n, 0))
        }
    };

    let response = match &data.response {
        Some(p) => {
            let path = resolve(p);
            let map = read_response(&path)?;
            let y = ids
                .iter()
                .map(|id| {
                    map.get(id)
                        .copied()
                        .ok_or_else(|| CliError::data(format!("{}: no response for id '{id}'", path.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(DVector::from_vec(y))
        }
        None if require_response => return Err(CliError::data("[data] has no response file")),
        None => None,
    };

    let dataset = FunctionalDataset::new(ids, functional, scalar_names.clone(), scalars, response)?;
    Ok((
        dataset,
        IngestPlan {
            covariates: plans,
            scalar_names,
        },
    ))
}

/// Reorders `series` to follow `ids`, failing on missing or extra ids.
fn align(name: &str, ids: &[String], series: Series) -> Result<Series> {
    let mut map: HashMap<String, Vec<(f64, f64)>> = series.into_iter().collect();
    let out = ids
        .iter()
        .map(|id| {
            map.remove(id)
                .map(|s| (id.clone(), s))
                .ok_or_else(|| CliError::data(format!("covariate '{name}' has no samples for id '{id}'")))
        })
        .collect::<Result<Series>>()?;
    if let Some(extra) = map.keys().min() {
        return Err(CliError::data(format!(
            "covariate '{name}' has samples for unknown id '{extra}'"
        )));
    }
    Ok(out)
}
