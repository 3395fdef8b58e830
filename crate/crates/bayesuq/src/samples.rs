//! Chain container and statistics: moments, credibility intervals,
//! autocorrelation, ESS/IACT, split R-hat, thinning and export of
//! plot-ready data.

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::util::par_map_indexed;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Where a chain came from; carried through exports.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub sampler: String,
    pub seed: Option<u64>,
}

/// An ordered chain of draws with geometry attached. Statistics treat the
/// stored draws as already past burn-in.
#[derive(Debug, Clone)]
pub struct Samples {
    n: usize,
    dim: usize,
    /// Row-major `n x dim`.
    data: Vec<f64>,
    geometry: Geometry,
    provenance: Provenance,
}

impl Samples {
    pub fn new(data: Vec<f64>, n: usize, dim: usize, geometry: Geometry) -> Result<Self> {
        if data.len() != n * dim {
            return Err(Error::dim("samples buffer", n * dim, data.len()));
        }
        if geometry.par_dim() != dim {
            return Err(Error::dim("samples geometry", dim, geometry.par_dim()));
        }
        Ok(Samples {
            n,
            dim,
            data,
            geometry,
            provenance: Provenance::default(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], geometry: Geometry) -> Result<Self> {
        let n = rows.len();
        let dim = geometry.par_dim();
        let mut data = Vec::with_capacity(n * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::dim("samples row", dim, r.len()));
            }
            data.extend_from_slice(r);
        }
        Samples::new(data, n, dim, geometry)
    }

    /// Scalar chain without geometry context.
    pub fn scalar_chain(values: Vec<f64>) -> Self {
        let n = values.len();
        Samples {
            n,
            dim: 1,
            data: values,
            geometry: Geometry::continuous_1d(1),
            provenance: Provenance::default(),
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.dim + j]).collect()
    }

    /// The chain of a single coordinate as scalar `Samples`.
    pub fn component(&self, j: usize) -> Result<Samples> {
        if j >= self.dim {
            return Err(Error::dim("component index", self.dim, j));
        }
        Ok(Samples::scalar_chain(self.column(j)).with_provenance(self.provenance.clone()))
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        if self.n == 0 {
            return Err(Error::invalid("mean of an empty chain"));
        }
        let mut m = vec![0.0; self.dim];
        for i in 0..self.n {
            for (mj, v) in m.iter_mut().zip(self.row(i)) {
                *mj += v;
            }
        }
        for mj in m.iter_mut() {
            *mj /= self.n as f64;
        }
        Ok(m)
    }

    /// Per-coordinate sample standard deviation (divisor `n - 1`).
    pub fn std(&self) -> Result<Vec<f64>> {
        if self.n < 2 {
            return Err(Error::invalid("std needs at least two draws"));
        }
        let m = self.mean()?;
        let mut acc = vec![0.0; self.dim];
        for i in 0..self.n {
            for ((a, v), mj) in acc.iter_mut().zip(self.row(i)).zip(&m) {
                let d = v - mj;
                *a += d * d;
            }
        }
        Ok(acc
            .into_iter()
            .map(|a| (a / (self.n - 1) as f64).sqrt())
            .collect())
    }

    /// Per-coordinate sample variance (divisor `n - 1`).
    pub fn variance(&self) -> Result<Vec<f64>> {
        Ok(self.std()?.into_iter().map(|s| s * s).collect())
    }

    /// Equal-tailed credibility interval at `level` percent via type-7
    /// quantiles.
    pub fn credibility_interval(&self, level: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(0.0 < level && level < 100.0) {
            return Err(Error::invalid(format!(
                "credibility level must be in (0, 100), got {level}"
            )));
        }
        if self.n < 2 {
            return Err(Error::invalid(
                "credibility interval needs at least two draws",
            ));
        }
        let tail = (1.0 - level / 100.0) / 2.0;
        let per_coord: Vec<(f64, f64)> = par_map_indexed(self.dim, |j| {
            let mut col = self.column(j);
            col.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN draws"));
            (
                quantile_sorted(&col, tail),
                quantile_sorted(&col, 1.0 - tail),
            )
        });
        let mut lower = vec![0.0; self.dim];
        let mut upper = vec![0.0; self.dim];
        for (j, (lo, hi)) in per_coord.into_iter().enumerate() {
            lower[j] = lo;
            upper[j] = hi;
        }
        Ok((lower, upper))
    }

    /// Integrated autocorrelation time of a scalar chain: `1 + 2 Σ ρ(ℓ)`
    /// truncated by the initial-positive-sequence rule on paired lags and
    /// clamped below at `1/n`.
    pub fn iact(&self) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::invalid("iact is defined for scalar chains"));
        }
        iact_of(&self.data)
    }

    /// Effective sample size `n / τ` of a scalar chain.
    pub fn ess(&self) -> Result<f64> {
        Ok(self.n as f64 / self.iact()?)
    }

    /// Per-coordinate ESS for multivariate chains.
    pub fn ess_per_coordinate(&self) -> Result<Vec<f64>> {
        let cols: Vec<Result<f64>> = par_map_indexed(self.dim, |j| {
            let col = self.column(j);
            Ok(self.n as f64 / iact_of(&col)?)
        });
        cols.into_iter().collect()
    }

    /// Keep every k-th draw, starting from the first.
    pub fn thin(&self, k: usize) -> Result<Samples> {
        if k == 0 {
            return Err(Error::invalid("thinning stride must be >= 1"));
        }
        let rows: Vec<Vec<f64>> = (0..self.n)
            .step_by(k)
            .map(|i| self.row(i).to_vec())
            .collect();
        Samples::from_rows(&rows, self.geometry.clone())
            .map(|s| s.with_provenance(self.provenance.clone()))
    }

    /// Drop the first k draws.
    pub fn burn(&self, k: usize) -> Result<Samples> {
        if k >= self.n {
            return Err(Error::invalid(format!(
                "cannot burn {k} draws from a chain of length {}",
                self.n
            )));
        }
        let rows: Vec<Vec<f64>> = (k..self.n).map(|i| self.row(i).to_vec()).collect();
        Samples::from_rows(&rows, self.geometry.clone())
            .map(|s| s.with_provenance(self.provenance.clone()))
    }

    /// Normalized autocorrelation for lags `0..=max_lag`.
    pub fn autocorrelation(&self, max_lag: usize) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::invalid(
                "autocorrelation is defined for scalar chains",
            ));
        }
        let x = &self.data;
        let n = x.len();
        if n < 2 {
            return Err(Error::invalid("autocorrelation needs at least two draws"));
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let c0 = autocov(x, mean, 0);
        if c0 == 0.0 {
            return Err(Error::invalid("autocorrelation of a zero-variance chain"));
        }
        let last = max_lag.min(n - 1);
        Ok((0..=last).map(|l| autocov(x, mean, l) / c0).collect())
    }

    /// Export a statistic of this chain. Returns the written files.
    pub fn export(
        &self,
        what: ExportKind,
        dir: &Path,
        run_id: &str,
        variable: &str,
    ) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stat_name = what.name();
        let base = dir.join(format!("{run_id}.{variable}.{stat_name}"));
        let mut written = Vec::new();

        let csv_path = base.with_extension("csv");
        match &what {
            ExportKind::Raw => {
                let mut body = String::new();
                for i in 0..self.n {
                    push_csv_row(&mut body, self.row(i));
                }
                std::fs::write(&csv_path, body)?;
            }
            ExportKind::Mean => {
                let mean = self.mean()?;
                let mut body = String::new();
                for v in &mean {
                    push_csv_row(&mut body, &[*v]);
                }
                std::fs::write(&csv_path, body)?;
            }
            ExportKind::Std => {
                let std = self.std()?;
                let mut body = String::new();
                for v in &std {
                    push_csv_row(&mut body, &[*v]);
                }
                std::fs::write(&csv_path, body)?;
            }
            ExportKind::Ci(level) => {
                let (lo, hi) = self.credibility_interval(*level)?;
                let mean = self.mean()?;
                let mut body = String::new();
                for j in 0..self.dim {
                    push_csv_row(&mut body, &[lo[j], mean[j], hi[j]]);
                }
                std::fs::write(&csv_path, body)?;
            }
            ExportKind::Trace => {
                let mut body = String::new();
                let mut row = Vec::with_capacity(self.dim + 1);
                for i in 0..self.n {
                    row.clear();
                    row.push(i as f64);
                    row.extend_from_slice(self.row(i));
                    push_csv_row(&mut body, &row);
                }
                std::fs::write(&csv_path, body)?;
            }
            ExportKind::Violin => {
                // Quantile grid: one row per coordinate.
                let levels = [0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99];
                let mut body = String::new();
                for j in 0..self.dim {
                    let mut col = self.column(j);
                    col.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN draws"));
                    let qs: Vec<f64> = levels.iter().map(|&q| quantile_sorted(&col, q)).collect();
                    push_csv_row(&mut body, &qs);
                }
                let q_path = dir.join(format!("{run_id}.{variable}.{stat_name}.quantiles.csv"));
                std::fs::write(&q_path, body)?;
                written.push(q_path);

                // Kernel density on 128 grid points per coordinate:
                // columns alternate (grid, density).
                let grids: Vec<(Vec<f64>, Vec<f64>)> =
                    par_map_indexed(self.dim, |j| kde_grid(&self.column(j), 128));
                let mut body = String::new();
                let mut row = Vec::with_capacity(2 * self.dim);
                for g in 0..128 {
                    row.clear();
                    for (grid, dens) in &grids {
                        row.push(grid[g]);
                        row.push(dens[g]);
                    }
                    push_csv_row(&mut body, &row);
                }
                let k_path = dir.join(format!("{run_id}.{variable}.{stat_name}.kde.csv"));
                std::fs::write(&k_path, body)?;
                written.push(k_path);
            }
        }
        if !matches!(what, ExportKind::Violin) {
            written.push(csv_path);
        }

        let sidecar = serde_json::json!({
            "statistic": stat_name,
            "variable": variable,
            "run_id": run_id,
            "n_samples": self.n,
            "par_dim": self.dim,
            "geometry": self.geometry,
            "provenance": self.provenance,
            "level": match what { ExportKind::Ci(l) => Some(l), _ => None },
        });
        let json_path = base.with_extension("json");
        std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
        written.push(json_path);
        Ok(written)
    }

    /// Read a raw export back. The JSON sidecar next to the CSV restores
    /// geometry and provenance when present.
    pub fn import_raw(csv_path: &Path) -> Result<Samples> {
        let text = std::fs::read_to_string(csv_path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("line {}: '{tok}'", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("raw chain file is empty".into()));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Parse("ragged raw chain file".into()));
        }

        let mut geometry = Geometry::continuous_1d(dim);
        let mut provenance = Provenance::default();
        let sidecar = csv_path.with_extension("json");
        if sidecar.exists() {
            let value: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&sidecar)?)
                    .map_err(|e| Error::Parse(format!("sidecar: {e}")))?;
            if let Some(g) = value.get("geometry") {
                geometry = serde_json::from_value(g.clone())
                    .map_err(|e| Error::Parse(format!("sidecar geometry: {e}")))?;
            }
            if let Some(p) = value.get("provenance") {
                provenance = serde_json::from_value(p.clone()).unwrap_or_default();
            }
        }
        if geometry.par_dim() != dim {
            geometry = Geometry::continuous_1d(dim);
        }
        Samples::from_rows(&rows, geometry).map(|s| s.with_provenance(provenance))
    }
}

/// Exportable statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExportKind {
    Mean,
    Std,
    Ci(f64),
    Trace,
    Violin,
    Raw,
}

impl ExportKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExportKind::Mean => "mean",
            ExportKind::Std => "std",
            ExportKind::Ci(_) => "ci",
            ExportKind::Trace => "trace",
            ExportKind::Violin => "violin",
            ExportKind::Raw => "raw",
        }
    }
}

fn push_csv_row(out: &mut String, row: &[f64]) {
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

/// Type-7 quantile (linear interpolation at position `(n-1) q`) of a sorted
/// slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Biased (divide by n) autocovariance at a lag.
fn autocov(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for t in 0..n - lag {
        s += (x[t] - mean) * (x[t + lag] - mean);
    }
    s / n as f64
}

fn iact_of(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 10 {
        return Err(Error::invalid("iact needs at least 10 draws"));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = autocov(x, mean, 0);
    if c0 == 0.0 {
        return Err(Error::invalid("iact of a zero-variance chain is undefined"));
    }
    // Geyer initial positive sequence: sum pairs rho(2k) + rho(2k+1) while
    // positive. Lags are evaluated lazily so well-mixed chains stop early.
    let mut tau = -1.0;
    let mut k = 0usize;
    loop {
        let l1 = 2 * k + 1;
        if l1 > n - 1 {
            break;
        }
        let pair = (autocov(x, mean, 2 * k) + autocov(x, mean, l1)) / c0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    Ok(tau.max(1.0 / n as f64))
}

/// Split R-hat over two or more scalar chains of equal length.
pub fn rhat(chains: &[&Samples]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::invalid("rhat needs at least two chains"));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("rhat needs chains of equal length"));
    }
    if chains.iter().any(|c| c.dim() != 1) {
        return Err(Error::invalid("rhat is defined for scalar chains"));
    }
    if len < 4 {
        return Err(Error::invalid("rhat needs chains of length >= 4"));
    }

    // Split each chain in half, dropping the middle draw of odd chains.
    let half = len / 2;
    let mut halves: Vec<Vec<f64>> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let col = c.column(0);
        halves.push(col[..half].to_vec());
        halves.push(col[len - half..].to_vec());
    }

    let m = halves.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0)
        * means
            .iter()
            .map(|mu| (mu - grand) * (mu - grand))
            .sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return Err(Error::invalid("rhat undefined for zero-variance chains"));
    }
    let v_hat = (n - 1.0) / n * w + b / n;
    Ok((v_hat / w).sqrt())
}

/// Kernel density estimate on an evenly spaced grid (Gaussian kernel,
/// Silverman bandwidth).
fn kde_grid(values: &[f64], grid_points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN draws"));
    let mean = values.iter().sum::<f64>() / n as f64;
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n.max(2) - 1) as f64;
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let sigma = var.sqrt();
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    let h = (0.9 * spread * (n as f64).powf(-0.2)).max(1e-12 * (mean.abs() + 1.0));
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[n - 1] + 3.0 * h;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_points - 1) as f64)
        .collect();
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let dens: Vec<f64> = grid
        .iter()
        .map(|&g| {
            norm * values
                .iter()
                .map(|&v| (-(g - v) * (g - v) / (2.0 * h * h)).exp())
                .sum::<f64>()
        })
        .collect();
    (grid, dens)
}
