//! Domain types, platform transforms and the Gaussian cell likelihood.
//!
//! Each platform contributes an `n × p_t` matrix of transformed measurements.
//! Probes (columns) are clustered per platform, patients (rows) are clustered
//! globally, and every (row cluster, column cluster) block of platform `t`
//! carries one latent mean. Observed cells are that mean plus Gaussian noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Dense row-major matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Structural(format!(
                "matrix of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Structural("ragged rows".into()));
        }
        Ok(Self {
            rows: n,
            cols: p,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Platform-specific transform onto the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Identity,
    /// `log(x / (1 - x))`, for proportions such as methylation beta values.
    Logit,
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(Transform::Identity),
            "logit" => Ok(Transform::Logit),
            other => Err(Error::Argument(format!("unknown transform `{other}`"))),
        }
    }
}

/// Apply a platform transform. Logit inputs must lie strictly inside (0, 1).
pub fn transform_platform(raw: &Matrix, kind: Transform) -> Result<Matrix> {
    for i in 0..raw.rows() {
        for j in 0..raw.cols() {
            let x = raw.get(i, j);
            if !x.is_finite() {
                return Err(Error::Domain {
                    row: i,
                    col: j,
                    msg: format!("non-finite value {x}"),
                });
            }
            if kind == Transform::Logit && !(x > 0.0 && x < 1.0) {
                return Err(Error::Domain {
                    row: i,
                    col: j,
                    msg: format!("logit needs a value in (0, 1), got {x}"),
                });
            }
        }
    }
    Ok(match kind {
        Transform::Identity => raw.clone(),
        Transform::Logit => raw.map(|x| (x / (1.0 - x)).ln()),
    })
}

/// Clip proportions into `[eps, 1 - eps]` ahead of a logit transform.
pub fn clip_proportions(raw: &Matrix, eps: f64) -> Matrix {
    raw.map(|x| x.clamp(eps, 1.0 - eps))
}

/// One platform after transformation.
#[derive(Debug, Clone)]
pub struct PlatformMatrix {
    pub platform_id: usize,
    pub values: Matrix,
    /// Column-major copy, `by_probe.row(j)` is probe `j` across patients.
    by_probe: Matrix,
    pub probe_names: Vec<String>,
    pub transform: Transform,
}

impl PlatformMatrix {
    pub fn new(
        platform_id: usize,
        values: Matrix,
        probe_names: Vec<String>,
        transform: Transform,
    ) -> Result<Self> {
        if values.rows() < 2 {
            return Err(Error::Structural(format!(
                "platform {platform_id} needs at least 2 patients"
            )));
        }
        if values.cols() < 1 {
            return Err(Error::Structural(format!(
                "platform {platform_id} has no probes"
            )));
        }
        if probe_names.len() != values.cols() {
            return Err(Error::Structural(format!(
                "platform {platform_id}: {} probe names for {} columns",
                probe_names.len(),
                values.cols()
            )));
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain {
                row: pos / values.cols(),
                col: pos % values.cols(),
                msg: "non-finite transformed value".into(),
            });
        }
        let by_probe = values.transpose();
        Ok(Self {
            platform_id,
            values,
            by_probe,
            probe_names,
            transform,
        })
    }

    /// Build with generated probe names `p1, p2, ...`.
    pub fn unnamed(platform_id: usize, values: Matrix) -> Result<Self> {
        let names = (1..=values.cols()).map(|j| format!("p{j}")).collect();
        Self::new(platform_id, values, names, Transform::Identity)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.values.cols()
    }

    #[inline]
    pub fn probe(&self, j: usize) -> &[f64] {
        self.by_probe.row(j)
    }

    #[inline]
    pub fn patient(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }
}

/// Censored survival outcomes aligned with the platform patient order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalOutcomes {
    pub observed_time: Vec<f64>,
    /// `true` when the event was observed, `false` when censored.
    pub event: Vec<bool>,
    /// Log event time; equals `ln(observed_time)` for events and is augmented
    /// (never below it) for censored patients.
    pub log_time: Vec<f64>,
}

impl ClinicalOutcomes {
    pub fn new(observed_time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        if observed_time.len() != event.len() {
            return Err(Error::Structural("time and event lengths differ".into()));
        }
        if let Some(i) = observed_time.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Argument(format!(
                "observed time for patient {i} must be positive, got {}",
                observed_time[i]
            )));
        }
        let log_time = observed_time.iter().map(|w| w.ln()).collect();
        Ok(Self {
            observed_time,
            event,
            log_time,
        })
    }

    pub fn len(&self) -> usize {
        self.observed_time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed_time.is_empty()
    }
}

/// All platforms for the same patients, plus optional outcomes.
#[derive(Debug, Clone)]
pub struct TransformedDataset {
    pub platforms: Vec<PlatformMatrix>,
    pub patient_ids: Vec<String>,
    pub clinical: Option<ClinicalOutcomes>,
}

impl TransformedDataset {
    pub fn new(
        platforms: Vec<PlatformMatrix>,
        patient_ids: Vec<String>,
        clinical: Option<ClinicalOutcomes>,
    ) -> Result<Self> {
        let first = platforms
            .first()
            .ok_or_else(|| Error::Structural("dataset has no platforms".into()))?;
        let n = first.n();
        if let Some(bad) = platforms.iter().find(|p| p.n() != n) {
            return Err(Error::Structural(format!(
                "platform {} has {} patients, expected {n}",
                bad.platform_id,
                bad.n()
            )));
        }
        if patient_ids.len() != n {
            return Err(Error::Structural(format!(
                "{} patient ids for {n} rows",
                patient_ids.len()
            )));
        }
        if let Some(c) = &clinical {
            if c.len() != n {
                return Err(Error::Structural(format!(
                    "{} clinical records for {n} patients",
                    c.len()
                )));
            }
        }
        Ok(Self {
            platforms,
            patient_ids,
            clinical,
        })
    }

    /// Dataset with generated patient ids and no outcomes.
    pub fn from_matrices(matrices: Vec<Matrix>) -> Result<Self> {
        let platforms = matrices
            .into_iter()
            .enumerate()
            .map(|(t, m)| PlatformMatrix::unnamed(t, m))
            .collect::<Result<Vec<_>>>()?;
        let n = platforms.first().map_or(0, PlatformMatrix::n);
        let ids = (1..=n).map(|i| format!("s{i}")).collect();
        Self::new(platforms, ids, None)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.platforms[0].n()
    }

    #[inline]
    pub fn n_platforms(&self) -> usize {
        self.platforms.len()
    }
}

/// Column allocations per platform and global row allocations.
///
/// Labels are zero-based internally and kept contiguous with no empty
/// clusters; files and the C interface present them one-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterState {
    pub columns: Vec<Vec<usize>>,
    pub rows: Vec<usize>,
    pub column_sizes: Vec<Vec<usize>>,
    pub row_sizes: Vec<usize>,
}

impl ClusterState {
    pub fn new(columns: Vec<Vec<usize>>, rows: Vec<usize>) -> Result<Self> {
        let column_sizes = columns
            .iter()
            .map(|c| cluster_sizes(c))
            .collect::<Result<Vec<_>>>()?;
        let row_sizes = cluster_sizes(&rows)?;
        Ok(Self {
            columns,
            rows,
            column_sizes,
            row_sizes,
        })
    }

    #[inline]
    pub fn k(&self, t: usize) -> usize {
        self.column_sizes[t].len()
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.row_sizes.len()
    }

    /// Check contiguity, absence of empty clusters and size bookkeeping.
    pub fn validate(&self) -> Result<()> {
        for (t, c) in self.columns.iter().enumerate() {
            if cluster_sizes(c)? != self.column_sizes[t] {
                return Err(Error::Structural(format!(
                    "column sizes of platform {t} out of sync"
                )));
            }
        }
        if cluster_sizes(&self.rows)? != self.row_sizes {
            return Err(Error::Structural("row sizes out of sync".into()));
        }
        Ok(())
    }

    pub fn check_dims(&self, data: &TransformedDataset) -> Result<()> {
        if self.columns.len() != data.n_platforms() {
            return Err(Error::Structural(format!(
                "state has {} platforms, data has {}",
                self.columns.len(),
                data.n_platforms()
            )));
        }
        if self.rows.len() != data.n() {
            return Err(Error::Structural(format!(
                "state has {} rows, data has {}",
                self.rows.len(),
                data.n()
            )));
        }
        for (t, c) in self.columns.iter().enumerate() {
            if c.len() != data.platforms[t].p() {
                return Err(Error::Structural(format!(
                    "platform {t}: {} column labels for {} probes",
                    c.len(),
                    data.platforms[t].p()
                )));
            }
        }
        Ok(())
    }
}

/// Sizes of clusters `0..K` for a labeling; errors on gaps.
pub fn cluster_sizes(labels: &[usize]) -> Result<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.contains(&0) {
        return Err(Error::Structural("labels are not contiguous".into()));
    }
    Ok(sizes)
}

/// Global atom identifier in the shared atom pool.
pub type AtomId = u64;
/// Local table identifier inside one platform's restaurant.
pub type TableId = u64;

/// One latent cell: its value, the global atom it takes the value from, and
/// the platform-local table that links it to that atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentCell {
    pub value: f64,
    pub atom: AtomId,
    pub table: TableId,
}

/// `H × K_t` latent matrix of one platform, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<LatentCell>,
}

impl LatentMatrix {
    pub fn new(rows: usize, cols: usize, cells: Vec<LatentCell>) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::Structural("latent cell count mismatch".into()));
        }
        Ok(Self { rows, cols, cells })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn cell(&self, h: usize, k: usize) -> &LatentCell {
        &self.cells[h * self.cols + k]
    }

    #[inline]
    pub fn cell_mut(&mut self, h: usize, k: usize) -> &mut LatentCell {
        &mut self.cells[h * self.cols + k]
    }

    #[inline]
    pub fn value(&self, h: usize, k: usize) -> f64 {
        self.cells[h * self.cols + k].value
    }

    pub fn cells(&self) -> &[LatentCell] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [LatentCell] {
        &mut self.cells
    }

    pub fn column(&self, k: usize) -> Vec<LatentCell> {
        (0..self.rows).map(|h| *self.cell(h, k)).collect()
    }

    pub fn row(&self, h: usize) -> &[LatentCell] {
        &self.cells[h * self.cols..(h + 1) * self.cols]
    }

    pub fn push_column(&mut self, column: &[LatentCell]) {
        assert_eq!(column.len(), self.rows);
        let mut cells = Vec::with_capacity(self.rows * (self.cols + 1));
        for (h, &cell) in column.iter().enumerate() {
            cells.extend_from_slice(self.row(h));
            cells.push(cell);
        }
        self.cells = cells;
        self.cols += 1;
    }

    pub fn remove_column(&mut self, k: usize) -> Vec<LatentCell> {
        let removed = self.column(k);
        let cols = self.cols;
        let mut idx = 0;
        self.cells.retain(|_| {
            let keep = idx % cols != k;
            idx += 1;
            keep
        });
        self.cols -= 1;
        removed
    }

    pub fn push_row(&mut self, row: &[LatentCell]) {
        assert_eq!(row.len(), self.cols);
        self.cells.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn remove_row(&mut self, h: usize) -> Vec<LatentCell> {
        let removed: Vec<_> = self.cells.drain(h * self.cols..(h + 1) * self.cols).collect();
        self.rows -= 1;
        removed
    }

    /// Reorder columns so that new column `k` is old column `order[k]`.
    pub fn permute_columns(&mut self, order: &[usize]) {
        let mut cells = Vec::with_capacity(self.cells.len());
        for h in 0..self.rows {
            for &k in order {
                cells.push(*self.cell(h, k));
            }
        }
        self.cells = cells;
    }

    /// Reorder rows so that new row `h` is old row `order[h]`.
    pub fn permute_rows(&mut self, order: &[usize]) {
        let mut cells = Vec::with_capacity(self.cells.len());
        for &h in order {
            cells.extend_from_slice(self.row(h));
        }
        self.cells = cells;
    }

    pub fn values(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.cells.iter().map(|c| c.value).collect(),
        }
    }

    pub fn atom_ids(&self) -> Vec<AtomId> {
        self.cells.iter().map(|c| c.atom).collect()
    }
}

/// Latent matrices of all platforms plus the noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrices {
    pub platforms: Vec<LatentMatrix>,
    /// Noise standard deviation per platform. All entries are equal unless
    /// per-platform noise is enabled.
    pub noise_sd: Vec<f64>,
}

impl LatentMatrices {
    #[inline]
    pub fn phi(&self, t: usize, h: usize, k: usize) -> f64 {
        self.platforms[t].value(h, k)
    }

    pub fn check_dims(&self, state: &ClusterState) -> Result<()> {
        if self.platforms.len() != state.columns.len() {
            return Err(Error::Structural("latent platform count mismatch".into()));
        }
        for (t, m) in self.platforms.iter().enumerate() {
            if m.rows() != state.h() || m.cols() != state.k(t) {
                return Err(Error::Structural(format!(
                    "platform {t}: latent matrix {}x{} for {} row and {} column clusters",
                    m.rows(),
                    m.cols(),
                    state.h(),
                    state.k(t)
                )));
            }
        }
        if self.noise_sd.len() != self.platforms.len() || self.noise_sd.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::Structural("noise sd must be positive per platform".into()));
        }
        Ok(())
    }
}

/// Inverse-gamma prior with shape and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl Default for InverseGammaPrior {
    fn default() -> Self {
        Self {
            shape: 0.01,
            scale: 0.01,
        }
    }
}

/// Prior on a PDP discount: mass `zero_mass` at 0, the rest uniform on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountPrior {
    pub zero_mass: f64,
}

impl Default for DiscountPrior {
    fn default() -> Self {
        Self { zero_mass: 0.5 }
    }
}

/// Model hyperparameters.
///
/// `alpha1` is the column PDP mass (shared by platforms), `alpha2` the row DP
/// mass, `alpha3` the mass of each platform measure around the shared base,
/// and `alpha4` the mass of the shared base around `N(mu0, tau0²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub mu0: f64,
    pub tau0: f64,
    /// Initial discount per platform; a single entry is broadcast.
    pub discount: Vec<f64>,
    pub discount_prior: DiscountPrior,
    pub sigma_prior: InverseGammaPrior,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
            alpha4: 1.0,
            mu0: 0.0,
            tau0: 1.0,
            discount: vec![0.0],
            discount_prior: DiscountPrior::default(),
            sigma_prior: InverseGammaPrior::default(),
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("alpha4", self.alpha4),
            ("tau0", self.tau0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.mu0.is_finite() {
            return Err(Error::Config("mu0 must be finite".into()));
        }
        if self.discount.is_empty() || self.discount.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(Error::Config("discounts must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.discount_prior.zero_mass) {
            return Err(Error::Config("discount zero mass must lie in [0, 1]".into()));
        }
        if !(self.sigma_prior.shape > 0.0 && self.sigma_prior.scale > 0.0) {
            return Err(Error::Config("sigma prior shape and scale must be positive".into()));
        }
        Ok(())
    }

    /// Initial discount for platform `t`.
    pub fn discount_for(&self, t: usize) -> f64 {
        *self.discount.get(t).unwrap_or(&self.discount[0])
    }
}

/// Normal log density of `z` with mean `phi` and sd `sigma`.
pub fn cell_log_likelihood(z: f64, phi: f64, sigma: f64) -> Result<f64> {
    if !(z.is_finite() && phi.is_finite() && sigma.is_finite()) {
        return Err(Error::Argument("non-finite likelihood input".into()));
    }
    if sigma <= 0.0 {
        return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
    }
    let r = (z - phi) / sigma;
    Ok(-0.5 * LN_2PI - sigma.ln() - 0.5 * r * r)
}

/// Sum of cell log likelihoods over every patient, probe and platform.
pub fn dataset_log_likelihood(
    data: &TransformedDataset,
    state: &ClusterState,
    latents: &LatentMatrices,
) -> Result<f64> {
    state.check_dims(data)?;
    latents.check_dims(state)?;
    let mut total = 0.0;
    for (t, platform) in data.platforms.iter().enumerate() {
        let sigma = latents.noise_sd[t];
        let mut sq = 0.0;
        for i in 0..platform.n() {
            let h = state.rows[i];
            let row = platform.patient(i);
            for (j, &z) in row.iter().enumerate() {
                let r = z - latents.phi(t, h, state.columns[t][j]);
                sq += r * r;
            }
        }
        let cells = (platform.n() * platform.p()) as f64;
        total += -0.5 * cells * (LN_2PI + 2.0 * sigma.ln()) - 0.5 * sq / (sigma * sigma);
    }
    Ok(total)
}

/// Sufficient statistics of the data cells mapped to one latent cell.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockStats {
    pub count: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl BlockStats {
    #[inline]
    pub fn add(&mut self, z: f64) {
        self.count += 1.0;
        self.sum += z;
        self.sum_sq += z * z;
    }

    #[inline]
    pub fn merge(&mut self, other: &BlockStats) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count > 0.0 {
            self.sum / self.count
        } else {
            0.0
        }
    }
}

/// Per-platform `H × K_t` block statistics (row-major) for the current state.
pub fn block_stats(data: &TransformedDataset, state: &ClusterState) -> Vec<Vec<BlockStats>> {
    data.platforms
        .iter()
        .enumerate()
        .map(|(t, platform)| {
            let k = state.k(t);
            let mut stats = vec![BlockStats::default(); state.h() * k];
            for i in 0..platform.n() {
                let base = state.rows[i] * k;
                for (j, &z) in platform.patient(i).iter().enumerate() {
                    stats[base + state.columns[t][j]].add(z);
                }
            }
            stats
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_pdf(z: f64, mu: f64, sd: f64) -> f64 {
        let r = (z - mu) / sd;
        (-0.5 * r * r).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn identity_transform_is_a_no_op() {
        let m = Matrix::new(2, 2, vec![1.0, -2.0, 3.5, 0.0]).unwrap();
        assert_eq!(transform_platform(&m, Transform::Identity).unwrap(), m);
    }

    #[test]
    fn logit_values() {
        let m = Matrix::new(1, 2, vec![0.5, 0.25]).unwrap();
        let z = transform_platform(&m, Transform::Logit).unwrap();
        assert_eq!(z.get(0, 0), 0.0);
        assert!((z.get(0, 1) - (0.25f64 / 0.75).ln()).abs() < 1e-15);
        assert!((z.get(0, 1) + 1.098_612_288_668_11).abs() < 1e-12);
    }

    #[test]
    fn logit_rejects_boundary_and_reports_cell() {
        let m = Matrix::new(2, 2, vec![0.2, 0.3, 0.4, 1.0]).unwrap();
        match transform_platform(&m, Transform::Logit) {
            Err(Error::Domain { row, col, .. }) => assert_eq!((row, col), (1, 1)),
            other => panic!("expected domain error, got {other:?}"),
        }
        let m = Matrix::new(1, 1, vec![0.0]).unwrap();
        assert!(transform_platform(&m, Transform::Logit).is_err());
    }

    #[test]
    fn clipping_makes_boundary_values_legal() {
        let m = Matrix::new(1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        let z = transform_platform(&clip_proportions(&m, 1e-3), Transform::Logit).unwrap();
        assert!((z.get(0, 0) + z.get(0, 2)).abs() < 1e-12);
        assert!(z.get(0, 0) < -6.0);
    }

    #[test]
    fn cell_likelihood_values() {
        let mode = cell_log_likelihood(0.3, 0.3, 1.0).unwrap();
        assert!((mode + 0.918_938_533_204_672_7).abs() < 1e-14);
        let off = cell_log_likelihood(0.3 + 2.0, 0.3, 2.0).unwrap();
        assert!((off - (cell_log_likelihood(0.0, 0.0, 2.0).unwrap() - 0.5)).abs() < 1e-14);
        let v = cell_log_likelihood(1.3, 0.5, 0.2).unwrap();
        assert!((v - normal_pdf(1.3, 0.5, 0.2).ln()).abs() < 1e-12);
    }

    #[test]
    fn cell_likelihood_rejects_bad_input() {
        assert!(cell_log_likelihood(f64::NAN, 0.0, 1.0).is_err());
        assert!(cell_log_likelihood(0.0, f64::INFINITY, 1.0).is_err());
        assert!(cell_log_likelihood(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn outcomes_validate_positive_times() {
        assert!(ClinicalOutcomes::new(vec![1.0, 0.0], vec![true, true]).is_err());
        let c = ClinicalOutcomes::new(vec![1.0, std::f64::consts::E], vec![true, false]).unwrap();
        assert_eq!(c.log_time, vec![0.0, 1.0]);
    }

    #[test]
    fn latent_matrix_column_and_row_surgery() {
        let cell = |v: f64| LatentCell {
            value: v,
            atom: v as u64,
            table: v as u64,
        };
        let mut m = LatentMatrix::new(2, 2, vec![cell(0.), cell(1.), cell(2.), cell(3.)]).unwrap();
        m.push_column(&[cell(4.), cell(5.)]);
        assert_eq!(m.values().as_slice(), &[0., 1., 4., 2., 3., 5.]);
        let gone = m.remove_column(1);
        assert_eq!(gone.iter().map(|c| c.value).collect::<Vec<_>>(), vec![1., 3.]);
        m.permute_columns(&[1, 0]);
        assert_eq!(m.values().as_slice(), &[4., 0., 5., 2.]);
        m.push_row(&[cell(6.), cell(7.)]);
        m.remove_row(0);
        m.permute_rows(&[1, 0]);
        assert_eq!(m.values().as_slice(), &[6., 7., 5., 2.]);
    }

    #[test]
    fn cluster_sizes_rejects_gaps() {
        assert_eq!(cluster_sizes(&[0, 1, 0]).unwrap(), vec![2, 1]);
        assert!(cluster_sizes(&[0, 2]).is_err());
    }
}
