use crate::dynamics::TimePath;
use crate::error::{Error, Result};
use crate::field::TensorField;
use crate::stats::mean_se;
use crate::tensor::SymMat;

/// Sample mean of a difference quotient with per-entry standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftEstimate {
    pub mean: TensorField,
    pub std_err: TensorField,
    pub samples: usize,
}

impl DriftEstimate {
    /// Largest `|mean - k| / std_err` over all entries. Differences at
    /// rounding level (`1e-9 (1 + |k|)`) count as zero, so noiseless entries
    /// with zero standard error score 0; any larger mismatch there scores
    /// infinity.
    pub fn max_z_score(&self, k: &TensorField) -> Result<f64> {
        self.mean.lattice().ensure_same(k.lattice())?;
        let mut worst: f64 = 0.0;
        for ((m, s), k) in self.mean.values().iter().zip(self.std_err.values()).zip(k.values()) {
            for ((m, s), k) in m.upper().iter().zip(s.upper()).zip(k.upper()) {
                let diff = (m - k).abs();
                let z = if diff <= 1e-9 * (1.0 + k.abs()) { 0.0 } else { diff / s };
                worst = worst.max(z);
            }
        }
        Ok(worst)
    }
}

/// Estimates the drift at step `j` as the sample mean of
/// `(g(t_{j+1}) - g(t_j)) / dt` over the given sample paths.
pub fn estimate_drift(paths: &[TimePath], j: usize) -> Result<DriftEstimate> {
    if paths.len() < 2 {
        return Err(Error::contract("drift estimation needs at least two sample paths"));
    }
    let grid = *paths[0].grid();
    if j >= grid.steps() {
        return Err(Error::contract(format!("step {j} has no successor on a {}-step grid", grid.steps())));
    }
    let lattice = paths[0].lattice().clone();
    for p in &paths[1..] {
        if *p.grid() != grid {
            return Err(Error::contract("sample paths live on different grids"));
        }
        lattice.ensure_same(p.lattice())?;
    }
    let dt = grid.dt();
    let n = lattice.dim();
    let len = crate::tensor::sym_len(n);
    let mut mean = Vec::with_capacity(lattice.point_count());
    let mut se = Vec::with_capacity(lattice.point_count());
    let mut column = vec![0.0; paths.len()];
    for point in 0..lattice.point_count() {
        let mut m = Vec::with_capacity(len);
        let mut s = Vec::with_capacity(len);
        for c in 0..len {
            for (x, path) in column.iter_mut().zip(paths) {
                *x = (path.at(j + 1).at(point).upper()[c] - path.at(j).at(point).upper()[c]) / dt;
            }
            let stats = mean_se(&column);
            m.push(stats.mean);
            s.push(stats.std_err);
        }
        mean.push(SymMat::from_upper(n, &m)?);
        se.push(SymMat::from_upper(n, &s)?);
    }
    Ok(DriftEstimate {
        mean: TensorField::from_values(lattice.clone(), mean)?,
        std_err: TensorField::from_values(lattice, se)?,
        samples: paths.len(),
    })
}
