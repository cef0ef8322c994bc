use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};

const MAX_BASIS: usize = 1 << 24;
const MAX_SAMPLES: usize = 1 << 40;

/// Brownian increments for one Monte Carlo sample, one row per basis index.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleIncrements {
    basis_count: usize,
    steps: usize,
    data: Vec<f64>,
}

impl SampleIncrements {
    pub fn new(basis_count: usize, steps: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_dim(basis_count * steps, data.len())?;
        Ok(Self {
            basis_count,
            steps,
            data,
        })
    }

    pub fn zeros(basis_count: usize, steps: usize) -> Self {
        Self {
            basis_count,
            steps,
            data: vec![0.0; basis_count * steps],
        }
    }

    pub fn basis_count(&self) -> usize {
        self.basis_count
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `dW_i` over step `j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.steps + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.steps..(i + 1) * self.steps]
    }
}

/// Independent Brownian motions for every (sample, basis index) pair.
///
/// Increments are generated on demand. The increment for sample `s`, basis
/// index `i`, fine step `j` is the `j`-th standard normal of a ChaCha8 stream
/// keyed by `(seed, s, i)`, scaled by `sqrt(dt)`. It therefore depends only on
/// `(seed, s, i, j)`, never on evaluation order or thread count. Coarsened
/// paths sum consecutive fine increments, so every resolution shares one
/// underlying path.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPaths {
    seed: u64,
    samples: usize,
    basis_count: usize,
    grid: TimeGrid,
    substeps: usize,
}

pub fn sample_brownian(seed: u64, samples: usize, basis_count: usize, grid: TimeGrid) -> Result<BrownianPaths> {
    if samples == 0 {
        return Err(Error::contract("need at least one Monte Carlo sample"));
    }
    if samples > MAX_SAMPLES || basis_count > MAX_BASIS {
        return Err(Error::contract("too many samples or basis elements"));
    }
    Ok(BrownianPaths {
        seed,
        samples,
        basis_count,
        grid,
        substeps: 1,
    })
}

impl BrownianPaths {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn basis_count(&self) -> usize {
        self.basis_count
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn stream(&self, s: usize, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((s as u64) << 24) | i as u64);
        rng
    }

    pub fn increments(&self, s: usize) -> SampleIncrements {
        assert!(s < self.samples, "sample {s} out of range");
        let steps = self.grid.steps();
        let fine_sd = (self.grid.dt() / self.substeps as f64).sqrt();
        let mut data = Vec::with_capacity(self.basis_count * steps);
        for i in 0..self.basis_count {
            let mut rng = self.stream(s, i);
            for _ in 0..steps {
                let mut acc = 0.0;
                for _ in 0..self.substeps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    acc += z * fine_sd;
                }
                data.push(acc);
            }
        }
        SampleIncrements {
            basis_count: self.basis_count,
            steps,
            data,
        }
    }

    /// Same paths observed on a grid with `factor` times fewer steps.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        Ok(Self {
            grid: self.grid.coarsened(factor)?,
            substeps: self.substeps * factor,
            ..self.clone()
        })
    }

    /// Restricts to the first `samples` samples.
    pub fn truncated(&self, samples: usize) -> Result<Self> {
        if samples == 0 || samples > self.samples {
            return Err(Error::contract("truncation must keep between 1 and all samples"));
        }
        Ok(Self {
            samples,
            ..self.clone()
        })
    }
}
