//! Reductions with a fixed summation tree, so results do not depend on how
//! the inputs were produced (thread count, scheduling).

const BLOCK: usize = 8;

/// Pairwise (cascade) summation with a shape determined only by `xs.len()`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe {
            mean: f64::NAN,
            std_err: f64::NAN,
            samples: 0,
        };
    }
    let mean = pairwise_sum(xs) / n as f64;
    let std_err = if n > 1 {
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    MeanSe {
        mean,
        std_err,
        samples: n,
    }
}
