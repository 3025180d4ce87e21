//! Seeded randomized truncated SVD used to compress node features.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

const OVERSAMPLE: usize = 10;
const POWER_ITERS: usize = 4;
const RANK_TOL: f64 = 1e-10;

/// Output of [`reduce`]: `n x k` scores and whether the random-projection
/// fallback was used.
#[derive(Clone, Debug)]
pub struct Reduced {
    pub scores: Matrix,
    pub fallback: bool,
}

/// Projects the rows of `x` onto its top-`k` right singular vectors, i.e.
/// `X V_k`, using a randomized range finder with power iteration.
///
/// When `x` has numerical rank below `k` the rows are instead multiplied by a
/// seeded Gaussian `m x k` projection.
pub fn reduce(x: &Matrix, k: usize, seed: u64) -> Result<Reduced> {
    if k == 0 {
        return Err(Error::contract("reduction target dimension must be positive"));
    }
    let (n, m) = x.shape();
    let mut rng = rng::stream(seed, rng::tag::REDUCER);
    let dense = DMatrix::from_row_slice(n, m, x.as_slice());

    if n >= k && m >= k {
        let width = (k + OVERSAMPLE).min(m).min(n);
        let omega = DMatrix::from_fn(m, width, |_, _| StandardNormal.sample(&mut rng));
        let mut q = (&dense * omega).qr().q();
        for _ in 0..POWER_ITERS {
            let z = (dense.transpose() * &q).qr().q();
            q = (&dense * z).qr().q();
        }
        let b = q.transpose() * &dense;
        let svd = b.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let top = order.first().map_or(0.0, |&i| svd.singular_values[i]);
        let rank = order
            .iter()
            .filter(|&&i| top > 0.0 && svd.singular_values[i] > top * RANK_TOL)
            .count();
        if rank >= k {
            let mut basis = DMatrix::zeros(m, k);
            for (col, &i) in order.iter().take(k).enumerate() {
                let mut v: Vec<f64> = v_t.row(i).iter().copied().collect();
                // Fix the sign so the largest-magnitude loading is positive.
                let pivot = v
                    .iter()
                    .copied()
                    .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
                if pivot < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                for (r, x) in v.into_iter().enumerate() {
                    basis[(r, col)] = x;
                }
            }
            return Ok(Reduced {
                scores: to_matrix(&(dense * basis)),
                fallback: false,
            });
        }
    }

    log::warn!("feature matrix has rank below {k}; using a seeded random projection");
    let scale = 1.0 / (k as f64).sqrt();
    let proj = DMatrix::from_fn(m, k, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    });
    Ok(Reduced {
        scores: to_matrix(&(dense * proj)),
        fallback: true,
    })
}

fn to_matrix(d: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(d.nrows(), d.ncols(), |r, c| d[(r, c)])
}
