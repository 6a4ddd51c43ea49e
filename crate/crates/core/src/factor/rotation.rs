use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;

use super::{fix_signs, FactorModel};
use crate::error::{Error, Result};

const VARIMAX_EPS: f64 = 1e-13;
const VARIMAX_MAX_ITER: usize = 1000;

/// Σ over factors of the variance of the squared loadings in that factor's row.
pub fn varimax_criterion(beta: &DMatrix<f64>) -> f64 {
    let q = beta.ncols() as f64;
    beta.row_iter()
        .map(|row| {
            let sq: Vec<f64> = row.iter().map(|x| x * x).collect();
            let mean = sq.iter().sum::<f64>() / q;
            sq.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / q
        })
        .sum()
}

/// Orthogonal T (p×p) maximizing the varimax criterion of `a·T`, a = q×p.
fn varimax_rotation(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (q, p) = a.shape();
    let mut t = DMatrix::identity(p, p);
    for _ in 0..VARIMAX_MAX_ITER {
        let z = a * &t;
        let col_ss: Vec<f64> = (0..p)
            .map(|c| z.column(c).norm_squared() / q as f64)
            .collect();
        let target = DMatrix::from_fn(q, p, |i, c| z[(i, c)].powi(3) - z[(i, c)] * col_ss[c]);
        let b = a.tr_mul(&target);
        let svd = b.svd(true, true);
        let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V"));
        let next = u * v_t;
        let change = crate::linalg::frobenius(&(&next - &t));
        t = next;
        if change < VARIMAX_EPS {
            break;
        }
    }
    t
}

/// Varimax-rotates the loadings: β* = Ψβ̂ with Ψ orthogonal. Each factor is
/// then signed so its largest-magnitude loading is positive, and factors are
/// ordered by decreasing sum of squared loadings. Fit statistics and Ω are
/// unchanged because β*'β* = β̂'β̂.
pub fn varimax(model: &FactorModel) -> Result<FactorModel> {
    let p = model.p;
    if p == 0 {
        return Err(Error::Precondition(
            "varimax needs at least one factor".into(),
        ));
    }
    let a = model.beta.transpose();
    let t = if p == 1 {
        DMatrix::identity(1, 1)
    } else {
        varimax_rotation(&a)
    };
    let mut psi = t.transpose();
    let mut beta = &psi * &model.beta;

    let signs = fix_signs(&mut beta);
    for (i, s) in signs.iter().enumerate() {
        if *s < 0.0 {
            psi.row_mut(i).neg_mut();
        }
    }
    let ss: Vec<f64> = (0..p).map(|i| beta.row(i).norm_squared()).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| ss[y].total_cmp(&ss[x]).then(x.cmp(&y)));
    let beta = DMatrix::from_fn(p, beta.ncols(), |i, j| beta[(order[i], j)]);
    let psi = DMatrix::from_fn(p, p, |i, j| psi[(order[i], j)]);

    Ok(FactorModel {
        beta,
        rotation: &psi * &model.rotation,
        ..model.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::{sample, two_factor_truth};
    use super::super::{fit_fa, FitOptions};
    use super::*;
    use crate::linalg::frobenius;
    use rand::{Rng, SeedableRng};

    fn model_with(beta: DMatrix<f64>) -> FactorModel {
        let q = beta.ncols();
        let p = beta.nrows();
        FactorModel {
            codes: (0..q).map(|j| alloc::format!("y{j}")).collect(),
            p,
            n: 100,
            v: 99,
            omega: (0..q)
                .map(|j| 1.2 - beta.column(j).norm_squared().min(1.0))
                .collect(),
            beta,
            lambda: DMatrix::zeros(1, q),
            scale: alloc::vec![1.0; q],
            rotation: DMatrix::identity(p, p),
            deviance: -10.0,
            loglik: 0.0,
            loglik_trace: Vec::new(),
            converged: true,
            iterations: 1,
            floored: alloc::vec![false; q],
        }
    }

    fn planar(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn simple_structure_is_a_fixed_point() {
        let (b, _) = two_factor_truth();
        let r = varimax(&model_with(b.clone())).unwrap();
        let psi = r.rotation.abs();
        // identity up to permutation and sign
        for i in 0..2 {
            let big = psi.row(i).max();
            assert!((big - 1.0).abs() < 1e-8);
        }
        assert!(frobenius(&(r.beta - b)) < 1e-8);
    }

    #[test]
    fn rotated_back_structure_is_recovered() {
        let (b, _) = two_factor_truth();
        let mixed = planar(0.4) * &b;
        let r = varimax(&model_with(mixed)).unwrap();
        assert!(frobenius(&(r.beta.clone() - &b)) < 1e-6, "{}", r.beta);
    }

    #[test]
    fn matches_planar_grid_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let b = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
            let r = varimax(&model_with(b.clone())).unwrap();
            let mut best = f64::MIN;
            let steps = (core::f64::consts::FRAC_PI_2 / 1e-4) as usize;
            for k in 0..steps {
                best = best.max(varimax_criterion(&(planar(k as f64 * 1e-4) * &b)));
            }
            assert!((varimax_criterion(&r.beta) - best).abs() <= 1e-3);
            assert!(varimax_criterion(&r.beta) >= best - 1e-9);
        }
    }

    #[test]
    fn rotation_is_orthogonal_and_preserves_fit() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        for p in 1..=3 {
            let b = DMatrix::from_fn(p, 6, |_, _| rng.random_range(-1.0..1.0));
            let m = model_with(b);
            let r = varimax(&m).unwrap();
            let eye = DMatrix::identity(p, p);
            assert!(frobenius(&(r.rotation.tr_mul(&r.rotation) - &eye)) < 1e-10);
            assert!(frobenius(&(r.implied_covariance() - m.implied_covariance())) < 1e-10);
            assert_eq!(r.information_criteria(), m.information_criteria());
            assert!(frobenius(&(&r.rotation * &m.beta - &r.beta)) < 1e-10);
            let ss: Vec<f64> = (0..p).map(|i| r.beta.row(i).norm_squared()).collect();
            assert!(ss.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn fitted_two_factor_model_rotates_to_truth() {
        let (b, o) = two_factor_truth();
        let prob = sample(&b, &o, 10_000, 30);
        let m = varimax(&fit_fa(&prob, 2, &FitOptions::default()).unwrap()).unwrap();
        let max_err = (&m.beta - &b).abs().max();
        assert!(max_err <= 0.05, "max loading error {max_err}");
    }
}
