//! Certificates for the covariance domination inequality.

use serde::{Deserialize, Serialize};

use super::markov::MarkovOperator;
use crate::error::{Error, Result};
use crate::numcore::{eig_min_sym, op_norm, Matrix};

/// `c_ψ[t] = max{1, t·ψ_G(h+1)² / (h R_G²)}`.
pub fn c_psi(t: usize, psi_tail: f64, h: usize, r_g: f64) -> f64 {
    let denom = h.max(1) as f64 * r_g * r_g;
    (t as f64 * psi_tail * psi_tail / denom).max(1.0)
}

/// `λ_min(Σ_s H_sᵀH_s − (κ/2)·Σ_s Y_sᵀY_s + 5h R_H² c_ψ I)`.
///
/// A nonnegative value certifies the domination on this instance. `ys` is the
/// whole context window `Y_{1−h..t}` and `hs` is `H_{1..t}`.
pub fn covariance_domination_gap(hs: &[Matrix], ys: &[Matrix], kappa: f64, h: usize, r_h: f64, c_psi: f64) -> Result<f64> {
    let d = match (hs.first(), ys.first()) {
        (Some(hm), _) => hm.ncols(),
        (None, Some(y)) => y.ncols(),
        (None, None) => return Err(Error::InvalidInput("covariance gap needs at least one context".into())),
    };
    if ys.len() != hs.len() + h {
        return Err(Error::dim("covariance_domination_gap", format!("{} contexts", hs.len() + h), ys.len()));
    }
    let mut acc = Matrix::identity(d, d) * (5.0 * h as f64 * r_h * r_h * c_psi);
    for hm in hs {
        if hm.ncols() != d {
            return Err(Error::dim("covariance_domination_gap", d, hm.ncols()));
        }
        acc.gemm_tr(1.0, hm, hm, 1.0);
    }
    for y in ys {
        if y.ncols() != d {
            return Err(Error::dim("covariance_domination_gap", d, y.ncols()));
        }
        acc.gemm_tr(-0.5 * kappa, y, y, 1.0);
    }
    let sym = (&acc + acc.transpose()) * 0.5;
    eig_min_sym(&sym)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub gap: f64,
    pub kappa: f64,
    pub r_h: f64,
    pub c_psi: f64,
    pub t: usize,
}

/// Builds `H_s = Σ_{i≤h} G^{[i]} Y_{s−i}` from the contexts `ys = Y_{1−h..t}`
/// (oldest first) and evaluates the gap with all constants computed from `G`.
pub fn covariance_check(g: &MarkovOperator, ys: &[Matrix], h: usize, kappa_grid: usize) -> Result<CovarianceCheck> {
    if ys.len() <= h {
        return Err(Error::InvalidInput(format!("need more than h = {h} contexts, got {}", ys.len())));
    }
    let t = ys.len() - h;
    let head = g.truncated(h);
    let d = ys[0].ncols();
    let mut hs = Vec::with_capacity(t);
    for s in 0..t {
        // Y_{s+1−i} sits at index s + h − i.
        let window = (0..=h).map(|i| &ys[s + h - i]);
        hs.push(super::semions::make_h(&head, window, d)?);
    }
    let mut r_y = 0.0_f64;
    for y in ys {
        r_y = r_y.max(op_norm(y)?);
    }
    let r_g = g.radius();
    let r_h = r_g * r_y;
    let kappa = g.kappa_lower_bound(kappa_grid)?;
    let cp = c_psi(t, g.decay_psi(h + 1), h, r_g);
    let gap = covariance_domination_gap(&hs, ys, kappa, h, r_h, cp)?;
    Ok(CovarianceCheck { gap, kappa, r_h, c_psi: cp, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn zero_contexts_give_regularizer() {
        let h = 3;
        let ys = vec![Matrix::zeros(1, 2); 10 + h];
        let hs = vec![Matrix::zeros(2, 2); 10];
        let gap = covariance_domination_gap(&hs, &ys, 0.5, h, 2.0, 1.5).unwrap();
        assert!((gap - 5.0 * 3.0 * 4.0 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_nonnegative() {
        let mut rng = Rng::new(9);
        let ys: Vec<Matrix> = (0..40).map(|_| rng.gaussian_matrix(1, 3)).collect();
        let c = covariance_check(&MarkovOperator::identity(1), &ys, 0, 64).unwrap();
        assert!((c.kappa - 1.0).abs() < 1e-12);
        assert!(c.gap >= 0.0);
    }

    #[test]
    fn c_psi_examples() {
        assert_eq!(c_psi(100, 0.0, 4, 1.0), 1.0);
        assert!((c_psi(100, 1.0, 4, 1.0) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn random_stable_kernels_certified() {
        let mut rng = Rng::new(77);
        for _ in 0..30 {
            let rho = rng.uniform_range(0.2, 0.8);
            let blocks: Vec<Matrix> = (0..20)
                .map(|i| Matrix::from_element(1, 1, rng.gaussian() * rho.powi(i)))
                .collect();
            let g = MarkovOperator::new(blocks).unwrap();
            let h = 8;
            let ys: Vec<Matrix> = (0..200 + h).map(|_| rng.gaussian_matrix(1, 1)).collect();
            let c = covariance_check(&g, &ys, h, 512).unwrap();
            assert!(c.gap >= -1e-8, "gap {}", c.gap);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let ys = vec![Matrix::zeros(1, 1); 5];
        let hs = vec![Matrix::zeros(1, 1); 5];
        assert!(covariance_domination_gap(&hs, &ys, 1.0, 2, 1.0, 1.0).is_err());
    }
}
