//! DRC parametrization, its flat embedding, and nominal-sequence recovery.
//!
//! Embedding layout: `z = e[M]` stacks the blocks `M^{[0]}, …, M^{[m−1]}` in
//! order, each block flattened row-major, so
//! `z[i·du·dy + r·dy + c] = M^{[i]}[r, c]`.

use crate::error::{Error, Result};
use crate::numcore::{op_norm, Matrix, Vector};
use crate::ocoam::MarkovOperator;

/// `u^ex_t = Σ_{i<m} M^{[i]} ŷ^K_{t−i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrcPolicy {
    blocks: Vec<Matrix>,
}

impl DrcPolicy {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::InvalidInput("DRC policy needs m >= 1".into()))?;
        let shape = first.shape();
        if let Some(bad) = blocks.iter().position(|b| b.shape() != shape) {
            return Err(Error::dim("DrcPolicy::new", format!("{}x{}", shape.0, shape.1), format!("block {bad}")));
        }
        Ok(DrcPolicy { blocks })
    }

    /// As [`DrcPolicy::new`] but enforcing `Σ‖M^{[i]}‖_op ≤ r_m`.
    pub fn bounded(blocks: Vec<Matrix>, r_m: f64) -> Result<Self> {
        let p = Self::new(blocks)?;
        let norm = p.l1_op_norm()?;
        if norm > r_m * (1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!("DRC policy norm {norm} exceeds budget {r_m}")));
        }
        Ok(p)
    }

    pub fn zeros(m: usize, du: usize, dy: usize) -> Self {
        DrcPolicy { blocks: vec![Matrix::zeros(du, dy); m.max(1)] }
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn du(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn dy(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn l1_op_norm(&self) -> Result<f64> {
        self.blocks.iter().map(op_norm).sum()
    }
}

/// `Σ_{i<m} M^{[i]} ŷ_{t−i}` with `history[i] = ŷ_{t−i}`; missing entries are zero.
pub fn drc_input<'a, I>(policy: &DrcPolicy, history: I) -> Vector
where
    I: IntoIterator<Item = &'a Vector>,
{
    let mut u = Vector::zeros(policy.du());
    for (block, y) in policy.blocks.iter().zip(history) {
        u.gemv(1.0, block, y, 1.0);
    }
    u
}

pub fn embed(policy: &DrcPolicy) -> Vector {
    let (du, dy) = (policy.du(), policy.dy());
    let mut z = Vector::zeros(policy.m() * du * dy);
    for (i, block) in policy.blocks.iter().enumerate() {
        for r in 0..du {
            for c in 0..dy {
                z[i * du * dy + r * dy + c] = block[(r, c)];
            }
        }
    }
    z
}

pub fn embed_inv(z: &Vector, m: usize, du: usize, dy: usize) -> Result<DrcPolicy> {
    if z.len() != m * du * dy || m == 0 {
        return Err(Error::dim("embed_inv", m * du * dy, z.len()));
    }
    let blocks = (0..m)
        .map(|i| Matrix::from_fn(du, dy, |r, c| z[i * du * dy + r * dy + c]))
        .collect();
    DrcPolicy::new(blocks)
}

/// `Y_t` with `Y_t·e[M] = drc_input(M, history)`; `history[i] = ŷ_{t−i}`.
pub fn embed_y<'a, I>(history: I, m: usize, du: usize, dy: usize) -> Matrix
where
    I: IntoIterator<Item = &'a Vector>,
{
    let mut y = Matrix::zeros(du, m * du * dy);
    for (i, yh) in history.into_iter().take(m).enumerate() {
        for r in 0..du {
            let base = i * du * dy + r * dy;
            for c in 0..dy {
                y[(r, base + c)] = yh[c];
            }
        }
    }
    y
}

/// `[ŷ; û] = [y; Ky] − Σ_{i=1}^{h} Ĝ^{[i]} u^ex_{t−i}` with `u_ex_history[i−1] = u^ex_{t−i}`.
///
/// Only blocks stored in `g_hat` are subtracted; missing history is zero.
pub fn recover_nat<'a, I>(g_hat: &MarkovOperator, k: &Matrix, y: &Vector, u_ex_history: I) -> Result<(Vector, Vector)>
where
    I: IntoIterator<Item = &'a Vector>,
{
    let (dy, du) = (y.len(), k.nrows());
    if g_hat.out_dim() != dy + du || g_hat.in_dim() != du || k.ncols() != dy {
        return Err(Error::dim(
            "recover_nat",
            format!("G {}x{}", dy + du, du),
            format!("G {}x{}", g_hat.out_dim(), g_hat.in_dim()),
        ));
    }
    let mut v = Vector::zeros(dy + du);
    v.rows_mut(0, dy).copy_from(y);
    v.rows_mut(dy, du).copy_from(&(k * y));
    for (block, u) in g_hat.blocks().iter().skip(1).zip(u_ex_history) {
        v.gemv(-1.0, block, u, 1.0);
    }
    Ok((v.rows(0, dy).into_owned(), v.rows(dy, du).into_owned()))
}

/// Concatenation `(y, u)`.
pub fn stack(y: &Vector, u: &Vector) -> Vector {
    let mut v = Vector::zeros(y.len() + u.len());
    v.rows_mut(0, y.len()).copy_from(y);
    v.rows_mut(y.len(), u.len()).copy_from(u);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::system::{simulate_step, LinearSystem};
    use crate::numcore::Rng;

    fn random_policy(rng: &mut Rng, m: usize, du: usize, dy: usize) -> DrcPolicy {
        DrcPolicy::new((0..m).map(|_| rng.gaussian_matrix(du, dy)).collect()).unwrap()
    }

    #[test]
    fn drc_input_examples() {
        let mut rng = Rng::new(1);
        let hist: Vec<Vector> = (0..3).map(|_| rng.gaussian_vector(2)).collect();
        assert_eq!(drc_input(&DrcPolicy::zeros(3, 1, 2), &hist), Vector::zeros(1));
        let sel = DrcPolicy::new(vec![Matrix::identity(2, 2)]).unwrap();
        assert_eq!(drc_input(&sel, &hist), hist[0]);

        let p = random_policy(&mut rng, 3, 2, 2);
        let mut oracle = Vector::zeros(2);
        for i in 0..3 {
            for r in 0..2 {
                for c in 0..2 {
                    oracle[r] += p.blocks()[i][(r, c)] * hist[i][c];
                }
            }
        }
        assert!((drc_input(&p, &hist) - oracle).amax() < 1e-12);
    }

    #[test]
    fn embedding_round_trip_and_layout() {
        let mut rng = Rng::new(2);
        let p = random_policy(&mut rng, 4, 2, 3);
        let z = embed(&p);
        assert_eq!(embed_inv(&z, 4, 2, 3).unwrap(), p);
        assert_eq!(z[1 * 6 + 1 * 3 + 2], p.blocks()[1][(1, 2)]);
        assert!(embed_inv(&z, 3, 2, 3).is_err());
    }

    #[test]
    fn embed_y_defining_identity() {
        let mut rng = Rng::new(3);
        assert_eq!(embed_y(std::iter::empty(), 2, 1, 2), Matrix::zeros(1, 4));
        let mut worst = 0.0_f64;
        for _ in 0..50 {
            let (m, du, dy) = (1 + (rng.next_u64() % 4) as usize, 1 + (rng.next_u64() % 3) as usize, 1 + (rng.next_u64() % 3) as usize);
            let p = random_policy(&mut rng, m, du, dy);
            let len = (rng.next_u64() % (m as u64 + 2)) as usize;
            let hist: Vec<Vector> = (0..len).map(|_| rng.gaussian_vector(dy)).collect();
            let y = embed_y(&hist, m, du, dy);
            worst = worst.max((&y * embed(&p) - drc_input(&p, &hist)).amax());
        }
        assert!(worst <= 1e-10);
    }

    #[test]
    fn embed_y_norm_is_stacked_history_norm() {
        let mut rng = Rng::new(4);
        let hist: Vec<Vector> = (0..3).map(|_| rng.gaussian_vector(2)).collect();
        let y = embed_y(&hist, 3, 2, 2);
        let stacked: f64 = hist.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        assert!((op_norm(&y).unwrap() - stacked).abs() < 1e-9);
    }

    #[test]
    fn bounded_policy_budget() {
        let blocks = vec![Matrix::identity(1, 1), Matrix::identity(1, 1)];
        assert!(DrcPolicy::bounded(blocks.clone(), 2.0).is_ok());
        assert!(DrcPolicy::bounded(blocks, 1.5).is_err());
    }

    #[test]
    fn recovery_without_inputs_is_identity() {
        let mut rng = Rng::new(5);
        let g = MarkovOperator::new((0..3).map(|_| rng.gaussian_matrix(3, 1)).collect()).unwrap();
        let k = rng.gaussian_matrix(1, 2);
        let y = rng.gaussian_vector(2);
        let (yh, uh) = recover_nat(&g, &k, &y, std::iter::empty()).unwrap();
        assert_eq!(yh, y);
        assert_eq!(uh, &k * &y);
    }

    fn nilpotent_with_gain() -> LinearSystem {
        let a = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let b = Matrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let c = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        LinearSystem::new(a, b, c, Matrix::zeros(1, 2)).unwrap()
    }

    #[test]
    fn exact_recovery_on_nilpotent_system() {
        let sys = nilpotent_with_gain();
        let g = sys.nominal_markov(4).unwrap();
        let mut rng = Rng::new(6);
        let (mut x, mut x_nom) = (Vector::zeros(3), Vector::zeros(3));
        let mut u_hist: Vec<Vector> = Vec::new();
        let mut worst = 0.0_f64;
        for _ in 0..200 {
            let (w, e) = (rng.gaussian_vector(3), rng.gaussian_vector(2));
            let u_ex = rng.gaussian_vector(1);
            let (_, y) = simulate_step(&sys, &x, &Vector::zeros(1), &w, &e);
            let (_, y_nom) = simulate_step(&sys, &x_nom, &Vector::zeros(1), &w, &e);
            let (yh, uh) = recover_nat(&g, sys.k(), &y, u_hist.iter().rev()).unwrap();
            worst = worst.max((&yh - &y_nom).amax()).max((&uh - sys.k() * &y_nom).amax());
            let u = sys.k() * &y + &u_ex;
            x = simulate_step(&sys, &x, &u, &w, &e).0;
            x_nom = simulate_step(&sys, &x_nom, &(sys.k() * &y_nom), &w, &e).0;
            u_hist.push(u_ex);
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn perturbed_recovery_error_bounded() {
        let mut rng = Rng::new(7);
        let sys = nilpotent_with_gain();
        let g = sys.nominal_markov(4).unwrap();
        let eps = 0.05;
        let mut blocks = g.blocks().to_vec();
        for b in blocks.iter_mut().skip(1) {
            let d = rng.gaussian_matrix(3, 1);
            *b += &d * (eps / 4.0 / op_norm(&d).unwrap());
        }
        let g_hat = MarkovOperator::new(blocks).unwrap();
        let u_hist: Vec<Vector> = (0..10).map(|_| rng.gaussian_vector(1)).collect();
        let u_max = u_hist.iter().map(|u| u.norm()).fold(0.0, f64::max);
        let y = rng.gaussian_vector(2);
        let (a1, a2) = recover_nat(&g, sys.k(), &y, &u_hist).unwrap();
        let (b1, b2) = recover_nat(&g_hat, sys.k(), &y, &u_hist).unwrap();
        let err = (stack(&a1, &a2) - stack(&b1, &b2)).norm();
        assert!(err <= eps * u_max * 10.0 + 1e-12);
    }
}
