use crate::error::{Error, Result};
use crate::numcore::linalg::ensure_finite_matrix;
use crate::numcore::{eig_min_sym, op_norm, Matrix};

pub const DEFAULT_KAPPA_GRID: usize = 512;

/// Finite impulse response `(G^{[0]}, …, G^{[h]})` acting by convolution.
///
/// All blocks share one `p × d_in` shape. The ℓ1,op norm `Σ‖G^{[i]}‖_op` and
/// the per-block operator norms are computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovOperator {
    blocks: Vec<Matrix>,
    block_norms: Vec<f64>,
    l1_op: f64,
}

impl MarkovOperator {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidInput("Markov operator needs at least one block".into()))?;
        let shape = first.shape();
        for (i, b) in blocks.iter().enumerate() {
            if b.shape() != shape {
                return Err(Error::dim(
                    "MarkovOperator::new",
                    format!("{}x{}", shape.0, shape.1),
                    format!("block {i} is {}x{}", b.nrows(), b.ncols()),
                ));
            }
            ensure_finite_matrix(b, "Markov block")?;
        }
        let block_norms = blocks.iter().map(op_norm).collect::<Result<Vec<_>>>()?;
        let l1_op = block_norms.iter().sum();
        Ok(MarkovOperator { blocks, block_norms, l1_op })
    }

    /// Scalar kernel `G^{[i]} = values[i]`.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Matrix::from_element(1, 1, v)).collect())
    }

    /// `G^{[0]} = I_d`, no further blocks.
    pub fn identity(d: usize) -> Self {
        Self::new(vec![Matrix::identity(d, d)]).expect("identity kernel is valid")
    }

    /// Index of the last stored block.
    pub fn h_len(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> Option<&Matrix> {
        self.blocks.get(i)
    }

    pub fn out_dim(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn block_norms(&self) -> &[f64] {
        &self.block_norms
    }

    pub fn l1_op_norm(&self) -> f64 {
        self.l1_op
    }

    /// `max{1, ‖G‖_{ℓ1,op}}`.
    pub fn radius(&self) -> f64 {
        self.l1_op.max(1.0)
    }

    /// Keeps blocks `0..=h`, padding with zeros when `h` exceeds the stored length.
    pub fn truncated(&self, h: usize) -> Self {
        let (p, d) = (self.out_dim(), self.in_dim());
        let blocks = (0..=h)
            .map(|i| self.blocks.get(i).cloned().unwrap_or_else(|| Matrix::zeros(p, d)))
            .collect();
        Self::new(blocks).expect("truncation preserves validity")
    }

    /// Tail sum `ψ_G(n) = Σ_{i≥n} ‖G^{[i]}‖_op` (zero past the stored blocks).
    pub fn decay_psi(&self, n: usize) -> f64 {
        self.block_norms.iter().skip(n).sum()
    }

    /// Transfer function on the unit circle at angle `theta`, returned as its
    /// real and imaginary parts: `Σ_i G^{[i]} e^{−i·k·θ}`.
    pub fn transfer_at(&self, theta: f64) -> (Matrix, Matrix) {
        let (p, d) = (self.out_dim(), self.in_dim());
        let mut re = Matrix::zeros(p, d);
        let mut im = Matrix::zeros(p, d);
        for (k, b) in self.blocks.iter().enumerate() {
            let angle = k as f64 * theta;
            re += b * angle.cos();
            im -= b * angle.sin();
        }
        (re, im)
    }

    /// Grid estimate of `1 ∧ min_θ σ_min(Ǧ(e^{iθ}))²` over `grid_points`
    /// equally spaced angles.
    ///
    /// The grid minimum can only overestimate the minimum over the whole
    /// circle, so analytic lower bounds on the invertibility modulus must sit
    /// below this value.
    pub fn kappa_lower_bound(&self, grid_points: usize) -> Result<f64> {
        if grid_points < 16 {
            return Err(Error::InvalidInput(format!("kappa grid needs at least 16 points, got {grid_points}")));
        }
        let (p, d) = (self.out_dim(), self.in_dim());
        if p < d {
            // Tall-or-square is required for a nonzero smallest singular value.
            return Ok(0.0);
        }
        let mut best = 1.0_f64;
        let mut w = Matrix::zeros(2 * p, 2 * d);
        for k in 0..grid_points {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / grid_points as f64;
            let (re, im) = self.transfer_at(theta);
            // Real embedding of a complex matrix: [[Re, −Im], [Im, Re]] has the
            // same singular values, each repeated twice.
            w.view_mut((0, 0), (p, d)).copy_from(&re);
            w.view_mut((p, d), (p, d)).copy_from(&re);
            w.view_mut((0, d), (p, d)).copy_from(&(-&im));
            w.view_mut((p, 0), (p, d)).copy_from(&im);
            let gram = w.transpose() * &w;
            let sym = (&gram + gram.transpose()) * 0.5;
            best = best.min(eig_min_sym(&sym)?.max(0.0));
        }
        Ok(best.clamp(0.0, 1.0))
    }
}
