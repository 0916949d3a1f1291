use nalgebra::{DMatrix, DMatrixView};

use super::{min_sym_eigenvalue, FixedPointError, PlayerVector};
use crate::model::{CloudView, Model};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    /// Diagonal blocks `D_aa L(x^i, a^i, m^{N,-i})`.
    D,
    /// Off-diagonal blocks `D^a_mu D_a L(x^i, a^i, m^{N,-i}, x^j, a^j) / (N-1)`.
    O,
    M,
    /// Diagonal blocks `D_xa L`.
    DTilde,
    /// Off-diagonal blocks `D^x_mu D_a L / (N-1)`.
    OTilde,
    MTilde,
    /// `D_p a^N`.
    JacobianP,
    /// `D_x a^N`.
    JacobianX,
}

impl Flavor {
    fn parts(self) -> (bool, bool, bool) {
        // (diagonal part, off-diagonal part, state derivative)
        match self {
            Flavor::D => (true, false, false),
            Flavor::O => (false, true, false),
            Flavor::M => (true, true, false),
            Flavor::DTilde => (true, false, true),
            Flavor::OTilde => (false, true, true),
            Flavor::MTilde => (true, true, true),
            Flavor::JacobianP | Flavor::JacobianX => unreachable!("Jacobians are not assembled"),
        }
    }
}

/// `N x N` array of `d x d` blocks stored as one dense `Nd x Nd` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    pub flavor: Flavor,
    pub players: usize,
    pub dim: usize,
    pub matrix: DMatrix<f64>,
}

impl BlockMatrix {
    /// Block `(i, j)`; for Jacobians this is `D_{p^j} a^{N,i}` (or `x^j`).
    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        self.matrix
            .view((i * self.dim, j * self.dim), (self.dim, self.dim))
    }

    /// Largest spectral norm over off-diagonal blocks.
    pub fn max_off_diagonal_norm(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.players {
            for j in 0..self.players {
                if i != j {
                    worst = worst.max(self.block(i, j).clone_owned().norm());
                }
            }
        }
        worst
    }

    pub fn min_sym_eigenvalue(&self) -> f64 {
        min_sym_eigenvalue(&self.matrix)
    }
}

/// Assembles one of the six block matrices at `(x, a)`.
pub fn assemble_blocks(
    model: &Model,
    x: &PlayerVector,
    a: &PlayerVector,
    flavor: Flavor,
) -> BlockMatrix {
    let (diag, off, wrt_x) = flavor.parts();
    let (n, d) = (x.players(), x.dim());
    let w = 1.0 / (n - 1) as f64;
    let l = &model.lagrangian;
    let rows = par::map_range(n, |i| {
        let mu = CloudView::excluding(d, x.as_slice(), a.as_slice(), i);
        let (xi, ai) = (x.row(i), a.row(i));
        (0..n)
            .map(|j| {
                if i == j {
                    if !diag {
                        return DMatrix::zeros(d, d);
                    }
                    if wrt_x {
                        l.d_xa(xi, ai, &mu)
                    } else {
                        l.d_aa(xi, ai, &mu)
                    }
                } else {
                    if !off {
                        return DMatrix::zeros(d, d);
                    }
                    let blk = if wrt_x {
                        l.dmu_x_d_a(xi, ai, &mu, x.row(j), a.row(j))
                    } else {
                        l.dmu_a_d_a(xi, ai, &mu, x.row(j), a.row(j))
                    };
                    blk * w
                }
            })
            .collect::<Vec<_>>()
    });
    let mut matrix = DMatrix::zeros(n * d, n * d);
    for (i, blocks) in rows.iter().enumerate() {
        for (j, blk) in blocks.iter().enumerate() {
            matrix.view_mut((i * d, j * d), (d, d)).copy_from(blk);
        }
    }
    BlockMatrix {
        flavor,
        players: n,
        dim: d,
        matrix,
    }
}

fn solve_against_m(m: &BlockMatrix, rhs: DMatrix<f64>) -> Result<DMatrix<f64>, FixedPointError> {
    match m.matrix.clone().lu().solve(&rhs) {
        Some(sol) if sol.iter().all(|v| v.is_finite()) => Ok(sol),
        _ => Err(FixedPointError::SingularM {
            min_eigenvalue: m.min_sym_eigenvalue(),
        }),
    }
}

/// `D_p a^N = -M^{-1}` at a solved profile `(x, a)`.
pub fn jacobian_p(
    model: &Model,
    x: &PlayerVector,
    a: &PlayerVector,
) -> Result<BlockMatrix, FixedPointError> {
    let m = assemble_blocks(model, x, a, Flavor::M);
    let nd = m.matrix.nrows();
    let sol = solve_against_m(&m, -DMatrix::identity(nd, nd))?;
    Ok(BlockMatrix {
        flavor: Flavor::JacobianP,
        players: m.players,
        dim: m.dim,
        matrix: sol,
    })
}

/// `D_x a^N = -M^{-1} M~` at a solved profile `(x, a)`.
pub fn jacobian_x(
    model: &Model,
    x: &PlayerVector,
    a: &PlayerVector,
) -> Result<BlockMatrix, FixedPointError> {
    let m = assemble_blocks(model, x, a, Flavor::M);
    let mt = assemble_blocks(model, x, a, Flavor::MTilde);
    let sol = solve_against_m(&m, -mt.matrix)?;
    Ok(BlockMatrix {
        flavor: Flavor::JacobianX,
        players: m.players,
        dim: m.dim,
        matrix: sol,
    })
}
