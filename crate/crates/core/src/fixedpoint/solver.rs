use nalgebra::{DMatrix, DVector};

use super::{FixedPointError, FixedPointOptions, FixedPointResult, Method, PlayerVector, Strategy};
use crate::model::{CloudView, Model, StateActionCloud};
use crate::par;

/// Player counts below this run the per-player sweeps sequentially.
const PARALLEL_THRESHOLD: usize = 64;

/// The best-response map `b_i(a) = -D_p H(x^i, p^i, mu_i(a))`, where `mu_i`
/// is the cloud without particle `i` (exclusive) or the full cloud.
struct Problem<'a> {
    model: &'a Model,
    x: &'a [f64],
    p: &'a [f64],
    n: usize,
    dim: usize,
    exclusive: bool,
}

impl<'a> Problem<'a> {
    fn view<'b>(&self, x: &'b [f64], a: &'b [f64], i: usize) -> CloudView<'b> {
        if self.exclusive {
            CloudView::excluding(self.dim, x, a, i)
        } else {
            CloudView::new(self.dim, x, a)
        }
    }

    fn weight(&self) -> f64 {
        if self.exclusive {
            1.0 / (self.n - 1) as f64
        } else {
            1.0 / self.n as f64
        }
    }

    fn row<'s>(&self, v: &'s [f64], i: usize) -> &'s [f64] {
        &v[i * self.dim..(i + 1) * self.dim]
    }

    fn best_response(&self, a: &[f64]) -> Result<Vec<f64>, FixedPointError> {
        let one = |i: usize| -> Result<DVector<f64>, FixedPointError> {
            let mu = self.view(self.x, a, i);
            Ok(self
                .model
                .hamiltonian
                .maximizer(self.row(self.x, i), self.row(self.p, i), &mu)?)
        };
        let rows = if self.n >= PARALLEL_THRESHOLD {
            par::try_map_range(self.n, one)?
        } else {
            (0..self.n).map(one).collect::<Result<Vec<_>, _>>()?
        };
        Ok(rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    fn residual(&self, a: &[f64], b: &[f64]) -> f64 {
        a.chunks(self.dim)
            .zip(b.chunks(self.dim))
            .map(|(u, v)| {
                u.iter()
                    .zip(v)
                    .map(|(s, t)| (s - t) * (s - t))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Jacobian of `F(a) = a - b(a)`.
    fn newton_matrix(&self, a: &[f64]) -> Result<DMatrix<f64>, FixedPointError> {
        let (n, d) = (self.n, self.dim);
        let w = self.weight();
        let row_blocks = |i: usize| -> Result<Vec<DMatrix<f64>>, FixedPointError> {
            let mu = self.view(self.x, a, i);
            let (xi, pi) = (self.row(self.x, i), self.row(self.p, i));
            (0..n)
                .map(|j| {
                    if self.exclusive && j == i {
                        return Ok(DMatrix::zeros(d, d));
                    }
                    let blk = self.model.hamiltonian.dmu_a_d_p(
                        xi,
                        pi,
                        &mu,
                        self.row(self.x, j),
                        self.row(a, j),
                    )?;
                    Ok(blk * w)
                })
                .collect()
        };
        let rows = if n >= PARALLEL_THRESHOLD {
            par::try_map_range(n, row_blocks)?
        } else {
            (0..n).map(row_blocks).collect::<Result<Vec<_>, _>>()?
        };
        let mut jac = DMatrix::identity(n * d, n * d);
        for (i, blocks) in rows.iter().enumerate() {
            for (j, blk) in blocks.iter().enumerate() {
                let mut view = jac.view_mut((i * d, j * d), (d, d));
                view += blk;
            }
        }
        Ok(jac)
    }

    fn solve(
        &self,
        opts: &FixedPointOptions,
    ) -> Result<(Vec<f64>, f64, usize, Method), FixedPointError> {
        if !(opts.tol > 0.0) {
            return Err(FixedPointError::InvalidInput(format!(
                "tolerance {} must be > 0",
                opts.tol
            )));
        }
        // Initial sweep against the cloud that uses p in place of the actions.
        let mut a = self.best_response(self.p)?;
        let mut iterations = 1;
        if opts.strategy == Strategy::Newton {
            return self.newton(a, iterations, opts);
        }
        let mut history: Vec<f64> = Vec::new();
        loop {
            let b = self.best_response(&a)?;
            let res = self.residual(&a, &b);
            if res <= opts.tol {
                return Ok((a, res, iterations, Method::Damped));
            }
            if !res.is_finite() || iterations >= opts.max_iter {
                return Err(FixedPointError::NoConvergence {
                    iterations,
                    residual: res,
                });
            }
            history.push(res);
            let k = history.len();
            if opts.strategy == Strategy::DampedThenNewton
                && k > opts.stall_window
                && res * opts.stall_factor > history[k - 1 - opts.stall_window]
            {
                log::debug!("damped iteration stalled at residual {res:.3e}; switching to Newton");
                return self.newton(a, iterations, opts);
            }
            for (ai, bi) in a.iter_mut().zip(&b) {
                *ai = (1.0 - opts.theta) * *ai + opts.theta * bi;
            }
            iterations += 1;
        }
    }

    fn newton(
        &self,
        mut a: Vec<f64>,
        mut iterations: usize,
        opts: &FixedPointOptions,
    ) -> Result<(Vec<f64>, f64, usize, Method), FixedPointError> {
        let mut b = self.best_response(&a)?;
        let mut res = self.residual(&a, &b);
        let mut stagnant = 0;
        loop {
            if res <= opts.tol {
                return Ok((a, res, iterations, Method::Newton));
            }
            if !res.is_finite() || iterations >= opts.max_iter || stagnant >= 5 {
                return Err(FixedPointError::NoConvergence {
                    iterations,
                    residual: res,
                });
            }
            let jac = self.newton_matrix(&a)?;
            let f = DVector::from_iterator(a.len(), a.iter().zip(&b).map(|(s, t)| t - s));
            let step = match jac.clone().lu().solve(&f) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => {
                    return Err(FixedPointError::SingularM {
                        min_eigenvalue: super::min_sym_eigenvalue(&jac),
                    })
                }
            };
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = a
                    .iter()
                    .zip(step.iter())
                    .map(|(s, ds)| s + t * ds)
                    .collect();
                let bt = self.best_response(&trial)?;
                let rt = self.residual(&trial, &bt);
                if rt < res || t < 1e-4 {
                    stagnant = if rt < res { 0 } else { stagnant + 1 };
                    a = trial;
                    b = bt;
                    res = rt;
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
        }
    }
}

/// Solves `a^i = -D_p H(x^i, p^i, m^{N,-i}_{x,a})` for all `i`.
pub fn solve_a_n(
    model: &Model,
    x: &PlayerVector,
    p: &PlayerVector,
    tol: f64,
) -> Result<FixedPointResult, FixedPointError> {
    solve_a_n_with(model, x, p, &FixedPointOptions::with_tol(tol))
}

pub fn solve_a_n_with(
    model: &Model,
    x: &PlayerVector,
    p: &PlayerVector,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult, FixedPointError> {
    if x.players() != p.players() || x.dim() != model.dim || p.dim() != model.dim {
        return Err(FixedPointError::InvalidInput(format!(
            "x is {}x{}, p is {}x{}, model dimension {}",
            x.players(),
            x.dim(),
            p.players(),
            p.dim(),
            model.dim
        )));
    }
    let problem = Problem {
        model,
        x: x.as_slice(),
        p: p.as_slice(),
        n: x.players(),
        dim: model.dim,
        exclusive: true,
    };
    let (a, residual, iterations, method) = problem.solve(opts)?;
    Ok(FixedPointResult {
        actions: PlayerVector::new(x.players(), model.dim, a)?,
        residual,
        iterations,
        method,
    })
}

/// The map `Phi`: given a cloud of `(x, p)` pairs, returns the cloud of
/// `(x, a)` pairs with `a_j = -D_p H(x_j, p_j, mu)`, `mu` being the returned
/// cloud itself.
pub fn solve_phi(
    model: &Model,
    nu: &StateActionCloud,
    tol: f64,
) -> Result<StateActionCloud, FixedPointError> {
    solve_phi_with(model, nu, &FixedPointOptions::with_tol(tol))
}

pub fn solve_phi_with(
    model: &Model,
    nu: &StateActionCloud,
    opts: &FixedPointOptions,
) -> Result<StateActionCloud, FixedPointError> {
    if nu.dim() != model.dim {
        return Err(FixedPointError::InvalidInput(format!(
            "cloud dimension {} but model dimension {}",
            nu.dim(),
            model.dim
        )));
    }
    let problem = Problem {
        model,
        x: nu.states(),
        p: nu.actions(),
        n: nu.len(),
        dim: model.dim,
        exclusive: false,
    };
    let (a, _, _, _) = problem.solve(opts)?;
    Ok(StateActionCloud::new(model.dim, nu.states().to_vec(), a)?)
}
