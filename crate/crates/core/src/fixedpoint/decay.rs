use nalgebra::DVector;

use super::{
    jacobian_p, jacobian_x, solve_a_n, solve_a_n_with, BlockMatrix, FixedPointError,
    FixedPointOptions, PlayerVector, Strategy,
};
use crate::model::{CloudView, Model};

/// Finite-difference step for second and third derivatives.
pub const HIGHER_ORDER_STEP: f64 = 1e-4;

/// `N^{1 - #distinct(indices)}`.
pub fn omega(n: usize, indices: &[usize]) -> f64 {
    let mut seen: Vec<usize> = indices.to_vec();
    seen.sort_unstable();
    seen.dedup();
    (n as f64).powi(1 - seen.len() as i32)
}

/// Variable in which `a^N` is differentiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variable {
    P,
    X,
}

/// One row of a decay table: `|D_{v^l} D_{v^k} D_{v^j} a^{N,i}|` (unused
/// indices are `None`) against its weight `omega`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayRow {
    pub n: usize,
    pub i: usize,
    pub j: usize,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub omega: f64,
    pub norm: f64,
}

impl DecayRow {
    pub fn norm_over_omega(&self) -> f64 {
        self.norm / self.omega
    }

    pub fn indices(&self) -> Vec<usize> {
        let mut v = vec![self.i, self.j];
        v.extend(self.k);
        v.extend(self.l);
        v
    }
}

fn fd_options() -> FixedPointOptions {
    FixedPointOptions {
        tol: 1e-13,
        strategy: Strategy::Newton,
        ..FixedPointOptions::default()
    }
}

fn jacobian_at(
    model: &Model,
    x: &PlayerVector,
    p: &PlayerVector,
    variable: Variable,
) -> Result<BlockMatrix, FixedPointError> {
    let a = solve_a_n_with(model, x, p, &fd_options())?.actions;
    match variable {
        Variable::P => jacobian_p(model, x, &a),
        Variable::X => jacobian_x(model, x, &a),
    }
}

fn shifted(
    x: &PlayerVector,
    p: &PlayerVector,
    variable: Variable,
    moves: &[(usize, usize, f64)],
) -> (PlayerVector, PlayerVector) {
    let (mut x, mut p) = (x.clone(), p.clone());
    let target = match variable {
        Variable::P => &mut p,
        Variable::X => &mut x,
    };
    for &(player, comp, delta) in moves {
        target.row_mut(player)[comp] += delta;
    }
    (x, p)
}

/// First-derivative table `|D_{v^j} a^{N,i}|` for the given `(i, j)` pairs.
pub fn first_order_table(
    model: &Model,
    x: &PlayerVector,
    p: &PlayerVector,
    variable: Variable,
    probes: &[(usize, usize)],
) -> Result<Vec<DecayRow>, FixedPointError> {
    let n = x.players();
    let jac = jacobian_at(model, x, p, variable)?;
    Ok(probes
        .iter()
        .map(|&(i, j)| DecayRow {
            n,
            i,
            j,
            k: None,
            l: None,
            omega: omega(n, &[i, j]),
            norm: jac.block(i, j).clone_owned().norm(),
        })
        .collect())
}

/// Second (`order = 2`, probes `(i, j, k)`) or third (`order = 3`, probes
/// `(i, j, k, l)`) derivatives of `a^N` by central differences of the
/// implicit Jacobian, step [`HIGHER_ORDER_STEP`]. Norms are Frobenius norms
/// of the derivative tensors.
pub fn higher_derivatives(
    model: &Model,
    x: &PlayerVector,
    p: &PlayerVector,
    order: usize,
    variable: Variable,
    probes: &[Vec<usize>],
) -> Result<Vec<DecayRow>, FixedPointError> {
    if order != 2 && order != 3 {
        return Err(FixedPointError::InvalidInput(format!(
            "derivative order {order} not in {{2, 3}}"
        )));
    }
    let (n, d) = (x.players(), x.dim());
    let h = HIGHER_ORDER_STEP;
    let mut rows = Vec::with_capacity(probes.len());
    for probe in probes {
        if probe.len() != order + 1 || probe.iter().any(|&q| q >= n) {
            return Err(FixedPointError::InvalidInput(format!(
                "bad probe {probe:?} for order {order}"
            )));
        }
        let (i, j, k) = (probe[0], probe[1], probe[2]);
        let mut sq = 0.0;
        if order == 2 {
            for c in 0..d {
                let (xp, pp) = shifted(x, p, variable, &[(k, c, h)]);
                let (xm, pm) = shifted(x, p, variable, &[(k, c, -h)]);
                let jp = jacobian_at(model, &xp, &pp, variable)?;
                let jm = jacobian_at(model, &xm, &pm, variable)?;
                let diff = (jp.block(i, j) - jm.block(i, j)) / (2.0 * h);
                sq += diff.norm_squared();
            }
        } else {
            let l = probe[3];
            for c1 in 0..d {
                for c2 in 0..d {
                    let mut acc = nalgebra::DMatrix::zeros(d, d);
                    for (s1, s2, sign) in [
                        (1.0, 1.0, 1.0),
                        (1.0, -1.0, -1.0),
                        (-1.0, 1.0, -1.0),
                        (-1.0, -1.0, 1.0),
                    ] {
                        let (xs, ps) = shifted(x, p, variable, &[(k, c1, s1 * h), (l, c2, s2 * h)]);
                        let js = jacobian_at(model, &xs, &ps, variable)?;
                        acc += js.block(i, j) * sign;
                    }
                    sq += (acc / (4.0 * h * h)).norm_squared();
                }
            }
        }
        rows.push(DecayRow {
            n,
            i,
            j,
            k: Some(k),
            l: probe.get(3).copied(),
            omega: omega(n, probe),
            norm: sq.sqrt(),
        });
    }
    Ok(rows)
}

/// `H^{N,i}(x, p) = H(x^i, p^i, m^{N,-i}_{x, a^N(x,p)})`.
pub fn hat_h(
    model: &Model,
    x: &PlayerVector,
    p: &PlayerVector,
    i: usize,
) -> Result<f64, FixedPointError> {
    let a = solve_a_n(model, x, p, 1e-13)?.actions;
    let mu = CloudView::excluding(x.dim(), x.as_slice(), a.as_slice(), i);
    Ok(model.hamiltonian.value(x.row(i), p.row(i), &mu)?)
}

/// `H^{N,i,k}(x, p) = (1/(N-1)) sum_{l != i} (D_{p^k} a^{N,l})^T D^a_mu H(x^i, p^i, m^{N,-i}, x^l, a^l)`.
pub fn hat_h_ik(
    model: &Model,
    x: &PlayerVector,
    p: &PlayerVector,
    i: usize,
    k: usize,
) -> Result<DVector<f64>, FixedPointError> {
    let (n, d) = (x.players(), x.dim());
    let a = solve_a_n(model, x, p, 1e-13)?.actions;
    let jac = jacobian_p(model, x, &a)?;
    let mu = CloudView::excluding(d, x.as_slice(), a.as_slice(), i);
    let mut out = DVector::zeros(d);
    for l in (0..n).filter(|&l| l != i) {
        let g = model
            .hamiltonian
            .dmu_a(x.row(i), p.row(i), &mu, x.row(l), a.row(l))?;
        out += jac.block(l, k).transpose() * g;
    }
    Ok(out / (n - 1) as f64)
}
