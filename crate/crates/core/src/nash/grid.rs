//! Tensor grid over `[-R, R]^{N d}` and finite-difference stencils.

use super::NashError;

/// Largest accepted `N * n^{N d}`.
pub const NODE_BUDGET: usize = 10_000_000;

/// Safety factor in the explicit-scheme time step bound.
pub const CFL_SAFETY: f64 = 1.1;

/// Spatial and temporal discretization of `(0, T) x ([-R, R]^d)^N`.
///
/// Axis `q = j * d + c` carries coordinate `c` of player `j`; nodes are
/// numbered row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub radius: f64,
    pub points_per_axis: usize,
    pub players: usize,
    pub dim: usize,
    pub dt: f64,
    pub t_steps: usize,
    strides: Vec<usize>,
}

impl Grid {
    /// Largest stable time step: `h^2 / (2 d N (1 + sigma0) * 1.1)`.
    pub fn max_stable_dt(
        radius: f64,
        points_per_axis: usize,
        players: usize,
        dim: usize,
        sigma0: f64,
    ) -> f64 {
        let h = 2.0 * radius / (points_per_axis - 1) as f64;
        h * h / (2.0 * dim as f64 * players as f64 * (1.0 + sigma0) * CFL_SAFETY)
    }

    /// Builds a grid whose time step is `dt` if given, otherwise the largest
    /// stable step rounded so that `t_steps * dt = horizon`.
    pub fn new(
        radius: f64,
        points_per_axis: usize,
        players: usize,
        dim: usize,
        horizon: f64,
        sigma0: f64,
        dt: Option<f64>,
    ) -> Result<Self, NashError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(NashError::InvalidGrid(format!(
                "radius {radius} must be positive"
            )));
        }
        if points_per_axis < 9 || points_per_axis % 2 == 0 {
            return Err(NashError::InvalidGrid(format!(
                "points per axis must be odd and at least 9, got {points_per_axis}"
            )));
        }
        if players < 2 || dim == 0 {
            return Err(NashError::InvalidGrid(format!(
                "{players} players of dimension {dim}"
            )));
        }
        let axes = players * dim;
        let nodes = (points_per_axis as f64).powi(axes as i32);
        if players as f64 * nodes > NODE_BUDGET as f64 {
            return Err(NashError::InvalidGrid(format!(
                "{players} x {points_per_axis}^{axes} exceeds the budget of {NODE_BUDGET} values per slice"
            )));
        }
        let bound = Self::max_stable_dt(radius, points_per_axis, players, dim, sigma0);
        let requested = dt.unwrap_or(bound);
        if !(requested > 0.0) || requested > bound * (1.0 + 1e-12) {
            return Err(NashError::InvalidGrid(format!(
                "time step {requested:.4e} violates the stability bound {bound:.4e}"
            )));
        }
        let t_steps = (horizon / requested - 1e-9).ceil().max(1.0) as usize;
        let mut strides = vec![1usize; axes];
        for q in (0..axes.saturating_sub(1)).rev() {
            strides[q] = strides[q + 1] * points_per_axis;
        }
        Ok(Self {
            radius,
            points_per_axis,
            players,
            dim,
            dt: horizon / t_steps as f64,
            t_steps,
            strides,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.t_steps as f64
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.points_per_axis - 1) as f64
    }

    pub fn axes(&self) -> usize {
        self.players * self.dim
    }

    pub fn node_count(&self) -> usize {
        self.strides[0] * self.points_per_axis
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn coordinate(&self, index: usize) -> f64 {
        -self.radius + index as f64 * self.spacing()
    }

    /// Index along `axis` of `node`.
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.points_per_axis
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.axes()).map(|q| self.axis_index(node, q)).collect()
    }

    pub fn node_of(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Coordinates of `node` as a flat `N x d` row-major vector.
    pub fn coords(&self, node: usize) -> Vec<f64> {
        (0..self.axes())
            .map(|q| self.coordinate(self.axis_index(node, q)))
            .collect()
    }

    pub fn is_interior(&self, node: usize) -> bool {
        (0..self.axes()).all(|q| {
            let i = self.axis_index(node, q);
            i > 0 && i + 1 < self.points_per_axis
        })
    }

    /// True when every coordinate lies in `[-fraction R, fraction R]`.
    pub fn within(&self, node: usize, fraction: f64) -> bool {
        let lim = fraction * self.radius + 1e-12;
        (0..self.axes()).all(|q| self.coordinate(self.axis_index(node, q)).abs() <= lim)
    }

    /// Node obtained by exchanging the coordinates of players `i` and `j`.
    pub fn swap_players(&self, node: usize, i: usize, j: usize) -> usize {
        if i == j {
            return node;
        }
        let mut out = node;
        for c in 0..self.dim {
            let (qi, qj) = (i * self.dim + c, j * self.dim + c);
            let (ii, ij) = (self.axis_index(node, qi), self.axis_index(node, qj));
            out = out + ij * self.strides[qi] + ii * self.strides[qj]
                - ii * self.strides[qi]
                - ij * self.strides[qj];
        }
        out
    }

    /// Nearest node to a point (coordinates clamped into the grid).
    pub fn nearest_node(&self, point: &[f64]) -> usize {
        let h = self.spacing();
        let last = (self.points_per_axis - 1) as f64;
        point
            .iter()
            .zip(&self.strides)
            .map(|(x, s)| (((x + self.radius) / h).round().clamp(0.0, last) as usize) * s)
            .sum()
    }

    /// Whether `point` sits on a grid node up to `tol`.
    pub fn is_node_point(&self, point: &[f64], tol: f64) -> bool {
        let h = self.spacing();
        point.iter().all(|x| {
            let k = (x + self.radius) / h;
            x.abs() <= self.radius + tol && (k - k.round()).abs() * h <= tol
        })
    }

    /// First derivative along `axis`: central inside, second-order one-sided
    /// on the boundary layer.
    pub fn d1(&self, u: &[f64], node: usize, axis: usize) -> f64 {
        let s = self.strides[axis];
        let i = self.axis_index(node, axis);
        let h = self.spacing();
        let last = self.points_per_axis - 1;
        if i == 0 {
            (-3.0 * u[node] + 4.0 * u[node + s] - u[node + 2 * s]) / (2.0 * h)
        } else if i == last {
            (3.0 * u[node] - 4.0 * u[node - s] + u[node - 2 * s]) / (2.0 * h)
        } else {
            (u[node + s] - u[node - s]) / (2.0 * h)
        }
    }

    /// Second derivative along `axis` (one-sided four-point stencil on the
    /// boundary layer).
    pub fn d2(&self, u: &[f64], node: usize, axis: usize) -> f64 {
        let s = self.strides[axis];
        let i = self.axis_index(node, axis);
        let h2 = self.spacing().powi(2);
        let last = self.points_per_axis - 1;
        if i == 0 {
            (2.0 * u[node] - 5.0 * u[node + s] + 4.0 * u[node + 2 * s] - u[node + 3 * s]) / h2
        } else if i == last {
            (2.0 * u[node] - 5.0 * u[node - s] + 4.0 * u[node - 2 * s] - u[node - 3 * s]) / h2
        } else {
            (u[node + s] - 2.0 * u[node] + u[node - s]) / h2
        }
    }

    /// Mixed derivative along two distinct axes: tensor product of the
    /// first-derivative stencils (the four-point cross stencil inside).
    pub fn d11(&self, u: &[f64], node: usize, a: usize, b: usize) -> f64 {
        if a == b {
            return self.d2(u, node, a);
        }
        let h = self.spacing();
        let last = self.points_per_axis - 1;
        let weights = |i: usize| -> [(isize, f64); 3] {
            if i == 0 {
                [(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)]
            } else if i == last {
                [(0, 1.5 / h), (-1, -2.0 / h), (-2, 0.5 / h)]
            } else {
                [(1, 0.5 / h), (-1, -0.5 / h), (0, 0.0)]
            }
        };
        let (sa, sb) = (self.strides[a] as isize, self.strides[b] as isize);
        let mut acc = 0.0;
        for (oa, wa) in weights(self.axis_index(node, a)) {
            if wa == 0.0 {
                continue;
            }
            for (ob, wb) in weights(self.axis_index(node, b)) {
                if wb == 0.0 {
                    continue;
                }
                let k = node as isize + oa * sa + ob * sb;
                acc += wa * wb * u[k as usize];
            }
        }
        acc
    }

    /// Overwrites boundary nodes by quadratic extrapolation from the inside,
    /// `u_0 = 3 u_1 - 3 u_2 + u_3`, axis by axis.
    ///
    /// Pass `q` fills nodes on the boundary of axis `q` that are interior on
    /// every later axis, so each extrapolation reads only finished values.
    pub fn extrapolate_boundary(&self, u: &mut [f64]) {
        let n = self.points_per_axis;
        let axes = self.axes();
        for q in 0..axes {
            let s = self.strides[q];
            for node in 0..u.len() {
                let i = self.axis_index(node, q);
                if i != 0 && i != n - 1 {
                    continue;
                }
                let later_interior = (q + 1..axes).all(|r| {
                    let k = self.axis_index(node, r);
                    k > 0 && k + 1 < n
                });
                if !later_interior {
                    continue;
                }
                u[node] = if i == 0 {
                    3.0 * u[node + s] - 3.0 * u[node + 2 * s] + u[node + 3 * s]
                } else {
                    3.0 * u[node - s] - 3.0 * u[node - 2 * s] + u[node - 3 * s]
                };
            }
        }
    }

    /// Multilinear interpolation of a nodal field at `point`; coordinates
    /// outside the box are clamped. Returns the value and whether clamping
    /// happened.
    pub fn interpolate(&self, u: &[f64], point: &[f64]) -> (f64, bool) {
        let axes = self.axes();
        let h = self.spacing();
        let last = self.points_per_axis - 1;
        let mut clamped = false;
        let mut base = 0usize;
        let mut frac = Vec::with_capacity(axes);
        for (q, &x) in point.iter().enumerate() {
            let mut y = (x + self.radius) / h;
            if y < 0.0 || y > last as f64 {
                clamped = true;
                y = y.clamp(0.0, last as f64);
            }
            let i = (y.floor() as usize).min(last - 1);
            base += i * self.strides[q];
            frac.push(y - i as f64);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << axes) {
            let mut w = 1.0;
            let mut node = base;
            for (q, f) in frac.iter().enumerate() {
                if corner >> q & 1 == 1 {
                    w *= f;
                    node += self.strides[q];
                } else {
                    w *= 1.0 - f;
                }
            }
            if w != 0.0 {
                acc += w * u[node];
            }
        }
        (acc, clamped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(players: usize, n: usize) -> Grid {
        Grid::new(2.0, n, players, 1, 1.0, 0.0, None).unwrap()
    }

    fn quadratic(g: &Grid) -> Vec<f64> {
        (0..g.node_count())
            .map(|k| {
                let x = g.coords(k);
                0.7 * x[0] * x[0] - 0.3 * x[0] * x[1] + 0.2 * x[1] * x[1] + x[1] - 0.5
            })
            .collect()
    }

    #[test]
    fn stencils_are_exact_on_quadratics_everywhere() {
        let g = grid(2, 9);
        let u = quadratic(&g);
        for node in 0..g.node_count() {
            let x = g.coords(node);
            assert!((g.d1(&u, node, 0) - (1.4 * x[0] - 0.3 * x[1])).abs() < 1e-12);
            assert!((g.d1(&u, node, 1) - (-0.3 * x[0] + 0.4 * x[1] + 1.0)).abs() < 1e-12);
            assert!((g.d2(&u, node, 0) - 1.4).abs() < 1e-11);
            assert!((g.d11(&u, node, 0, 1) + 0.3).abs() < 1e-11);
        }
    }

    #[test]
    fn extrapolation_restores_quadratics() {
        let g = grid(2, 11);
        let exact = quadratic(&g);
        let mut u = exact.clone();
        for (k, v) in u.iter_mut().enumerate() {
            if !g.is_interior(k) {
                *v = 1e3;
            }
        }
        g.extrapolate_boundary(&mut u);
        for (a, b) in u.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn swap_is_an_involution_and_moves_coordinates() {
        let g = grid(3, 9);
        for node in (0..g.node_count()).step_by(37) {
            let s = g.swap_players(node, 0, 2);
            assert_eq!(g.swap_players(s, 0, 2), node);
            let (x, y) = (g.coords(node), g.coords(s));
            assert_eq!((x[0], x[1], x[2]), (y[2], y[1], y[0]));
        }
    }

    #[test]
    fn interpolation_is_exact_on_multilinear_functions() {
        let g = grid(2, 9);
        let u: Vec<f64> = (0..g.node_count())
            .map(|k| {
                let x = g.coords(k);
                1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]
            })
            .collect();
        let (v, clamped) = g.interpolate(&u, &[0.33, -1.21]);
        assert!(!clamped);
        assert!((v - (1.0 + 0.66 + 1.21 - 0.5 * 0.33 * 1.21)).abs() < 1e-12);
        assert!(g.interpolate(&u, &[2.5, 0.0]).1);
    }

    #[test]
    fn rejects_unstable_steps_and_even_grids() {
        assert!(Grid::new(2.0, 10, 2, 1, 1.0, 0.0, None).is_err());
        let bound = Grid::max_stable_dt(2.0, 9, 2, 1, 0.0);
        assert!(Grid::new(2.0, 9, 2, 1, 1.0, 0.0, Some(2.0 * bound)).is_err());
        let g = Grid::new(2.0, 9, 2, 1, 1.0, 0.0, Some(0.5 * bound)).unwrap();
        assert!((g.horizon() - 1.0).abs() < 1e-12 && g.dt <= 0.5 * bound * (1.0 + 1e-12));
    }
}
