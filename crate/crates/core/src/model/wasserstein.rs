//! Exact Wasserstein distances between small uniform particle clouds.

use super::{AnyCloud, ModelError};

/// Largest cloud accepted by the assignment solver.
pub const ASSIGNMENT_LIMIT: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WassersteinOrder {
    One,
    Two,
}

impl WassersteinOrder {
    fn power(self) -> f64 {
        match self {
            WassersteinOrder::One => 1.0,
            WassersteinOrder::Two => 2.0,
        }
    }
}

fn points(cloud: AnyCloud) -> (usize, Vec<Vec<f64>>) {
    match cloud {
        AnyCloud::States(v) => (v.dim(), v.iter().map(<[f64]>::to_vec).collect()),
        AnyCloud::StatesActions(v) => (
            2 * v.dim(),
            v.iter()
                .map(|(x, a)| x.iter().chain(a).copied().collect())
                .collect(),
        ),
    }
}

/// `W_1` or `W_2` between two clouds with uniform weights.
///
/// One-dimensional clouds of any sizes use the sorted quantile coupling;
/// everything else is solved as an exact assignment problem, which requires
/// equal sizes no larger than [`ASSIGNMENT_LIMIT`].
pub fn wasserstein<'a, 'b>(
    a: impl Into<AnyCloud<'a>>,
    b: impl Into<AnyCloud<'b>>,
    order: WassersteinOrder,
) -> Result<f64, ModelError> {
    let (da, pa) = points(a.into());
    let (db, pb) = points(b.into());
    if da != db {
        return Err(ModelError::DimensionMismatch {
            left: da,
            right: db,
        });
    }
    let p = order.power();
    if da == 1 {
        let xa: Vec<f64> = pa.iter().map(|v| v[0]).collect();
        let xb: Vec<f64> = pb.iter().map(|v| v[0]).collect();
        return Ok(quantile_distance(&xa, &xb, p));
    }
    if pa.len() != pb.len() {
        return Err(ModelError::SizeMismatch {
            left: pa.len(),
            right: pb.len(),
        });
    }
    if pa.len() > ASSIGNMENT_LIMIT {
        return Err(ModelError::CloudTooLarge {
            size: pa.len(),
            limit: ASSIGNMENT_LIMIT,
        });
    }
    let n = pa.len();
    let cost: Vec<f64> = pa
        .iter()
        .flat_map(|u| {
            pb.iter().map(move |v| {
                let d2: f64 = u.iter().zip(v).map(|(s, t)| (s - t) * (s - t)).sum();
                if p == 2.0 {
                    d2
                } else {
                    d2.sqrt()
                }
            })
        })
        .collect();
    let assignment = min_cost_assignment(n, &cost);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * n + c])
        .sum();
    Ok((total / n as f64).max(0.0).powf(1.0 / p))
}

/// `(int_0^1 |F^-1(u) - G^-1(u)|^p du)^(1/p)` for uniform empirical measures.
pub fn quantile_distance(a: &[f64], b: &[f64], p: f64) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0f64;
    let mut acc = 0.0;
    while i < na && j < nb {
        // Compare quantile breakpoints (i+1)/na and (j+1)/nb exactly.
        let ka = (i + 1) * nb;
        let kb = (j + 1) * na;
        let next = ka.min(kb) as f64 / (na * nb) as f64;
        acc += (next - u) * (xa[i] - xb[j]).abs().powf(p);
        u = next;
        if ka <= kb {
            i += 1;
        }
        if kb <= ka {
            j += 1;
        }
    }
    acc.max(0.0).powf(1.0 / p)
}

/// Hungarian algorithm with potentials on a dense `n x n` cost matrix.
/// Returns the column assigned to each row.
pub fn min_cost_assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    // 1-based arrays; index 0 is the virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{StateActionCloud, StateCloud};

    fn cloud(v: &[f64]) -> StateCloud {
        StateCloud::new(1, v.to_vec()).unwrap()
    }

    #[test]
    fn identical_clouds_are_at_distance_zero() {
        let c = cloud(&[0.3, -1.0, 2.0]);
        assert_eq!(wasserstein(&c, &c, WassersteinOrder::Two).unwrap(), 0.0);
    }

    #[test]
    fn point_masses() {
        let d = wasserstein(&cloud(&[0.0]), &cloud(&[3.0]), WassersteinOrder::One).unwrap();
        assert_eq!(d, 3.0);
    }

    #[test]
    fn sorted_coupling_beats_the_crossed_one() {
        // Couplings {0->1, 2->3} (cost 1) and {0->3, 2->1} (cost 5).
        let d = wasserstein(
            &cloud(&[0.0, 2.0]),
            &cloud(&[1.0, 3.0]),
            WassersteinOrder::Two,
        )
        .unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unequal_one_dimensional_sizes() {
        // {0} vs {-1, 1}: every quantile is at distance 1.
        let d = wasserstein(&cloud(&[0.0]), &cloud(&[-1.0, 1.0]), WassersteinOrder::One).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn assignment_matches_brute_force() {
        let xs = [0.1, 0.9, -0.4, 1.7];
        let acts = [0.5, -0.2, 0.3, 0.0];
        let ys = [1.0, -0.3, 0.2, 0.8];
        let bcts = [0.1, 0.4, -0.6, 0.2];
        let a = StateActionCloud::new(1, xs.to_vec(), acts.to_vec()).unwrap();
        let b = StateActionCloud::new(1, ys.to_vec(), bcts.to_vec()).unwrap();
        let mut best = f64::INFINITY;
        let mut perm = [0usize, 1, 2, 3];
        permute(&mut perm, 0, &mut |p| {
            let c: f64 = (0..4)
                .map(|k| (xs[k] - ys[p[k]]).powi(2) + (acts[k] - bcts[p[k]]).powi(2))
                .sum();
            best = best.min(c);
        });
        let d = wasserstein(&a, &b, WassersteinOrder::Two).unwrap();
        assert!((d - (best / 4.0).sqrt()).abs() < 1e-12);
    }

    fn permute(p: &mut [usize; 4], k: usize, f: &mut impl FnMut(&[usize; 4])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn size_mismatch_in_assignment_mode() {
        let a = StateCloud::new(2, vec![0.0, 0.0]).unwrap();
        let b = StateCloud::new(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            wasserstein(&a, &b, WassersteinOrder::One),
            Err(ModelError::SizeMismatch { left: 1, right: 2 })
        ));
    }
}
