//! `fixedpoint-decay`: cross-player derivatives of the best-response map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mfgc::fixedpoint::{first_order_table, higher_derivatives, DecayRow, PlayerVector, Variable};
use mfgc::report::{fmt_float, Check, CsvTable};
use mfgc::stats::log_log_slope;

use super::{Context, RunError};
use crate::config::DecayVariable;

/// States and costates of `n` players. Player `i` draws its state and then
/// its costate from one stream, so smaller profiles are prefixes of larger
/// ones. Costates have mean one.
pub fn nested_profile(seed: u64, n: usize, d: usize) -> (PlayerVector, PlayerVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * d);
    let mut p = Vec::with_capacity(n * d);
    for _ in 0..n {
        for _ in 0..d {
            x.push(rng.sample::<f64, _>(StandardNormal));
        }
        for _ in 0..d {
            p.push(1.0 + rng.sample::<f64, _>(StandardNormal));
        }
    }
    (
        PlayerVector::new(n, d, x).expect("finite draws"),
        PlayerVector::new(n, d, p).expect("finite draws"),
    )
}

/// Index tuples of length `len` over `players` players with all entries distinct.
pub fn distinct_tuples(players: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn rec(players: usize, len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for q in 0..players {
            if !cur.contains(&q) {
                cur.push(q);
                rec(players, len, cur, out);
                cur.pop();
            }
        }
    }
    rec(players, len, &mut cur, &mut out);
    out
}

fn cell(v: Option<usize>) -> String {
    v.map_or(String::new(), |q| q.to_string())
}

fn push_rows(table: &mut CsvTable, rows: &[DecayRow]) {
    for r in rows {
        table.push(vec![
            r.n.to_string(),
            r.i.to_string(),
            r.j.to_string(),
            cell(r.k),
            cell(r.l),
            fmt_float(r.omega),
            fmt_float(r.norm),
            fmt_float(r.norm_over_omega()),
        ]);
    }
}

fn max_distinct(rows: &[DecayRow]) -> f64 {
    rows.iter()
        .filter(|r| {
            let mut ix = r.indices();
            let len = ix.len();
            ix.sort_unstable();
            ix.dedup();
            ix.len() == len
        })
        .map(|r| r.norm)
        .fold(0.0, f64::max)
}

pub fn run(ctx: &mut Context) -> Result<(), RunError> {
    let c = ctx.config;
    let variable = match c.variable {
        DecayVariable::P => Variable::P,
        DecayVariable::X => Variable::X,
    };
    let mut table = CsvTable::new(&["N", "i", "j", "k", "l", "omega", "norm", "norm_over_omega"]);
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for &n in &c.n_list {
        let (x, p) = nested_profile(ctx.seed(), n, c.dim);
        let players = c.probe_players.min(n);
        let pairs: Vec<(usize, usize)> = (0..players)
            .flat_map(|i| (0..players).map(move |j| (i, j)))
            .collect();
        let rows = first_order_table(&ctx.model, &x, &p, variable, &pairs)?;
        push_rows(&mut table, &rows);
        first.push(max_distinct(&rows));
        for order in 2..=c.order.min(players - 1) {
            let mut probes = distinct_tuples(players, order + 1);
            probes.extend((0..players).map(|i| vec![i; order + 1]));
            let rows = higher_derivatives(&ctx.model, &x, &p, order, variable, &probes)?;
            push_rows(&mut table, &rows);
            if order == 2 {
                second.push(max_distinct(&rows));
            }
        }
        log::info!(
            "fixedpoint-decay N={n}: max first-order cross derivative {:.3e}",
            first[first.len() - 1]
        );
    }
    ctx.write("fixedpoint-decay.csv", &table)?;

    let ns: Vec<f64> = c.n_list.iter().map(|&n| n as f64).collect();
    if ns.len() >= 2 {
        let slope = log_log_slope(&ns, &first).unwrap_or(f64::NAN);
        ctx.check(Check::within(
            "first_order_slope",
            slope,
            c.slope_band[0],
            c.slope_band[1],
        ));
        if second.len() == ns.len() {
            let slope = log_log_slope(&ns, &second).unwrap_or(f64::NAN);
            ctx.check(Check::within(
                "second_order_distinct_slope",
                slope,
                c.second_slope_band[0],
                c.second_slope_band[1],
            ));
        }
    }
    Ok(())
}
