//! `monotonicity-audit`: sampled monotonicity checks of the model data.

use mfgc::monotonicity::{
    audit_discrete_m, audit_disp_g, audit_disp_l, audit_ll, compute_c_disp, fit_constants,
    remark_equivalence, LlTarget, MonotonicityReport, Sampling,
};
use mfgc::report::{fmt_float, Check, CsvTable};

use super::{Context, RunError};

fn band(report: &MonotonicityReport) -> String {
    let op = if report.strict { ">" } else { ">=" };
    if report.threshold == 0.0 {
        format!("{op} 0")
    } else {
        format!("{op} {:e}", report.threshold)
    }
}

fn record(
    ctx: &mut Context,
    values: &mut CsvTable,
    witnesses: &mut CsvTable,
    n: Option<usize>,
    report: &MonotonicityReport,
) {
    let n_cell = n.map_or(String::new(), |n| n.to_string());
    for (k, v) in report.values.iter().enumerate() {
        values.push(vec![
            report.kind.to_string(),
            n_cell.clone(),
            k.to_string(),
            fmt_float(*v),
        ]);
    }
    if !report.pass {
        for w in &report.witnesses {
            witnesses.push(vec![
                report.kind.to_string(),
                n_cell.clone(),
                w.sample.to_string(),
                fmt_float(w.value),
            ]);
        }
    }
    let name = match n {
        Some(n) => format!("{}_N{n}", report.kind),
        None => report.kind.to_string(),
    };
    ctx.check(Check::new(
        name,
        report.worst_value,
        band(report),
        report.pass,
    ));
}

pub fn run(ctx: &mut Context) -> Result<(), RunError> {
    let c = ctx.config;
    let sampling = Sampling {
        samples: c.samples,
        cloud_size: c.cloud_size,
        seed: ctx.seed(),
        scale: c.sample_scale,
    };
    let header = ["kind", "N", "sample_id", "value"];
    let mut values = CsvTable::new(&header);
    let mut witnesses = CsvTable::new(&header);
    let model = ctx.model.clone();

    for &n in &c.n_list {
        let r = audit_discrete_m(&model, n, &sampling)?;
        record(ctx, &mut values, &mut witnesses, Some(n), &r);
    }
    let r = audit_disp_l(&model, &sampling)?;
    record(ctx, &mut values, &mut witnesses, None, &r);
    let r = audit_disp_g(&model, &sampling)?;
    record(ctx, &mut values, &mut witnesses, None, &r);
    let fitted = match model.constants {
        Some(_) => None,
        None => Some(fit_constants(&model, &sampling)?),
    };
    let r = compute_c_disp(&model, fitted)?;
    record(ctx, &mut values, &mut witnesses, None, &r);
    for target in [LlTarget::Lagrangian, LlTarget::Terminal] {
        let r = audit_ll(&model, target, &sampling)?;
        record(ctx, &mut values, &mut witnesses, None, &r);
    }
    let remark = remark_equivalence(&model, &sampling)?;
    ctx.check(Check::new(
        "first_vs_second_order_disp_L",
        remark.max_gap,
        format!("sign agreement on {} samples", remark.compared),
        remark.pass(),
    ));

    ctx.write("monotonicity-audit.csv", &values)?;
    ctx.write("monotonicity-witnesses.csv", &witnesses)?;
    Ok(())
}
