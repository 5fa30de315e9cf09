//! Tab-separated output tables. Every table starts with a header row;
//! numbers use six decimals, missing values are `NA`.
//!
//! | file | columns |
//! |------|---------|
//! | `entropy-curves.tsv` | `group turn count mean_be std_error` |
//! | `entropy-slopes.tsv` | `quantity count estimate std_error bound confidence` |
//! | `delta-be-correlation.tsv` | `delta n r t p_value` |
//! | `best-of-n.tsv` | `tasks candidates mean_selected mean_random mean_difference std_error lower_bound confidence` |
//! | `ablation.tsv` | `variant seeds mean_outcome std_error delta_be_r delta_be_p` |
//! | `ablation-runs.tsv` | `variant seed eval_outcome delta_be_r delta_be_p` |
//!
//! In `entropy-slopes.tsv` the bound is an upper bound for the
//! `success_slope` row and a lower bound for `failure_minus_success`.

use std::fmt::Write;

use super::ablation::AblationTable;
use super::{BestOfN, Correlation, DeltaBeCorrelation, EntropyTrajectoryStats, SlopeComparison};

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else if x.is_nan() {
        "NA".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(c: Option<&Correlation>, f: impl Fn(&Correlation) -> f64) -> String {
    c.map_or_else(|| "NA".into(), |c| num(f(c)))
}

pub fn entropy_curves(stats: &EntropyTrajectoryStats) -> String {
    let mut out = String::from("group\tturn\tcount\tmean_be\tstd_error\n");
    for (name, curve) in [("success", &stats.success), ("failure", &stats.failure)] {
        for (t, (m, se)) in curve.mean_be.iter().zip(&curve.std_error).enumerate() {
            writeln!(
                out,
                "{name}\t{}\t{}\t{}\t{}",
                t + 1,
                curve.count,
                num(*m),
                num(*se)
            )
            .unwrap();
        }
    }
    out
}

pub fn entropy_slopes(stats: &EntropyTrajectoryStats, cmp: &SlopeComparison) -> String {
    let mut out = String::from("quantity\tcount\testimate\tstd_error\tbound\tconfidence\n");
    let (s, f) = (&stats.success, &stats.failure);
    let c = num(cmp.confidence);
    writeln!(
        out,
        "success_slope\t{}\t{}\t{}\t{}\t{c}",
        s.count,
        num(s.slope),
        num(s.slope_std_error),
        num(cmp.success_slope_upper)
    )
    .unwrap();
    writeln!(
        out,
        "failure_slope\t{}\t{}\t{}\tNA\t{c}",
        f.count,
        num(f.slope),
        num(f.slope_std_error)
    )
    .unwrap();
    writeln!(
        out,
        "failure_minus_success\t{}\t{}\t{}\t{}\t{c}",
        s.count + f.count,
        num(cmp.difference),
        num(cmp.difference_std_error),
        num(cmp.difference_lower)
    )
    .unwrap();
    out
}

pub fn delta_be_correlation(c: &DeltaBeCorrelation) -> String {
    let mut out = String::from("delta\tn\tr\tt\tp_value\n");
    for (name, x) in [("raw", &c.raw), ("per_turn", &c.per_turn)] {
        writeln!(
            out,
            "{name}\t{}\t{}\t{}\t{}",
            x.n,
            num(x.r),
            num(x.t_statistic),
            num(x.p_value)
        )
        .unwrap();
    }
    out
}

pub fn best_of_n(b: &BestOfN) -> String {
    let c = &b.comparison;
    format!(
        "tasks\tcandidates\tmean_selected\tmean_random\tmean_difference\tstd_error\tlower_bound\tconfidence\n\
         {}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        b.tasks,
        b.candidates,
        num(c.mean_a),
        num(c.mean_b),
        num(c.mean_difference),
        num(c.std_error),
        num(c.lower_bound),
        num(c.confidence)
    )
}

pub fn ablation(t: &AblationTable) -> String {
    let mut out = String::from("variant\tseeds\tmean_outcome\tstd_error\tdelta_be_r\tdelta_be_p\n");
    for r in &t.rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.variant.name(),
            r.seeds,
            num(r.mean_outcome),
            num(r.outcome_std_error),
            opt(r.delta_be.as_ref(), |c| c.r),
            opt(r.delta_be.as_ref(), |c| c.p_value)
        )
        .unwrap();
    }
    out
}

pub fn ablation_runs(t: &AblationTable) -> String {
    let mut out = String::from("variant\tseed\teval_outcome\tdelta_be_r\tdelta_be_p\n");
    for r in &t.runs {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.variant.name(),
            r.seed,
            num(r.eval_outcome),
            opt(r.delta_be.as_ref(), |c| c.r),
            opt(r.delta_be.as_ref(), |c| c.p_value)
        )
        .unwrap();
    }
    out
}
