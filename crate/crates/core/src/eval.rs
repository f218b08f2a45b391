//! Metrics, progressive replay and report tables.
//!
//! Online performance is measured by progressive validation: the log is
//! replayed in order and each evaluated click is scored by the model state
//! just before that click could have been trained on. Only clicks from the
//! last days of the horizon are scored, always against their final labels.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::glm::{clamp_probability, log_loss, GlmKind};
use crate::learner::OnlineLearner;
use crate::quantizer::DAY;
use crate::scalar::{pairwise_sum, Scalar};
use crate::stream::{day_of, ClickLog, ConversionStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvrMetrics<F> {
    pub nll: F,
    /// Percent log-loss improvement over predicting the evaluation set's
    /// positive rate for every example.
    pub rce: F,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VpcMetrics<F> {
    pub mse: F,
    /// `100 · (Σ v̂ − Σ v) / Σ v`; absent when `Σ v = 0`.
    pub bias_pct: Option<F>,
}

/// Log loss and RCE of `(p, y)` pairs; `p` is clamped to `[eps, 1 - eps]`.
pub fn evaluate_cvr<F: Scalar>(pairs: &[(F, F)], clamp_eps: F) -> Result<CvrMetrics<F>> {
    if pairs.is_empty() {
        return Err(Error::input("cannot evaluate an empty prediction set"));
    }
    let n = F::from_count(pairs.len());
    let ys: Vec<F> = pairs.iter().map(|&(_, y)| y).collect();
    let rate = pairwise_sum(&ys) / n;
    let losses: Vec<F> = pairs.iter().map(|&(p, y)| log_loss(p, y, clamp_eps)).collect();
    let base: Vec<F> = pairs.iter().map(|&(_, y)| log_loss(rate, y, clamp_eps)).collect();
    let nll = pairwise_sum(&losses) / n;
    let nll_base = pairwise_sum(&base) / n;
    let rce = F::cast(100.0) * (F::one() - nll / nll_base);
    Ok(CvrMetrics { nll, rce })
}

/// Mean squared error and percent bias of `(v̂, v)` pairs.
pub fn evaluate_vpc<F: Scalar>(pairs: &[(F, F)]) -> Result<VpcMetrics<F>> {
    if pairs.is_empty() {
        return Err(Error::input("cannot evaluate an empty prediction set"));
    }
    if pairs.iter().any(|(a, b)| !(a.is_finite() && b.is_finite())) {
        return Err(Error::input("non-finite prediction or label"));
    }
    let n = F::from_count(pairs.len());
    let sq: Vec<F> = pairs.iter().map(|&(p, v)| (p - v) * (p - v)).collect();
    let preds: Vec<F> = pairs.iter().map(|&(p, _)| p).collect();
    let actual: Vec<F> = pairs.iter().map(|&(_, v)| v).collect();
    let (sp, sa) = (pairwise_sum(&preds), pairwise_sum(&actual));
    Ok(VpcMetrics {
        mse: pairwise_sum(&sq) / n,
        bias_pct: (!sa.is_zero()).then(|| F::cast(100.0) * (sp - sa) / sa),
    })
}

/// The evaluated stretch of a log, in whole days.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalHorizon {
    /// Absolute day index of the first click.
    pub first_day: i64,
    pub n_days: i64,
    pub eval_days: i64,
}

impl EvalHorizon {
    /// Horizon spanning the log. The log must cover more than
    /// `eval_days` plus the attribution window `r`.
    pub fn from_log<F: Scalar>(log: &ClickLog<F>, eval_days: i64, r: u64) -> Result<Self> {
        let (first, last) = match (log.first_ts(), log.last_ts()) {
            (Some(a), Some(b)) => (day_of(a), day_of(b)),
            _ => return Err(Error::input("empty log")),
        };
        let n_days = last - first + 1;
        let need = eval_days + r.div_ceil(DAY) as i64;
        if eval_days < 1 || n_days <= need {
            return Err(Error::input(format!(
                "log spans {n_days} days; need more than {need} ({eval_days} evaluation days plus the attribution window)"
            )));
        }
        Ok(EvalHorizon { first_day: first, n_days, eval_days })
    }

    /// First evaluated day relative to the start (0-based, inclusive).
    pub fn eval_start(&self) -> i64 {
        self.n_days - self.eval_days
    }

    pub fn contains(&self, ts: u64) -> bool {
        let d = day_of(ts) - self.first_day;
        d >= self.eval_start() && d < self.n_days
    }
}

/// Whether a click is scored before or after the learner sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplayOrder {
    PredictFirst,
    /// Lets a click's own zero-lag events train before it is scored. Only
    /// useful to show what predict-first protects against.
    TrainFirst,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport<F> {
    pub model_name: String,
    pub task: GlmKind,
    pub nll: Option<F>,
    pub rce: Option<F>,
    pub mse: F,
    pub bias_pct: Option<F>,
    pub n_examples: usize,
    /// 1-based first and last evaluated day.
    pub eval_window: (i64, i64),
}

/// Scored predictions gathered during a replay.
#[derive(Clone, Debug, Default)]
pub struct Scored<F> {
    /// `(prediction, final label)` per evaluated click.
    pub pairs: Vec<(F, F)>,
    /// Log indices of the evaluated clicks.
    pub indices: Vec<usize>,
}

/// Replays the whole log through `learner`, scoring clicks in the
/// evaluation days.
pub fn replay<F: Scalar, L: OnlineLearner<F> + ?Sized>(
    log: &ClickLog<F>,
    store: &ConversionStore<F>,
    learner: &mut L,
    horizon: &EvalHorizon,
    order: ReplayOrder,
) -> Result<Scored<F>> {
    let kind = learner.kind();
    let mut scored = Scored::default();
    for (j, c) in log.clicks().iter().enumerate() {
        let upto = match order {
            ReplayOrder::PredictFirst => j,
            ReplayOrder::TrainFirst => j + 1,
        };
        learner.catch_up(log, store, c.click_ts, upto)?;
        if horizon.contains(c.click_ts) {
            let label = match (kind, store.get(&c.click_id)) {
                (_, None) => F::zero(),
                (GlmKind::Logistic, Some(_)) => F::one(),
                (GlmKind::Linear, Some((_, v))) => v,
            };
            scored.pairs.push((learner.predict(&c.x), label));
            scored.indices.push(j);
        }
    }
    Ok(scored)
}

/// Metrics over already scored pairs.
pub fn report_from_pairs<F: Scalar>(
    name: &str,
    kind: GlmKind,
    pairs: &[(F, F)],
    horizon: &EvalHorizon,
    clamp_eps: F,
) -> Result<EvalReport<F>> {
    if pairs.is_empty() {
        return Err(Error::input("no clicks fell in the evaluation window"));
    }
    let eval_window = (horizon.eval_start() + 1, horizon.n_days);
    match kind {
        GlmKind::Logistic => {
            let cvr = evaluate_cvr(pairs, clamp_eps)?;
            let clamped: Vec<(F, F)> = pairs.iter().map(|&(p, y)| (clamp_probability(p, clamp_eps), y)).collect();
            let vpc = evaluate_vpc(&clamped)?;
            Ok(EvalReport {
                model_name: name.to_string(),
                task: kind,
                nll: Some(cvr.nll),
                rce: Some(cvr.rce),
                mse: vpc.mse,
                bias_pct: vpc.bias_pct,
                n_examples: pairs.len(),
                eval_window,
            })
        }
        GlmKind::Linear => {
            let vpc = evaluate_vpc(pairs)?;
            Ok(EvalReport {
                model_name: name.to_string(),
                task: kind,
                nll: None,
                rce: None,
                mse: vpc.mse,
                bias_pct: vpc.bias_pct,
                n_examples: pairs.len(),
                eval_window,
            })
        }
    }
}

/// Progressive validation over the final `horizon.eval_days` days.
pub fn windowed_eval<F: Scalar, L: OnlineLearner<F> + ?Sized>(
    log: &ClickLog<F>,
    store: &ConversionStore<F>,
    learner: &mut L,
    horizon: &EvalHorizon,
    clamp_eps: F,
) -> Result<EvalReport<F>> {
    let scored = replay(log, store, learner, horizon, ReplayOrder::PredictFirst)?;
    let name = learner.name().to_string();
    report_from_pairs(&name, learner.kind(), &scored.pairs, horizon, clamp_eps)
}

const REPORT_HEADER: &str = "model,task,nll,rce,mse,bias_pct,n_examples,eval_start_day,eval_end_day";

fn opt<F: Scalar>(x: Option<F>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes reports as CSV, one row per report.
pub fn reports_to_csv<F: Scalar>(reports: &[EvalReport<F>]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.model_name.replace(',', "_"),
            r.task.as_str(),
            opt(r.nll),
            opt(r.rce),
            r.mse,
            opt(r.bias_pct),
            r.n_examples,
            r.eval_window.0,
            r.eval_window.1
        );
    }
    out
}

pub fn reports_from_csv<F: Scalar>(text: &str) -> Result<Vec<EvalReport<F>>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == REPORT_HEADER => {}
        _ => return Err(Error::Parse { line: 1, msg: "not an evaluation report".into() }),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse { line: i + 1, msg: format!("bad {what}") };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(bad("column count"));
        }
        let num = |s: &str, what: &str| -> Result<Option<F>> {
            if s.is_empty() {
                Ok(None)
            } else {
                F::from_str(s).map(Some).map_err(|_| bad(what))
            }
        };
        let int = |s: &str, what: &str| i64::from_str(s).map_err(|_| bad(what));
        out.push(EvalReport {
            model_name: cells[0].to_string(),
            task: GlmKind::parse(cells[1]).map_err(|_| bad("task"))?,
            nll: num(cells[2], "nll")?,
            rce: num(cells[3], "rce")?,
            mse: num(cells[4], "mse")?.ok_or_else(|| bad("mse"))?,
            bias_pct: num(cells[5], "bias_pct")?,
            n_examples: usize::from_str(cells[6]).map_err(|_| bad("n_examples"))?,
            eval_window: (int(cells[7], "eval_start_day")?, int(cells[8], "eval_end_day")?),
        });
    }
    Ok(out)
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow<F> {
    pub model: String,
    pub bias_pct: Option<F>,
    /// Log loss for CVR, MSE for VPC.
    pub mse_or_nll: Option<F>,
    pub rce: Option<F>,
    /// RCE shortfall (CVR) or MSE excess (VPC) relative to the oracle row.
    pub diff_to_oracle: Option<F>,
}

/// Builds the comparison table: the oracle first, then the rest by
/// increasing gap to it. All reports must share a task.
pub fn comparison_table<F: Scalar>(reports: &[EvalReport<F>]) -> Result<Vec<TableRow<F>>> {
    let Some(first) = reports.first() else {
        return Err(Error::input("no reports to compare"));
    };
    let task = first.task;
    if reports.iter().any(|r| r.task != task) {
        return Err(Error::input("cannot mix CVR and VPC reports in one table"));
    }
    let oracle = reports.iter().find(|r| r.model_name == "oracle");
    let mut rows: Vec<TableRow<F>> = reports
        .iter()
        .map(|r| {
            let (metric, diff) = match task {
                GlmKind::Logistic => (r.nll, oracle.and_then(|o| Some(o.rce? - r.rce?))),
                GlmKind::Linear => (Some(r.mse), oracle.map(|o| r.mse - o.mse)),
            };
            TableRow {
                model: r.model_name.clone(),
                bias_pct: r.bias_pct,
                mse_or_nll: metric,
                rce: r.rce,
                diff_to_oracle: diff,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &TableRow<F>| (r.model != "oracle", r.diff_to_oracle.unwrap_or(F::infinity()));
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then(ka.1.partial_cmp(&kb.1).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.model.cmp(&b.model))
    });
    Ok(rows)
}

pub fn table_to_csv<F: Scalar>(rows: &[TableRow<F>]) -> String {
    let mut out = String::from("model,bias_pct,mse_or_nll,rce,diff_to_oracle\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.model,
            opt(r.bias_pct),
            opt(r.mse_or_nll),
            opt(r.rce),
            opt(r.diff_to_oracle)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_fixture_cvr() {
        let pairs = [(0.9, 1.0), (0.2, 0.0), (0.6, 1.0), (0.4, 0.0), (0.1, 0.0), (0.7, 1.0)];
        let m = evaluate_cvr(&pairs, 1e-6).unwrap();
        // -(ln .9 + ln .8 + ln .6 + ln .6 + ln .9 + ln .7) / 6
        let nll = -(0.9f64.ln() + 0.8f64.ln() + 0.6f64.ln() + 0.6f64.ln() + 0.9f64.ln() + 0.7f64.ln()) / 6.0;
        // Positive rate 0.5, so the reference loss is ln 2.
        let rce = 100.0 * (1.0 - nll / std::f64::consts::LN_2);
        assert!((m.nll - nll).abs() < 1e-9);
        assert!((m.rce - rce).abs() < 1e-9);
    }

    #[test]
    fn constant_rate_has_zero_rce() {
        let ys = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let rate = 2.0 / 7.0;
        let pairs: Vec<(f64, f64)> = ys.iter().map(|&y| (rate, y)).collect();
        assert_eq!(evaluate_cvr(&pairs, 1e-6).unwrap().rce, 0.0);
    }

    #[test]
    fn perfect_predictions_approach_hundred() {
        let pairs = [(1.0, 1.0), (0.0, 0.0), (0.0, 0.0), (1.0, 1.0)];
        let m = evaluate_cvr(&pairs, 1e-6).unwrap();
        assert!((m.nll - (-(1.0f64 - 1e-6).ln())).abs() < 1e-12);
        assert!(m.rce < 100.0 && m.rce > 99.99);
    }

    #[test]
    fn hand_fixture_vpc() {
        let pairs: [(f64, f64); 5] = [(1.0, 0.0), (2.0, 4.0), (0.5, 0.0), (3.0, 3.0), (10.0, 8.0)];
        let m = evaluate_vpc(&pairs).unwrap();
        // squared errors 1, 4, 0.25, 0, 4 -> 9.25 / 5
        assert!((m.mse - 1.85).abs() < 1e-9);
        // (16.5 - 15) / 15
        assert!((m.bias_pct.unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn vpc_identities() {
        let vs = [0.0, 3.0, 1.5, 0.0];
        let exact: Vec<(f64, f64)> = vs.iter().map(|&v| (v, v)).collect();
        let m = evaluate_vpc(&exact).unwrap();
        assert_eq!((m.mse, m.bias_pct), (0.0, Some(0.0)));
        let doubled: Vec<(f64, f64)> = vs.iter().map(|&v| (2.0 * v, v)).collect();
        assert_eq!(evaluate_vpc(&doubled).unwrap().bias_pct, Some(100.0));
        assert_eq!(evaluate_vpc(&[(1.0, 0.0)]).unwrap().bias_pct, None);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(evaluate_cvr::<f64>(&[], 1e-6).is_err());
        assert!(evaluate_vpc::<f64>(&[]).is_err());
    }

    fn report(name: &str, task: GlmKind, nll: Option<f64>, rce: Option<f64>, mse: f64, bias: Option<f64>) -> EvalReport<f64> {
        EvalReport {
            model_name: name.into(),
            task,
            nll,
            rce,
            mse,
            bias_pct: bias,
            n_examples: 10,
            eval_window: (54, 60),
        }
    }

    #[test]
    fn table_puts_oracle_first() {
        let reps = vec![
            report("naive", GlmKind::Logistic, Some(0.5), Some(-3.0), 0.1, Some(-40.0)),
            report("shifted", GlmKind::Logistic, Some(0.33), Some(9.0), 0.1, Some(20.0)),
            report("oracle", GlmKind::Logistic, Some(0.3), Some(15.0), 0.1, Some(1.0)),
            report("mhol", GlmKind::Logistic, Some(0.31), Some(14.0), 0.1, Some(3.0)),
        ];
        let rows = comparison_table(&reps).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(names, ["oracle", "mhol", "shifted", "naive"]);
        assert_eq!(rows[0].diff_to_oracle, Some(0.0));
        assert_eq!(rows[1].diff_to_oracle, Some(1.0));
        let csv = table_to_csv(&rows);
        assert!(csv.starts_with("model,bias_pct,mse_or_nll,rce,diff_to_oracle\noracle,1,0.3,15,0\n"));
    }

    #[test]
    fn vpc_table_diffs_mse() {
        let reps = vec![
            report("shifted", GlmKind::Linear, None, None, 120.0, Some(30.0)),
            report("oracle", GlmKind::Linear, None, None, 100.0, Some(0.5)),
        ];
        let rows = comparison_table(&reps).unwrap();
        assert_eq!(rows[1].diff_to_oracle, Some(20.0));
        assert_eq!(rows[1].rce, None);
        let mixed = vec![reps[0].clone(), report("x", GlmKind::Logistic, None, None, 1.0, None)];
        assert!(comparison_table(&mixed).is_err());
    }

    #[test]
    fn report_csv_round_trips() {
        let reps = vec![
            report("mhol", GlmKind::Logistic, Some(0.31), Some(14.25), 0.07, Some(-1.5)),
            report("oracle", GlmKind::Linear, None, None, 101.5, None),
        ];
        let back: Vec<EvalReport<f64>> = reports_from_csv(&reports_to_csv(&reps)).unwrap();
        assert_eq!(back, reps);
        assert!(reports_from_csv::<f64>("x\n").is_err());
    }

    fn pairs_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.001f64..0.999, prop::bool::ANY), 2..60)
            .prop_map(|v| v.into_iter().map(|(p, y)| (p, if y { 1.0 } else { 0.0 })).collect())
            .prop_filter("needs both classes", |v: &Vec<(f64, f64)>| {
                v.iter().any(|p| p.1 == 1.0) && v.iter().any(|p| p.1 == 0.0)
            })
    }

    proptest! {
        #[test]
        fn metrics_are_permutation_invariant(pairs in pairs_strategy(), seed in any::<u64>()) {
            let mut shuffled = pairs.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = evaluate_cvr(&pairs, 1e-6).unwrap();
            let b = evaluate_cvr(&shuffled, 1e-6).unwrap();
            prop_assert!((a.nll - b.nll).abs() < 1e-12);
            prop_assert!((a.rce - b.rce).abs() < 1e-9);
            let c = evaluate_vpc(&pairs).unwrap();
            let d = evaluate_vpc(&shuffled).unwrap();
            prop_assert!((c.mse - d.mse).abs() < 1e-12);
        }

        #[test]
        fn rce_survives_duplication(pairs in pairs_strategy()) {
            let mut doubled = pairs.clone();
            doubled.extend_from_slice(&pairs);
            let a = evaluate_cvr(&pairs, 1e-6).unwrap();
            let b = evaluate_cvr(&doubled, 1e-6).unwrap();
            prop_assert!((a.rce - b.rce).abs() < 1e-9);
        }
    }
}
