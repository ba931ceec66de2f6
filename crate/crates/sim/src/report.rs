//! Aggregation of run metrics into per-arm tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::runner::RunMetrics;
use crate::scenario::AccessPath;

/// Mean with a two-sided 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub n: usize,
    pub mean: f64,
    /// Half-width of the interval; absent with fewer than two samples.
    pub ci95: Option<f64>,
}

impl Estimate {
    /// Order-free: values are sorted before summation, so any permutation
    /// of the input gives bit-identical results.
    pub fn of(values: &[f64]) -> Option<Estimate> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let ci95 = (n >= 2).then(|| {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(0.975);
            t * (var / n as f64).sqrt()
        });
        Some(Estimate { n, mean, ci95 })
    }
}

/// One row per (access path, badge arm).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub access_path: AccessPath,
    pub badges: bool,
    pub runs: usize,
    pub activated: usize,
    pub time_to_activation_s: Option<Estimate>,
    pub tagged_before_activation_rate: f64,
    pub alerts_raised: Estimate,
    pub suggestions_sent: Estimate,
    pub suggestions_delivered: Estimate,
    pub suggestions_accepted: Estimate,
    pub suggestions_blocked: Estimate,
    pub cooldowns: Estimate,
    pub greetings: Estimate,
    pub bystander_saw_badge_rate: f64,
    pub bystander_saw_flash_rate: f64,
    pub violations: u64,
    pub hygiene_violations: u64,
}

pub fn aggregate(runs: &[RunMetrics]) -> Vec<Aggregate> {
    let mut arms: BTreeMap<(AccessPath, bool), Vec<&RunMetrics>> = BTreeMap::new();
    for r in runs {
        arms.entry((r.access_path, r.badges)).or_default().push(r);
    }
    arms.into_iter()
        .map(|((access_path, badges), rs)| {
            let n = rs.len();
            let est = |f: &dyn Fn(&RunMetrics) -> f64| {
                Estimate::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())
                    .expect("arm is non-empty")
            };
            let rate = |f: &dyn Fn(&RunMetrics) -> bool| {
                rs.iter().filter(|r| f(r)).count() as f64 / n as f64
            };
            let tta: Vec<f64> = rs.iter().filter_map(|r| r.time_to_activation_s).collect();
            Aggregate {
                access_path,
                badges,
                runs: n,
                activated: tta.len(),
                time_to_activation_s: Estimate::of(&tta),
                tagged_before_activation_rate: rate(&|r| r.tagged_before_activation),
                alerts_raised: est(&|r| f64::from(r.alerts_raised)),
                suggestions_sent: est(&|r| f64::from(r.suggestions.sent)),
                suggestions_delivered: est(&|r| f64::from(r.suggestions.delivered)),
                suggestions_accepted: est(&|r| f64::from(r.suggestions.accepted)),
                suggestions_blocked: est(&|r| f64::from(r.suggestions.blocked)),
                cooldowns: est(&|r| f64::from(r.suggestions.cooldowns)),
                greetings: est(&|r| f64::from(r.greetings)),
                bystander_saw_badge_rate: rate(&|r| {
                    r.bystanders.values().any(|s| s.saw_badge.is_some())
                }),
                bystander_saw_flash_rate: rate(&|r| {
                    r.bystanders.values().any(|s| s.saw_flash.is_some())
                }),
                violations: rs.iter().map(|r| u64::from(r.violations)).sum(),
                hygiene_violations: rs.iter().map(|r| u64::from(r.hygiene_violations)).sum(),
            }
        })
        .collect()
}

/// CSV columns, in order.
pub const CSV_HEADER: [&str; 18] = [
    "access_path",
    "badges",
    "runs",
    "activated",
    "tta_mean_s",
    "tta_ci95_s",
    "tagged_before_activation_rate",
    "alerts_mean",
    "sent_mean",
    "delivered_mean",
    "accepted_mean",
    "blocked_mean",
    "cooldowns_mean",
    "greetings_mean",
    "saw_badge_rate",
    "saw_flash_rate",
    "violations",
    "hygiene_violations",
];

pub fn write_csv<W: Write>(aggs: &[Aggregate], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for a in aggs {
        w.write_record([
            a.access_path.name().to_owned(),
            a.badges.to_string(),
            a.runs.to_string(),
            a.activated.to_string(),
            opt(a.time_to_activation_s.map(|e| e.mean)),
            opt(a.time_to_activation_s.and_then(|e| e.ci95)),
            format!("{:.6}", a.tagged_before_activation_rate),
            format!("{:.6}", a.alerts_raised.mean),
            format!("{:.6}", a.suggestions_sent.mean),
            format!("{:.6}", a.suggestions_delivered.mean),
            format!("{:.6}", a.suggestions_accepted.mean),
            format!("{:.6}", a.suggestions_blocked.mean),
            format!("{:.6}", a.cooldowns.mean),
            format!("{:.6}", a.greetings.mean),
            format!("{:.6}", a.bystander_saw_badge_rate),
            format!("{:.6}", a.bystander_saw_flash_rate),
            a.violations.to_string(),
            a.hygiene_violations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary(aggs: &[Aggregate]) -> String {
    let mut s = String::new();
    for a in aggs {
        let arm = if a.badges { "" } else { " (no badges)" };
        let _ = writeln!(s, "{}{}: {} runs", a.access_path.name(), arm, a.runs);
        match a.time_to_activation_s {
            Some(e) => {
                let ci = e.ci95.map(|h| format!(" ± {h:.3}")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "  activation: {}/{} runs, mean {:.3} s{ci}",
                    a.activated, a.runs, e.mean
                );
            }
            None => {
                let _ = writeln!(s, "  activation: none");
            }
        }
        let _ = writeln!(
            s,
            "  tagged before activation: {:.1}%",
            100.0 * a.tagged_before_activation_rate
        );
        let _ = writeln!(
            s,
            "  alerts {:.2}, suggestions sent {:.2} delivered {:.2} accepted {:.2} blocked {:.2}, cooldowns {:.2}",
            a.alerts_raised.mean,
            a.suggestions_sent.mean,
            a.suggestions_delivered.mean,
            a.suggestions_accepted.mean,
            a.suggestions_blocked.mean,
            a.cooldowns.mean
        );
        let _ = writeln!(
            s,
            "  greetings {:.2}, bystander saw badge {:.1}% flash {:.1}%",
            a.greetings.mean,
            100.0 * a.bystander_saw_badge_rate,
            100.0 * a.bystander_saw_flash_rate
        );
        let _ = writeln!(
            s,
            "  violations: separation {}, information {}",
            a.violations, a.hygiene_violations
        );
    }
    s
}
