//! Behavioral metrics and one-sample t-tests.
//!
//! Everything is on the percent scale (0 to 100) and chance is 50.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{zone_of, ChamberSpec, TrialKind, TrialRecord, VIEWPOINT_COUNT};

pub const CHANCE: f64 = 50.0;
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("no scored {0} trials")]
    NoScoredTrials(&'static str),
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1).
    pub sd: f64,
    pub sem: f64,
}

pub fn summarize(values: &[f64]) -> Result<StatsSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(StatsSummary {
        n,
        mean,
        sd,
        sem: sd / (n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    /// Two-sided.
    pub p: f64,
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / libm::sin(pi * x)).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn inc_beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability of Student's t.
pub fn t_two_sided_p(t: f64, df: usize) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let v = df as f64;
    inc_beta_reg(v / 2.0, 0.5, v / (v + t * t)).clamp(0.0, 1.0)
}

/// t-test from summary statistics. With `sd = 0` the statistic is 0 when
/// the mean equals `mu0` and ±∞ otherwise.
pub fn t_from_summary(mean: f64, sd: f64, n: usize, mu0: f64) -> Result<TTestResult, StatsError> {
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let diff = mean - mu0;
    let t = if sd > 0.0 {
        diff / (sd / (n as f64).sqrt())
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    };
    Ok(TTestResult {
        t,
        df: n - 1,
        p: t_two_sided_p(t, n - 1),
    })
}

pub fn one_sample_t(values: &[f64], mu0: f64) -> Result<TTestResult, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: values.len(),
        });
    }
    let s = summarize(values)?;
    t_from_summary(s.mean, s.sd, s.n, mu0)
}

/// Percent of side-zone steps spent on the imprint side; `None` when every
/// step is neutral.
pub fn trial_preference(record: &TrialRecord, chamber: &ChamberSpec) -> Option<f64> {
    let imprint = record.imprint_wall.zone();
    let opposite = record.imprint_wall.opposite().zone();
    let (mut near, mut far) = (0usize, 0usize);
    for p in &record.trace {
        let z = zone_of(p, chamber);
        if z == imprint {
            near += 1;
        } else if z == opposite {
            far += 1;
        }
    }
    let total = near + far;
    (total > 0).then(|| 100.0 * near as f64 / total as f64)
}

/// A trial reduced to its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub kind: TrialKind,
    pub viewpoint_index: Option<usize>,
    pub preference: Option<f64>,
}

impl ScoredTrial {
    pub fn from_record(record: &TrialRecord, chamber: &ChamberSpec) -> Self {
        Self {
            kind: record.kind,
            viewpoint_index: record.viewpoint_index,
            preference: trial_preference(record, chamber),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub imprinting: f64,
    /// Per-viewpoint recognition means; `None` where no trial was scored.
    pub behavior: Vec<Option<f64>>,
    /// Unweighted mean of the scored viewpoint means.
    pub recognition: f64,
    pub imprinting_trials: Vec<f64>,
    pub recognition_trials: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn agent_summary(trials: &[ScoredTrial]) -> Result<AgentSummary, StatsError> {
    let mut imprinting = Vec::new();
    let mut recognition = Vec::new();
    let mut per_view = vec![Vec::new(); VIEWPOINT_COUNT];
    for t in trials {
        let Some(p) = t.preference else { continue };
        match t.kind {
            TrialKind::Imprinting => imprinting.push(p),
            TrialKind::Recognition => {
                recognition.push(p);
                if let Some(v) = t.viewpoint_index.filter(|&v| v < VIEWPOINT_COUNT) {
                    per_view[v].push(p);
                }
            }
        }
    }
    if imprinting.is_empty() {
        return Err(StatsError::NoScoredTrials("imprinting"));
    }
    let behavior: Vec<Option<f64>> = per_view.iter().map(|v| (!v.is_empty()).then(|| mean(v))).collect();
    let scored: Vec<f64> = behavior.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(StatsError::NoScoredTrials("recognition"));
    }
    Ok(AgentSummary {
        imprinting: mean(&imprinting),
        recognition: mean(&scored),
        behavior,
        imprinting_trials: imprinting,
        recognition_trials: recognition,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBand {
    pub center: f64,
    pub halfwidth: f64,
}

impl NoiseBand {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() <= self.halfwidth
    }
}

/// Mean and mean absolute deviation.
pub fn noise_band(values: &[f64]) -> Result<NoiseBand, StatsError> {
    if values.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let center = mean(values);
    Ok(NoiseBand {
        center,
        halfwidth: values.iter().map(|v| (v - center).abs()).sum::<f64>() / values.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    ViewInvariant,
    ViewDependent,
    Neither,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::ViewInvariant => "view_invariant",
            Classification::ViewDependent => "view_dependent",
            Classification::Neither => "neither",
        }
    }
}

/// Significantly above chance, below chance, or neither, by a one-sample
/// t-test against 50 at α = .05.
pub fn classify_agent(values: &[f64]) -> Result<Classification, StatsError> {
    let test = one_sample_t(values, CHANCE)?;
    Ok(if test.p < ALPHA && test.t > 0.0 {
        Classification::ViewInvariant
    } else if test.p < ALPHA && test.t < 0.0 {
        Classification::ViewDependent
    } else {
        Classification::Neither
    })
}

/// One agent's summary with its group label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResult {
    pub algorithm: String,
    pub agent: String,
    pub summary: AgentSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetric {
    pub summary: StatsSummary,
    /// Absent for a single-agent group.
    pub test: Option<TTestResult>,
    /// Mean over agents of the per-agent standard error across trials.
    pub mean_agent_sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n_agents: usize,
    pub imprinting: GroupMetric,
    pub recognition: GroupMetric,
    pub percent_imprinted: f64,
    pub percent_view_invariant: f64,
    pub percent_view_dependent: f64,
    pub percent_neither: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationReport {
    /// One entry per algorithm (sorted), then the pooled group `"all"`.
    pub groups: Vec<GroupStats>,
    pub classifications: Vec<AgentClassification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentClassification {
    pub algorithm: String,
    pub agent: String,
    pub imprinted: bool,
    /// `None` when fewer than two recognition trials were scored.
    pub recognition: Option<Classification>,
}

/// Percentages of `labels` that are view-invariant, view-dependent and
/// neither.
pub fn classification_percentages(labels: &[Classification]) -> [f64; 3] {
    let n = labels.len().max(1) as f64;
    let count = |c: Classification| 100.0 * labels.iter().filter(|&&l| l == c).count() as f64 / n;
    [
        count(Classification::ViewInvariant),
        count(Classification::ViewDependent),
        count(Classification::Neither),
    ]
}

fn group_metric(values: &[f64], sems: &[f64]) -> Result<GroupMetric, StatsError> {
    let summary = summarize(values)?;
    Ok(GroupMetric {
        summary,
        test: (summary.n >= 2)
            .then(|| t_from_summary(summary.mean, summary.sd, summary.n, CHANCE))
            .transpose()?,
        mean_agent_sem: mean(sems),
    })
}

fn group_stats(name: &str, agents: &[&AgentResult], cls: &[&AgentClassification]) -> Result<GroupStats, StatsError> {
    let imp: Vec<f64> = agents.iter().map(|a| a.summary.imprinting).collect();
    let rec: Vec<f64> = agents.iter().map(|a| a.summary.recognition).collect();
    let sem = |v: &[f64]| summarize(v).map(|s| s.sem).unwrap_or(0.0);
    let imp_sem: Vec<f64> = agents.iter().map(|a| sem(&a.summary.imprinting_trials)).collect();
    let rec_sem: Vec<f64> = agents.iter().map(|a| sem(&a.summary.recognition_trials)).collect();
    let labels: Vec<Classification> = cls
        .iter()
        .map(|c| c.recognition.unwrap_or(Classification::Neither))
        .collect();
    let [inv, dep, nei] = classification_percentages(&labels);
    Ok(GroupStats {
        group: name.to_string(),
        n_agents: agents.len(),
        imprinting: group_metric(&imp, &imp_sem)?,
        recognition: group_metric(&rec, &rec_sem)?,
        percent_imprinted: 100.0 * cls.iter().filter(|c| c.imprinted).count() as f64 / cls.len() as f64,
        percent_view_invariant: inv,
        percent_view_dependent: dep,
        percent_neither: nei,
    })
}

pub fn classify_result(a: &AgentResult) -> AgentClassification {
    AgentClassification {
        algorithm: a.algorithm.clone(),
        agent: a.agent.clone(),
        imprinted: classify_agent(&a.summary.imprinting_trials) == Ok(Classification::ViewInvariant),
        recognition: classify_agent(&a.summary.recognition_trials).ok(),
    }
}

/// Per-algorithm and pooled statistics.
pub fn population_report(agents: &[AgentResult]) -> Result<PopulationReport, StatsError> {
    if agents.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let classifications: Vec<AgentClassification> = agents.iter().map(classify_result).collect();
    let mut by_alg: BTreeMap<&str, (Vec<&AgentResult>, Vec<&AgentClassification>)> = BTreeMap::new();
    for (a, c) in agents.iter().zip(&classifications) {
        let e = by_alg.entry(a.algorithm.as_str()).or_default();
        e.0.push(a);
        e.1.push(c);
    }
    let mut groups = Vec::with_capacity(by_alg.len() + 1);
    for (name, (a, c)) in &by_alg {
        groups.push(group_stats(name, a, c)?);
    }
    let all: Vec<&AgentResult> = agents.iter().collect();
    let all_c: Vec<&AgentClassification> = classifications.iter().collect();
    groups.push(group_stats("all", &all, &all_c)?);
    Ok(PopulationReport {
        groups,
        classifications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Pose, Wall};
    use proptest::prelude::*;

    fn record(xs: &[f64], wall: Wall) -> TrialRecord {
        TrialRecord {
            trial_id: 0,
            kind: TrialKind::Imprinting,
            viewpoint_index: None,
            imprint_wall: wall,
            trace: xs.iter().map(|&x| Pose::new(x, 5.0, 0.0)).collect(),
        }
    }

    fn steps(near: usize, far: usize, neutral: usize) -> Vec<f64> {
        let mut v = vec![3.0; near];
        v.extend(vec![15.0; far]);
        v.extend(vec![10.0; neutral]);
        v
    }

    #[test]
    fn preference_examples() {
        let c = ChamberSpec::default();
        let p = trial_preference(&record(&steps(600, 300, 100), Wall::X0), &c).unwrap();
        assert!((p - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(trial_preference(&record(&steps(0, 0, 50), Wall::X0), &c), None);
        assert_eq!(trial_preference(&record(&steps(20, 0, 0), Wall::X0), &c), Some(100.0));
        // Imprint wall on the far side swaps the roles.
        let p = trial_preference(&record(&steps(600, 300, 100), Wall::XL), &c).unwrap();
        assert!((p - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn summary_examples() {
        let mut trials: Vec<ScoredTrial> = (0..40)
            .map(|_| ScoredTrial {
                kind: TrialKind::Imprinting,
                viewpoint_index: None,
                preference: Some(90.0),
            })
            .collect();
        for v in 0..12 {
            trials.push(ScoredTrial {
                kind: TrialKind::Recognition,
                viewpoint_index: Some(v),
                preference: Some(if v == 0 { 100.0 } else { 50.0 }),
            });
        }
        let s = agent_summary(&trials).unwrap();
        assert_eq!(s.imprinting, 90.0);
        assert!((s.recognition - 650.0 / 12.0).abs() < 1e-12);

        trials.retain(|t| t.viewpoint_index != Some(3));
        trials.push(ScoredTrial {
            kind: TrialKind::Recognition,
            viewpoint_index: Some(3),
            preference: None,
        });
        let s = agent_summary(&trials).unwrap();
        assert_eq!(s.behavior[3], None);
        assert!((s.recognition - 600.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn summary_requires_scored_trials() {
        let t = [ScoredTrial {
            kind: TrialKind::Recognition,
            viewpoint_index: Some(0),
            preference: Some(60.0),
        }];
        assert_eq!(agent_summary(&t), Err(StatsError::NoScoredTrials("imprinting")));
    }

    #[test]
    fn t_from_group_summaries() {
        let t = t_from_summary(88.0, 7.0, 23, 50.0).unwrap();
        assert!((t.t - 26.03).abs() < 0.005);
        assert_eq!(t.df, 22);
        let t = t_from_summary(59.0, 17.0, 312, 50.0).unwrap();
        assert!((t.t - 9.35).abs() < 0.005);
    }

    #[test]
    fn p_values_match_reference() {
        // Reference values from an independent statistics library.
        for (t, df, p) in [
            (0.13, 103, 0.896_819_971_538_208_1),
            (2.0, 10, 0.073_388_034_770_740_39),
            (1.0, 3, 0.391_002_218_955_770_5),
            (5.0, 22, 5.268_412_075_718_2e-5),
        ] {
            let got = t_two_sided_p(t, df);
            assert!((got - p).abs() < 1e-10 * p.max(1e-3), "t={t} df={df}: {got} vs {p}");
        }
        assert_eq!(format!("{:.2}", t_two_sided_p(0.13, 103)), "0.90");
    }

    #[test]
    fn one_sample_t_matches_reference() {
        let r = one_sample_t(&[1.0, 2.0, 3.0, 4.0, 10.0], 2.0).unwrap();
        assert!((r.t - 1.264_911_064_067_351_8).abs() < 1e-12);
        assert!((r.p - 0.274_576_629_094_848_2).abs() < 1e-10);
        assert_eq!(r.df, 4);
        assert!(one_sample_t(&[1.0], 0.0).is_err());
    }

    #[test]
    fn equal_values_give_zero_t() {
        let r = one_sample_t(&[50.0; 10], 50.0).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn noise_band_examples() {
        let b = noise_band(&[85.0, 90.0, 95.0]).unwrap();
        assert_eq!(b.center, 90.0);
        assert!((b.halfwidth - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(noise_band(&[80.0; 3]).unwrap().halfwidth, 0.0);
        assert!(b.contains(92.0) && !b.contains(94.0));
        assert!(noise_band(&[]).is_err());
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_agent(&[90.0; 480]), Ok(Classification::ViewInvariant));
        assert_eq!(classify_agent(&[10.0; 480]), Ok(Classification::ViewDependent));
        let alt: Vec<f64> = (0..480).map(|i| if i % 2 == 0 { 49.0 } else { 51.0 }).collect();
        assert_eq!(classify_agent(&alt), Ok(Classification::Neither));
        assert!(classify_agent(&[90.0]).is_err());
    }

    #[test]
    fn percentages_of_labels() {
        use Classification::*;
        let p = classification_percentages(&[ViewInvariant, ViewDependent, Neither, ViewInvariant]);
        assert_eq!(p, [50.0, 25.0, 25.0]);
    }

    fn agent(alg: &str, id: usize, imp: f64, rec: f64) -> AgentResult {
        let imprinting_trials: Vec<f64> = (0..40).map(|i| imp + if i % 2 == 0 { 5.0 } else { -5.0 }).collect();
        let recognition_trials: Vec<f64> = (0..480).map(|i| rec + if i % 2 == 0 { 5.0 } else { -5.0 }).collect();
        AgentResult {
            algorithm: alg.into(),
            agent: format!("agent_{id}"),
            summary: AgentSummary {
                imprinting: imp,
                behavior: vec![Some(rec); 12],
                recognition: rec,
                imprinting_trials,
                recognition_trials,
            },
        }
    }

    #[test]
    fn population_groups_and_df() {
        let mut agents: Vec<AgentResult> = (0..104).map(|i| agent("rnd", i, 50.0 + (i % 7) as f64, 52.0)).collect();
        agents.push(agent("icm", 0, 80.0, 40.0));
        let r = population_report(&agents).unwrap();
        let names: Vec<&str> = r.groups.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(names, ["icm", "rnd", "all"]);
        assert_eq!(r.groups[1].imprinting.test.unwrap().df, 103);
        assert!(r.groups[0].imprinting.test.is_none());
        assert_eq!(r.groups[0].percent_imprinted, 100.0);
        assert_eq!(r.groups[0].percent_view_dependent, 100.0);
        assert_eq!(r.groups[2].n_agents, 105);
    }

    proptest! {
        #[test]
        fn neutral_steps_do_not_change_preference(near in 0usize..50, far in 0usize..50, extra in 1usize..50) {
            let c = ChamberSpec::default();
            let a = trial_preference(&record(&steps(near, far, 0), Wall::X0), &c);
            let b = trial_preference(&record(&steps(near, far, extra), Wall::X0), &c);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn noise_band_translation_invariant(xs in proptest::collection::vec(0.0f64..100.0, 1..40), c in -50.0f64..50.0) {
            let a = noise_band(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let b = noise_band(&shifted).unwrap();
            prop_assert!((b.center - a.center - c).abs() < 1e-9);
            prop_assert!((b.halfwidth - a.halfwidth).abs() < 1e-9);
        }

        #[test]
        fn classification_flips_under_mirror(xs in proptest::collection::vec(0.0f64..100.0, 2..100)) {
            let mirrored: Vec<f64> = xs.iter().map(|x| 100.0 - x).collect();
            let a = classify_agent(&xs).unwrap();
            let b = classify_agent(&mirrored).unwrap();
            let expected = match a {
                Classification::ViewInvariant => Classification::ViewDependent,
                Classification::ViewDependent => Classification::ViewInvariant,
                Classification::Neither => Classification::Neither,
            };
            prop_assert_eq!(b, expected);
        }

        #[test]
        fn summary_matches_two_pass(xs in proptest::collection::vec(-1e3f64..1e3, 2..60)) {
            let s = summarize(&xs).unwrap();
            let n = xs.len() as f64;
            let m: f64 = xs.iter().sum::<f64>() / n;
            let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
            prop_assert!((s.sd - (ss / (n - 1.0)).sqrt()).abs() < 1e-9);
            prop_assert!((s.sem - s.sd / n.sqrt()).abs() < 1e-12);
        }

        #[test]
        fn p_in_unit_interval(t in -50.0f64..50.0, df in 1usize..500) {
            let p = t_two_sided_p(t, df);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
