//! Population comparison against a chick reference: t-SNE of behavior
//! vectors, noise-band adequacy, and report emission.

pub mod svg;
pub mod tsne;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{self, HarnessError, RunManifest, TestSummary, MANIFEST_FILE, TEST_SUMMARY_FILE};
use crate::stats::{
    agent_summary, noise_band, population_report, AgentResult, Classification, NoiseBand, PopulationReport,
    ScoredTrial, StatsError, CHANCE,
};
use crate::world::VIEWPOINT_COUNT;

pub use tsne::{tsne, Embedding, TsneConfig};

pub const REPORT_FILE: &str = "report.json";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("t-SNE: {0}")]
    Tsne(String),
    #[error("invalid chick reference: {0}")]
    Reference(String),
    #[error("no tested runs under {}", .0.display())]
    NoRuns(PathBuf),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl AnalysisError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AnalysisError::Reference(_) => 2,
            AnalysisError::Harness(e) => e.exit_code(),
            AnalysisError::NoRuns(_) => 3,
            _ => 1,
        }
    }
}

/// Group summary, optionally with the individual scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSummary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    #[serde(default)]
    pub range: Option<[f64; 2]>,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChickGroup {
    pub imprinting: GroupSummary,
    #[serde(default)]
    pub recognition: Option<GroupSummary>,
    pub fraction_view_invariant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChickReference {
    /// True when the individual data are generated, not measured.
    #[serde(default)]
    pub synthetic: bool,
    #[serde(default)]
    pub note: Option<String>,
    pub group: ChickGroup,
    /// Per-chick behavior vectors: 12 recognition percentages each.
    #[serde(default)]
    pub individuals: Vec<Vec<f64>>,
}

fn check_group(name: &str, g: &GroupSummary) -> Result<(), AnalysisError> {
    let bad = |m: String| Err(AnalysisError::Reference(format!("{name}: {m}")));
    if g.n == 0 {
        return bad("n must be at least 1".into());
    }
    if !g.mean.is_finite() || !(g.sd >= 0.0) || !g.sd.is_finite() {
        return bad("mean and sd must be finite, sd ≥ 0".into());
    }
    if let Some([lo, hi]) = g.range {
        if !(lo <= hi) {
            return bad(format!("range [{lo}, {hi}] is reversed"));
        }
    }
    if !g.values.is_empty() && g.values.len() != g.n {
        return bad(format!("{} values for n = {}", g.values.len(), g.n));
    }
    if g.values.iter().any(|v| !v.is_finite()) {
        return bad("values must be finite".into());
    }
    Ok(())
}

impl ChickReference {
    pub fn from_json(text: &str) -> Result<Self, AnalysisError> {
        let r: ChickReference = serde_json::from_str(text).map_err(|e| AnalysisError::Reference(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        check_group("imprinting", &self.group.imprinting)?;
        if let Some(r) = &self.group.recognition {
            check_group("recognition", r)?;
        }
        let f = self.group.fraction_view_invariant;
        if !(0.0..=1.0).contains(&f) {
            return Err(AnalysisError::Reference(format!(
                "fraction_view_invariant {f} outside [0, 1]"
            )));
        }
        for (i, v) in self.individuals.iter().enumerate() {
            if v.len() != VIEWPOINT_COUNT || v.iter().any(|x| !x.is_finite()) {
                return Err(AnalysisError::Reference(format!(
                    "individual {i} must have {VIEWPOINT_COUNT} finite entries"
                )));
            }
        }
        Ok(())
    }

    /// Imprinting noise band. Without individual values the mean absolute
    /// deviation is taken from the sd under normality: sd·√(2/π).
    pub fn imprinting_band(&self) -> NoiseBand {
        summary_band(&self.group.imprinting)
    }

    /// Recognition noise band, from the group summary if given, else from
    /// the individuals' mean recognition scores.
    pub fn recognition_band(&self) -> Option<NoiseBand> {
        if let Some(g) = &self.group.recognition {
            return Some(summary_band(g));
        }
        let means: Vec<f64> = self
            .individuals
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        noise_band(&means).ok()
    }
}

fn summary_band(g: &GroupSummary) -> NoiseBand {
    match noise_band(&g.values) {
        Ok(b) => b,
        Err(_) => NoiseBand {
            center: g.mean,
            halfwidth: g.sd * (2.0 / std::f64::consts::PI).sqrt(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Imprinting,
    Recognition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub group: String,
    pub metric: Metric,
    pub machine_mean: f64,
    pub chick_center: f64,
    pub chick_halfwidth: f64,
    pub inside_band: bool,
    /// |machine mean − chick mean| in percentage points.
    pub gap: f64,
}

pub fn compare_metric(group: &str, metric: Metric, machine_mean: f64, band: NoiseBand) -> ComparisonRow {
    ComparisonRow {
        group: group.to_string(),
        metric,
        machine_mean,
        chick_center: band.center,
        chick_halfwidth: band.halfwidth,
        inside_band: band.contains(machine_mean),
        gap: (machine_mean - band.center).abs(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adequacy {
    pub rows: Vec<ComparisonRow>,
    /// Every metric of the pooled group lies inside its chick band.
    pub predictively_adequate: bool,
}

pub fn compare_to_reference(report: &PopulationReport, reference: &ChickReference) -> Adequacy {
    let imp = reference.imprinting_band();
    let rec = reference.recognition_band();
    let mut rows = Vec::new();
    for g in &report.groups {
        rows.push(compare_metric(
            &g.group,
            Metric::Imprinting,
            g.imprinting.summary.mean,
            imp,
        ));
        if let Some(b) = rec {
            rows.push(compare_metric(
                &g.group,
                Metric::Recognition,
                g.recognition.summary.mean,
                b,
            ));
        }
    }
    let pooled: Vec<&ComparisonRow> = rows.iter().filter(|r| r.group == "all").collect();
    let predictively_adequate = !pooled.is_empty() && pooled.iter().all(|r| r.inside_band);
    Adequacy {
        rows,
        predictively_adequate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyzeOptions {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        let t = TsneConfig::default();
        Self {
            perplexity: t.perplexity,
            iterations: t.iterations,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceInfo {
    pub synthetic: bool,
    pub note: Option<String>,
    pub imprinting_band: NoiseBand,
    pub recognition_band: Option<NoiseBand>,
    pub fraction_view_invariant: f64,
    pub individuals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRow {
    pub id: String,
    pub algorithm: String,
    pub condition: u8,
    pub seed: u64,
    pub greedy: bool,
    pub trials: usize,
    pub imprinting: f64,
    pub recognition: f64,
    pub behavior: Vec<Option<f64>>,
    pub imprinted: bool,
    pub recognition_class: Option<Classification>,
    pub heading_alignment_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsentRun {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TsnePoint {
    pub label: String,
    /// `"chick"` or `"machine"`.
    pub subject: String,
    pub group: String,
    pub x: f64,
    pub y: f64,
    /// Behavior entries replaced by chance before embedding.
    pub imputed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TsneReport {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub kl_initial: f64,
    pub kl_final: f64,
    pub n_chick: usize,
    pub n_machine: usize,
    pub points: Vec<TsnePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub code_version: String,
    pub reference: ReferenceInfo,
    pub agents: Vec<AgentRow>,
    pub population: PopulationReport,
    pub comparison: Vec<ComparisonRow>,
    pub predictively_adequate: bool,
    pub tsne: Option<TsneReport>,
    pub imputed_entries: usize,
    pub absent_runs: Vec<AbsentRun>,
    pub warnings: Vec<String>,
}

/// A tested agent loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedAgent {
    pub id: String,
    pub summary: TestSummary,
    pub result: AgentResult,
    pub heading_alignment_deg: Option<f64>,
}

fn rel(root: &Path, p: &Path) -> String {
    let r = p.strip_prefix(root).unwrap_or(p);
    let s = r.to_string_lossy().replace('\\', "/");
    if s.is_empty() {
        ".".into()
    } else {
        s
    }
}

fn load_agent(root: &Path, canon_root: &Path, test_dir: &Path) -> Result<LoadedAgent, String> {
    let (summary, records) = harness::read_test_output(test_dir).map_err(|e| e.to_string())?;
    let scored: Vec<ScoredTrial> = records
        .iter()
        .map(|r| ScoredTrial::from_record(r, &summary.config.chamber))
        .collect();
    let s = agent_summary(&scored).map_err(|e| e.to_string())?;
    let run_dir = summary.checkpoint.parent().unwrap_or(Path::new(""));
    let id = if run_dir.starts_with(canon_root) {
        rel(canon_root, run_dir)
    } else {
        rel(root, test_dir)
    };
    Ok(LoadedAgent {
        result: AgentResult {
            algorithm: summary.algorithm.as_str().to_string(),
            agent: id.clone(),
            summary: s,
        },
        heading_alignment_deg: harness::heading_alignment(&records).ok(),
        id,
        summary,
    })
}

/// Walks `root` for test outputs. Training runs without a test output,
/// incomplete runs and unreadable tests are returned as absent.
pub fn collect_runs(root: &Path) -> Result<(Vec<LoadedAgent>, Vec<AbsentRun>), AnalysisError> {
    let canon_root = fs::canonicalize(root).map_err(|source| HarnessError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut agents = Vec::new();
    let mut absent = Vec::new();
    let mut training_dirs = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| HarnessError::Malformed {
            path: root.to_path_buf(),
            reason: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let dir = entry.path().parent().unwrap_or(root);
        match entry.file_name().to_str() {
            Some(TEST_SUMMARY_FILE) => match load_agent(root, &canon_root, dir) {
                Ok(a) => agents.push(a),
                Err(reason) => absent.push(AbsentRun {
                    path: rel(root, dir),
                    reason,
                }),
            },
            Some(MANIFEST_FILE) => training_dirs.push(dir.to_path_buf()),
            _ => {}
        }
    }
    let tested: BTreeSet<PathBuf> = agents
        .iter()
        .filter_map(|a| a.summary.checkpoint.parent().map(Path::to_path_buf))
        .collect();
    for dir in training_dirs {
        let reason = match RunManifest::load(&dir) {
            Ok(m) if !m.complete => format!("training incomplete: {}", m.error.unwrap_or_default()),
            Ok(_) => match fs::canonicalize(&dir) {
                Ok(c) if tested.contains(&c) => continue,
                _ => "no test output".to_string(),
            },
            Err(e) => e.to_string(),
        };
        absent.push(AbsentRun {
            path: rel(root, &dir),
            reason,
        });
    }
    agents.sort_by(|a, b| a.id.cmp(&b.id));
    absent.sort_by(|a, b| a.path.cmp(&b.path));
    Ok((agents, absent))
}

/// Behavior vector with unscored viewpoints set to chance.
pub fn impute(behavior: &[Option<f64>]) -> (Vec<f64>, usize) {
    let missing = behavior.iter().filter(|b| b.is_none()).count();
    (behavior.iter().map(|b| b.unwrap_or(CHANCE)).collect(), missing)
}

/// Perplexity actually used for `n` rows: the request if it is below `n`,
/// else (n − 1)/3.
pub fn effective_perplexity(requested: f64, n: usize) -> f64 {
    if requested < n as f64 {
        requested
    } else {
        (n as f64 - 1.0) / 3.0
    }
}

fn embed(
    agents: &[LoadedAgent],
    reference: &ChickReference,
    opts: &AnalyzeOptions,
    warnings: &mut Vec<String>,
) -> Result<Option<TsneReport>, AnalysisError> {
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for a in agents {
        let (v, imputed) = impute(&a.result.summary.behavior);
        rows.push(v);
        points.push(TsnePoint {
            label: a.id.clone(),
            subject: "machine".into(),
            group: a.result.algorithm.clone(),
            x: 0.0,
            y: 0.0,
            imputed,
        });
    }
    for (i, v) in reference.individuals.iter().enumerate() {
        rows.push(v.clone());
        points.push(TsnePoint {
            label: format!("chick_{i:02}"),
            subject: "chick".into(),
            group: "chick".into(),
            x: 0.0,
            y: 0.0,
            imputed: 0,
        });
    }
    if rows.len() < 3 {
        warnings.push(format!("t-SNE skipped: {} behavior vectors (need 3)", rows.len()));
        return Ok(None);
    }
    let perplexity = effective_perplexity(opts.perplexity, rows.len());
    if perplexity != opts.perplexity {
        warnings.push(format!(
            "t-SNE perplexity reduced from {} to {perplexity} for {} rows",
            opts.perplexity,
            rows.len()
        ));
    }
    let cfg = TsneConfig {
        perplexity,
        iterations: opts.iterations,
        seed: opts.seed,
        ..TsneConfig::default()
    };
    let e = tsne(&rows, &cfg)?;
    for (p, c) in points.iter_mut().zip(&e.coords) {
        p.x = c[0];
        p.y = c[1];
    }
    Ok(Some(TsneReport {
        perplexity,
        iterations: e.iterations,
        learning_rate: cfg.learning_rate,
        seed: e.seed,
        kl_initial: e.kl_initial,
        kl_final: e.kl_final,
        n_chick: reference.individuals.len(),
        n_machine: agents.len(),
        points,
    }))
}

/// Builds the report from loaded agents. Pure: no file access.
pub fn build_report(
    agents: &[LoadedAgent],
    absent: Vec<AbsentRun>,
    reference: &ChickReference,
    opts: &AnalyzeOptions,
) -> Result<Report, AnalysisError> {
    let results: Vec<AgentResult> = agents.iter().map(|a| a.result.clone()).collect();
    let population = population_report(&results)?;
    let adequacy = compare_to_reference(&population, reference);
    let mut warnings = Vec::new();
    if reference.synthetic {
        warnings.push("chick reference is synthetic: for pipeline demonstration only".into());
    }
    if !absent.is_empty() {
        warnings.push(format!("{} run(s) absent", absent.len()));
    }
    if reference.recognition_band().is_none() {
        warnings.push("chick reference has no recognition data: recognition not compared".into());
    }
    let tsne = embed(agents, reference, opts, &mut warnings)?;
    let imputed_entries: usize = agents.iter().map(|a| impute(&a.result.summary.behavior).1).sum();
    if imputed_entries > 0 {
        warnings.push(format!(
            "{imputed_entries} unscored viewpoint entries set to {CHANCE} for t-SNE"
        ));
    }
    let agents_out = agents
        .iter()
        .zip(&population.classifications)
        .map(|(a, c)| AgentRow {
            id: a.id.clone(),
            algorithm: a.result.algorithm.clone(),
            condition: a.summary.condition,
            seed: a.summary.seed,
            greedy: a.summary.greedy,
            trials: a.summary.trials,
            imprinting: a.result.summary.imprinting,
            recognition: a.result.summary.recognition,
            behavior: a.result.summary.behavior.clone(),
            imprinted: c.imprinted,
            recognition_class: c.recognition,
            heading_alignment_deg: a.heading_alignment_deg,
        })
        .collect();
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        code_version: harness::CODE_VERSION.to_string(),
        reference: ReferenceInfo {
            synthetic: reference.synthetic,
            note: reference.note.clone(),
            imprinting_band: reference.imprinting_band(),
            recognition_band: reference.recognition_band(),
            fraction_view_invariant: reference.group.fraction_view_invariant,
            individuals: reference.individuals.len(),
        },
        agents: agents_out,
        population,
        comparison: adequacy.rows,
        predictively_adequate: adequacy.predictively_adequate,
        tsne,
        imputed_entries,
        absent_runs: absent,
        warnings,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), AnalysisError> {
    fs::write(path, bytes).map_err(|source| {
        AnalysisError::Harness(HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_table(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub const OUTPUT_FILES: [&str; 8] = [
    REPORT_FILE,
    "agents.csv",
    "groups.csv",
    "comparison.csv",
    "tsne.csv",
    "imprinting.svg",
    "recognition.svg",
    "tsne.svg",
];

/// Writes report.json, the summary CSVs and the three figures.
pub fn write_report(report: &Report, out: &Path) -> Result<(), AnalysisError> {
    fs::create_dir_all(out).map_err(|source| HarnessError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    write(&out.join(REPORT_FILE), json.as_bytes())?;

    let mut header: Vec<String> = ["id", "algorithm", "condition", "seed", "imprinting", "recognition"]
        .map(String::from)
        .to_vec();
    header.extend((0..VIEWPOINT_COUNT).map(|v| format!("view_{v:02}")));
    header.extend(["imprinted", "recognition_class", "heading_alignment_deg"].map(String::from));
    let rows: Vec<Vec<String>> = report
        .agents
        .iter()
        .map(|a| {
            let mut r = vec![
                a.id.clone(),
                a.algorithm.clone(),
                a.condition.to_string(),
                a.seed.to_string(),
                a.imprinting.to_string(),
                a.recognition.to_string(),
            ];
            r.extend(a.behavior.iter().map(|b| opt(*b)));
            r.push(a.imprinted.to_string());
            r.push(a.recognition_class.map(|c| c.as_str().to_string()).unwrap_or_default());
            r.push(opt(a.heading_alignment_deg));
            r
        })
        .collect();
    write(&out.join("agents.csv"), &csv_table(&header, &rows))?;

    let header: Vec<String> = [
        "group",
        "n_agents",
        "imprinting_mean",
        "imprinting_sd",
        "imprinting_t",
        "imprinting_p",
        "recognition_mean",
        "recognition_sd",
        "recognition_t",
        "recognition_p",
        "percent_imprinted",
        "percent_view_invariant",
        "percent_view_dependent",
        "percent_neither",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = report
        .population
        .groups
        .iter()
        .map(|g| {
            vec![
                g.group.clone(),
                g.n_agents.to_string(),
                g.imprinting.summary.mean.to_string(),
                g.imprinting.summary.sd.to_string(),
                opt(g.imprinting.test.map(|t| t.t)),
                opt(g.imprinting.test.map(|t| t.p)),
                g.recognition.summary.mean.to_string(),
                g.recognition.summary.sd.to_string(),
                opt(g.recognition.test.map(|t| t.t)),
                opt(g.recognition.test.map(|t| t.p)),
                g.percent_imprinted.to_string(),
                g.percent_view_invariant.to_string(),
                g.percent_view_dependent.to_string(),
                g.percent_neither.to_string(),
            ]
        })
        .collect();
    write(&out.join("groups.csv"), &csv_table(&header, &rows))?;

    let header: Vec<String> = [
        "group",
        "metric",
        "machine_mean",
        "chick_center",
        "chick_halfwidth",
        "inside_band",
        "gap",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = report
        .comparison
        .iter()
        .map(|c| {
            vec![
                c.group.clone(),
                match c.metric {
                    Metric::Imprinting => "imprinting".into(),
                    Metric::Recognition => "recognition".into(),
                },
                c.machine_mean.to_string(),
                c.chick_center.to_string(),
                c.chick_halfwidth.to_string(),
                c.inside_band.to_string(),
                c.gap.to_string(),
            ]
        })
        .collect();
    write(&out.join("comparison.csv"), &csv_table(&header, &rows))?;

    let header: Vec<String> = ["label", "subject", "group", "x", "y", "imputed"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = report
        .tsne
        .iter()
        .flat_map(|t| &t.points)
        .map(|p| {
            vec![
                p.label.clone(),
                p.subject.clone(),
                p.group.clone(),
                p.x.to_string(),
                p.y.to_string(),
                p.imputed.to_string(),
            ]
        })
        .collect();
    write(&out.join("tsne.csv"), &csv_table(&header, &rows))?;

    write(
        &out.join("imprinting.svg"),
        svg::bar_chart(report, Metric::Imprinting).as_bytes(),
    )?;
    write(
        &out.join("recognition.svg"),
        svg::bar_chart(report, Metric::Recognition).as_bytes(),
    )?;
    write(&out.join("tsne.svg"), svg::scatter(report.tsne.as_ref()).as_bytes())?;
    Ok(())
}

/// Loads every run under `runs`, compares with `reference` and writes the
/// outputs to `out`.
pub fn emit_report(
    runs: &Path,
    reference: &ChickReference,
    out: &Path,
    opts: &AnalyzeOptions,
) -> Result<Report, AnalysisError> {
    let (agents, absent) = collect_runs(runs)?;
    if agents.is_empty() {
        return Err(AnalysisError::NoRuns(runs.to_path_buf()));
    }
    let report = build_report(&agents, absent, reference, opts)?;
    write_report(&report, out)?;
    Ok(report)
}
