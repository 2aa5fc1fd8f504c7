//! Subcommand implementations and their output formats. Every writer is
//! deterministic for a fixed configuration and seed list: parallel work
//! is collected in task order before a single serial write.

use serde::Serialize;
use std::fmt::Write as _;
use std::io::Write as _;

use treetower::grouporder::{density_sequence, DEFAULT_DEGREE_BUDGET};
use treetower::perm::PermGroupSpec;
use treetower::portrait::Portrait;
use treetower::resolver::{haar_report, run_pipelines, PipelineConfig, PipelineRun};
use treetower::schreier::LevelGraph;
use treetower::seed::{derive_rng, STREAM_PORTRAITS};
use treetower::spectral::{
    expander_scan, ScanConfig, DEFAULT_DENSE_BUDGET, DEFAULT_EXACT_CHEEGER_BUDGET,
};
use treetower::tree::TreeShape;

use crate::config::Experiment;
use crate::AppError;

fn write_output(out: &Option<String>, content: &str) -> Result<(), AppError> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

/// `sample`: draws `rank` Haar portraits to the configured depth from the
/// first seed and writes the versioned text format.
pub fn sample(exp: &Experiment) -> Result<bool, AppError> {
    let group = exp.group().map_err(AppError::Usage)?;
    let shape = TreeShape::new(exp.arity, exp.depth).map_err(|e| AppError::Usage(e.to_string()))?;
    let master = exp.seeds.first().copied().unwrap_or(0);
    let mut rng = derive_rng(master, 0, STREAM_PORTRAITS);
    let mut content = format!(
        "treetower portraits v1 group={} arity={} depth={} count={} seed={}\n",
        exp.group_kind, exp.arity, exp.depth, exp.rank, master
    );
    for i in 0..exp.rank {
        let portrait = Portrait::sample_haar(&group, shape, &mut rng);
        let _ = writeln!(content, "portrait {i}");
        content.push_str(&portrait.to_text());
    }
    write_output(&exp.out, &content)?;
    Ok(true)
}

/// Parses the output of [`sample`] back into portraits (round-trip
/// support for the text interchange format).
pub fn parse_portraits_text(text: &str) -> Result<Vec<Portrait>, AppError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| AppError::Usage("empty portraits file".into()))?;
    let mut fields = std::collections::BTreeMap::new();
    for token in header.split_whitespace().skip(3) {
        if let Some((key, value)) = token.split_once('=') {
            fields.insert(key.to_string(), value.to_string());
        }
    }
    let get = |key: &str| -> Result<usize, AppError> {
        fields
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| AppError::Usage(format!("header missing {key}")))
    };
    let arity = get("arity")?;
    let depth = get("depth")?;
    let count = get("count")?;
    let group = match fields.get("group").map(String::as_str) {
        Some("cyclic") => PermGroupSpec::cyclic(arity),
        Some("sym") | None => PermGroupSpec::symmetric(arity),
        Some(other) => return Err(AppError::Usage(format!("unknown group '{other}'"))),
    }
    .map_err(|e| AppError::Usage(e.to_string()))?;
    let shape = TreeShape::new(arity, depth).map_err(|e| AppError::Usage(e.to_string()))?;
    let rest: Vec<&str> = lines.collect();
    let mut portraits = Vec::with_capacity(count);
    let per_portrait = shape.internal_count();
    let mut cursor = 0usize;
    for i in 0..count {
        let marker = rest
            .get(cursor)
            .ok_or_else(|| AppError::Usage("truncated portraits file".into()))?;
        if marker.trim() != format!("portrait {i}") {
            return Err(AppError::Usage(format!("expected 'portrait {i}', got '{marker}'")));
        }
        cursor += 1;
        let body = rest
            .get(cursor..cursor + per_portrait)
            .ok_or_else(|| AppError::Usage("truncated portrait body".into()))?
            .join("\n");
        portraits.push(
            Portrait::from_text(shape, &group, &body)
                .map_err(|e| AppError::Usage(e.to_string()))?,
        );
        cursor += per_portrait;
    }
    Ok(portraits)
}

/// `tower`: per seed, component counts of the subgroup level graphs for
/// `n = 1..=depth`, with the level from which the count stays constant.
pub fn tower(exp: &Experiment) -> Result<bool, AppError> {
    use rayon::prelude::*;
    let group = exp.group().map_err(AppError::Usage)?;
    let words = exp.words().map_err(AppError::Usage)?;
    if words.is_empty() {
        return Err(AppError::Usage("tower requires at least one word".into()));
    }
    let shape = TreeShape::new(exp.arity, exp.depth).map_err(|e| AppError::Usage(e.to_string()))?;
    let rows: Vec<Result<Vec<(u64, usize, usize, usize)>, treetower::Error>> = exp
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = derive_rng(seed, 0, STREAM_PORTRAITS);
            let fgens: Vec<Portrait> =
                (0..exp.rank).map(|_| Portrait::sample_haar(&group, shape, &mut rng)).collect();
            let ygens: Vec<Portrait> = words
                .iter()
                .map(|w| w.substitute(&fgens))
                .collect::<treetower::Result<_>>()?;
            let mut counts = Vec::with_capacity(exp.depth);
            for n in 1..=exp.depth {
                let y = LevelGraph::build(&ygens, n)?;
                counts.push(y.components().count());
            }
            let last = *counts.last().unwrap();
            let stabilized_from = counts
                .iter()
                .rposition(|&c| c != last)
                .map(|i| i + 2)
                .unwrap_or(1);
            Ok(counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (seed, i + 1, c, stabilized_from))
                .collect())
        })
        .collect();
    let mut content = String::from("# treetower tower v1\nseed,level,components,stabilized_from\n");
    for row in rows {
        for (seed, level, count, stabilized) in row? {
            let _ = writeln!(content, "{seed},{level},{count},{stabilized}");
        }
    }
    write_output(&exp.out, &content)?;
    if let Some(path) = &exp.edges {
        export_edges(exp, &group, &words, shape, path)?;
    }
    Ok(true)
}

/// Edge-list export of the first seed's subgroup level graphs.
fn export_edges(
    exp: &Experiment,
    group: &PermGroupSpec,
    words: &[treetower::FreeWord],
    shape: TreeShape,
    path: &str,
) -> Result<(), AppError> {
    let seed = exp.seeds.first().copied().unwrap_or(0);
    let mut rng = derive_rng(seed, 0, STREAM_PORTRAITS);
    let fgens: Vec<Portrait> =
        (0..exp.rank).map(|_| Portrait::sample_haar(group, shape, &mut rng)).collect();
    let ygens: Vec<Portrait> = words
        .iter()
        .map(|w| w.substitute(&fgens))
        .collect::<treetower::Result<_>>()?;
    let mut content = String::from("# treetower edges v1\nlevel,origin,target,generator,sign\n");
    for n in 1..=exp.depth {
        let y = LevelGraph::build(&ygens, n)?;
        for (level, origin, target, generator, sign) in y.edge_csv_rows() {
            let _ = writeln!(content, "{level},{origin},{target},{generator},{sign}");
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// `spectra`: expander scan over the ambient towers of every seed.
pub fn spectra(exp: &Experiment) -> Result<bool, AppError> {
    let group = exp.group().map_err(AppError::Usage)?;
    let config = ScanConfig {
        arity: exp.arity,
        rank: exp.rank,
        max_level: exp.depth,
        dense_budget: DEFAULT_DENSE_BUDGET,
        exact_budget: DEFAULT_EXACT_CHEEGER_BUDGET,
    };
    let report = expander_scan(&group, &config, &exp.seeds)?;
    let mut content = String::from(
        "# treetower spectra v1\nseed,level,component,size,lambda1,lambda2,lambda_min,h_lower,h_exact,h_upper\n",
    );
    for r in &report.rows {
        let h_exact = r.h_exact.map(|h| format!("{h:.9}")).unwrap_or_default();
        let _ = writeln!(
            content,
            "{},{},{},{},{:.9},{:.9},{:.9},{:.9},{},{:.9}",
            r.seed, r.level, r.component, r.size, r.lambda1, r.lambda2, r.lambda_min, r.h_lower,
            h_exact, r.h_upper
        );
    }
    for (seed, gap) in &report.min_gap_per_seed {
        let _ = writeln!(content, "# min_gap seed={seed} gap={gap:.9}");
    }
    let _ = writeln!(
        content,
        "# envelope fitted_c={:.6} violations_at_c10={}",
        report.fitted_envelope_c, report.envelope_violations_at_c10
    );
    write_output(&exp.out, &content)?;
    Ok(true)
}

/// `hausdorff`: density sequences of the configured subgroup per seed.
pub fn hausdorff(exp: &Experiment) -> Result<bool, AppError> {
    use rayon::prelude::*;
    let group = exp.group().map_err(AppError::Usage)?;
    let words = exp.words().map_err(AppError::Usage)?;
    let shape = TreeShape::new(exp.arity, exp.depth).map_err(|e| AppError::Usage(e.to_string()))?;
    let results: Vec<Result<(u64, treetower::grouporder::DensitySequence), treetower::Error>> = exp
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = derive_rng(seed, 0, STREAM_PORTRAITS);
            let fgens: Vec<Portrait> =
                (0..exp.rank).map(|_| Portrait::sample_haar(&group, shape, &mut rng)).collect();
            let seq = density_sequence(&words, &fgens, &group, exp.depth, DEFAULT_DEGREE_BUDGET)?;
            Ok((seed, seq))
        })
        .collect();
    let mut content = String::from("# treetower hausdorff v1\nseed,n,order_digits,gamma\n");
    let mut tails = String::new();
    for result in results {
        let (seed, seq) = result?;
        for row in &seq.rows {
            let _ = writeln!(content, "{seed},{},{},{:.9}", row.n, row.order_digits, row.gamma);
        }
        let _ = writeln!(tails, "# liminf seed={seed} estimate={:.9}", seq.liminf_estimate);
    }
    content.push_str(&tails);
    write_output(&exp.out, &content)?;
    Ok(true)
}

#[derive(Serialize)]
struct ComponentJson {
    v: u32,
    alpha_words: Vec<String>,
    marked_edges: Vec<treetower::GeomEdge>,
}

#[derive(Serialize)]
struct RunJson {
    seed: u64,
    #[serde(rename = "N")]
    level: usize,
    components: Vec<ComponentJson>,
}

#[derive(Serialize)]
struct FailedRunJson {
    seed: u64,
    error: String,
}

#[derive(Serialize)]
struct HaarTestJson {
    cells: usize,
    chi2: f64,
    p: f64,
    negative_control_chi2: f64,
    negative_control_p: f64,
    marginal: Vec<(f64, f64)>,
    successes: usize,
    expected_per_cell: f64,
    failures: std::collections::BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct ResolveReportJson {
    version: usize,
    master_seed: u64,
    samples: usize,
    k: usize,
    trunc: usize,
    runs: Vec<RunJson>,
    failed_runs: Vec<FailedRunJson>,
    haar_test: Option<HaarTestJson>,
}

/// `resolve`: runs the pipeline `samples` times from the first seed and
/// aggregates the joint uniformity test. Exit status is 0 only when the
/// joint chi-square p-value exceeds 1e-3.
pub fn resolve(exp: &Experiment) -> Result<bool, AppError> {
    let group = exp.group().map_err(AppError::Usage)?;
    let words = exp.words().map_err(AppError::Usage)?;
    let master = exp.seeds.first().copied().unwrap_or(0);
    let config = PipelineConfig {
        group,
        rank: exp.rank,
        delta_words: words,
        k: exp.k,
        truncation: exp.trunc,
        max_depth: exp.depth,
        attempts_per_component: 64,
    };
    let mut report = ResolveReportJson {
        version: 1,
        master_seed: master,
        samples: exp.samples,
        k: exp.k,
        trunc: exp.trunc,
        runs: Vec::new(),
        failed_runs: Vec::new(),
        haar_test: None,
    };
    let mut pass = true;
    if exp.samples > 0 {
        let runs = run_pipelines(&config, master, exp.samples);
        for (run_id, run) in runs.iter().enumerate() {
            match run {
                Ok(r) => report.runs.push(run_json(run_id as u64, r)),
                Err(e) => report
                    .failed_runs
                    .push(FailedRunJson { seed: run_id as u64, error: e.to_string() }),
            }
        }
        let haar = haar_report(&config, &runs, 20.0)?;
        pass = haar.joint.1 > 1e-3;
        report.haar_test = Some(HaarTestJson {
            cells: haar.joint_cells,
            chi2: haar.joint.0,
            p: haar.joint.1,
            negative_control_chi2: haar.negative_control.0,
            negative_control_p: haar.negative_control.1,
            marginal: haar.marginal.clone(),
            successes: haar.successes,
            expected_per_cell: haar.expected_per_joint_cell,
            failures: haar.failures.clone(),
        });
    }
    let mut content = serde_json::to_string_pretty(&report)
        .map_err(|e| AppError::Runtime(format!("json: {e}")))?;
    content.push('\n');
    write_output(&exp.out, &content)?;
    Ok(pass)
}

fn run_json(run_id: u64, run: &PipelineRun) -> RunJson {
    RunJson {
        seed: run_id,
        level: run.level,
        components: run
            .resolution
            .components
            .iter()
            .map(|c| ComponentJson {
                v: c.base,
                alpha_words: c.loops.iter().map(|l| l.word.to_string()).collect(),
                marked_edges: c.marked.clone(),
            })
            .collect(),
    }
}
