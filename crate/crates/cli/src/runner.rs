use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use logbsde::estimates::Verdict;
use logbsde::Error;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{overall, write_file, write_json, PipelineOutput, ResultRecord};
use crate::pipelines::run_pipeline;

/// Environment variable naming the output root when `--out` is absent.
pub const OUT_ENV: &str = "LOGBSDE_OUT";

/// `--out`, then the environment, then the config, then `./out`.
pub fn output_root(flag: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.and_then(|c| c.output_dir.as_ref()).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

fn is_divergence(e: &Error) -> bool {
    matches!(
        e,
        Error::FixedPointDivergence { .. } | Error::Divergence { .. } | Error::NumericFault { .. } | Error::NewtonFailure { .. }
    )
}

/// Run one config, writing everything under `root/<scenario>/`.
pub fn run_scenario(cfg: &ExperimentConfig, root: &Path) -> Result<ResultRecord, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let out = match run_pipeline(cfg) {
        Ok(o) => o,
        Err(CliError::Run { source, .. }) if is_divergence(&source) => {
            let mut o = PipelineOutput::default();
            o.verdict("run", Verdict::Inconclusive);
            o.warnings.push(source.to_string());
            o
        }
        Err(e) => return Err(e),
    };
    let wall = start.elapsed().as_secs_f64();

    let dir = root.join(&cfg.scenario);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut artifacts = Vec::new();
    let path = dir.join("config.toml");
    write_file(&path, cfg.to_toml()?.as_bytes())?;
    artifacts.push(path);
    for t in &out.tables {
        let path = dir.join(format!("{}.csv", t.name));
        write_file(&path, &t.to_csv())?;
        artifacts.push(path);
    }
    for (name, doc) in &out.documents {
        let path = dir.join(format!("{name}.json"));
        write_json(&path, doc)?;
        artifacts.push(path);
    }
    let record_path = dir.join("record.json");
    artifacts.push(record_path.clone());
    let record = ResultRecord {
        scenario: cfg.scenario.clone(),
        pipeline: cfg.pipeline.name().into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        overall: overall(out.verdicts.values()),
        metrics: out.metrics,
        verdicts: out.verdicts,
        wall_time_s: wall,
        artifacts,
        warnings: out.warnings,
    };
    write_json(&record_path, &record)?;
    Ok(record)
}

/// Run several configs, on up to `jobs` threads. Records come back in input
/// order; each scenario writes to its own directory.
pub fn run_many(configs: &[ExperimentConfig], root: &Path, jobs: usize) -> Vec<Result<ResultRecord, CliError>> {
    let jobs = jobs.max(1);
    if jobs == 1 {
        return configs.iter().map(|c| run_scenario(c, root)).collect();
    }
    let mut results: Vec<Option<Result<ResultRecord, CliError>>> = configs.iter().map(|_| None).collect();
    for (chunk_cfg, chunk_out) in configs.chunks(jobs).zip(results.chunks_mut(jobs)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk_cfg.iter().map(|c| s.spawn(move || run_scenario(c, root))).collect();
            for (h, slot) in handles.into_iter().zip(chunk_out.iter_mut()) {
                *slot = Some(h.join().expect("scenario thread panicked"));
            }
        });
    }
    results.into_iter().map(|r| r.expect("every slot filled")).collect()
}
