//! Sweeps over creator counts and modes, CSV output and medians.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{run_deferred_bench, run_forkjoin_bench, run_spawn_bench};
use crate::{BenchConfig, BenchError, BenchResult, Mode, Workload};

/// One line of sweep output. `run` is the repetition index or `median`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub workload: String,
    pub mode: String,
    pub creators: usize,
    pub run: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub mode: Mode,
    pub creators: usize,
    pub results: Vec<BenchResult>,
    pub median: f64,
    /// Accounting checks that failed for individual runs.
    pub failures: Vec<String>,
}

/// Middle order statistic of an odd number of samples.
pub fn median_of(values: &[f64]) -> Result<f64, BenchError> {
    if values.len().is_multiple_of(2) {
        return Err(BenchError::EvenSamples(values.len()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[v.len() / 2])
}

pub fn run_one(cfg: &BenchConfig, mode: Mode, run_index: usize) -> Result<BenchResult, BenchError> {
    match cfg.workload {
        Workload::Spawn => run_spawn_bench(cfg, mode, run_index),
        Workload::Deferred => run_deferred_bench(cfg, mode, run_index),
        Workload::Forkjoin => run_forkjoin_bench(cfg, mode, run_index),
    }
}

/// Runs `cfg.runs` repetitions for every creator count in `sweep` and every
/// mode, writing each row to `out` as soon as it is measured.
pub fn run_sweep<W: Write>(
    cfg: &BenchConfig,
    modes: &[Mode],
    sweep: &[usize],
    out: W,
) -> Result<Vec<SweepPoint>, BenchError> {
    if sweep.is_empty() || modes.is_empty() {
        return Err(BenchError::Config("nothing to sweep".into()));
    }
    cfg.validate()?;
    let mut writer = csv::Writer::from_writer(out);
    let mut points = Vec::new();
    for &creators in sweep {
        let point_cfg = BenchConfig {
            creators,
            ..cfg.clone()
        };
        point_cfg.validate()?;
        for &mode in modes {
            let mut results = Vec::with_capacity(cfg.runs);
            let mut failures = Vec::new();
            for run in 0..cfg.runs {
                let r = run_one(&point_cfg, mode, run)?;
                if let Err(e) = r.check() {
                    failures.push(format!("{mode} creators={creators} run={run}: {e}"));
                }
                write_row(&mut writer, cfg.workload, mode, creators, run.to_string(), r.value)?;
                log::info!("{} {mode} creators={creators} run={run}: {:.1} {}", cfg.workload, r.value, r.unit());
                results.push(r);
            }
            let values: Vec<f64> = results.iter().map(|r| r.value).collect();
            let median = median_of(&values)?;
            write_row(&mut writer, cfg.workload, mode, creators, "median".into(), median)?;
            points.push(SweepPoint {
                mode,
                creators,
                results,
                median,
                failures,
            });
        }
    }
    Ok(points)
}

fn write_row<W: Write>(
    writer: &mut csv::Writer<W>,
    workload: Workload,
    mode: Mode,
    creators: usize,
    run: String,
    value: f64,
) -> Result<(), BenchError> {
    writer.serialize(CsvRow {
        workload: workload.to_string(),
        mode: mode.to_string(),
        creators,
        run,
        value,
        unit: workload.unit().to_string(),
    })?;
    writer.flush()?;
    Ok(())
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, BenchError> {
    let mut reader = csv::Reader::from_reader(input);
    let rows = reader.deserialize().collect::<Result<Vec<CsvRow>, _>>()?;
    Ok(rows)
}
