use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pimjoin_core::baseline::{classic_hash_join, compare_runs, RunSummary};
use pimjoin_core::query::{JoinOptions, JoinPair, QueryEngine, SetupReport};
use pimjoin_core::structures::{build_dictionary, build_hash_structures, populate_pim, CodeAssignment};
use pimjoin_core::trace::replay_join;
use pimjoin_core::workload::{JoinSpec, Workload, WorkloadSpec};
use pimjoin_core::{Error, SimConfig};
use rayon::prelude::*;

use crate::config::{resolve, FlatConfig, CONFIG_ENV};
use crate::dump::{self, DumpMeta};
use crate::error::{AppError, AppResult};
use crate::report::{BuildRecord, QueryKind, QueryResult, RunRecord, SweepRow, TraceRecord};
use crate::tracefile::{parse_trace, write_trace};
use crate::workload_io;

#[derive(Debug, Parser)]
#[command(name = "pimjoin", version, about = "Cycle-approximate PIM hash-join simulator")]
pub struct Cli {
    /// Flat TOML config file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Configuration commands.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Generate a workload as CSV tables plus a manifest.
    Gen {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the join structures, write a dump and report setup latency.
    Build {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one query and print its JSON report.
    Run {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        query: QueryArgs,
        /// Load structures from a dump instead of building them.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Write the query results as CSV.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter grid into one CSV.
    Sweep {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        overrides: RluOverrides,
        #[command(flatten)]
        query: QueryArgs,
        /// t_CMP values: `a:b` (inclusive) or a comma list.
        #[arg(long = "tcmp")]
        tcmp_axis: Option<String>,
        /// Rank counts, comma separated.
        #[arg(long = "ranks", value_delimiter = ',')]
        rank_axis: Vec<u32>,
        /// Zipf exponents (synthetic), comma separated.
        #[arg(long = "zipfs", value_delimiter = ',')]
        zipfs: Vec<f64>,
        /// Scale factors (ssb), comma separated.
        #[arg(long = "sfs", value_delimiter = ',')]
        sfs: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the modeled join with a measured software hash join.
    Compare {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        overrides: Overrides,
        /// Measure the software join on a workload with this seed instead.
        #[arg(long)]
        baseline_seed: Option<u64>,
        #[arg(long, default_value_t = 3)]
        reps: u32,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a join's access trace, or replay one.
    Trace {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        overrides: Overrides,
        /// Trace file to write.
        #[arg(long, conflicts_with = "replay")]
        out: Option<PathBuf>,
        /// Trace file to replay.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print the fully resolved configuration as TOML.
    Dump {
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WorkloadChoice {
    Ssb,
    Synthetic,
}

#[derive(Debug, Clone, Args)]
pub struct WorkloadArgs {
    #[arg(long, value_enum, default_value_t = WorkloadChoice::Ssb)]
    pub workload: WorkloadChoice,
    #[arg(long, default_value_t = 0.01)]
    pub sf: f64,
    #[arg(long, default_value_t = 10_000)]
    pub size_r: u64,
    /// |S| / |R|.
    #[arg(long, default_value_t = 4)]
    pub mult: u32,
    #[arg(long, default_value_t = 0.0)]
    pub zipf: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub miss_rate: f64,
    /// Consecutive lineorder rows sharing a supplier (ssb).
    #[arg(long)]
    pub supplier_run: Option<u32>,
    /// Load a directory written by `gen` instead of generating.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

impl WorkloadArgs {
    pub fn spec(&self) -> WorkloadSpec {
        let mut spec = match self.workload {
            WorkloadChoice::Ssb => WorkloadSpec::ssb(self.sf, self.seed),
            WorkloadChoice::Synthetic => {
                WorkloadSpec::synthetic(self.size_r, self.mult, self.zipf, self.seed)
            }
        };
        if let (Some(run), pimjoin_core::workload::WorkloadKind::SsbLike { supplier_run_length, .. }) =
            (self.supplier_run, &mut spec.kind)
        {
            *supplier_run_length = run;
        }
        spec.miss_rate = self.miss_rate;
        spec
    }

    pub fn load(&self) -> AppResult<Workload> {
        match &self.input {
            Some(dir) => workload_io::read_dir(dir),
            None => Ok(self.spec().generate()?),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Target {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    /// Join to run; defaults to the workload's first join.
    #[arg(long)]
    pub join: Option<String>,
    /// Keep keys as fixed-width identity codes of this many bits.
    #[arg(long)]
    pub identity_bits: Option<u32>,
}

impl Target {
    pub fn assignment(&self) -> CodeAssignment {
        match self.identity_bits {
            Some(code_bits) => CodeAssignment::Identity { code_bits },
            None => CodeAssignment::Sequential,
        }
    }

    pub fn join_spec<'a>(&self, w: &'a Workload) -> AppResult<&'a JoinSpec> {
        Ok(match &self.join {
            Some(name) => w.join(name)?,
            None => w.default_join(),
        })
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Comparator latency in cycles.
    #[arg(long = "tcmp")]
    pub t_cmp: Option<u32>,
    /// Number of PIM ranks used.
    #[arg(long)]
    pub ranks: Option<u32>,
    #[command(flatten)]
    pub rlu: RluOverrides,
}

impl Overrides {
    pub fn flat(&self) -> FlatConfig {
        FlatConfig {
            t_cmp: self.t_cmp,
            ranks: self.ranks,
            ..self.rlu.flat()
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RluOverrides {
    /// Positions remembered for coalescing.
    #[arg(long)]
    pub coalesce_window: Option<u32>,
    /// RLU key buffer entries.
    #[arg(long)]
    pub key_buffer: Option<u32>,
    /// Drop coalesced keys on the host before fetch.
    #[arg(long)]
    pub cpu_filter: bool,
}

impl RluOverrides {
    pub fn flat(&self) -> FlatConfig {
        FlatConfig {
            coalesce_window: self.coalesce_window,
            key_buffer_capacity: self.key_buffer,
            cpu_filter: self.cpu_filter.then_some(true),
            ..FlatConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    #[arg(long, value_enum, default_value_t = QueryKind::Join)]
    pub query: QueryKind,
    /// Literal for `--query where`; defaults to the first dimension key.
    #[arg(long)]
    pub literal: Option<u64>,
}

/// Structures built for one join, with the setup breakdown.
pub struct Built {
    pub engine: QueryEngine,
    pub setup: SetupReport,
    pub construction_seconds: f64,
    pub meta: DumpMeta,
}

pub fn build_engine(
    cfg: SimConfig,
    workload: &Workload,
    join: &JoinSpec,
    assignment: CodeAssignment,
) -> AppResult<Built> {
    let (dim, fact) = workload.join_columns(join)?;
    let started = Instant::now();
    let dict = build_dictionary(dim, &cfg, assignment)?;
    let rows = dim.iter().enumerate().map(|(i, &k)| (k, i as u32));
    let (table, dup) = build_hash_structures(rows, &dict, &cfg)?;
    let construction_seconds = started.elapsed().as_secs_f64();
    let (state, population) = populate_pim(table, dup, dict, fact, &cfg)?;
    let setup = SetupReport::describe(&state, population, dim.len() as u64);
    Ok(Built {
        engine: QueryEngine::with_state(cfg, state)?,
        setup,
        construction_seconds,
        meta: DumpMeta {
            workload: workload.spec,
            workload_hash: workload.hash(),
            join: join.name.clone(),
            dim_rows: dim.len() as u64,
        },
    })
}

/// Run one query; returns the report and the result rows as CSV text.
pub fn run_query(
    engine: &QueryEngine,
    setup: SetupReport,
    meta: &DumpMeta,
    query: &QueryArgs,
) -> AppResult<(RunRecord, String)> {
    let cfg = engine.config();
    let mut csv = String::new();
    let result = match query.query {
        QueryKind::Join => {
            let (pairs, latency) = engine.join()?;
            csv.push_str("key,fact_index,dim_index\n");
            for p in &pairs {
                csv.push_str(&format!("{},{},{}\n", p.key, p.fact_index, p.dim_index));
            }
            QueryResult::Join { latency }
        }
        QueryKind::Distinct => {
            let (values, cost) = engine.select_distinct()?;
            csv.push_str("value\n");
            for v in &values {
                csv.push_str(&format!("{v}\n"));
            }
            QueryResult::Distinct {
                distinct_values: values.len() as u64,
                cost,
            }
        }
        QueryKind::Where => {
            let state = engine.state()?;
            let literal = match query.literal {
                Some(l) => l,
                None => state
                    .dict
                    .iter()
                    .next()
                    .map(|(value, _)| value)
                    .ok_or_else(|| AppError::Usage("empty dimension; pass --literal".into()))?,
            };
            let (rows, cost) = engine.select_where_eq(literal)?;
            csv.push_str("dim_index\n");
            for r in &rows {
                csv.push_str(&format!("{r}\n"));
            }
            QueryResult::Where {
                literal,
                matching_rows: rows.len() as u64,
                cost,
            }
        }
    };
    let record = RunRecord {
        workload: meta.workload,
        workload_hash: meta.workload_hash,
        join: meta.join.clone(),
        config: FlatConfig::resolved(cfg),
        config_fingerprint: cfg.fingerprint(),
        geometry_hash: cfg.geometry_hash(),
        setup,
        summary: result.summary(cfg.timing.clock_period_ps),
        result,
    };
    Ok((record, csv))
}

fn write_out(path: Option<&Path>, text: &str) -> AppResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| AppError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| AppError::io("<stdout>", e))
        }
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> AppResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Inclusive `a:b` range or comma list.
pub fn parse_u32_axis(text: &str) -> AppResult<Vec<u32>> {
    let bad = || AppError::Usage(format!("bad value list {text:?}"));
    if let Some((a, b)) = text.split_once(':') {
        let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

pub fn execute(cli: Cli) -> AppResult<()> {
    let config_file = cli.config.as_deref();
    match cli.command {
        Command::Config {
            action: ConfigAction::Dump { overrides },
        } => {
            let cfg = resolve(config_file, &overrides.flat())?;
            write_out(None, &FlatConfig::resolved(&cfg).to_toml())
        }
        Command::Gen { workload, out } => {
            let w = workload.load()?;
            let manifest = workload_io::write_dir(&w, &out)?;
            write_out(None, &json_line(&manifest)?)
        }
        Command::Build {
            target,
            overrides,
            out,
        } => {
            let cfg = resolve(config_file, &overrides.flat())?;
            let w = target.workload.load()?;
            let built = build_engine(cfg, &w, target.join_spec(&w)?, target.assignment())?;
            let bytes = dump::encode(&cfg, &built.meta, built.engine.state()?)?;
            fs::write(&out, &bytes).map_err(|e| AppError::io(&out, e))?;
            let record = BuildRecord {
                workload_hash: built.meta.workload_hash,
                join: built.meta.join.clone(),
                config_fingerprint: cfg.fingerprint(),
                geometry_hash: cfg.geometry_hash(),
                construction_seconds: built.construction_seconds,
                population_cycles: built.setup.population.cycles,
                population_seconds: cfg.timing.cycles_to_seconds(built.setup.population.cycles),
                dump_bytes: bytes.len() as u64,
                setup: built.setup,
            };
            write_out(None, &json_line(&record)?)
        }
        Command::Run {
            target,
            overrides,
            query,
            dump: dump_path,
            results,
            out,
        } => {
            let cfg = resolve(config_file, &overrides.flat())?;
            let (engine, setup, meta) = match dump_path {
                Some(path) => {
                    let bytes = fs::read(&path).map_err(|e| AppError::io(&path, e))?;
                    let d = dump::decode(&bytes, &cfg)?;
                    let setup = SetupReport::describe(
                        &d.state,
                        pimjoin_core::structures::PopulationReport::default(),
                        d.meta.dim_rows,
                    );
                    (QueryEngine::with_state(cfg, d.state)?, setup, d.meta)
                }
                None => {
                    let w = target.workload.load()?;
                    let b = build_engine(cfg, &w, target.join_spec(&w)?, target.assignment())?;
                    (b.engine, b.setup, b.meta)
                }
            };
            let (record, csv) = run_query(&engine, setup, &meta, &query)?;
            if let Some(path) = results {
                fs::write(&path, csv).map_err(|e| AppError::io(&path, e))?;
            }
            write_out(out.as_deref(), &json_line(&record)?)
        }
        Command::Sweep {
            target,
            overrides,
            query,
            tcmp_axis,
            rank_axis,
            zipfs,
            sfs,
            jobs,
            out,
        } => {
            let base = overrides.flat();
            resolve(config_file, &base)?;
            let t_cmps = match tcmp_axis {
                Some(text) => parse_u32_axis(&text)?,
                None => vec![resolve(config_file, &base)?.timing.t_cmp],
            };
            let ranks = if rank_axis.is_empty() {
                vec![resolve(config_file, &base)?.ranks]
            } else {
                rank_axis
            };
            let mut workloads = Vec::new();
            match target.workload.workload {
                WorkloadChoice::Ssb if !sfs.is_empty() => {
                    for &sf in &sfs {
                        workloads.push(WorkloadArgs { sf, ..target.workload.clone() });
                    }
                }
                WorkloadChoice::Synthetic if !zipfs.is_empty() => {
                    for &zipf in &zipfs {
                        workloads.push(WorkloadArgs { zipf, ..target.workload.clone() });
                    }
                }
                _ => workloads.push(target.workload.clone()),
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| AppError::Usage(format!("thread pool: {e}")))?;
            let rows: Vec<SweepRow> = pool.install(|| {
                let loaded = workloads
                    .par_iter()
                    .map(WorkloadArgs::load)
                    .collect::<AppResult<Vec<_>>>()?;
                let mut points = Vec::new();
                for w in &loaded {
                    for &t in &t_cmps {
                        for &r in &ranks {
                            points.push((w, t, r));
                        }
                    }
                }
                points
                    .par_iter()
                    .map(|&(w, t, r)| {
                        let cfg = resolve(
                            config_file,
                            &FlatConfig {
                                t_cmp: Some(t),
                                ranks: Some(r),
                                ..base.clone()
                            },
                        )?;
                        let b = build_engine(cfg, w, target.join_spec(w)?, target.assignment())?;
                        let (record, _) = run_query(&b.engine, b.setup, &b.meta, &query)?;
                        Ok(SweepRow::from_record(&record, query.query))
                    })
                    .collect::<AppResult<Vec<_>>>()
            })?;
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &rows {
                w.serialize(row)?;
            }
            let bytes = w.into_inner().map_err(|e| AppError::Usage(format!("csv: {e}")))?;
            write_out(out.as_deref(), &String::from_utf8(bytes).expect("csv is UTF-8"))
        }
        Command::Compare {
            target,
            overrides,
            baseline_seed,
            reps,
            out,
        } => {
            let cfg = resolve(config_file, &overrides.flat())?;
            let w = target.workload.load()?;
            let join = target.join_spec(&w)?;
            let b = build_engine(cfg, &w, join, target.assignment())?;
            let (pairs, latency) = b.engine.join()?;
            let measured_workload = match baseline_seed {
                Some(seed) => WorkloadArgs {
                    seed,
                    input: None,
                    ..target.workload.clone()
                }
                .load()?,
                None => w.clone(),
            };
            let (dim, fact) = measured_workload.join_columns(target.join_spec(&measured_workload)?)?;
            let mut best = f64::INFINITY;
            let mut baseline: Vec<JoinPair> = Vec::new();
            for _ in 0..reps.max(1) {
                let started = Instant::now();
                baseline = classic_hash_join(dim, fact);
                best = best.min(started.elapsed().as_secs_f64());
            }
            let report = compare_runs(
                latency.total_cycles,
                cfg.timing.clock_period_ps,
                RunSummary {
                    workload_hash: w.hash(),
                    config_fingerprint: cfg.fingerprint(),
                    seconds: latency.seconds,
                },
                RunSummary {
                    workload_hash: measured_workload.hash(),
                    config_fingerprint: cfg.fingerprint(),
                    seconds: best,
                },
                1,
            )?;
            if baseline != pairs {
                return Err(Error::Invariant(
                    "modeled join and software hash join disagree".into(),
                )
                .into());
            }
            write_out(out.as_deref(), &json_line(&report)?)
        }
        Command::Trace {
            target,
            overrides,
            out,
            replay,
        } => {
            let cfg = resolve(config_file, &overrides.flat())?;
            let record = match replay {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
                    let records = parse_trace(&text, &cfg.geometry)?;
                    TraceRecord {
                        records: records.len() as u64,
                        total_cycles: None,
                        replayed_cycles: replay_join(&records, &cfg)?,
                    }
                }
                None => {
                    let path = out.ok_or_else(|| AppError::Usage("trace needs --out or --replay".into()))?;
                    let w = target.workload.load()?;
                    let b = build_engine(cfg, &w, target.join_spec(&w)?, target.assignment())?;
                    let run = b.engine.join_with(JoinOptions {
                        record_accesses: true,
                        record_timeline: false,
                    })?;
                    let text = write_trace(&run.accesses, &cfg.geometry);
                    fs::write(&path, &text).map_err(|e| AppError::io(&path, e))?;
                    let replayed = replay_join(&parse_trace(&text, &cfg.geometry)?, &cfg)?;
                    if replayed != run.report.total_cycles {
                        return Err(Error::Invariant(format!(
                            "replayed trace gives {replayed} cycles, run gave {}",
                            run.report.total_cycles
                        ))
                        .into());
                    }
                    TraceRecord {
                        records: run.accesses.len() as u64,
                        total_cycles: Some(run.report.total_cycles),
                        replayed_cycles: replayed,
                    }
                }
            };
            write_out(None, &json_line(&record)?)
        }
    }
}
