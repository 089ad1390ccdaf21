//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use pimjoin::tracefile::{parse_trace, write_trace};
use pimjoin_core::baseline::nested_loop_join;
use pimjoin_core::mem::{map_bucket_to_location, BankState};
use pimjoin_core::query::{JoinOptions, JoinPair, QueryEngine};
use pimjoin_core::rlu::{run_join_stream, Recorder};
use pimjoin_core::search::{probe_row, BucketEntry, BucketRow, EntryLayout};
use pimjoin_core::structures::{bucket_of, compute_data_overhead, CodeAssignment, PimState};
use pimjoin_core::trace::replay_join;
use pimjoin_core::workload::{WorkloadKind, WorkloadSpec};
use pimjoin_core::SimConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn engine(cfg: SimConfig, dim: &[u64], fact: &[u64], assignment: CodeAssignment) -> Result<QueryEngine, String> {
    let mut q = QueryEngine::new(cfg).map_err(|e| e.to_string())?;
    q.build(dim, fact, assignment).map_err(|e| e.to_string())?;
    Ok(q)
}

struct Case {
    spec: WorkloadSpec,
    ranks: u32,
    assignment: CodeAssignment,
}

fn corpus() -> Vec<Case> {
    let sizes = [250u64, 1000, 4000, 10_000];
    let mults = [1u32, 2, 4, 8];
    let zipfs = [0.0, 0.5, 1.5, 2.0];
    let mut cases = Vec::new();
    for i in 0..160u64 {
        let mut spec = WorkloadSpec::synthetic(
            sizes[(i % 4) as usize],
            mults[(i / 4 % 4) as usize],
            zipfs[(i / 16 % 4) as usize],
            1000 + i,
        );
        if i % 5 == 0 {
            spec.miss_rate = 0.1;
        }
        cases.push(Case {
            spec,
            ranks: if i % 3 == 0 { 2 } else { 1 },
            assignment: if i % 2 == 0 {
                CodeAssignment::Sequential
            } else {
                CodeAssignment::Identity { code_bits: 32 }
            },
        });
    }
    for i in 0..40u64 {
        let mut spec = WorkloadSpec::ssb(if i % 2 == 0 { 0.001 } else { 0.01 }, 2000 + i);
        if let WorkloadKind::SsbLike {
            supplier_run_length, ..
        } = &mut spec.kind
        {
            *supplier_run_length = [1, 4, 16][(i % 3) as usize];
        }
        if i % 4 == 3 {
            spec.miss_rate = 0.05;
        }
        cases.push(Case {
            spec,
            ranks: [1, 2, 4][(i % 3) as usize],
            assignment: CodeAssignment::Sequential,
        });
    }
    cases
}

fn sorted(mut pairs: Vec<JoinPair>) -> Vec<JoinPair> {
    pairs.sort_unstable_by_key(|p| (p.fact_index, p.dim_index, p.key));
    pairs
}

/// Unique keys, index consistency, dictionary round trip and duplication
/// list reconstruction, checked from the built state.
fn structural(state: &PimState, dim: &[u64]) -> Result<(), String> {
    let e = |e: pimjoin_core::Error| e.to_string();
    state.dict.validate().map_err(e)?;
    state.table.validate().map_err(e)?;
    state.dup.validate().map_err(e)?;

    let mut multimap: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for (i, &k) in dim.iter().enumerate() {
        multimap.entry(k).or_default().push(i as u32);
    }
    let mut codes = BTreeSet::new();
    let index_bits = state.table.index_bits();
    for row in state.table.rows() {
        for (_, entry) in row.entries() {
            let code = pimjoin_core::structures::join_code(row.bucket_id(), entry.tag, index_bits);
            ensure(codes.insert(code), || format!("code {code} stored twice"))?;
            ensure(bucket_of(code, index_bits) == row.bucket_id(), || {
                format!("code {code} outside its bucket {}", row.bucket_id())
            })?;
            let key = state.dict.decode(code).ok_or(format!("code {code} not in dictionary"))?;
            let rows = if entry.dup {
                state.dup.get(entry.value).ok_or("dangling handle")?.to_vec()
            } else {
                vec![entry.value]
            };
            ensure(multimap.get(&key) == Some(&rows), || format!("rows of key {key} differ"))?;
        }
    }
    ensure(codes.len() == multimap.len(), || {
        format!("{} stored keys for {} distinct", codes.len(), multimap.len())
    })?;
    for &k in multimap.keys() {
        let code = state.dict.encode(k).ok_or(format!("key {k} unencoded"))?;
        ensure(state.dict.decode(code) == Some(k), || format!("round trip of {k}"))?;
    }
    Ok(())
}

struct CorpusResult {
    joins: usize,
    pairs: usize,
    structural_failures: Vec<String>,
    join_failures: Vec<String>,
}

fn run_corpus() -> CorpusResult {
    let cases = corpus();
    let results: Vec<(usize, usize, Vec<String>, Vec<String>)> = cases
        .par_iter()
        .map(|case| {
            let mut structural_failures = Vec::new();
            let mut join_failures = Vec::new();
            let (mut joins, mut pairs) = (0, 0);
            let w = match case.spec.generate() {
                Ok(w) => w,
                Err(e) => return (0, 0, vec![], vec![format!("{:?}: {e}", case.spec)]),
            };
            for join in &w.joins {
                let label = format!("{:?} ranks={} join={}", case.spec.kind, case.ranks, join.name);
                let (dim, fact) = w.join_columns(join).unwrap();
                let mut cfg = SimConfig::new();
                cfg.ranks = case.ranks;
                let q = match engine(cfg, dim, fact, case.assignment) {
                    Ok(q) => q,
                    Err(e) => {
                        join_failures.push(format!("{label}: {e}"));
                        continue;
                    }
                };
                if let Err(e) = structural(q.state().unwrap(), dim) {
                    structural_failures.push(format!("{label}: {e}"));
                }
                match q.join() {
                    Ok((got, _)) => {
                        let expect = nested_loop_join(dim, fact);
                        pairs += expect.len();
                        if sorted(got) != sorted(expect) {
                            join_failures.push(format!("{label}: output differs"));
                        }
                    }
                    Err(e) => join_failures.push(format!("{label}: {e}")),
                }
                joins += 1;
            }
            (joins, pairs, structural_failures, join_failures)
        })
        .collect();
    let mut out = CorpusResult {
        joins: 0,
        pairs: 0,
        structural_failures: Vec::new(),
        join_failures: Vec::new(),
    };
    for (j, p, s, f) in results {
        out.joins += j;
        out.pairs += p;
        out.structural_failures.extend(s);
        out.join_failures.extend(f);
    }
    out
}

fn ac1(corpus: &CorpusResult, seconds: f64) -> Outcome {
    if let Some(first) = corpus.join_failures.first() {
        return Err(format!("{} failing joins, first: {first}", corpus.join_failures.len()));
    }
    ensure(seconds < 300.0, || format!("took {seconds:.0} s"))?;
    Ok(format!(
        "200 workloads, {} joins, {} pairs equal to nested loop in {seconds:.1} s",
        corpus.joins, corpus.pairs
    ))
}

fn ac2() -> Outcome {
    let timing = SimConfig::new().timing;
    let geometry = SimConfig::new().geometry;
    // 32-bit entries: 256 slots per 8192-bit row
    let layout = EntryLayout::new(16, 15, 32, 256).map_err(|e| e.to_string())?;
    let loc = map_bucket_to_location(3, &geometry).map_err(|e| e.to_string())?;
    let mut costs = BTreeSet::new();
    for fill in [1usize, 200, 256] {
        let mut row = BucketRow::new(3, layout);
        for t in 0..fill {
            row.insert(BucketEntry {
                tag: t as u64,
                value: t as u32,
                dup: false,
            })
            .map_err(|e| e.to_string())?;
        }
        for probe in [0u64, fill as u64 - 1, 9999] {
            for warm in [false, true] {
                let mut banks = BankState::new();
                if warm {
                    banks.access_row(&loc, &timing);
                }
                let r = probe_row(Some(&row), probe, &loc, &mut banks, &timing).map_err(|e| e.to_string())?;
                ensure(r.payload.is_some() == (probe < fill as u64), || format!("fill {fill} probe {probe}"))?;
                costs.insert((warm, r.cycles));
            }
        }
    }
    ensure(costs.len() == 2, || format!("probe costs vary with occupancy: {costs:?}"))?;

    // the same at query level: one bucket holding one key versus a full one
    let one = engine(SimConfig::new(), &[7], &[], CodeAssignment::Sequential)?;
    let full_dim: Vec<u64> = (0..100).collect();
    let full = engine(SimConfig::new(), &full_dim, &[], CodeAssignment::Sequential)?;
    let a = one.select_where_eq(7).map_err(|e| e.to_string())?.1;
    let b = full.select_where_eq(99).map_err(|e| e.to_string())?.1;
    ensure(a.cycles == b.cycles, || format!("{} vs {} cycles", a.cycles, b.cycles))?;
    let (cold, hit) = (costs.iter().find(|c| !c.0).unwrap().1, costs.iter().find(|c| c.0).unwrap().1);
    Ok(format!("probe {cold} cycles cold, {hit} warm, for 1, 200 and 256 entries"))
}

fn ac3() -> Outcome {
    let zipfs = [0.0, 0.5, 1.5, 2.0];
    let mut lines = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut cycles = Vec::new();
        let mut probes = Vec::new();
        for &s in &zipfs {
            let w = WorkloadSpec::synthetic(8000, 4, s, seed).generate().map_err(|e| e.to_string())?;
            let (dim, fact) = w.join_columns(w.default_join()).unwrap();
            let q = engine(SimConfig::new(), dim, fact, CodeAssignment::Sequential)?;
            let (_, report) = q.join().map_err(|e| e.to_string())?;
            cycles.push(report.total_cycles);
            probes.push(report.pipeline.probes_issued);
        }
        ensure(cycles[3] <= cycles[0], || format!("seed {seed}: cycles {cycles:?}"))?;
        ensure(probes.windows(2).all(|p| p[1] <= p[0]), || format!("seed {seed}: probes {probes:?}"))?;
        lines.push(format!("{cycles:?}"));
    }
    Ok(format!("cycles over s=0,0.5,1.5,2: {}", lines.join(" ")))
}

fn ac4() -> Outcome {
    let w = WorkloadSpec::ssb(0.01, 1).generate().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for name in ["part", "supplier", "customer"] {
        let (dim, fact) = w.join_columns(w.join(name).unwrap()).unwrap();
        let mut lat = Vec::new();
        for t_cmp in 0..=4 {
            let mut cfg = SimConfig::new();
            cfg.timing.t_cmp = t_cmp;
            let q = engine(cfg, dim, fact, CodeAssignment::Sequential)?;
            lat.push(q.join().map_err(|e| e.to_string())?.1.total_cycles);
        }
        ensure(lat.windows(2).all(|p| p[0] <= p[1]), || format!("{name}: {lat:?}"))?;
        let (d01, d34) = (lat[1] - lat[0], lat[4] - lat[3]);
        ensure(d34 <= d01, || format!("{name}: 3->4 adds {d34}, 0->1 adds {d01}"))?;
        let pct = |t: usize| 100.0 * (lat[t] - lat[0]) as f64 / lat[0] as f64;
        notes.push(format!("{name} +{:.1}% at 1, +{:.1}% at 4", pct(1), pct(4)));
    }
    Ok(notes.join(", "))
}

fn ac5() -> Outcome {
    let mut notes = Vec::new();
    for sf in [0.01, 0.1] {
        let w = WorkloadSpec::ssb(sf, 1).generate().map_err(|e| e.to_string())?;
        let r = compute_data_overhead(&w, &SimConfig::new()).map_err(|e| e.to_string())?;
        let pct = 100.0 * r.total_bytes as f64 / r.raw_bytes as f64;
        ensure((4.0..=10.0).contains(&pct), || format!("sf {sf}: {pct:.2}%"))?;
        notes.push(format!("sf {sf}: {pct:.2}% ({} of {} bytes)", r.total_bytes, r.raw_bytes));
    }
    Ok(notes.join(", "))
}

fn ac6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cfg = SimConfig::new();
    cfg.rlu.key_buffer_capacity = 1 << 20;
    let window = cfg.rlu.coalesce_window as usize;
    let (mut suppressed, mut reissued) = (0u64, 0u64);
    for case in 0..300 {
        let alphabet = rng.gen_range(2..=64u64);
        let len = rng.gen_range(1..=1500usize);
        let stream: Vec<u64> = (0..len).map(|_| rng.gen_range(0..alphabet)).collect();
        let dim: Vec<u64> = (0..alphabet).collect();
        let q = engine(cfg, &dim, &stream, CodeAssignment::Sequential)?;
        let state = q.state().unwrap();
        let rank = &state.ranks[0];
        let mut rec = Recorder::with_timeline();
        let trace = run_join_stream(&rank.codes, state, rank, &cfg, &mut rec).map_err(|e| e.to_string())?.1;
        let probed: BTreeSet<u64> = trace.timeline.iter().filter(|s| s.stage == 3).map(|s| s.item).collect();
        ensure(probed.len() as u64 == trace.probes_issued, || format!("case {case}: timeline and counter disagree"))?;

        let mut last: BTreeMap<u64, usize> = BTreeMap::new();
        for (i, &k) in stream.iter().enumerate() {
            let was_probed = probed.contains(&(i as u64));
            let oracle_fresh = !stream[i.saturating_sub(window)..i].contains(&k);
            ensure(was_probed == oracle_fresh, || format!("case {case} position {i}: window oracle disagrees"))?;
            if let Some(&prev) = last.get(&k) {
                if i - prev <= window {
                    ensure(!was_probed, || format!("case {case}: key {k} re-probed {} positions later", i - prev))?;
                    suppressed += 1;
                }
                let distinct: BTreeSet<u64> = stream[prev + 1..i].iter().copied().collect();
                if distinct.len() >= window {
                    ensure(was_probed, || format!("case {case}: key {k} not re-probed after {} distinct keys", distinct.len()))?;
                    reissued += 1;
                }
            }
            last.insert(k, i);
        }
    }
    Ok(format!("300 random streams; {suppressed} in-window repeats suppressed, {reissued} out-of-window repeats probed"))
}

fn ac7() -> Outcome {
    let mut seen = BTreeSet::new();
    for sf in [0.001, 0.01, 0.1] {
        let w = WorkloadSpec::ssb(sf, 1).generate().map_err(|e| e.to_string())?;
        for join in &w.joins {
            let (dim, fact) = w.join_columns(join).unwrap();
            let q = engine(SimConfig::new(), dim, fact, CodeAssignment::Sequential)?;
            for literal in [dim[0], dim[dim.len() / 2], u64::MAX - 1] {
                let (rows, cost) = q.select_where_eq(literal).map_err(|e| e.to_string())?;
                let expect = dim.iter().filter(|&&k| k == literal).count();
                ensure(rows.len() == expect, || format!("sf {sf} {}: {} rows for {literal}", join.name, rows.len()))?;
                seen.insert(cost.cycles);
            }
        }
    }
    ensure(seen.len() == 1, || format!("costs differ: {seen:?}"))?;
    Ok(format!("{} cycles at sf 0.001, 0.01 and 0.1 on every join", seen.first().unwrap()))
}

fn ac8(corpus: &CorpusResult) -> Outcome {
    if let Some(first) = corpus.structural_failures.first() {
        return Err(format!("{} failures, first: {first}", corpus.structural_failures.len()));
    }
    Ok(format!("all four invariants hold on {} built joins", corpus.joins))
}

fn ac9() -> Outcome {
    let mut worst = 0;
    for t_cmp in 0..=4u32 {
        let mut cfg = SimConfig::new();
        cfg.timing.t_cmp = t_cmp;
        cfg.rlu.key_buffer_capacity = 1 << 24;
        let t = &cfg.timing;
        let burst = u64::from(t.burst_cycles);
        let host = burst + u64::from(t.host_transfer_cycles);
        let cold = u64::from(t.t_rcd + t.t_cas);
        let hit = u64::from(t.t_cas);
        let fill = (cold + burst) + 1 + (cold + u64::from(t_cmp) + burst) + host;
        let max_stage = (hit + u64::from(t_cmp) + burst).max(host).max(1);
        for n in [1u64, 10, 1000] {
            // sixteen keys in one bucket, cycled: all row hits, nothing in window
            let dim: Vec<u64> = (0..16).collect();
            let fact: Vec<u64> = (0..n).map(|i| i % 16).collect();
            let q = engine(cfg, &dim, &fact, CodeAssignment::Sequential)?;
            ensure(q.state().unwrap().dict.index_bits() == 0, || "keys spread over buckets".into())?;
            let (_, r) = q.join().map_err(|e| e.to_string())?;
            let p = &r.pipeline;
            ensure(p.probes_coalesced == 0 && p.row_hits == n - 1, || format!("n {n}: not an all-hit run"))?;
            let expect = fill + (n - 1) * max_stage;
            let diff = r.total_cycles.abs_diff(expect);
            ensure(diff <= 1, || format!("t_cmp {t_cmp} n {n}: {} vs {expect}", r.total_cycles))?;
            worst = worst.max(diff);
        }
    }
    Ok(format!("n = 1, 10, 1000 at t_cmp 0..4, max deviation {worst} cycles"))
}

fn ac10() -> Outcome {
    let mut runs = 0;
    let mut records = 0;
    let mut check = |cfg: SimConfig, dim: &[u64], fact: &[u64]| -> Result<(), String> {
        let q = engine(cfg, dim, fact, CodeAssignment::Sequential)?;
        let out = q
            .join_with(JoinOptions {
                record_accesses: true,
                record_timeline: false,
            })
            .map_err(|e| e.to_string())?;
        let text = write_trace(&out.accesses, &cfg.geometry);
        let parsed = parse_trace(&text, &cfg.geometry).map_err(|e| e.to_string())?;
        let replayed = replay_join(&parsed, &cfg).map_err(|e| e.to_string())?;
        ensure(replayed == out.report.total_cycles, || {
            format!("replay {replayed} vs run {}", out.report.total_cycles)
        })?;
        runs += 1;
        records += parsed.len();
        Ok(())
    };
    for ranks in [1u32, 2, 4, 8] {
        for s in [0.0, 1.5] {
            let w = WorkloadSpec::synthetic(5000, 4, s, u64::from(ranks)).generate().map_err(|e| e.to_string())?;
            let (dim, fact) = w.join_columns(w.default_join()).unwrap();
            let mut cfg = SimConfig::new();
            cfg.ranks = ranks;
            check(cfg, dim, fact)?;
            cfg.rlu.key_buffer_capacity = 200;
            cfg.timing.t_cmp = 3;
            check(cfg, dim, fact)?;
        }
        let w = WorkloadSpec::ssb(0.01, 3).generate().map_err(|e| e.to_string())?;
        for join in &w.joins {
            let (dim, fact) = w.join_columns(join).unwrap();
            let mut cfg = SimConfig::new();
            cfg.ranks = ranks;
            cfg.geometry.rows_per_subarray = 16;
            check(cfg, dim, fact)?;
        }
    }
    check(SimConfig::new(), &[1, 2], &[])?;
    Ok(format!("{runs} runs, {records} records replayed exactly"))
}

fn main() {
    let started = Instant::now();
    let corpus = run_corpus();
    let corpus_seconds = started.elapsed().as_secs_f64();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("AC1 join oracle equivalence", Box::new(|| ac1(&corpus, corpus_seconds))),
        ("AC2 constant-time probe", Box::new(ac2)),
        ("AC3 skew resilience", Box::new(ac3)),
        ("AC4 t_CMP sensitivity shape", Box::new(ac4)),
        ("AC5 data overhead ratio", Box::new(ac5)),
        ("AC6 coalescing guarantee", Box::new(ac6)),
        ("AC7 select_where_eq constant cost", Box::new(ac7)),
        ("AC8 structural invariants", Box::new(|| ac8(&corpus))),
        ("AC9 pipeline steady state", Box::new(ac9)),
        ("AC10 trace self-consistency", Box::new(ac10)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
