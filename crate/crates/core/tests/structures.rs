use std::collections::{BTreeMap, HashMap};

use pimjoin_core::search::Payload;
use pimjoin_core::structures::{
    build_dictionary, build_hash_structures, compute_data_overhead, populate_pim, split_code,
    CodeAssignment, Dictionary, DictionaryParams,
};
use pimjoin_core::workload::WorkloadSpec;
use pimjoin_core::SimConfig;

fn dict(keys: &[u64]) -> Dictionary {
    build_dictionary(keys, &SimConfig::new(), CodeAssignment::Sequential).unwrap()
}

#[test]
fn algorithm_hand_trace() {
    let (a, b) = (41u64, 42u64);
    let d = dict(&[a, a, b]);
    let (ht, dup) = build_hash_structures([(a, 0), (a, 1), (b, 2)], &d, &SimConfig::new()).unwrap();
    let pa = ht.lookup(d.encode(a).unwrap()).unwrap().unwrap();
    assert!(pa.dup);
    assert_eq!(dup.get(pa.value).unwrap(), &[0, 1]);
    assert_eq!(
        ht.lookup(d.encode(b).unwrap()).unwrap(),
        Some(Payload { value: 2, dup: false })
    );
}

#[test]
fn unique_input_has_no_lists() {
    let keys: Vec<u64> = (0..500).map(|i| i * 3).collect();
    let d = dict(&keys);
    let rows = keys.iter().enumerate().map(|(i, &k)| (k, i as u32));
    let (_, dup) = build_hash_structures(rows, &d, &SimConfig::new()).unwrap();
    assert!(dup.is_empty());
}

#[test]
fn remap_moves_third_key_one_code_up() {
    // capacity 2, identity codes 0, 4, 8 all in bucket 0 of 4
    let p = DictionaryParams {
        bucket_capacity: 2,
        headroom_pct: 100,
        available_rows: 4,
        assignment: CodeAssignment::Identity { code_bits: 16 },
    };
    let d = Dictionary::build(&[0, 4, 8, 13, 14], &p).unwrap();
    assert_eq!(d.index_bits(), 2);
    assert_eq!(d.encode(8), Some(9));
    assert_eq!(split_code(9, 2), (1, 2));
}

/// Rows an independent writer touches: every written bucket, then the fact
/// rows, each charged its row access plus its bursts.
fn population_oracle(bucket_ids: &[u32], fact_len: u64, key_bits: u32, cfg: &SimConfig) -> u64 {
    let g = &cfg.geometry;
    let t = &cfg.timing;
    let host = u64::from(t.burst_cycles + t.host_transfer_cycles);
    let mut open: HashMap<(bool, u32, u32), u32> = HashMap::new();
    let mut charge = |pim: bool, index: u64| {
        let bank = (index % u64::from(g.banks_per_chip)) as u32;
        let rest = index / u64::from(g.banks_per_chip);
        let sub = (rest % u64::from(g.subarrays_per_bank)) as u32;
        let row = (rest / u64::from(g.subarrays_per_bank)) as u32;
        match open.insert((pim, bank, sub), row) {
            None => u64::from(t.t_rcd + t.t_cas),
            Some(r) if r == row => u64::from(t.t_cas),
            Some(_) => u64::from(t.t_rp + t.t_rcd + t.t_cas),
        }
    };
    let row_bursts = u64::from(g.columns_per_row / g.burst_length);
    let mut cycles = 0;
    for &b in bucket_ids {
        cycles += charge(true, u64::from(b)) + row_bursts * host;
    }
    let per_burst = 15 * 64 / u64::from(key_bits);
    let per_row = per_burst * row_bursts;
    let mut left = fact_len;
    let mut row = 0;
    while left > 0 {
        let here = left.min(per_row);
        cycles += charge(false, row) + here.div_ceil(per_burst) * host;
        left -= here;
        row += 1;
    }
    cycles
}

#[test]
fn population_matches_independent_writer() {
    let cfg = SimConfig::new();
    for (dim_n, fact_n) in [(10usize, 0usize), (2000, 5000), (20_000, 150_000)] {
        let dim: Vec<u64> = (0..dim_n as u64).map(|i| i * 7 + 1).collect();
        let fact: Vec<u64> = (0..fact_n).map(|i| dim[(i * 13) % dim_n]).collect();
        let d = dict(&dim);
        let rows = dim.iter().enumerate().map(|(i, &k)| (k, i as u32));
        let (ht, dup) = build_hash_structures(rows, &d, &cfg).unwrap();
        let buckets: Vec<u32> = ht.rows().map(|r| r.bucket_id()).collect();
        let key_bits = d.code_bits();
        let (_, report) = populate_pim(ht, dup, d, &fact, &cfg).unwrap();
        assert_eq!(
            report.cycles,
            population_oracle(&buckets, fact_n as u64, key_bits, &cfg),
            "dim {dim_n} fact {fact_n}"
        );
    }
}

#[test]
fn population_grows_linearly_with_fact_rows() {
    let cfg = SimConfig::new();
    let dim: Vec<u64> = (0..1000).collect();
    let d = dict(&dim);
    let per_row = d.code_bits();
    let rows_of = |n: usize| {
        let fact: Vec<u64> = (0..n).map(|i| (i % 1000) as u64).collect();
        let rows = dim.iter().enumerate().map(|(i, &k)| (k, i as u32));
        let (ht, dup) = build_hash_structures(rows, &d, &cfg).unwrap();
        populate_pim(ht, dup, d.clone(), &fact, &cfg).unwrap().1.cycles
    };
    let keys_per_row = (960 / per_row as usize) * 128;
    let base = rows_of(0);
    let one = rows_of(keys_per_row * 4) - base;
    let two = rows_of(keys_per_row * 8) - base;
    assert_eq!(two, 2 * one);
}

#[test]
fn generated_workloads_keep_invariants() {
    let cfg = SimConfig::new();
    let specs = [
        WorkloadSpec::ssb(0.001, 1),
        WorkloadSpec::synthetic(3000, 2, 1.5, 2),
        WorkloadSpec::synthetic(3000, 1, 0.0, 3),
    ];
    for spec in specs {
        let w = spec.generate().unwrap();
        for join in &w.joins {
            let (dim, _) = w.join_columns(join).unwrap();
            for assignment in [CodeAssignment::Sequential, CodeAssignment::Identity { code_bits: 32 }] {
                let d = build_dictionary(dim, &cfg, assignment).unwrap();
                d.validate().unwrap();
                for &k in dim {
                    assert_eq!(d.decode(d.encode(k).unwrap()), Some(k));
                }
                let rows = dim.iter().enumerate().map(|(i, &k)| (k, i as u32));
                let (ht, dup) = build_hash_structures(rows, &d, &cfg).unwrap();
                ht.validate().unwrap();
                dup.validate().unwrap();
                let mut multimap: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
                for (i, &k) in dim.iter().enumerate() {
                    multimap.entry(k).or_default().push(i as u32);
                }
                let mut seen = 0;
                for (code, payload) in ht.entries() {
                    let key = d.decode(code).unwrap();
                    let rows = if payload.dup {
                        dup.get(payload.value).unwrap().to_vec()
                    } else {
                        vec![payload.value]
                    };
                    assert_eq!(&rows, &multimap[&key]);
                    seen += 1;
                }
                assert_eq!(seen, multimap.len());
            }
        }
    }
}

#[test]
fn overhead_parts_add_up() {
    let cfg = SimConfig::new();
    let w = WorkloadSpec::synthetic(5000, 4, 0.5, 9).generate().unwrap();
    let r = compute_data_overhead(&w, &cfg).unwrap();
    let sum: u64 = r.per_join.iter().map(|(_, p)| p.total()).sum();
    assert_eq!(sum, r.total_bytes);
    assert_eq!(
        r.parts.dictionary + r.parts.fact_codes + r.parts.hash_table + r.parts.duplication,
        r.total_bytes
    );
    assert_eq!(r.raw_bytes, 8 * (5000 + 20_000));
}
