use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{JoinSpec, Table};
use crate::error::{Error, Result};

/// Days in the date dimension, starting 1992-01-01.
pub const DATE_ROWS: u64 = 2556;

const FIRST_DAY: i64 = 8035; // 1992-01-01 as days since 1970-01-01

// fixed-width row sizes of the uncompressed text tables
const LINEORDER_BYTES: u32 = 82;
const CUSTOMER_BYTES: u32 = 116;
const PART_BYTES: u32 = 98;
const SUPPLIER_BYTES: u32 = 106;
const DATE_BYTES: u32 = 91;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsbOptions {
    pub supplier_run_length: u32,
    pub miss_rate: f64,
}

impl Default for SsbOptions {
    fn default() -> Self {
        Self {
            supplier_run_length: 1,
            miss_rate: 0.0,
        }
    }
}

/// Proleptic Gregorian (year, month, day) of a day count since 1970-01-01.
pub fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

fn rows(base: f64, sf: f64, table: &str) -> Result<u64> {
    let n = libm::round(base * sf);
    if n < 1.0 {
        return Err(Error::Domain(format!(
            "scale factor {sf} leaves table {table} empty"
        )));
    }
    Ok(n as u64)
}

pub(super) fn joins() -> Vec<JoinSpec> {
    vec![
        JoinSpec::new("part", ("part", "p_partkey"), ("lineorder", "lo_partkey")),
        JoinSpec::new("supplier", ("supplier", "s_suppkey"), ("lineorder", "lo_suppkey")),
        JoinSpec::new("customer", ("customer", "c_custkey"), ("lineorder", "lo_custkey")),
        JoinSpec::new("date", ("date", "d_datekey"), ("lineorder", "lo_orderdate")),
    ]
}

struct ForeignKey {
    domain: u64,
    miss_rate: f64,
}

impl ForeignKey {
    /// Uniform key in `1..=domain`, or with probability `miss_rate` one
    /// just above the domain.
    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        if self.miss_rate > 0.0 && rng.gen::<f64>() < self.miss_rate {
            self.domain + 1 + rng.gen_range(0..self.domain)
        } else {
            rng.gen_range(1..=self.domain)
        }
    }
}

/// Rows per table at a scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsbRowCounts {
    pub lineorder: u64,
    pub customer: u64,
    pub part: u64,
    pub supplier: u64,
    pub date: u64,
}

pub fn ssb_row_counts(sf: f64) -> Result<SsbRowCounts> {
    if !(sf > 0.0 && sf.is_finite()) {
        return Err(Error::Domain(format!("scale factor {sf} must be > 0")));
    }
    Ok(SsbRowCounts {
        lineorder: rows(6_000_000.0, sf, "lineorder")?,
        customer: rows(30_000.0, sf, "customer")?,
        part: rows(200_000.0, sf, "part")?,
        supplier: rows(2_000.0, sf, "supplier")?,
        date: DATE_ROWS,
    })
}

/// Star schema with lineorder, customer, part, supplier and date, all
/// dimension sizes linear in `sf` except date.
pub fn gen_ssb_like(sf: f64, seed: u64, opts: &SsbOptions) -> Result<Vec<Table>> {
    let counts = ssb_row_counts(sf)?;
    let (n_lo, n_cust, n_part, n_supp) =
        (counts.lineorder, counts.customer, counts.part, counts.supplier);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let date_keys: Vec<u64> = (0..DATE_ROWS as i64)
        .map(|i| {
            let (y, m, d) = civil_from_days(FIRST_DAY + i);
            y as u64 * 10_000 + u64::from(m) * 100 + u64::from(d)
        })
        .collect();
    let date = Table::new("date", DATE_BYTES)
        .with_column("d_datekey", date_keys.clone())
        .with_column("d_year", date_keys.iter().map(|k| k / 10_000).collect())
        .with_column("d_monthnuminyear", date_keys.iter().map(|k| k / 100 % 100).collect());

    let customer = {
        let city: Vec<u64> = (0..n_cust).map(|_| rng.gen_range(0..250)).collect();
        Table::new("customer", CUSTOMER_BYTES)
            .with_column("c_custkey", (1..=n_cust).collect())
            .with_column("c_nation", city.iter().map(|c| c / 10).collect())
            .with_column("c_region", city.iter().map(|c| c / 50).collect())
            .with_column("c_city", city)
    };
    let part = {
        let brand: Vec<u64> = (0..n_part).map(|_| rng.gen_range(0..1000)).collect();
        Table::new("part", PART_BYTES)
            .with_column("p_partkey", (1..=n_part).collect())
            .with_column("p_mfgr", brand.iter().map(|b| b / 200 + 1).collect())
            .with_column("p_category", brand.iter().map(|b| b / 40 + 1).collect())
            .with_column("p_brand1", brand.iter().map(|b| b + 1).collect())
    };
    let supplier = {
        let city: Vec<u64> = (0..n_supp).map(|_| rng.gen_range(0..250)).collect();
        Table::new("supplier", SUPPLIER_BYTES)
            .with_column("s_suppkey", (1..=n_supp).collect())
            .with_column("s_nation", city.iter().map(|c| c / 10).collect())
            .with_column("s_region", city.iter().map(|c| c / 50).collect())
            .with_column("s_city", city)
    };

    let fk = |domain| ForeignKey {
        domain,
        miss_rate: opts.miss_rate,
    };
    let (cust_fk, part_fk, supp_fk) = (fk(n_cust), fk(n_part), fk(n_supp));
    let run = u64::from(opts.supplier_run_length.max(1));
    let n = n_lo as usize;
    let mut lo = [(); 8].map(|_| Vec::with_capacity(n));
    let (mut orderkey, mut supp, mut run_left) = (0u64, 0u64, 0u64);
    while lo[0].len() < n {
        orderkey += 1;
        let lines = rng.gen_range(1..=7).min(n - lo[0].len());
        let cust = cust_fk.draw(&mut rng);
        let orderdate = if opts.miss_rate > 0.0 && rng.gen::<f64>() < opts.miss_rate {
            30_000_101 + rng.gen_range(0..DATE_ROWS)
        } else {
            date_keys[rng.gen_range(0..date_keys.len())]
        };
        for line in 1..=lines as u64 {
            if run_left == 0 {
                supp = supp_fk.draw(&mut rng);
                run_left = run;
            }
            run_left -= 1;
            let quantity = rng.gen_range(1..=50u64);
            let row = [
                orderkey,
                line,
                cust,
                part_fk.draw(&mut rng),
                supp,
                orderdate,
                quantity,
                quantity * rng.gen_range(90_000..=110_000u64),
            ];
            for (col, v) in lo.iter_mut().zip(row) {
                col.push(v);
            }
        }
    }
    let [orderkey, linenumber, custkey, partkey, suppkey, orderdate, quantity, revenue] = lo;
    let lineorder = Table::new("lineorder", LINEORDER_BYTES)
        .with_column("lo_orderkey", orderkey)
        .with_column("lo_linenumber", linenumber)
        .with_column("lo_custkey", custkey)
        .with_column("lo_partkey", partkey)
        .with_column("lo_suppkey", suppkey)
        .with_column("lo_orderdate", orderdate)
        .with_column("lo_quantity", quantity)
        .with_column("lo_revenue", revenue);

    Ok(vec![lineorder, customer, part, supplier, date])
}
