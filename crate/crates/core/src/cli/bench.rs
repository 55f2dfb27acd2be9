//! Parameter and forward-time comparison: rank-one ensemble vs `K` dense nets vs one dense net.

use std::fmt::Write as _;
use std::time::Instant;

use crate::dense::DenseNet;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::rank_one::init_network;

pub const BENCH_HEADER: &str =
    "K,mimo_params_rel_single,naive_params_rel_single,mimo_time_rel_single,naive_time_rel_single,mimo_time_rel_naive";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub k_list: Vec<usize>,
    /// Full layer widths `[input, hidden..., 1]`.
    pub dims: Vec<usize>,
    /// Rows per member.
    pub batch: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            k_list: vec![1, 5, 10, 20],
            dims: vec![256, 256, 256, 256, 1],
            batch: 256,
            repeats: 31,
            warmup: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub mimo_params_rel_single: f64,
    pub naive_params_rel_single: f64,
    pub mimo_time_rel_single: f64,
    pub naive_time_rel_single: f64,
    pub mimo_time_rel_naive: f64,
    /// Median seconds per forward.
    pub mimo_secs: f64,
    pub naive_secs: f64,
    pub single_secs: f64,
}

fn median_secs<F: FnMut()>(warmup: usize, repeats: usize, mut f: F) -> f64 {
    for _ in 0..warmup {
        f();
    }
    let mut t: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.repeats == 0 || config.batch == 0 || config.k_list.is_empty() {
        return Err(Error::Config("bench needs repeats, batch and at least one K".into()));
    }
    let mut rng = RngStream::new(config.seed);
    let d_in = config.dims[0];
    let mut rows = Vec::with_capacity(config.k_list.len());
    for &k in &config.k_list {
        let net = init_network(&config.dims, k, &mut rng)?;
        let members: Vec<DenseNet> = (0..k).map(|m| DenseNet::from_member(&net, m)).collect::<Result<_>>()?;
        let single = &members[0];
        let x = Matrix::from_vec(
            config.batch * k,
            d_in,
            (0..config.batch * k * d_in).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        )?;
        let blocks: Vec<Matrix> = (0..k)
            .map(|m| {
                let rows = &x.as_slice()[m * config.batch * d_in..(m + 1) * config.batch * d_in];
                Matrix::from_vec(config.batch, d_in, rows.to_vec()).expect("sized above")
            })
            .collect();
        let mimo = median_secs(config.warmup, config.repeats, || {
            std::hint::black_box(net.predict(&x).expect("shapes fixed"));
        });
        let naive = median_secs(config.warmup, config.repeats, || {
            for (m, b) in members.iter().zip(&blocks) {
                std::hint::black_box(m.predict(b).expect("shapes fixed"));
            }
        });
        let one = median_secs(config.warmup, config.repeats, || {
            std::hint::black_box(single.predict(&blocks[0]).expect("shapes fixed"));
        });
        let pc = net.param_count();
        rows.push(BenchRow {
            k,
            mimo_params_rel_single: pc.mimo_rel_single(),
            naive_params_rel_single: pc.naive_rel_single(),
            mimo_time_rel_single: mimo / one,
            naive_time_rel_single: naive / one,
            mimo_time_rel_naive: mimo / naive,
            mimo_secs: mimo,
            naive_secs: naive,
            single_secs: one,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            r.mimo_params_rel_single,
            r.naive_params_rel_single,
            r.mimo_time_rel_single,
            r.naive_time_rel_single,
            r.mimo_time_rel_naive
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_schema_and_param_ratios() {
        let cfg = BenchConfig {
            k_list: vec![1, 3],
            dims: vec![8, 16, 1],
            batch: 4,
            repeats: 3,
            warmup: 1,
            seed: 0,
        };
        let rows = run_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        // K = 1 carries only the fast-weight vectors on top of the dense net.
        let single = (8 * 16 + 16 + 16 + 1) as f64;
        assert!((rows[0].mimo_params_rel_single - (single + (8 + 16) as f64 + (16 + 1) as f64) / single).abs() < 1e-12);
        assert_eq!(rows[0].naive_params_rel_single, 1.0);
        assert_eq!(rows[1].naive_params_rel_single, 3.0);
        assert!(rows.iter().all(|r| r.mimo_time_rel_naive > 0.0));
        let csv = bench_csv(&rows);
        assert_eq!(csv.lines().next().unwrap(), BENCH_HEADER);
        assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 6));
    }

    #[test]
    fn rejects_empty_setups() {
        assert!(run_bench(&BenchConfig { repeats: 0, ..BenchConfig::default() }).is_err());
        assert!(run_bench(&BenchConfig { k_list: vec![], ..BenchConfig::default() }).is_err());
    }
}
