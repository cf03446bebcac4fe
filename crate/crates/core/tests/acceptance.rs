//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use dynlogit::draws::{derive_seed, rng_from_seed};
use dynlogit::exact_linalg::Rational;
use dynlogit::experiments::{diagonal_check, lemma1_experiment, poly_report};
use dynlogit::gmm::{monte_carlo, Search, SimConfig};
use dynlogit::model::ModelSpec;
use dynlogit::moments::{
    covariate_pattern_experiment, dimension_report, expected_dimension, moment_basis, random_lag_coefficients,
    sampled_span_rank, span_rank, validate_basis, Budget, CovariatePattern, Covariates, DimsCell, DimsConfig,
};
use dynlogit::poly::coeff_matrix_rank;
use rayon::prelude::*;

const SEED: u64 = 20_240_917;

type Check = std::result::Result<String, String>;

/// Parameter points whose bases are re-validated on fresh fixed effects.
type Cell = (String, ModelSpec, Vec<Rational>, Vec<Rational>);
static BASIS_CELLS: Mutex<Vec<Cell>> = Mutex::new(Vec::new());

fn remember(label: String, spec: &ModelSpec, c: &[Rational], b: &[Rational]) {
    BASIS_CELLS.lock().unwrap().push((label, spec.clone(), c.to_vec(), b.to_vec()));
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ones(n: usize) -> Vec<Rational> {
    vec![Rational::from_integer(1.into()); n]
}

fn dims_cells(p: usize, horizons: std::ops::RangeInclusive<usize>, cov: Covariates, seed: u64, label: &str) -> Check {
    let cells = horizons.map(|t| DimsCell { p, horizon: t, covariates: cov }).collect();
    let rep = dimension_report(&DimsConfig { cells, seed, rows: None }).map_err(|e| e.to_string())?;
    let mut dims = Vec::new();
    for r in &rep.rows {
        ensure(r.matches && r.stable, || {
            format!("{label} p={} T={} init={}: dim {} expected {} stable {}", r.p, r.horizon, r.init, r.dim, r.expected, r.stable)
        })?;
        let spec = ModelSpec::new(r.p, r.horizon, &r.init.bytes().map(|b| b - b'0').collect::<Vec<_>>()).unwrap();
        remember(format!("{label} T={} init={}", r.horizon, r.init), &spec, &r.c, &r.b);
        if r.init.chars().all(|ch| ch == '0') {
            dims.push(r.dim);
        }
    }
    Ok(format!("{label} dims {dims:?}"))
}

fn criterion_1() -> Check {
    let a = dims_cells(1, 2..=8, Covariates::Beta0, SEED, "beta0")?;
    let b = dims_cells(1, 2..=8, Covariates::Generic, SEED + 1, "generic")?;
    // the polynomial route is exact; repeat b = 1 by sampling over seeds too
    for t in 2..=8 {
        for y0 in 0..2u8 {
            let spec = ModelSpec::new(1, t, &[y0]).unwrap();
            let c = random_lag_coefficients(1, &mut rng_from_seed(derive_seed(SEED, t as u64)));
            let cert = sampled_span_rank(&spec, &c, &ones(t), &Budget::for_spec(&spec, &ones(t), SEED)).map_err(|e| e.to_string())?;
            ensure(cert.stable_across_trials && cert.claimed_rank == 2 * t, || {
                format!("sampled beta0 T={t} y0={y0}: rank {} stable {}", cert.claimed_rank, cert.stable_across_trials)
            })?;
        }
    }
    Ok(format!("{a}; {b}"))
}

fn criterion_2() -> Check {
    let mut ranks = Vec::new();
    for t in 2..=7 {
        for y0 in 0..2u8 {
            let spec = ModelSpec::new(1, t, &[y0]).unwrap();
            let c = random_lag_coefficients(1, &mut rng_from_seed(derive_seed(SEED ^ 2, (t * 2 + y0 as usize) as u64)));
            let r = poly_report(&spec, &c).map_err(|e| e.to_string())?;
            ensure(r.rank == 2 * t, || format!("T={t} y0={y0}: coefficient rank {} != {}", r.rank, 2 * t))?;
            ensure(r.degrees.iter().all(|d| d.is_none_or(|d| d < 2 * t)), || format!("T={t}: degree above {}", 2 * t - 1))?;
            if y0 == 0 {
                ranks.push(r.rank);
            }
        }
    }
    Ok(format!("coefficient ranks {ranks:?}"))
}

fn criterion_3() -> Check {
    let mut summary = Vec::new();
    for t in 2..=6 {
        let r = lemma1_experiment(t, 100, 20, derive_seed(SEED ^ 3, t as u64)).map_err(|e| e.to_string())?;
        ensure(r.nonzero_dets == 100, || format!("T={t}: {} of 100 determinants nonzero", r.nonzero_dets))?;
        ensure(r.full_rank_selections == 20, || format!("T={t}: {} of 20 selections full rank", r.full_rank_selections))?;
        summary.push(format!("T={t} 100/100 20/20"));
    }
    Ok(summary.join(", "))
}

fn criterion_4() -> Check {
    let a = dims_cells(2, 3..=5, Covariates::Beta0, SEED ^ 4, "beta0")?;
    for t in 3..=5 {
        for init in ModelSpec::all_histories(2) {
            let spec = ModelSpec::new(2, t, &init).unwrap();
            let c = random_lag_coefficients(2, &mut rng_from_seed(derive_seed(SEED ^ 4, t as u64)));
            let sampled = sampled_span_rank(&spec, &c, &ones(t), &Budget::for_spec(&spec, &ones(t), SEED)).map_err(|e| e.to_string())?;
            ensure(sampled.stable_across_trials && sampled.claimed_rank == 3 * t - 2, || {
                format!("sampled T={t} init={init:?}: rank {}", sampled.claimed_rank)
            })?;
        }
        for y0 in 0..2u8 {
            let spec = ModelSpec::new(2, t, &[y0, 0]).unwrap();
            let c = random_lag_coefficients(2, &mut rng_from_seed(derive_seed(SEED ^ 44, t as u64)));
            let cert = coeff_matrix_rank(&spec, &c).map_err(|e| e.to_string())?;
            ensure(cert.claimed_rank == 3 * t - 2, || format!("polynomialized T={t} y0={y0}: rank {}", cert.claimed_rank))?;
        }
    }
    Ok(a)
}

fn criterion_5() -> Check {
    dims_cells(2, 3..=5, Covariates::Generic, SEED ^ 5, "generic")
}

fn criterion_6() -> Check {
    let mut out = Vec::new();
    for t in 3..=5 {
        let rep = covariate_pattern_experiment(t, &CovariatePattern::tail_equal(t), derive_seed(SEED ^ 6, t as u64)).map_err(|e| e.to_string())?;
        for row in &rep.rows {
            let init: Vec<u8> = row.init.bytes().map(|b| b - b'0').collect();
            remember(format!("pattern T={t} init={}", row.init), &ModelSpec::new(2, t, &init).unwrap(), &row.c, &row.b_pattern);
            if t == 3 {
                ensure((row.pattern_dim, row.generic_dim, row.surplus) == (1, 0, 1), || {
                    format!("T=3 init={}: pattern dim {} generic {}", row.init, row.pattern_dim, row.generic_dim)
                })?;
            } else {
                ensure(row.surplus >= t - 2, || format!("T={t} init={}: surplus {} < {}", row.init, row.surplus, t - 2))?;
            }
        }
        let surpluses: Vec<usize> = rep.rows.iter().map(|r| r.surplus).collect();
        out.push(format!("T={t} surplus {surpluses:?}"));
    }
    Ok(out.join(", "))
}

fn criterion_7() -> Check {
    let mut dims = Vec::new();
    for t in 2..=6 {
        let spec = ModelSpec::static_model(t).unwrap();
        let cert = span_rank(&spec, &[], &ones(t), &Budget::for_spec(&spec, &ones(t), derive_seed(SEED ^ 7, t as u64))).map_err(|e| e.to_string())?;
        let dim = spec.n_outcomes() - cert.claimed_rank;
        ensure(cert.stable_across_trials && cert.claimed_rank == t + 1, || format!("T={t}: rank {}", cert.claimed_rank))?;
        ensure(dim == expected_dimension(0, t, Covariates::Beta0), || format!("T={t}: dim {dim}"))?;
        remember(format!("static T={t}"), &spec, &[], &ones(t));
        dims.push(dim);
    }
    ensure(dims[0] == 1, || "T=2 should leave exactly one moment function".into())?;
    Ok(format!("dims {dims:?}"))
}

fn criterion_8() -> Check {
    let cells = BASIS_CELLS.lock().unwrap().clone();
    ensure(!cells.is_empty(), || "no bases recorded by earlier criteria".into())?;
    let results: Vec<std::result::Result<usize, String>> = cells
        .par_iter()
        .enumerate()
        .map(|(k, (label, spec, c, b))| {
            let budget = Budget::for_spec(spec, b, derive_seed(SEED ^ 8, k as u64));
            let mb = moment_basis(spec, c, b, &budget).map_err(|e| format!("{label}: {e}"))?;
            let v = validate_basis(&mb, 50, derive_seed(SEED ^ 88, k as u64)).map_err(|e| format!("{label}: {e}"))?;
            ensure(v.max_abs_violation == "0/1" && v.columns_independent, || format!("{label}: nonzero residual"))?;
            Ok(mb.d)
        })
        .collect();
    let mut columns = 0;
    for r in results {
        columns += r?;
    }
    Ok(format!("{} bases, {columns} moment functions, all residuals exactly 0", cells.len()))
}

fn criterion_9() -> Check {
    let mut out = Vec::new();
    for p in 1..=2 {
        let rows = diagonal_check(p, 50, derive_seed(SEED ^ 9, p as u64)).map_err(|e| e.to_string())?;
        for r in &rows {
            ensure(r.passes(), || {
                format!("p={p} config {} T={} init={}: ranks {}/{} ratio rank1 {}", r.config, r.horizon, r.init, r.rank_pbar, r.rank_pbreve, r.ratio_rank1)
            })?;
        }
        out.push(format!("p={p} 50/50"));
    }
    Ok(out.join(", "))
}

fn criterion_10() -> Check {
    let cfg = SimConfig::ar1(500, 3, 0.5, SEED ^ 10);
    let mc = monte_carlo(&cfg, 200, &Search::default(), &[500, 2000]).map_err(|e| e.to_string())?;
    for r in &mc.rows {
        ensure(r.median_bias.abs() < 0.05, || format!("N={}: median bias {:.4}", r.n, r.median_bias))?;
        ensure(r.failures == 0, || format!("N={}: {} failed replications", r.n, r.failures))?;
    }
    let ratio = mc.rmse_ratio.ok_or("no RMSE ratio")?;
    ensure((1.5..=2.7).contains(&ratio), || format!("RMSE ratio {ratio:.3} outside [1.5, 2.7]"))?;
    let rows: Vec<String> = mc
        .rows
        .iter()
        .map(|r| format!("N={} median bias {:+.4} rmse {:.4}", r.n, r.median_bias, r.rmse))
        .collect();
    Ok(format!("{}, RMSE ratio {ratio:.3}", rows.join(", ")))
}

fn main() {
    // `cargo test -- <filter>` passes extra arguments; this target has no
    // sub-tests, so ignore filters that name something else.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    type Criterion = (&'static str, Option<Duration>, fn() -> Check);
    let criteria: [Criterion; 10] = [
        ("AR(1) dimension law, T=2..8", Some(Duration::from_secs(120)), criterion_1),
        ("AR(1) polynomial route, T=2..7", Some(Duration::from_secs(30)), criterion_2),
        ("square lower-bound matrix, T=2..6", Some(Duration::from_secs(120)), criterion_3),
        ("AR(2) without covariates, T=3..5", Some(Duration::from_secs(120)), criterion_4),
        ("AR(2) generic covariates, T=3..5", Some(Duration::from_secs(120)), criterion_5),
        ("special covariate patterns, T=3..5", None, criterion_6),
        ("static model, T=2..6", Some(Duration::from_secs(10)), criterion_7),
        ("fresh fixed-effect validation", None, criterion_8),
        ("diagonal relation, p=1,2", None, criterion_9),
        ("Monte Carlo GMM", Some(Duration::from_secs(300)), criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = f();
        let elapsed = start.elapsed();
        if let (Ok(msg), Some(limit)) = (&result, limit) {
            if elapsed > *limit {
                result = Err(format!("{msg}; took {elapsed:.1?}, limit {limit:?}"));
            }
        }
        let line = match &result {
            Ok(msg) => format!("PASS [{}] {name} ({elapsed:.1?}): {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                format!("FAIL [{}] {name} ({elapsed:.1?}): {msg}", k + 1)
            }
        };
        println!("{line}");
        let _ = std::io::stdout().flush();
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
