//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p skewbench --test acceptance` (add `--release` for
//! realistic timings). Exits non-zero if any criterion fails.

use std::cell::OnceCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewbench::checkpoint::Checkpoint;
use skewbench::config::{preset, ExperimentConfig, ImbalanceConfig, Method};
use skewbench::pipeline::{self, Prepared, Trained};
use skewbench::reports::{self, Metrics, OracleReport, RunInfo};
use skewbench::tables::{load_csv, read_features, read_trace};
use skewbench_core::boundary::{boundary_angle_2d, radial_derivative, rescale, rescale_factors};
use skewbench_core::data::{Dataset, ImbalanceKind, Split};
use skewbench_core::diagnostics::{cluster_stats, evaluate, gamma_sweep, oracle_finetune, spearman};
use skewbench_core::losses::{LossSpec, Objective};
use skewbench_core::model::Model;
use skewbench_core::numerics::{dot, norm, Matrix};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Option<Duration>, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

/// Runs shared by several criteria, trained on first use.
#[derive(Default)]
struct Runs {
    baseline: OnceCell<(Prepared, Trained)>,
}

fn lt100(method: Method, gamma: Option<f64>) -> ExperimentConfig {
    preset("synthetic-lt100").unwrap().with_method(method, gamma)
}

impl Runs {
    fn baseline(&self) -> Result<&(Prepared, Trained), String> {
        if self.baseline.get().is_none() {
            let run = pipeline::run(&lt100(Method::Baseline, None)).map_err(fail)?;
            let _ = self.baseline.set(run);
        }
        Ok(self.baseline.get().unwrap())
    }
}

fn counts_f64(counts: &[usize]) -> Vec<f64> {
    counts.iter().map(|&c| c as f64).collect()
}

// 1. Analytic gradients and the radial derivative against finite differences.

fn random_tiny(seed: u64) -> (Model, Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(2..5);
    let h = rng.random_range(2..6);
    let d = rng.random_range(2..5);
    let k = rng.random_range(2..5);
    let mut model = Model::init(p, &[h], d, k, seed).unwrap();
    for block in model.blocks_mut() {
        for v in block.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let n = rng.random_range(1..5);
    let xs = (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let ys = (0..n).map(|_| rng.random_range(0..k)).collect();
    (model, xs, ys)
}

fn batch_loss(model: &Model, objective: &Objective, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let recs: Vec<_> = xs.iter().map(|x| model.forward(x).unwrap()).collect();
    objective.batch(&recs, ys).unwrap().value
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn gradient_suite() -> Outcome {
    const H: f64 = 1e-5;
    let specs = [
        LossSpec::PlainCe,
        LossSpec::ReweightedCe,
        LossSpec::Focal { gamma: 2.0 },
        LossSpec::ClassBalancedCe { beta: 0.9 },
    ];
    let (mut worst, mut worst_radial, mut params) = (0.0f64, 0.0f64, 0usize);
    let models = 120u64;
    for seed in 0..models {
        let (model, xs, ys) = random_tiny(seed);
        let k = model.num_classes();
        let counts: Vec<usize> = (0..k).map(|c| 1 + 3 * (k - c)).collect();
        let objective = Objective::new(specs[seed as usize % specs.len()], &counts).map_err(fail)?;
        let recs: Vec<_> = xs.iter().map(|x| model.forward(x).unwrap()).collect();
        let batch = objective.batch(&recs, &ys).map_err(fail)?;
        let analytic = model
            .backward_from_logit_grads(&recs, &batch.logit_grads)
            .map_err(fail)?
            .blocks()
            .concat();
        let mut i = 0;
        for b in 0..model.blocks().len() {
            for j in 0..model.blocks()[b].len() {
                let (mut plus, mut minus) = (model.clone(), model.clone());
                plus.blocks_mut()[b][j] += H;
                minus.blocks_mut()[b][j] -= H;
                let numeric =
                    (batch_loss(&plus, &objective, &xs, &ys) - batch_loss(&minus, &objective, &xs, &ys)) / (2.0 * H);
                worst = worst.max(rel_err(analytic[i], numeric));
                i += 1;
            }
        }
        params += i;

        // Radial derivative of the mean class-j loss along w_k / ‖w_k‖.
        let j = ys[0];
        let class_xs: Vec<Vec<f64>> = xs.iter().zip(&ys).filter(|(_, &y)| y == j).map(|(x, _)| x.clone()).collect();
        let flat: Vec<f64> = class_xs.concat();
        let subset = Dataset::new(flat, vec![j; class_xs.len()], model.input_dim(), k, Split::Train).map_err(fail)?;
        let plain = Objective::new(LossSpec::PlainCe, &vec![1; k]).map_err(fail)?;
        for kk in 0..k {
            let analytic = radial_derivative(&model, &subset, j, kk).map_err(fail)?;
            let w = model.weight_vector(kk).to_vec();
            let unit: Vec<f64> = w.iter().map(|v| v / norm(&w)).collect();
            let moved = |t: f64| {
                let mut m = model.clone();
                for (v, u) in m.classifier_mut().row_mut(kk).iter_mut().zip(&unit) {
                    *v += t * u;
                }
                batch_loss(&m, &plain, &class_xs, subset.labels())
            };
            let numeric = (moved(1e-6) - moved(-1e-6)) / 2e-6;
            worst_radial = worst_radial.max((analytic - numeric).abs());
        }
    }
    check(
        worst <= 1e-4 && worst_radial <= 1e-5,
        format!(
            "{models} models, {params} parameters: max rel err {worst:.2e} (<= 1e-4), radial max abs err {worst_radial:.2e} (<= 1e-5)"
        ),
    )
}

// 2. Norm-frequency correlation.

fn norm_frequency(runs: &Runs) -> Outcome {
    let (_, trained) = runs.baseline()?;
    let rho = spearman(&counts_f64(&trained.class_counts), &trained.model.weight_norms()).ok_or("degenerate ranks")?;

    let mut balanced = lt100(Method::Baseline, None);
    balanced.imbalance = ImbalanceConfig {
        kind: ImbalanceKind::None,
        ratio: 1.0,
    };
    let (_, flat) = pipeline::run(&balanced).map_err(fail)?;
    let norms = flat.model.weight_norms();
    let max = norms.iter().cloned().fold(f64::MIN, f64::max);
    let min = norms.iter().cloned().fold(f64::MAX, f64::min);
    let ratio = max / min;
    check(
        rho >= 0.8 && ratio <= 1.3,
        format!("spearman(n, |w|) = {rho:.3} (>= 0.8); balanced max/min norm = {ratio:.3} (<= 1.3)"),
    )
}

// 3. Weight vector normalization holds at every epoch.

fn wvn_contract() -> Outcome {
    let (_, trained) = pipeline::run(&lt100(Method::WvnRs, Some(0.0))).map_err(fail)?;
    let worst = trained
        .trace
        .epochs
        .iter()
        .flat_map(|e| e.weight_norms.iter())
        .map(|n| (n - 1.0).abs())
        .fold(0.0, f64::max);
    let final_worst = trained.model.weight_norms().iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max);
    check(
        worst <= 1e-6 && final_worst <= 1e-6 && !trained.trace.epochs.is_empty(),
        format!(
            "{} epochs: max | |w| - 1 | = {worst:.2e} in trace, {final_worst:.2e} final (<= 1e-6)",
            trained.trace.epochs.len()
        ),
    )
}

// 4. Re-scaling identity, monotonicity and preference flips.

fn rs_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut identity_ok, mut monotone_ok) = (true, true);
    let (mut violations, mut flips) = (0usize, 0usize);
    let cases = 10_000;
    for _ in 0..cases {
        let k = rng.random_range(2..8);
        let d = rng.random_range(1..6);
        let counts: Vec<usize> = (0..k).map(|_| rng.random_range(1..2000)).collect();
        let gamma = rng.random_range(0.0..2.0);
        let w = Matrix::from_vec(k, d, (0..k * d).map(|_| rng.random_range(0.0..3.0)).collect()).unwrap();
        let f: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..3.0)).collect();

        let same = rescale(&w, &counts, 0.0).map_err(fail)?;
        identity_ok &= same.as_slice().iter().zip(w.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());

        let factors = rescale_factors(&counts, gamma).map_err(fail)?;
        for a in 0..k {
            for b in 0..k {
                if counts[a] < counts[b] && factors[a] < factors[b] {
                    monotone_ok = false;
                }
            }
        }

        let scaled = rescale(&w, &counts, gamma).map_err(fail)?;
        let before: Vec<f64> = (0..k).map(|c| dot(w.row(c), &f)).collect();
        let after: Vec<f64> = (0..k).map(|c| dot(scaled.row(c), &f)).collect();
        for a in 0..k {
            for b in 0..k {
                // `a` was preferred, now `b` is: `b` must be the rarer class.
                if before[a] > before[b] && after[b] > after[a] {
                    flips += 1;
                    if counts[b] >= counts[a] {
                        violations += 1;
                    }
                }
            }
        }
    }
    check(
        identity_ok && monotone_ok && violations == 0,
        format!(
            "gamma=0 bitwise identity: {identity_ok}; factors non-increasing in n: {monotone_ok}; {cases} cases, {flips} flips, {violations} violations"
        ),
    )
}

// 5. Method ordering.

fn min_grid_error(cfg: &ExperimentConfig, data: &Prepared, trained: &Trained) -> Result<(f64, f64), String> {
    let sweep = gamma_sweep(&trained.model, &trained.class_counts, &data.test, &cfg.gamma_grid.points()).map_err(fail)?;
    let best = sweep.best().ok_or("empty grid")?;
    Ok((best.gamma, best.balanced_error))
}

fn method_ordering(runs: &Runs) -> Outcome {
    let base_cfg = lt100(Method::Baseline, None);
    let (data, trained) = runs.baseline()?;
    let baseline = evaluate(&trained.model, &data.test).map_err(fail)?.balanced_error;
    let (g_rs, rs) = min_grid_error(&base_cfg, data, trained)?;

    let wvn_cfg = lt100(Method::WvnRs, Some(0.0));
    let (wdata, wtrained) = pipeline::run(&wvn_cfg).map_err(fail)?;
    let (g_wvn, wvn) = min_grid_error(&wvn_cfg, &wdata, &wtrained)?;
    check(
        rs < baseline && wvn <= rs + 0.01,
        format!(
            "balanced error: baseline {baseline:.4}, baseline+RS {rs:.4} (gamma {g_rs}), WVN+RS {wvn:.4} (gamma {g_wvn}); need RS < baseline and WVN+RS <= RS + 0.01"
        ),
    )
}

// 6. Generalization gap grows toward rare classes.

fn generalization_trend(runs: &Runs) -> Outcome {
    let (data, trained) = runs.baseline()?;
    let stats = cluster_stats(&trained.model, &data.train, &data.test).map_err(fail)?;
    let gaps: Vec<f64> = stats.classes.iter().map(|c| c.center_gap).collect();
    let rho = spearman(&counts_f64(&trained.class_counts), &gaps).ok_or("degenerate ranks")?;
    let counts = &trained.class_counts;
    let most = (0..counts.len()).max_by_key(|&c| counts[c]).unwrap();
    let rarest = (0..counts.len()).min_by_key(|&c| counts[c]).unwrap();
    let (s_rare, s_most) = (stats.classes[rarest].sigma_test, stats.classes[most].sigma_test);
    check(
        rho <= -0.6 && s_rare > s_most,
        format!(
            "spearman(n, center gap) = {rho:.3} (<= -0.6); sigma_test rarest {s_rare:.2} deg vs most frequent {s_most:.2} deg"
        ),
    )
}

// 7. Oracle bound with a frozen extractor.

fn oracle_bound(runs: &Runs) -> Outcome {
    let cfg = lt100(Method::Baseline, None);
    let (data, trained) = runs.baseline()?;
    let sweep = gamma_sweep(&trained.model, &trained.class_counts, &data.test, &cfg.gamma_grid.points()).map_err(fail)?;
    let best = sweep.best().ok_or("empty grid")?;
    let mut rs_model = trained.model.clone();
    rs_model
        .set_classifier(rescale(trained.model.classifier(), &trained.class_counts, best.gamma).map_err(fail)?)
        .map_err(fail)?;
    let rs_error = evaluate(&rs_model, &data.test).map_err(fail)?.top1_error;

    let before = rs_model.clone();
    let oracle = oracle_finetune(&rs_model, &data.test, &cfg.oracle).map_err(fail)?;
    let mut tuned = rs_model.clone();
    tuned.set_classifier(oracle.classifier.clone()).map_err(fail)?;
    let frozen = tuned.layers() == before.layers()
        && rs_model == before
        && tuned.layers().iter().zip(before.layers()).all(|(a, b)| {
            a.weight.as_slice().iter().zip(b.weight.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits())
                && a.bias.iter().zip(&b.bias).all(|(x, y)| x.to_bits() == y.to_bits())
        });
    let recomputed = evaluate(&tuned, &data.test).map_err(fail)?.top1_error;
    check(
        oracle.error <= rs_error && frozen && recomputed == oracle.error,
        format!(
            "top-1 error: oracle {:.4} vs RS {rs_error:.4} (gamma {}); extractor bitwise unchanged: {frozen}",
            oracle.error, best.gamma
        ),
    )
}

// 8. Boundary geometry.

/// Newton iteration on `a cos t − b sin t` for unit-angle-separated vectors
/// `a·e_0` and `b·e_1`.
fn newton_boundary(a: f64, b: f64) -> f64 {
    let mut t = std::f64::consts::FRAC_PI_4;
    for _ in 0..100 {
        let g = a * t.cos() - b * t.sin();
        let dg = -a * t.sin() - b * t.cos();
        let next = t - g / dg;
        if (next - t).abs() < 1e-15 {
            t = next;
            break;
        }
        t = next;
    }
    t.to_degrees()
}

fn boundary_geometry() -> Outcome {
    let angle = |r: f64| boundary_angle_2d(&[r, 0.0], &[0.0, 1.0]).map_err(fail);
    let equal = angle(1.0)?;
    let two = angle(2.0)?;
    let root = newton_boundary(2.0, 1.0);
    let grid: Vec<f64> = [1.0, 2.0, 4.0, 8.0].into_iter().map(angle).collect::<Result<_, _>>()?;
    let increasing = grid.windows(2).all(|w| w[1] > w[0]);
    check(
        (equal - 45.0).abs() <= 1e-9 && (two - root).abs() <= 1e-6 && increasing,
        format!(
            "equal norms {equal:.12} deg; 2:1 {two:.9} vs Newton {root:.9}; ratios 1,2,4,8 -> {:?}",
            grid.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>()
        ),
    )
}

// 9. Sign of the radial derivative.

fn radial_sign(runs: &Runs) -> Outcome {
    let (data, trained) = runs.baseline()?;
    let k = trained.model.num_classes();
    let values: Vec<f64> = (0..k)
        .map(|j| radial_derivative(&trained.model, &data.train, j, j))
        .collect::<Result<_, _>>()
        .map_err(fail)?;
    let negative = values.iter().filter(|&&v| v < 0.0).count();
    check(
        negative as f64 >= 0.9 * k as f64,
        format!("{negative}/{k} classes negative (>= 90%); values {:?}", values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()),
    )
}

// 10. Determinism and round trips through the command line.

fn skewbench(args: &[&str]) -> Result<Vec<PathBuf>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_skewbench")).args(args).output().map_err(fail)?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).lines().map(PathBuf::from).collect())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn determinism_and_round_trip(runs: &Runs) -> Outcome {
    let cfg = lt100(Method::Baseline, None);
    let (data, trained) = runs.baseline()?;
    let (_, again) = pipeline::run(&cfg).map_err(fail)?;
    let same_model = again.model == trained.model && again.trace == trained.trace;

    let dir = tempfile::tempdir().map_err(fail)?;
    let root = dir.path();
    let (a, b) = (root.join("a"), root.join("b"));
    for out in [&a, &b] {
        skewbench(&["train", "--preset", "synthetic-lt100", "--out", s(out)])?;
    }
    let read = |p: PathBuf| fs::read(p).map_err(fail);
    let same_bytes = read(a.join("checkpoint.json"))? == read(b.join("checkpoint.json"))?
        && read(a.join("trace.csv"))? == read(b.join("trace.csv"))?;

    let ckpt = a.join("checkpoint.json");
    let c = s(&ckpt);
    let generated = skewbench(&["generate", "--preset", "synthetic-lt100", "--out", s(&root.join("data"))])?;
    let rescaled = skewbench(&["rescale", "--checkpoint", c, "--gamma", "0.2", "--out", s(&root.join("rs"))])?;
    skewbench(&["evaluate", "--checkpoint", c])?;
    skewbench(&["diagnose", "--checkpoint", c])?;
    skewbench(&["sweep", "--checkpoint", c])?;
    skewbench(&["oracle", "--checkpoint", c])?;

    let (mut mismatched, mut checked) = (Vec::new(), 0);
    let mut expect = |name: &str, ok: bool| {
        checked += 1;
        if !ok {
            mismatched.push(name.to_string());
        }
    };
    let info = RunInfo {
        method: Method::Baseline,
        gamma: 0.0,
        seed: cfg.seed,
    };
    expect("checkpoint.json", Checkpoint::load(&ckpt).map_err(fail)? == trained.checkpoint(&cfg));
    expect("trace.csv", read_trace(&a.join("trace.csv")).map_err(fail)? == trained.trace);
    expect("train.csv", load_csv(&generated[0], Split::Train).map_err(fail)? == data.train);
    expect("test.csv", load_csv(&generated[1], Split::Test).map_err(fail)? == data.test);

    let mut rs_model = trained.model.clone();
    rs_model
        .set_classifier(rescale(trained.model.classifier(), &trained.class_counts, 0.2).map_err(fail)?)
        .map_err(fail)?;
    let rs_ckpt = Checkpoint::load(&rescaled[0]).map_err(fail)?;
    expect("rescaled checkpoint", rs_ckpt.model().map_err(fail)? == rs_model && rs_ckpt.gamma == 0.2);

    let eval = evaluate(&trained.model, &data.test).map_err(fail)?;
    expect("metrics.json", Metrics::load(&a.join("metrics.json")).map_err(fail)? == Metrics::new(&eval, info));

    let grid = cfg.gamma_grid.points();
    let diag = reports::diagnose(&trained.model, &trained.class_counts, &data.train, &data.test, &grid, info)
        .map_err(fail)?;
    let diag_dir = a.join("diagnostics");
    let back = reports::read_diagnostics(&diag_dir).map_err(fail)?;
    expect("clusters.csv", back.clusters == diag.clusters);
    expect("confusion.csv", back.confusion == diag.confusion);
    expect("norms.csv", back.norms == diag.norms);
    expect("diagnostics sweep.csv", back.sweep == diag.sweep);
    expect("summary.json", back.summary == diag.summary);
    let features = read_features(&diag_dir.join(reports::FEATURES_FILE)).map_err(fail)?;
    let exported: Vec<Vec<f64>> = data
        .train
        .iter()
        .chain(data.test.iter())
        .map(|(x, _)| trained.model.features(x).unwrap())
        .collect();
    expect(
        "features.csv",
        features.len() == exported.len() && features.iter().zip(&exported).all(|(r, f)| &r.feature == f),
    );

    let sweep = gamma_sweep(&trained.model, &trained.class_counts, &data.test, &grid).map_err(fail)?;
    expect("sweep.csv", reports::read_sweep(&a.join(reports::SWEEP_FILE)).map_err(fail)? == sweep);
    let oracle = oracle_finetune(&trained.model, &data.test, &cfg.oracle).map_err(fail)?;
    expect(
        "oracle.json",
        OracleReport::load(&a.join("oracle.json")).map_err(fail)? == OracleReport::new(&oracle, info, &cfg.oracle),
    );

    check(
        same_model && same_bytes && mismatched.is_empty(),
        format!(
            "in-process rerun identical: {same_model}; CLI checkpoints byte-identical: {same_bytes}; {checked} files re-loaded, mismatches: {mismatched:?}"
        ),
    )
}

fn main() {
    let runs = Runs::default();
    let criteria: Vec<Criterion> = vec![
        ("1 gradient suite", Some(Duration::from_secs(30)), Box::new(gradient_suite)),
        ("2 norm-frequency correlation", Some(Duration::from_secs(180)), Box::new(|| norm_frequency(&runs))),
        ("3 WVN contract", None, Box::new(wvn_contract)),
        ("4 RS identity and monotonicity", None, Box::new(rs_properties)),
        ("5 method ordering", Some(Duration::from_secs(300)), Box::new(|| method_ordering(&runs))),
        ("6 generalization trend", None, Box::new(|| generalization_trend(&runs))),
        ("7 oracle bound", None, Box::new(|| oracle_bound(&runs))),
        ("8 boundary geometry", None, Box::new(boundary_geometry)),
        ("9 radial derivative sign", None, Box::new(|| radial_sign(&runs))),
        ("10 determinism and round trip", None, Box::new(|| determinism_and_round_trip(&runs))),
    ];
    let mut failed = 0;
    for (name, limit, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let limit_note = limit.map_or(String::new(), |l| format!(" (limit {}s)", l.as_secs()));
        let status = if pass && in_time { "PASS" } else { "FAIL" };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} {name}: {detail} [{:.2}s{limit_note}]", elapsed.as_secs_f64());
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
