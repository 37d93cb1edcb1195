//! Acceptance gate. Every criterion prints one PASS/FAIL line; the process
//! exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use msp_core::filter::{apply_filter, compose_filters, MultigraphFilter};
use msp_core::linalg::{spectral_norm, Matrix};
use msp_core::nn::{
    backward, check_permutation_equivariance, forward_batch, prepare, ArchSpec, MgnnModel, Nonlinearity, ReadoutSpec,
    Variant,
};
use msp_core::spectral::{fourier_transform, joint_block_diagonalize, verify_filtering_spectral_theorem, JbdOptions};
use msp_core::tree::{generate_pruned_tree, verify_pruning_bound};
use msp_core::{DiffusionTree, MultiFeatureSignal, Multigraph, MultigraphSignal, Permutation, Vector, Word};
use msp_experiments::report::Report;
use msp_experiments::sourceloc::{run_sourceloc_experiment, SourceLocConfig};
use msp_experiments::wireless::{channel_gain, fspl, run_wireless_experiment, sum_rate, WirelessConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> (bool, String) {
    (elapsed <= Duration::from_secs(limit_s), format!("{:.1}s of {limit_s}s", elapsed.as_secs_f64()))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(n: usize, r: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0))
}

fn random_symmetric(n: usize, r: &mut ChaCha8Rng) -> Matrix {
    let a = random_matrix(n, r);
    (&a + a.transpose()) * 0.5
}

fn random_orthogonal(n: usize, r: &mut ChaCha8Rng) -> Matrix {
    random_matrix(n, r).qr().q()
}

fn random_multigraph(n: usize, m: usize, r: &mut ChaCha8Rng) -> Multigraph {
    Multigraph::from_matrices((0..m).map(|_| random_matrix(n, r)).collect()).unwrap().spectrally_normalized()
}

/// Straight product of the word's factors, leftmost factor outermost.
fn oracle_word(w: &Word, ops: &[Matrix]) -> Matrix {
    let n = ops[0].nrows();
    w.indices().iter().fold(Matrix::identity(n, n), |acc, &i| acc * &ops[i])
}

fn oracle_dense(h: &MultigraphFilter, ops: &[Matrix]) -> Matrix {
    let n = ops[0].nrows();
    h.coeffs().iter().fold(Matrix::zeros(n, n), |acc, (w, c)| acc + oracle_word(w, ops) * *c)
}

fn owned_ops(mg: &Multigraph) -> Vec<Matrix> {
    mg.matrices().into_iter().cloned().collect()
}

fn random_filter(tree: Arc<DiffusionTree>, r: &mut ChaCha8Rng) -> MultigraphFilter {
    let coeffs: BTreeMap<Word, f64> = tree.words().iter().map(|w| (w.clone(), r.gen_range(-1.0..1.0))).collect();
    MultigraphFilter::new(tree, coeffs).unwrap()
}

const NONLINEARITIES: [Nonlinearity; 4] =
    [Nonlinearity::Relu, Nonlinearity::Sigmoid, Nonlinearity::Tanh, Nonlinearity::Identity];

fn random_model(r: &mut ChaCha8Rng, n: usize, m: usize, layers: usize, readout: ReadoutSpec) -> MgnnModel {
    let variant = [Variant::Mgnn, Variant::Merged, Variant::Parallel][r.gen_range(0..3)];
    let widths: Vec<usize> = (0..=layers).map(|_| r.gen_range(1..=3)).collect();
    let mut spec = ArchSpec::new(variant, m, r.gen_range(1..=3), widths, n);
    spec.activations = (0..layers).map(|_| NONLINEARITIES[r.gen_range(0..4)]).collect();
    spec.readout = readout;
    let mut model = MgnnModel::build(&spec, r.gen()).unwrap();
    // init scales shrink with the word count; widen them so every layer matters
    let p: Vec<f64> = model.params().iter().map(|_| r.gen_range(-1.0..1.0)).collect();
    model.set_params(&p).unwrap();
    model
}

fn permutation_equivariance() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.gen_range(2..=12);
        let m = r.gen_range(1..=3);
        let mg = random_multigraph(n, m, &mut r);
        let layers = r.gen_range(1..=3);
        let model = random_model(&mut r, n, m, layers, ReadoutSpec::Flatten);
        let x = MultiFeatureSignal::new(Matrix::from_fn(n, model.input_features(), |_, _| r.gen_range(-1.0..1.0))).unwrap();
        let p = Permutation::random(n, &mut r);
        worst = worst.max(check_permutation_equivariance(&model, &mg, &x, &p).unwrap());
    }
    let (fast, time) = within(start.elapsed(), 10);
    outcome(worst <= 1e-9 && fast, format!("max deviation {worst:.2e} over 100 triples, {time}"))
}

/// `Q·diag(λ)·Qᵀ` families sharing one random eigenbasis.
fn commuting_family(n: usize, m: usize, r: &mut ChaCha8Rng) -> Multigraph {
    let q = random_orthogonal(n, r);
    let ops = (0..m)
        .map(|_| {
            let d = Vector::from_fn(n, |_, _| r.gen_range(-1.0..1.0));
            &q * Matrix::from_diagonal(&d) * q.transpose()
        })
        .collect();
    Multigraph::from_matrices(ops).unwrap()
}

/// Hidden block structure: `Q·blockdiag(B₁…)·Qᵀ` with random symmetric blocks.
fn hidden_block_family(sizes: &[usize], m: usize, r: &mut ChaCha8Rng) -> Multigraph {
    let n: usize = sizes.iter().sum();
    let q = random_orthogonal(n, r);
    let ops = (0..m)
        .map(|_| {
            let mut d = Matrix::zeros(n, n);
            let mut o = 0;
            for &s in sizes {
                d.view_mut((o, o), (s, s)).copy_from(&random_symmetric(s, r));
                o += s;
            }
            let s = &q * d * q.transpose();
            (&s + s.transpose()) * 0.5
        })
        .collect();
    Multigraph::from_matrices(ops).unwrap()
}

fn filtering_spectral_theorem() -> Outcome {
    let start = Instant::now();
    let mut r = rng(202);
    let mut worst = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut max_block = 0;
    for family in 0..5 {
        let n = 4 + 3 * family;
        let m = 2 + family % 2;
        let mg = commuting_family(n, m, &mut r);
        let ops = owned_ops(&mg);
        let jbd = joint_block_diagonalize(&mg, &JbdOptions::default()).unwrap();
        max_block = max_block.max(jbd.max_block());
        for _ in 0..50 {
            let tree = Arc::new(DiffusionTree::unpruned(m, r.gen_range(0..=3)).unwrap());
            let h = random_filter(tree, &mut r);
            let x = MultigraphSignal::new(Vector::from_fn(n, |_, _| r.gen_range(-1.0..1.0)));
            worst = worst.max(verify_filtering_spectral_theorem(&h, &jbd, &mg, &x, 1e-8).unwrap());
            // independent check: Uⱼᵀ·H·x against the polynomial of the blocks times Uⱼᵀ·x
            let y = oracle_dense(&h, &ops) * &x.values;
            let x_hat = fourier_transform(&jbd, &x).unwrap();
            for j in 0..jbd.n_blocks() {
                let p = jbd.partition()[j];
                let mut hj = Matrix::zeros(p, p);
                for (w, c) in h.coeffs() {
                    let blocks: Vec<Matrix> = (0..m).map(|i| jbd.block(i, j).clone()).collect();
                    hj += oracle_word(w, &blocks) * *c;
                }
                let lhs = jbd.block_basis(j).transpose() * &y;
                worst_oracle = worst_oracle.max((lhs - hj * &x_hat.components[j]).amax());
            }
        }
    }
    let (fast, time) = within(start.elapsed(), 30);
    outcome(
        worst <= 1e-8 && worst_oracle <= 1e-8 && max_block == 1 && fast,
        format!("deviation {worst:.2e} (oracle {worst_oracle:.2e}), largest block {max_block}, {time}"),
    )
}

fn jbd_reconstruction() -> Outcome {
    let mut r = rng(303);
    let mut worst = 0.0f64;
    let mut worst_orth = 0.0f64;
    let mut families = 0;
    let mut found_blocks = true;
    let mut check = |mg: &Multigraph, expected: Option<Vec<usize>>| {
        let jbd = joint_block_diagonalize(mg, &JbdOptions::default()).unwrap();
        worst = jbd.reconstruction_errors(mg).into_iter().fold(worst, f64::max);
        let u = jbd.basis();
        let n = u.nrows();
        worst_orth = worst_orth.max(spectral_norm(&(u.transpose() * u - Matrix::identity(n, n))));
        if let Some(mut sizes) = expected {
            let mut got = jbd.partition().to_vec();
            sizes.sort_unstable();
            got.sort_unstable();
            found_blocks &= got == sizes;
        }
        families += 1;
    };
    for family in 0..5 {
        check(&commuting_family(4 + 3 * family, 2 + family % 2, &mut r), Some(vec![1; 4 + 3 * family]));
    }
    for sizes in [vec![2, 2], vec![3, 1, 2], vec![4, 3], vec![2, 2, 2, 1, 5], vec![6, 6]] {
        check(&hidden_block_family(&sizes, 2, &mut r), Some(sizes.clone()));
        check(&hidden_block_family(&sizes, 3, &mut r), Some(sizes));
    }
    for n in [3, 7, 12] {
        check(&Multigraph::from_matrices(vec![random_symmetric(n, &mut r), random_symmetric(n, &mut r)]).unwrap(), Some(vec![n]));
    }
    outcome(
        worst <= 1e-8 && worst_orth <= 1e-8 && found_blocks,
        format!("max ‖S − U·blockdiag·Uᵀ‖₂ {worst:.2e}, ‖UᵀU − I‖₂ {worst_orth:.2e}, {families} families, expected blocks found: {found_blocks}"),
    )
}

fn all_words(m: usize, k: usize) -> Vec<Word> {
    let mut out = vec![Word::identity()];
    let mut level = vec![Word::identity()];
    for _ in 0..k {
        level = level.iter().flat_map(|w| (0..m).map(move |i| w.concat(&Word::new(vec![i])))).collect();
        out.extend(level.iter().cloned());
    }
    out
}

/// Literal worklist generator, 0-based.
/// Two corrections keep it consistent with the filter algebra: every
/// singleton seeds the frontier (the literal loop seeds only `i < m`), and
/// the identity and singletons are part of the output. A pair is tested
/// against `ε` only when `ε` is finite; `ε = ∞` means no pruning.
fn literal_generator(mg: &Multigraph, epsilon: f64, depth: usize) -> BTreeSet<Vec<usize>> {
    let m = mg.n_classes();
    let ops = owned_ops(mg);
    let mut pruned: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut frontier: VecDeque<Vec<usize>> = VecDeque::new();
    let mut val_ind: BTreeSet<Vec<usize>> = BTreeSet::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let comm = &ops[i] * &ops[j] - &ops[j] * &ops[i];
            if epsilon.is_finite() && spectral_norm(&comm) <= epsilon {
                pruned.insert((j, i));
            }
        }
    }
    val_ind.insert(vec![]);
    if depth > 0 {
        for i in 0..m {
            frontier.push_back(vec![i]);
            val_ind.insert(vec![i]);
        }
    }
    while let Some(tup) = frontier.pop_front() {
        for k in 0..m {
            if !pruned.contains(&(k, tup[0])) && tup.len() < depth {
                let mut next = vec![k];
                next.extend_from_slice(&tup);
                frontier.push_back(next.clone());
                val_ind.insert(next);
            }
        }
    }
    val_ind
}

/// Diagonal operators (commuting) mixed with random ones.
fn mixed_commuting(m: usize, n: usize, r: &mut ChaCha8Rng) -> Multigraph {
    let ops = (0..m)
        .map(|i| {
            if i < 2 {
                Matrix::from_diagonal(&Vector::from_fn(n, |_, _| r.gen_range(-1.0..1.0)))
            } else {
                random_matrix(n, r)
            }
        })
        .collect();
    Multigraph::from_matrices(ops).unwrap().spectrally_normalized()
}

fn pruning() -> Outcome {
    let mut r = rng(404);
    // (a)
    let mut counts_ok = true;
    for m in 1..=3 {
        for k in 0..=4 {
            let tree = DiffusionTree::unpruned(m, k).unwrap();
            let expected: Vec<usize> = (0..=k as u32).map(|l| m.pow(l)).collect();
            counts_ok &= tree.level_counts() == expected && tree.len() == expected.iter().sum::<usize>();
        }
    }
    let t32 = DiffusionTree::unpruned(3, 2).unwrap();
    counts_ok &= t32.len() == 13 && t32.level_counts() == vec![1, 3, 9];
    // (b)
    let diag = Multigraph::from_matrices(
        (0..3).map(|_| Matrix::from_diagonal(&Vector::from_fn(5, |_, _| r.gen_range(-1.0..1.0)))).collect(),
    )
    .unwrap()
    .spectrally_normalized();
    let full = generate_pruned_tree(&diag, 1e-8, 2).unwrap();
    let brute: BTreeSet<Word> =
        all_words(3, 2).into_iter().filter(|w| w.indices().windows(2).all(|p| p[0] <= p[1])).collect();
    let got: BTreeSet<Word> = full.words().iter().cloned().collect();
    let fully_ok = full.len() == 10 && got == brute;
    // (c)
    let mut bound_ok = true;
    let mut worst_ratio = 0.0f64;
    for _ in 0..100 {
        let n = r.gen_range(2..=8);
        let m = r.gen_range(2..=3);
        let mg = random_multigraph(n, m, &mut r);
        let i = r.gen_range(0..m);
        let j = (i + r.gen_range(1..m)) % m;
        let word = |r: &mut ChaCha8Rng| Word::new((0..r.gen_range(0..=3)).map(|_| r.gen_range(0..m)).collect());
        let (left, right) = (word(&mut r), word(&mut r));
        let lhs = verify_pruning_bound(&mg, &left, (i, j), &right).unwrap();
        let ops = owned_ops(&mg);
        let rhs = spectral_norm(&(&ops[i] * &ops[j] - &ops[j] * &ops[i]));
        bound_ok &= lhs <= rhs * (1.0 + 1e-12) + 1e-15;
        if rhs > 0.0 {
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
    }
    // (d)
    let mut literal_ok = true;
    let mut cases = 0;
    for m in 1..=3 {
        let mg = mixed_commuting(m, 4, &mut r);
        for k in 0..=4 {
            for eps in [0.0, 1e-8, f64::INFINITY] {
                let ours: BTreeSet<Vec<usize>> =
                    generate_pruned_tree(&mg, eps, k).unwrap().words().iter().map(|w| w.indices().to_vec()).collect();
                literal_ok &= ours == literal_generator(&mg, eps, k);
                cases += 1;
            }
        }
    }
    outcome(
        counts_ok && fully_ok && bound_ok && literal_ok,
        format!(
            "(a) counts {counts_ok}, (b) fully pruned m=3 K=2 gives {} words matching brute force: {fully_ok}, (c) bound holds on 100 instances: {bound_ok} (max ratio {worst_ratio:.3}), (d) literal generator agrees on {cases} cases: {literal_ok}",
            full.len()
        ),
    )
}

fn half_squared(out: &Matrix, t: &Matrix) -> f64 {
    0.5 * (out - t).norm_squared()
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut r = rng(505);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..20 {
        let n = r.gen_range(2..=10);
        let m = r.gen_range(1..=3);
        let mg = random_multigraph(n, m, &mut r);
        let readout = if r.gen_bool(0.5) {
            ReadoutSpec::Flatten
        } else {
            ReadoutSpec::Dense {
                hidden: vec![3],
                out: 2,
                hidden_activation: NONLINEARITIES[r.gen_range(0..4)],
                out_activation: NONLINEARITIES[r.gen_range(0..4)],
            }
        };
        let model = random_model(&mut r, n, m, 2, readout);
        let x = Matrix::from_fn(n, model.input_features(), |_, _| r.gen_range(-1.0..1.0));
        let prep = prepare(&model, &mg).unwrap();
        let (outs, tape) = forward_batch(&model, &prep, &[&x]).unwrap();
        let target = outs[0].map(|_| r.gen_range(-1.0..1.0));
        let upstream = &outs[0] - &target;
        let analytic = backward(&model, &tape, &[upstream]).unwrap().flatten();
        let base = model.params();
        let loss_at = |p: &[f64]| {
            let mut probe = model.clone();
            probe.set_params(p).unwrap();
            let (o, _) = forward_batch(&probe, &prep, &[&x]).unwrap();
            half_squared(&o[0], &target)
        };
        let h = 1e-5;
        for k in 0..base.len() {
            let mut up = base.clone();
            up[k] += h;
            let mut down = base.clone();
            down[k] -= h;
            let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
            let scale = analytic[k].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((analytic[k] - fd).abs() / scale);
            checked += 1;
        }
    }
    let (fast, time) = within(start.elapsed(), 60);
    outcome(worst <= 1e-4 && fast, format!("max relative error {worst:.2e} over {checked} partials of 20 models, {time}"))
}

fn relative(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

fn oracle_equivalence() -> Outcome {
    let mut r = rng(606);
    let mut worst_apply = 0.0f64;
    let mut worst_compose = 0.0f64;
    for k in 0..100 {
        let n = r.gen_range(2..=12);
        let m = r.gen_range(1..=3);
        let mg = random_multigraph(n, m, &mut r);
        let ops = owned_ops(&mg);
        let tree = if k % 2 == 0 {
            DiffusionTree::unpruned(m, r.gen_range(0..=4)).unwrap()
        } else {
            generate_pruned_tree(&mixed_commuting(m, n, &mut r), 1e-8, r.gen_range(0..=4)).unwrap()
        };
        let h = random_filter(Arc::new(tree), &mut r);
        let x = MultigraphSignal::new(Vector::from_fn(n, |_, _| r.gen_range(-1.0..1.0)));
        let y = apply_filter(&h, &mg, &x).unwrap();
        let oracle = oracle_dense(&h, &ops) * &x.values;
        worst_apply = worst_apply.max((&y.values - &oracle).amax() / oracle.amax().max(f64::MIN_POSITIVE));

        let d1 = r.gen_range(0..=2);
        let d2 = r.gen_range(0..=2);
        let h1 = random_filter(Arc::new(DiffusionTree::unpruned(m, d1).unwrap()), &mut r);
        let h2 = random_filter(Arc::new(DiffusionTree::unpruned(m, d2).unwrap()), &mut r);
        let c = compose_filters(&h1, &h2, d1 + d2).unwrap();
        let product = oracle_dense(&h1, &ops) * oracle_dense(&h2, &ops);
        worst_compose = worst_compose.max(relative(&oracle_dense(&c.filter, &ops), &product));
        worst_compose = worst_compose.max(relative(&c.filter.dense_matrix(&mg).unwrap(), &product));
    }
    outcome(
        worst_apply <= 1e-11 && worst_compose <= 1e-11,
        format!("apply_filter relative error {worst_apply:.2e}, compose_filters {worst_compose:.2e} over 100 instances"),
    )
}

fn result_mean(report: &Report, key: &str, field: &str) -> f64 {
    report.summary[key][field].as_f64().unwrap_or(f64::NAN)
}

fn sourceloc_trend(report: &Report, elapsed: Duration, cfg: &SourceLocConfig) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for &c in &cfg.communities {
        let acc = |m: &str| result_mean(report, &format!("{m}@communities={c}"), "accuracy_mean");
        let (g, mg, p) = (acc("mgnn"), acc("merged"), acc("parallel"));
        let ok = g >= mg && mg >= p && g - p >= 0.02;
        pass &= ok;
        parts.push(format!("C={c}: mgnn {:.1}% merged {:.1}% parallel {:.1}%", 100.0 * g, 100.0 * mg, 100.0 * p));
    }
    let (fast, time) = within(elapsed, 15 * 60);
    outcome(pass && fast, format!("{}, {time}", parts.join("; ")))
}

fn wireless_trend(report: &Report, elapsed: Duration, cfg: &WirelessConfig) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for &p_max in &cfg.p_max_values {
        let get = |m: &str, f: &str| result_mean(report, &format!("{m}@p_max={p_max}"), f);
        let (rate, power, equal) = (get("mgnn", "sum_rate_mean"), get("mgnn", "mean_power"), get("equal", "sum_rate_mean"));
        let ok = rate >= equal && power <= 1.05 * p_max;
        pass &= ok;
        parts.push(format!("P_max {p_max}: mgnn {rate:.3} vs equal {equal:.3}, power {power:.2}"));
    }
    let (fast, time) = within(elapsed, 20 * 60);
    outcome(pass && fast, format!("{}, {} held-out configurations, {time}", parts.join("; "), cfg.eval_configs))
}

fn formula_spot_checks() -> Outcome {
    let psi = fspl(10.0, 2.4).unwrap();
    let g = channel_gain(60.0543);
    let one = vec![vec![Matrix::from_element(1, 1, 1.0)]];
    let rate = sum_rate(&[vec![1.0]], &one, 1.0).unwrap();
    // the quoted 9.876e-7 is rounded: hold the exact value to 1e-9 and the quote to its digits
    let exact = 10f64.powf(-6.00543);
    let quoted = format!("{g:.3e}") == "9.876e-7";
    let ok = (psi - 60.0543).abs() <= 1e-3 && ((g - exact) / exact).abs() <= 1e-9 && quoted && (rate - 2f64.ln()).abs() <= 1e-12;
    outcome(ok, format!("fspl(10, 2.4) = {psi:.4} dB, channel_gain(60.0543) = {g:.4e}, unit sum-rate = {rate:.12}"))
}

fn report_bytes(report: &Report) -> String {
    report.metrics_csv() + &report.summary_json() + &report.plot_csv()
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut passed = 0;
    let mut total = 0;
    let mut record = |name: &str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        passed += usize::from(o.pass);
        total += 1;
    };
    record("permutation equivariance", permutation_equivariance());
    record("filtering spectral theorem", filtering_spectral_theorem());
    record("joint block diagonalization reconstruction", jbd_reconstruction());
    record("pruning", pruning());
    record("gradients", gradients());
    record("oracle equivalence", oracle_equivalence());
    record("formula spot checks", formula_spot_checks());

    let sl_cfg = SourceLocConfig::default();
    let t = Instant::now();
    let sl = run_sourceloc_experiment(&sl_cfg).unwrap();
    record("source localization trend", sourceloc_trend(&sl, t.elapsed(), &sl_cfg));

    let w_cfg = WirelessConfig::default();
    let t = Instant::now();
    let w = run_wireless_experiment(&w_cfg).unwrap();
    record("wireless trend", wireless_trend(&w, t.elapsed(), &w_cfg));

    let same_sl = report_bytes(&sl) == report_bytes(&run_sourceloc_experiment(&sl_cfg).unwrap());
    let same_w = report_bytes(&w) == report_bytes(&run_wireless_experiment(&w_cfg).unwrap());
    record(
        "determinism",
        outcome(same_sl && same_w, format!("sourceloc files identical: {same_sl}, wireless files identical: {same_w}")),
    );

    println!("{passed} of {total} criteria passed");
    if passed < total {
        std::process::exit(1);
    }
}
