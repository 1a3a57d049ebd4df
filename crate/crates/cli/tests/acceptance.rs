//! Acceptance criteria 1 to 9. Each criterion is one test whose name starts
//! with `criterion_<n>`, so the harness prints one pass/fail line per
//! criterion. The desk-scale experiments (5 to 8) share one set of trained
//! models and take tens of minutes on a single core.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng as _;

use ane_core::corpus::{
    decode_posteriorgram, encode_posteriorgram, format_manifest, parse_manifest, sample_corpus, CountSpec,
    ManifestRecord, Posteriorgram, SynthParams, Utterance, Weights, World, WorldConfig,
};
use ane_core::encoder::{self, decode_checkpoint, encode_checkpoint, EncoderConfig, Input, ParameterSet};
use ane_core::eval;
use ane_core::loss::{self, AneMode, Similarity};
use ane_core::par::Parallelism;
use ane_core::rng::{self, Rng};
use ane_core::search::{decode_index, encode_index, EmbeddingIndex, Match, Metric};
use ane_core::trainer::{self, Objective, TrainConfig};

const H: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-4;
const INSTANCES: u64 = 60;

fn report(criterion: usize, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn random_emb(r: &mut Rng, n: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| r.random_range(-scale..scale)).collect()).collect()
}

/// Labels for `n` samples where sample 0 always has a same-label partner.
fn random_labels(r: &mut Rng, n: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
    let partner = r.random_range(1..n);
    labels[partner] = labels[0];
    labels
}

/// Central-difference gradient of `f` over every coordinate of `emb`.
fn numeric_grad(emb: &[Vec<f64>], f: impl Fn(&[Vec<f64>]) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut e = emb.to_vec();
    for i in 0..emb.len() {
        for k in 0..emb[i].len() {
            let orig = e[i][k];
            e[i][k] = orig + H;
            let up = f(&e);
            e[i][k] = orig - H;
            let down = f(&e);
            e[i][k] = orig;
            out.push((up - down) / (2.0 * H));
        }
    }
    out
}

fn flat(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let t0 = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut track = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(w) => w.1 = w.1.max(e),
        None => worst.push((name, e)),
    };
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, 1001, 0);
        let n = r.random_range(2..=6);
        let dim = r.random_range(1..=4);
        let emb = random_emb(&mut r, n, dim, 1.0);
        let labels = random_labels(&mut r, n);

        for (name, mode) in [("ane pivot", AneMode::Pivot), ("ane full", AneMode::Full)] {
            let analytic = flat(&loss::ane_loss_grad(&emb, &labels, mode).unwrap());
            let numeric = numeric_grad(&emb, |e| loss::ane_loss(e, &labels, mode).unwrap());
            track(name, rel_err(&analytic, &numeric));
        }
        for (name, kind) in [
            ("batch triplet exp-neg-l2", Similarity::ExpNegL2),
            ("batch triplet neg-l2", Similarity::NegL2),
            ("batch triplet cosine", Similarity::Cosine),
        ] {
            let analytic = flat(&loss::batch_triplet_grad(&emb, &labels, kind).unwrap());
            let numeric = numeric_grad(&emb, |e| loss::batch_triplet_loss(e, &labels, kind).unwrap());
            track(name, rel_err(&analytic, &numeric));
        }
        for (name, kind) in [("similarity neg-l2", Similarity::NegL2), ("similarity cosine", Similarity::Cosine)] {
            let pair = vec![emb[0].clone(), emb[1].clone()];
            let (_, ga, gb) = loss::similarity_grad(&pair[0], &pair[1], kind).unwrap();
            let analytic: Vec<f64> = ga.into_iter().chain(gb).collect();
            let numeric = numeric_grad(&pair, |e| loss::similarity(&e[0], &e[1], kind).unwrap());
            track(name, rel_err(&analytic, &numeric));
        }

        // encoder: gradient of a random projection of the embedding
        let input_dim = r.random_range(1..=4);
        let layers = r.random_range(1..=2);
        let hidden = r.random_range(1..=4);
        let embed_dim = r.random_range(1..=4);
        let steps = r.random_range(1..=5);
        let params = ParameterSet::init(EncoderConfig::new(input_dim, layers, hidden, embed_dim), seed).unwrap();
        let x: Vec<f64> = (0..steps * input_dim).map(|_| r.random_range(0.0..1.0)).collect();
        let w: Vec<f64> = (0..embed_dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let objective = |p: &ParameterSet, x: &[f64]| -> f64 {
            let e = encoder::encode(p, Input::Dense { data: x, dim: input_dim }).unwrap();
            e.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let cache = encoder::forward(&params, Input::Dense { data: &x, dim: input_dim }).unwrap();
        let (grads, dx) = encoder::backward(&params, &cache, &w).unwrap();
        for (ti, t) in grads.tensors().iter().enumerate() {
            let mut p = params.clone();
            let mut numeric = Vec::with_capacity(t.data.len());
            for k in 0..t.data.len() {
                let orig = p.tensors()[ti].data[k];
                p.tensors_mut()[ti].data[k] = orig + H;
                let up = objective(&p, &x);
                p.tensors_mut()[ti].data[k] = orig - H;
                let down = objective(&p, &x);
                p.tensors_mut()[ti].data[k] = orig;
                numeric.push((up - down) / (2.0 * H));
            }
            track("encoder parameters", rel_err(&t.data, &numeric));
        }
        let dx = dx.expect("dense input gradient");
        let mut xp = x.clone();
        let numeric: Vec<f64> = (0..x.len())
            .map(|k| {
                xp[k] = x[k] + H;
                let up = objective(&params, &xp);
                xp[k] = x[k] - H;
                let down = objective(&params, &xp);
                xp[k] = x[k];
                (up - down) / (2.0 * H)
            })
            .collect();
        track("encoder input", rel_err(&dx, &numeric));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = worst.iter().all(|(_, e)| *e < GRAD_TOL) && elapsed < 60.0;
    let detail: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    report(1, pass, &format!("({INSTANCES} instances, {elapsed:.1}s) worst: {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_2_probability_and_loss_invariants() {
    let mut worst_row = 0f64;
    let mut min_loss = f64::INFINITY;
    let mut worst_shift = 0f64;
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, 1002, 0);
        let n = r.random_range(2..=8);
        let dim = r.random_range(1..=6);
        for scale in [1e-3, 1.0, 1e3] {
            let emb = random_emb(&mut r, n, dim, scale);
            for row in loss::induced_probs(&emb).unwrap() {
                worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
        let emb = random_emb(&mut r, n, dim, 2.0);
        let labels = random_labels(&mut r, n);
        let shift: Vec<f64> = (0..dim).map(|_| r.random_range(-50.0..50.0)).collect();
        let moved: Vec<Vec<f64>> = emb.iter().map(|e| e.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        for mode in [AneMode::Pivot, AneMode::Full] {
            let l = loss::ane_loss(&emb, &labels, mode).unwrap();
            min_loss = min_loss.min(l);
            let lm = loss::ane_loss(&moved, &labels, mode).unwrap();
            worst_shift = worst_shift.max((l - lm).abs() / l.abs().max(1.0));
        }
        for kind in [Similarity::ExpNegL2, Similarity::NegL2] {
            let l = loss::batch_triplet_loss(&emb, &labels, kind).unwrap();
            let lm = loss::batch_triplet_loss(&moved, &labels, kind).unwrap();
            worst_shift = worst_shift.max((l - lm).abs() / l.abs().max(1.0));
        }
    }
    // q matching p on its support: positives coincide with the pivot, the
    // rest are far enough that their neighbor probability underflows
    let mut zero_loss = 0f64;
    for c in 1..=4usize {
        let mut emb = vec![vec![0.0, 0.0]; c + 1];
        let mut labels = vec![0; c + 1];
        for k in 0..3 {
            emb.push(vec![100.0 + 50.0 * k as f64, -80.0]);
            labels.push(k + 1);
        }
        zero_loss = zero_loss.max(loss::ane_loss(&emb, &labels, AneMode::Pivot).unwrap().abs());
    }
    let pass = worst_row <= 1e-9 && min_loss >= 0.0 && zero_loss <= 1e-9 && worst_shift <= 1e-9;
    report(
        2,
        pass,
        &format!("row-sum err {worst_row:.1e}, min loss {min_loss:.3e}, matched loss {zero_loss:.1e}, shift err {worst_shift:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_positive_pair_attenuation() {
    // pair (0, 1) shares a label; 1 slides towards 0 along a fixed direction
    let labels = [0, 0, 1, 1, 2, 2];
    let base = vec![
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
        vec![1.2, -0.4, 0.3],
        vec![1.0, 0.2, -0.5],
        vec![-0.8, 0.9, 0.1],
        vec![-0.3, -1.1, 0.6],
    ];
    let mut points = Vec::new();
    for step in 0..20 {
        let d = 2.0 - 0.1 * step as f64;
        let mut emb = base.clone();
        emb[1] = vec![d * 0.6, d * 0.8, 0.0];
        let q01 = loss::induced_probs_row(&emb, 0).unwrap()[1];
        let ane = loss::ane_pair_weights(&emb, &labels).unwrap()[0][1].abs();
        let triplet = loss::batch_triplet_pair_weights(&emb, &labels).unwrap()[0][1].abs();
        points.push((q01, ane, triplet));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let strictly_increasing_q = points.windows(2).all(|w| w[0].0 < w[1].0);
    let ane_decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
    let triplet_increasing = points.windows(2).all(|w| w[1].2 > w[0].2);
    let pass = strictly_increasing_q && ane_decreasing && triplet_increasing;
    let (lo, hi) = (points[0], points[points.len() - 1]);
    report(
        3,
        pass,
        &format!(
            "q {:.3}->{:.3}: neighbor-embedding coef {:.3}->{:.3}, batch-triplet coef {:.3}->{:.3}",
            lo.0, hi.0, lo.1, hi.1, lo.2, hi.2
        ),
    );
    assert!(pass);
}

/// Sequential reference scan written independently of the index.
fn naive_sorted(index: &EmbeddingIndex, q: &[f64], metric: Metric) -> Vec<(f64, usize)> {
    let qn = norm(q);
    let mut all: Vec<(f64, usize)> = (0..index.len())
        .map(|i| {
            let e: Vec<f64> = index.vector(i).iter().map(|&v| v as f64).collect();
            let d = match metric {
                Metric::L2 => e.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(),
                Metric::Cosine => {
                    let en = norm(&e);
                    if en == 0.0 {
                        1.0
                    } else {
                        1.0 - e.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / (en * qn)
                    }
                }
            };
            (d, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all
}

fn random_search_index(r: &mut Rng, entries: usize, dim: usize, distinct: usize) -> EmbeddingIndex {
    let pool: Vec<Vec<f32>> = (0..distinct).map(|_| (0..dim).map(|_| r.random_range(-1.0f32..1.0)).collect()).collect();
    let mut index = EmbeddingIndex::new(dim).unwrap();
    for i in 0..entries {
        // repeated vectors make exact ties common
        index.add_f32(&format!("w{i}"), "", &pool[r.random_range(0..distinct)]).unwrap();
    }
    index
}

#[test]
fn criterion_4_search_exactness_and_scale() {
    let mut r = rng::stream(4, 1004, 0);
    let dim = 16;
    let index = random_search_index(&mut r, 10_000, dim, 2_500);
    let queries: Vec<Vec<f64>> = (0..100).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let mut mismatches = 0;
    for metric in [Metric::L2, Metric::Cosine] {
        let expected: Vec<Vec<(f64, usize)>> = queries.iter().map(|q| naive_sorted(&index, q, metric)).collect();
        for workers in [1, 4, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
            let (nearest, tops): (Vec<Match>, Vec<Vec<Match>>) = pool.install(|| {
                let nearest = index.batch_nearest(&queries, metric).unwrap();
                let tops = queries.iter().map(|q| index.top_k(q, 10, metric).unwrap()).collect();
                (nearest, tops)
            });
            for (qi, exp) in expected.iter().enumerate() {
                if nearest[qi].entry != exp[0].1 || index.label(nearest[qi].entry) != index.label(exp[0].1) {
                    mismatches += 1;
                }
                let got: Vec<usize> = tops[qi].iter().map(|m| m.entry).collect();
                let want: Vec<usize> = exp[..10].iter().map(|e| e.1).collect();
                if got != want {
                    mismatches += 1;
                }
            }
        }
    }

    let big_dim = 40;
    let mut big = EmbeddingIndex::new(big_dim).unwrap();
    let mut v = vec![0f32; big_dim];
    for i in 0..1_000_000 {
        v.iter_mut().for_each(|x| *x = r.random_range(-1.0f32..1.0));
        big.add_f32(&format!("e{i}"), "", &v).unwrap();
    }
    let big_queries: Vec<Vec<f64>> =
        (0..100).map(|_| (0..big_dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let t0 = Instant::now();
    let hits = big.batch_nearest(&big_queries, Metric::L2).unwrap();
    let scan_secs = t0.elapsed().as_secs_f64();
    let mut spot_mismatches = 0;
    for qi in [0, 17, 42, 73, 99] {
        if hits[qi].entry != naive_sorted(&big, &big_queries[qi], Metric::L2)[0].1 {
            spot_mismatches += 1;
        }
    }
    let pass = mismatches == 0 && spot_mismatches == 0 && scan_secs < 60.0;
    report(
        4,
        pass,
        &format!(
            "1e4x100 mismatches {mismatches} (2 metrics x workers 1/4/8); 1e6x40x100 scan {scan_secs:.1}s, spot mismatches {spot_mismatches}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Desk-scale experiments shared by criteria 5 to 8.

const SEEDS: [u64; 3] = [1, 2, 3];
const DESK_DIM: usize = 16;
const TREND_DIMS: [usize; 3] = [8, 16, 32];
const AP_UTTERANCES: usize = 600;
const CONF_TRIPLES: usize = 300;

struct Desk {
    world: World,
    train: Vec<Utterance>,
    dev: Vec<Utterance>,
    test: Vec<Utterance>,
    refs: Vec<String>,
}

impl Desk {
    fn new(seed: u64) -> Desk {
        let world = World::generate(&WorldConfig { seed, ..WorldConfig::default() }).unwrap();
        let n = world.lexicon.len();
        let split = |total: usize, k: u64, prefix: &str| {
            let counts = CountSpec::Multinomial { total, weights: Weights::Uniform, min_count: 2, min_count_fraction: 1.0 };
            let synth = SynthParams { rng_seed: rng::derive(seed, 100 + k, 0), ..SynthParams::default() };
            sample_corpus(&world.lexicon, &world.kernel, world.inventory, &counts, &synth, prefix, Parallelism::Parallel)
                .unwrap()
        };
        let train = split(20_000, 0, "tr");
        let dev = split(2 * n, 1, "dv");
        let test = split(4 * n, 2, "te");
        let refs = test.iter().map(|u| world.lexicon.label_of(&u.y).unwrap().to_string()).collect();
        Desk { world, train, dev, test, refs }
    }

    fn ap_set(&self) -> &[Utterance] {
        &self.test[..AP_UTTERANCES.min(self.test.len())]
    }
}

/// One protocol for every system: default early stopping (at most 30
/// epochs, patience 5) with a raised learning rate.
fn desk_config(seed: u64, dim: usize, objective: Objective) -> TrainConfig {
    let mut cfg = TrainConfig { objective, embed_dim: dim, seed, ..TrainConfig::default() };
    cfg.adam.lr = 3e-3;
    cfg
}

#[derive(Debug, Clone, Copy, Default)]
struct AneRun {
    accuracy: f64,
    ap: f64,
    cross_ap: f64,
    confusable_closer: f64,
    distill_ratio: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct SeedResults {
    ane: AneRun,
    triplet_l2_accuracy: f64,
    single_view_ap: f64,
    joint_ap: f64,
}

fn run_ane(desk: &Desk, seed: u64, dim: usize) -> AneRun {
    let mode = Parallelism::Parallel;
    let text_dim = desk.world.inventory.text_dim();
    let f = trainer::train_f(&desk_config(seed, dim, Objective::AnePivot), &desk.train, &desk.dev).unwrap();
    let g = trainer::train_g_distill(&desk_config(seed, dim, Objective::DistillMse), &f.params[0], text_dim, &desk.train, &desk.dev)
        .unwrap();
    let (f, g) = (&f.params[0], &g.params[0]);
    let accuracy =
        eval::eval_recognition(f, g, &desk.test, &desk.refs, desk.world.lexicon.entries(), Metric::L2, mode).unwrap().value();
    let ap = eval::eval_discrimination_ap(f, desk.ap_set(), Metric::L2, mode).unwrap();
    let cross_ap = eval::eval_cross_view_ap(f, g, desk.ap_set(), Metric::L2, mode).unwrap();
    let words: Vec<_> = desk.world.lexicon.entries().iter().map(|e| e.pron.clone()).collect();
    let triples =
        eval::confusability_triples(&words, &desk.world.kernel, CONF_TRIPLES, &mut rng::stream(seed, rng::EVAL, 7)).unwrap();
    let confusable_closer = eval::confusability_ordering(g, &triples, mode).unwrap();

    // dev-set distillation error against the typical between-class spread
    let fe = eval::embed_acoustic(f, &desk.dev, mode).unwrap();
    let ge = eval::embed_text(g, &desk.dev.iter().map(|u| u.y.clone()).collect::<Vec<_>>(), mode).unwrap();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mse = fe.iter().zip(&ge).map(|(a, b)| sq(a, b)).sum::<f64>() / fe.len() as f64;
    let (mut between, mut pairs) = (0.0, 0usize);
    for i in 0..fe.len() {
        for j in i + 1..fe.len() {
            if desk.dev[i].y != desk.dev[j].y {
                between += sq(&fe[i], &fe[j]);
                pairs += 1;
            }
        }
    }
    AneRun { accuracy, ap, cross_ap, confusable_closer, distill_ratio: mse / (between / pairs as f64) }
}

fn run_seed(seed: u64) -> SeedResults {
    let t0 = Instant::now();
    let desk = Desk::new(seed);
    let mode = Parallelism::Parallel;
    let text_dim = desk.world.inventory.text_dim();
    let ane = run_ane(&desk, seed, DESK_DIM);

    let mut cfg = desk_config(seed, DESK_DIM, Objective::TripletMultiview);
    cfg.triplet.similarity = Similarity::ExpNegL2;
    let tripp = trainer::train_fg_joint(&cfg, text_dim, &desk.train, &desk.dev).unwrap();
    let triplet_l2_accuracy = eval::eval_recognition(
        &tripp.params[0],
        &tripp.params[1],
        &desk.test,
        &desk.refs,
        desk.world.lexicon.entries(),
        Metric::L2,
        mode,
    )
    .unwrap()
    .value();

    let tripf = trainer::train_f(&desk_config(seed, DESK_DIM, Objective::TripletSingleview), &desk.train, &desk.dev).unwrap();
    let single_view_ap = eval::eval_discrimination_ap(&tripf.params[0], desk.ap_set(), Metric::Cosine, mode).unwrap();

    let mut cfg = desk_config(seed, DESK_DIM, Objective::TripletMultiview);
    cfg.triplet.similarity = Similarity::Cosine;
    let tripfg = trainer::train_fg_joint(&cfg, text_dim, &desk.train, &desk.dev).unwrap();
    let joint_ap = eval::eval_discrimination_ap(&tripfg.params[0], desk.ap_set(), Metric::Cosine, mode).unwrap();

    let r = SeedResults { ane, triplet_l2_accuracy, single_view_ap, joint_ap };
    println!("seed {seed}: {r:?} ({:.0}s)", t0.elapsed().as_secs_f64());
    r
}

fn desk_results() -> &'static [SeedResults] {
    static RESULTS: OnceLock<Vec<SeedResults>> = OnceLock::new();
    RESULTS.get_or_init(|| SEEDS.iter().map(|&s| run_seed(s)).collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn criterion_5_method_ordering() {
    let res = desk_results();
    let ane_acc = median(res.iter().map(|r| r.ane.accuracy).collect());
    let trip_acc = median(res.iter().map(|r| r.triplet_l2_accuracy).collect());
    let ane_ap = median(res.iter().map(|r| r.ane.ap).collect());
    let single_ap = median(res.iter().map(|r| r.single_view_ap).collect());
    let joint_ap = median(res.iter().map(|r| r.joint_ap).collect());
    let accuracy_gap = 100.0 * (ane_acc - trip_acc);
    let pass_a = accuracy_gap >= 2.0;
    let pass_b = ane_ap + 0.01 >= single_ap && single_ap + 0.01 >= joint_ap;
    report(
        5,
        pass_a && pass_b,
        &format!(
            "(a) accuracy {:.1} vs exp-neg-l2 triplet {:.1} (gap {accuracy_gap:.1} points); (b) AP {ane_ap:.3} / {single_ap:.3} / {joint_ap:.3}",
            100.0 * ane_acc,
            100.0 * trip_acc
        ),
    );
    assert!(pass_a, "accuracy gap {accuracy_gap:.2} < 2 points");
    assert!(pass_b, "AP ordering violated");
}

#[test]
fn criterion_6_accuracy_grows_with_dimension() {
    let shared = desk_results();
    let mut medians = Vec::new();
    for &dim in &TREND_DIMS {
        let accs: Vec<f64> = SEEDS
            .iter()
            .zip(shared)
            .map(|(&seed, r)| if dim == DESK_DIM { r.ane.accuracy } else { run_ane(&Desk::new(seed), seed, dim).accuracy })
            .collect();
        println!("E={dim}: accuracies {accs:?}");
        medians.push(median(accs));
    }
    let pass = medians.windows(2).all(|w| w[1] + 0.005 >= w[0]);
    let shown: Vec<String> = TREND_DIMS.iter().zip(&medians).map(|(d, m)| format!("E={d} {:.1}", 100.0 * m)).collect();
    report(6, pass, &shown.join(", "));
    assert!(pass);
}

#[test]
fn criterion_7_confusable_substitutions_stay_closer() {
    let res = desk_results();
    let fractions: Vec<f64> = res.iter().map(|r| r.ane.confusable_closer).collect();
    let pass = fractions.iter().all(|&f| f >= 0.9);
    report(7, pass, &format!("{CONF_TRIPLES} triples per seed, fraction closer {fractions:.3?}"));
    assert!(pass);
}

#[test]
fn criterion_8_distillation_fidelity() {
    let res = desk_results();
    let ratios: Vec<f64> = res.iter().map(|r| r.ane.distill_ratio).collect();
    let cross: Vec<(f64, f64)> = res.iter().map(|r| (r.ane.cross_ap, r.ane.ap)).collect();
    let pass = ratios.iter().all(|&r| r < 0.1) && cross.iter().all(|(x, a)| *x >= 0.9 * a);
    report(8, pass, &format!("squared-error ratios {ratios:.4?}; (cross-view AP, acoustic AP) {cross:.3?}"));
    assert!(pass);
}

// ---------------------------------------------------------------------------

fn random_posteriorgram(r: &mut Rng) -> Posteriorgram {
    let frames = r.random_range(1..20);
    let dim = r.random_range(1..60);
    let data = (0..frames * dim)
        .map(|_| match r.random_range(0..10) {
            0 => 0.0,
            1 => f32::MIN_POSITIVE,
            2 => -0.0,
            _ => r.random_range(0.0f32..1.0),
        })
        .collect();
    Posteriorgram::new(frames, dim, data).unwrap()
}

#[test]
fn criterion_9_formats_roundtrip_and_commands_are_reproducible() {
    let mut failures = Vec::new();
    for seed in 0..200u64 {
        let mut r = rng::stream(seed, 1009, 0);

        let x = random_posteriorgram(&mut r);
        let bytes = encode_posteriorgram(&x).unwrap();
        let back = decode_posteriorgram(&bytes).unwrap();
        let same_bits = back.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same_bits || back.frames() != x.frames() || encode_posteriorgram(&back).unwrap() != bytes {
            failures.push(format!("posteriorgram seed {seed}"));
        }

        let cfg = EncoderConfig::new(r.random_range(1..8), r.random_range(1..3), r.random_range(1..6), r.random_range(1..6));
        let params = ParameterSet::init(cfg, seed).unwrap();
        let bytes = encode_checkpoint(&params).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        let same_bits = back
            .tensors()
            .iter()
            .zip(params.tensors())
            .all(|(a, b)| a.name == b.name && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        if !same_bits || back.config() != params.config() || encode_checkpoint(&back).unwrap() != bytes {
            failures.push(format!("checkpoint seed {seed}"));
        }

        let dim = r.random_range(1..12);
        let mut index = EmbeddingIndex::new(dim).unwrap();
        for i in 0..r.random_range(0..30) {
            let v: Vec<f32> = (0..dim).map(|_| r.random_range(-3.0f32..3.0)).collect();
            index.add_f32(&format!("word {i} é"), &format!("{} {}", i, i + 1), &v).unwrap();
        }
        let bytes = encode_index(&index).unwrap();
        let back = decode_index(&bytes).unwrap();
        let same = back.len() == index.len()
            && (0..index.len()).all(|i| {
                back.label(i) == index.label(i)
                    && back.pron_id(i) == index.pron_id(i)
                    && back.vector(i).iter().zip(index.vector(i)).all(|(a, b)| a.to_bits() == b.to_bits())
            });
        if !same || encode_index(&back).unwrap() != bytes {
            failures.push(format!("index seed {seed}"));
        }

        let records: Vec<ManifestRecord> = (0..r.random_range(0..10))
            .map(|i| ManifestRecord {
                id: format!("u{seed}-{i}"),
                pron: (0..r.random_range(1..8)).map(|_| r.random_range(0..u16::MAX)).collect(),
                path: format!("post/u{seed}-{i}.anex").into(),
            })
            .collect();
        let text = format_manifest(&records);
        let back = parse_manifest(&text).unwrap();
        if back != records || format_manifest(&back) != text {
            failures.push(format!("manifest seed {seed}"));
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    let one = common::run_pipeline(&tmp.path().join("one"), 1);
    let again = common::run_pipeline(&tmp.path().join("again"), 1);
    let four = common::run_pipeline(&tmp.path().join("four"), 4);
    let trees = [tmp.path().join("one"), tmp.path().join("again"), tmp.path().join("four")].map(|p| common::tree(&p));
    if one != again || trees[0] != trees[1] {
        failures.push("rerun with the same seeds differs".into());
    }
    if one != four || trees[0] != trees[2] {
        failures.push("--workers 4 differs from --workers 1".into());
    }
    let pass = failures.is_empty();
    report(
        9,
        pass,
        &format!("200 instances x 4 formats, {} files x 3 command runs; failures {failures:?}", trees[0].len()),
    );
    assert!(pass);
}
