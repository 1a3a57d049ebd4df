//! Desk-scale comparison of the neighbor-embedding encoders against the
//! triplet baselines on a synthetic corpus.
//!
//! `cargo run --release --example desk -- [seed] [embed_dim] [which]`
//! where `which` is a comma list of `ane`, `tripfg`, `tripp`, `tripf`.

use std::time::Instant;

use ane_core::corpus::{sample_corpus, CountSpec, SynthParams, Utterance, Weights, World, WorldConfig};
use ane_core::eval;
use ane_core::loss::Similarity;
use ane_core::par::Parallelism;
use ane_core::search::Metric;
use ane_core::trainer::{self, Objective, TrainConfig};

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> ane_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let dim: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let which = args.get(3).cloned().unwrap_or_else(|| "ane,tripp,tripf,tripfg".into());

    let world = World::generate(&WorldConfig { seed, ..WorldConfig::default() })?;
    let synth = |s: u64| SynthParams { noise_temperature: env_or("NOISE", 0.1), rng_seed: s, ..SynthParams::default() };
    let n = world.lexicon.len();
    let split = |total: usize, s: u64, prefix: &str| -> ane_core::Result<Vec<Utterance>> {
        let counts = CountSpec::Multinomial { total, weights: Weights::Uniform, min_count: 2, min_count_fraction: 1.0 };
        sample_corpus(&world.lexicon, &world.kernel, world.inventory, &counts, &synth(s), prefix, Parallelism::Parallel)
    };
    let t0 = Instant::now();
    let train = split(env_or("TRAIN", 20_000), seed * 10 + 1, "tr")?;
    let dev = split(n * 2, seed * 10 + 2, "dv")?;
    let test = split(n * 4, seed * 10 + 3, "te")?;
    eprintln!("corpus {} / {} / {} in {:.1}s", train.len(), dev.len(), test.len(), t0.elapsed().as_secs_f64());

    let refs: Vec<String> =
        test.iter().map(|u| world.lexicon.label_of(&u.y).expect("lexicon pron").to_string()).collect();
    let ap_set: Vec<Utterance> = test.iter().take(env_or("APN", 600)).cloned().collect();
    let text_dim = world.inventory.text_dim();

    let base = TrainConfig {
        embed_dim: dim,
        seed,
        max_epochs: env_or("EPOCHS", 30),
        patience: env_or("PATIENCE", 3),
        minibatches_per_epoch: env_or("MBE", 0),
        ..TrainConfig::default()
    };
    let mut base = base;
    base.adam.lr = env_or("LR", base.adam.lr);
    base.f_shape.hidden = env_or("FH", base.f_shape.hidden);
    base.g_shape.hidden = env_or("GH", base.g_shape.hidden);
    base.sampler.microbatch_size = env_or("N", base.sampler.microbatch_size);
    base.microbatches_per_minibatch = env_or("M", base.microbatches_per_minibatch);
    base.sampler.forced_positives = env_or("FP", base.sampler.forced_positives);
    base.clip_norm = env_or("CLIP", base.clip_norm);
    let mode = Parallelism::Parallel;
    for w in which.split(',') {
        let t = Instant::now();
        match w {
            "ane" => {
                let f = trainer::train_f(&TrainConfig { objective: Objective::AnePivot, ..base.clone() }, &train, &dev)?;
                eprintln!("  f: epochs {} best {} dev {:.4} ({:.0}s)", f.epochs_run, f.best_epoch, f.best_dev, t.elapsed().as_secs_f64());
                let g = trainer::train_g_distill(
                    &TrainConfig { objective: Objective::DistillMse, ..base.clone() },
                    &f.params[0],
                    text_dim,
                    &train,
                    &dev,
                )?;
                eprintln!("  g: epochs {} best {} dev {:.4} ({:.0}s)", g.epochs_run, g.best_epoch, g.best_dev, t.elapsed().as_secs_f64());
                let (f, g) = (&f.params[0], &g.params[0]);
                let acc = eval::eval_recognition(f, g, &test, &refs, world.lexicon.entries(), Metric::L2, mode)?;
                let ap = eval::eval_discrimination_ap(f, &ap_set, Metric::L2, mode)?;
                let xap = eval::eval_cross_view_ap(f, g, &ap_set, Metric::L2, mode)?;
                let prons: Vec<_> = world.lexicon.entries().iter().map(|e| e.pron.clone()).collect();
                let triples = eval::confusability_triples(&prons, &world.kernel, 300, &mut ane_core::rng::stream(seed, 99, 0))?;
                let conf = eval::confusability_ordering(g, &triples, mode)?;
                let fe = eval::embed_acoustic(f, &dev, mode)?;
                let ge = eval::embed_text(g, &dev.iter().map(|u| u.y.clone()).collect::<Vec<_>>(), mode)?;
                let mse = fe.iter().zip(&ge).map(|(a, b)| eval::pair_distance(a, b, Metric::L2).unwrap()).sum::<f64>() / fe.len() as f64;
                let mut between = 0.0;
                let mut cnt = 0;
                for i in (0..fe.len()).step_by(3) {
                    for j in (i + 1..fe.len()).step_by(7) {
                        if dev[i].y != dev[j].y {
                            between += eval::pair_distance(&fe[i], &fe[j], Metric::L2).unwrap();
                            cnt += 1;
                        }
                    }
                }
                println!(
                    "ane seed={seed} E={dim} acc={:.4} ap={ap:.4} xap={xap:.4} conf={conf:.3} mse_ratio={:.4} ({:.0}s)",
                    acc.value(),
                    mse / (between / cnt as f64),
                    t.elapsed().as_secs_f64()
                );
            }
            "anef" => {
                let f = trainer::train_f(&TrainConfig { objective: Objective::AnePivot, ..base.clone() }, &train, &dev)?;
                let ap = eval::eval_discrimination_ap(&f.params[0], &ap_set, Metric::L2, mode)?;
                let apc = eval::eval_discrimination_ap(&f.params[0], &ap_set, Metric::Cosine, mode)?;
                let apt = eval::eval_discrimination_ap(&f.params[0], &train[..600], Metric::L2, mode)?;
                println!(
                    "anef seed={seed} E={dim} ap={ap:.4} ap_cos={apc:.4} ap_train={apt:.4} epochs={} best={} ({:.0}s)",
                    f.epochs_run,
                    f.best_epoch,
                    t.elapsed().as_secs_f64()
                );
            }
            "tripp" | "tripfg" => {
                let sim = if w == "tripp" { Similarity::ExpNegL2 } else { Similarity::Cosine };
                let metric = if w == "tripp" { Metric::L2 } else { Metric::Cosine };
                let mut cfg = TrainConfig { objective: Objective::TripletMultiview, ..base.clone() };
                cfg.triplet.similarity = sim;
                let out = trainer::train_fg_joint(&cfg, text_dim, &train, &dev)?;
                let (f, g) = (&out.params[0], &out.params[1]);
                let acc = eval::eval_recognition(f, g, &test, &refs, world.lexicon.entries(), metric, mode)?;
                let ap = eval::eval_discrimination_ap(f, &ap_set, metric, mode)?;
                println!(
                    "{w} seed={seed} E={dim} acc={:.4} ap={ap:.4} epochs={} best={} ({:.0}s)",
                    acc.value(),
                    out.epochs_run,
                    out.best_epoch,
                    t.elapsed().as_secs_f64()
                );
            }
            "tripf" => {
                let mut cfg = TrainConfig { objective: Objective::TripletSingleview, ..base.clone() };
                if std::env::var("SIM").as_deref() == Ok("l2") {
                    cfg.triplet.similarity = Similarity::ExpNegL2;
                }
                let out = trainer::train_f(&cfg, &train, &dev)?;
                let ap = eval::eval_discrimination_ap(&out.params[0], &ap_set, Metric::Cosine, mode)?;
                let apl = eval::eval_discrimination_ap(&out.params[0], &ap_set, Metric::L2, mode)?;
                eprintln!("  tripf ap_l2={apl:.4}");
                println!(
                    "tripf seed={seed} E={dim} ap={ap:.4} epochs={} best={} ({:.0}s)",
                    out.epochs_run,
                    out.best_epoch,
                    t.elapsed().as_secs_f64()
                );
            }
            other => eprintln!("unknown system {other}"),
        }
    }
    Ok(())
}
