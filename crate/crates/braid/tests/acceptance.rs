//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured margins. Everything is seeded, so every
//! number here is reproducible bit-for-bit.
//!
//! Headline effects are direction-of-effect reproductions on synthetic
//! data (seeds 0-4) plus hard numeric contracts. Two worlds are used:
//! the three-modality desk world (imu / skel / video, one evaluation-only
//! pair) and an asymmetric-growth world where a wide, very noisy wifi
//! branch joins an established imu-skel trunk.

mod common;

use std::collections::BTreeMap;

use braid::autodiff::mat::Mat;
use braid::autodiff::Tape;
use braid::contrastive::{
    adaptive_weights, build_pairs, infonce_directional, weighted_loss_step, DenominatorMode,
    PairBatch, StepOptions,
};
use braid::data::{generate::generate_topology, DatasetStore, ModalityChannel, PairSpec, Topology};
use braid::eval::{
    forgetting_probe, fusion_eval, one_shot_eval, retrieval_eval, HeadProtocol, OneShotTask,
};
use braid::growth::{
    assemble_model, checkpoint_from_bytes, checkpoint_to_bytes, resolve_plan, run_plan,
    DatasetSummary, GrowthPlan, ModelDims, OrderHeuristic, PhaseRecord, TrainConfig,
};
use braid::model::AlignmentModel;
use common::*;
use rand::Rng;

const SEEDS: std::ops::Range<u64> = 0..5;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// The desk world behind criteria 5, 8, 9, 10, 11.
fn desk_world(seed: u64) -> (Topology, DatasetStore) {
    let topo = Topology::desk_small(1024, 128);
    let store = DatasetStore::new(generate_topology(&topo, seed).unwrap()).unwrap();
    (topo, store)
}

/// The asymmetric-growth world behind criteria 6 and 7: an established
/// imu-skel trunk, then a wide and very noisy wifi branch through skel.
fn asym_world(n_train: usize, seed: u64) -> (Topology, DatasetStore) {
    let mut topo = Topology::desk_small(n_train, 128);
    let ch = |modality: &str, feat, noise, rank, hidden, out| ModalityChannel {
        modality: modality.into(),
        feat_dim: feat,
        noise_sigma: noise,
        info_rank: rank,
        encoder_hidden: hidden,
        encoder_out: out,
    };
    topo.channels = vec![
        ch("imu", 3, 0.25, 8, 56, 40),
        ch("skel", 3, 0.12, 8, 48, 30),
        ch("wifi", 16, 2.0, 3, 160, 512),
    ];
    topo.pairs = vec![
        PairSpec {
            id: "imu_skel".into(),
            a: "imu".into(),
            b: "skel".into(),
            n_train,
            n_test: 128,
        },
        PairSpec {
            id: "wifi_skel".into(),
            a: "wifi".into(),
            b: "skel".into(),
            n_train,
            n_test: 128,
        },
    ];
    let store = DatasetStore::new(generate_topology(&topo, seed).unwrap()).unwrap();
    (topo, store)
}

fn desk_plan(store: &DatasetStore) -> GrowthPlan {
    let mods: Vec<String> = vec!["imu".into(), "skel".into(), "video".into()];
    let summaries: Vec<DatasetSummary> = store.iter().map(DatasetSummary::from).collect();
    resolve_plan(&mods, &summaries, OrderHeuristic::GivenOrder).unwrap()
}

fn asym_plan(store: &DatasetStore) -> GrowthPlan {
    let mods: Vec<String> = vec!["imu".into(), "skel".into(), "wifi".into()];
    let summaries: Vec<DatasetSummary> = store.iter().map(DatasetSummary::from).collect();
    resolve_plan(&mods, &summaries, OrderHeuristic::GivenOrder).unwrap()
}

fn pair_recall(model: &AlignmentModel, ds: &braid::data::PairedDataset) -> f64 {
    let ab = retrieval_eval(model, &ds.modality_a, &ds.modality_b, ds).unwrap();
    let ba = retrieval_eval(model, &ds.modality_b, &ds.modality_a, ds).unwrap();
    0.5 * (ab.recall_at_1 + ba.recall_at_1)
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_gradient_fidelity() {
    // Primitive-level: every differentiable primitive against central
    // finite differences, 20 random instances each, relative 1e-6.
    for seed in 0..20u64 {
        let (m, k) = random_shape(seed, 6);
        let (n, _) = random_shape(seed + 100, 6);
        let reduce = |t: &mut Tape, x| {
            let (r, c) = t.value(x).shape();
            let w = t.leaf(random_mat(r, c, -1.0, 1.0, seed ^ 0xa5a5));
            let p = t.mul(x, w).unwrap();
            t.sum(p).unwrap()
        };
        let a = random_mat(m, k, -2.0, 2.0, seed);
        let b = random_mat(k, n, -2.0, 2.0, seed + 1);
        check_tape_fn("matmul", &[a.clone(), b], 1e-6, &|t, ids| {
            let y = t.matmul(ids[0], ids[1]).unwrap();
            reduce(t, y)
        });
        let c = random_mat(m, k, -2.0, 2.0, seed + 2);
        check_tape_fn("add", &[a.clone(), c.clone()], 1e-6, &|t, ids| {
            let y = t.add(ids[0], ids[1]).unwrap();
            reduce(t, y)
        });
        check_tape_fn("sub", &[a.clone(), c.clone()], 1e-6, &|t, ids| {
            let y = t.sub(ids[0], ids[1]).unwrap();
            reduce(t, y)
        });
        check_tape_fn("mul", &[a.clone(), c.clone()], 1e-6, &|t, ids| {
            let y = t.mul(ids[0], ids[1]).unwrap();
            reduce(t, y)
        });
        let bias = random_mat(1, k, -1.0, 1.0, seed + 3);
        check_tape_fn("add_bias", &[a.clone(), bias], 1e-6, &|t, ids| {
            let y = t.add_bias(ids[0], ids[1]).unwrap();
            reduce(t, y)
        });
        check_tape_fn("scale", &[a.clone()], 1e-6, &|t, ids| {
            let y = t.scale(ids[0], -1.37).unwrap();
            reduce(t, y)
        });
        check_tape_fn("transpose", &[a.clone()], 1e-6, &|t, ids| {
            let y = t.transpose(ids[0]).unwrap();
            reduce(t, y)
        });
        check_tape_fn("sum", &[a.clone()], 1e-6, &|t, ids| t.sum(ids[0]).unwrap());
        let away = random_mat_away_from_zero(m, k, seed + 4);
        check_tape_fn("relu", &[away.clone()], 1e-6, &|t, ids| {
            let y = t.relu(ids[0]).unwrap();
            reduce(t, y)
        });
        check_tape_fn("tanh", &[a.clone()], 1e-6, &|t, ids| {
            let y = t.tanh(ids[0]).unwrap();
            reduce(t, y)
        });
        check_tape_fn("exp", &[a.clone()], 1e-6, &|t, ids| {
            let y = t.exp(ids[0]).unwrap();
            reduce(t, y)
        });
        let pos = random_mat(m, k, 0.3, 3.0, seed + 5);
        check_tape_fn("log", &[pos], 1e-6, &|t, ids| {
            let y = t.log(ids[0]).unwrap();
            reduce(t, y)
        });
        let logits = random_mat(m, k, -3.0, 3.0, seed + 6);
        check_tape_fn("row_softmax", &[logits.clone()], 1e-6, &|t, ids| {
            let y = t.row_softmax(ids[0]).unwrap();
            reduce(t, y)
        });
        check_tape_fn("row_logsumexp", &[logits], 1e-6, &|t, ids| {
            let y = t.row_logsumexp(ids[0]).unwrap();
            reduce(t, y)
        });
        check_tape_fn("l2_normalize_rows", &[away.clone()], 1e-6, &|t, ids| {
            let y = t.l2_normalize_rows(ids[0]).unwrap();
            reduce(t, y)
        });
        let other = random_mat_away_from_zero(n.max(1), k, seed + 7);
        check_tape_fn("cosine_similarity", &[away, other], 1e-6, &|t, ids| {
            let y = t.cosine_similarity(ids[0], ids[1]).unwrap();
            reduce(t, y)
        });
    }

    // Loss-level: the full weighted contrastive loss (weights as
    // constants) against finite differences at 1e-5, 20 instances.
    for seed in 0..20u64 {
        let (mut ta, mut tb, mut proto, batch) = loss_pipeline(seed);
        let mut opts = StepOptions::plain(0.07);
        opts.forced_weights = Some((0.3, 0.7));
        weighted_loss_step(&mut ta, &mut tb, &mut proto, &batch, &opts, None).unwrap();
        for gname in ["concept.a", "concept.b", "prototype"] {
            let analytic: Vec<Mat> = {
                let g = pipeline_group(&ta, &tb, &proto, gname);
                g.tensors.iter().map(|t| t.grad.clone().unwrap()).collect()
            };
            for (ti, a) in analytic.iter().enumerate() {
                let mut numeric = Mat::zeros(a.rows(), a.cols());
                for r in 0..a.rows() {
                    for c in 0..a.cols() {
                        let eval = |delta: f64| {
                            let (mut t2a, mut t2b, mut p2, _) = loss_pipeline(seed);
                            bump_pipeline_param(&mut t2a, &mut t2b, &mut p2, gname, ti, r, c, delta);
                            weighted_loss_value(&t2a, &t2b, &p2, &batch, (0.3, 0.7))
                        };
                        numeric.set(r, c, (eval(FD_H) - eval(-FD_H)) / (2.0 * FD_H));
                    }
                }
                assert_grads_close(a, &numeric, 1e-5, 1e-8, &format!("loss d/d{gname}[{ti}]"));
            }
        }
    }
    println!("PASS criterion-1: gradient fidelity (16 primitives + weighted loss, 20 instances each)");
}

fn loss_pipeline(
    seed: u64,
) -> (
    braid::model::ModalityTower,
    braid::model::ModalityTower,
    braid::model::PrototypeNetwork,
    PairBatch,
) {
    use braid::model::{init_concept_module, EncoderSpec, FrozenEncoder, Modality, ModalityTower};
    let mut rng = braid::rng::rng_from_seed(seed ^ 0xfeed);
    let mk = |name: &str, raw: usize, s: u64| {
        let modality = Modality {
            name: name.into(),
            raw_dim: raw,
            encoder_ids: vec![format!("{name}-0")],
        };
        let enc = FrozenEncoder::from_spec(EncoderSpec {
            id: format!("{name}-0"),
            in_dim: raw,
            hidden: 6,
            out_dim: 5,
            seed: s,
        });
        let concept = init_concept_module(format!("concept.{name}"), 5, 6, 4, s + 10);
        ModalityTower::new(modality, enc, concept)
    };
    let ta = mk("a", 3, seed);
    let tb = mk("b", 5, seed + 1);
    let proto = braid::model::PrototypeNetwork::new(4, 3, 2, seed + 2);
    let batch = PairBatch {
        modality_a: "a".into(),
        modality_b: "b".into(),
        xa: Mat::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0)),
        xb: Mat::from_fn(4, 5, |_, _| rng.gen_range(-1.0..1.0)),
    };
    (ta, tb, proto, batch)
}

fn pipeline_group<'a>(
    ta: &'a braid::model::ModalityTower,
    tb: &'a braid::model::ModalityTower,
    proto: &'a braid::model::PrototypeNetwork,
    name: &str,
) -> &'a braid::autodiff::ParameterGroup {
    if ta.concept.mlp.group.name == name {
        &ta.concept.mlp.group
    } else if tb.concept.mlp.group.name == name {
        &tb.concept.mlp.group
    } else {
        &proto.mlp.group
    }
}

fn bump_pipeline_param(
    ta: &mut braid::model::ModalityTower,
    tb: &mut braid::model::ModalityTower,
    proto: &mut braid::model::PrototypeNetwork,
    name: &str,
    tensor: usize,
    r: usize,
    c: usize,
    delta: f64,
) {
    let g = if ta.concept.mlp.group.name == name {
        &mut ta.concept.mlp.group
    } else if tb.concept.mlp.group.name == name {
        &mut tb.concept.mlp.group
    } else {
        &mut proto.mlp.group
    };
    let v = g.tensors[tensor].value.get(r, c);
    g.tensors[tensor].value.set(r, c, v + delta);
}

fn weighted_loss_value(
    ta: &braid::model::ModalityTower,
    tb: &braid::model::ModalityTower,
    proto: &braid::model::PrototypeNetwork,
    batch: &PairBatch,
    w: (f64, f64),
) -> f64 {
    let mut tape = Tape::new();
    let fa = ta.features_tape(&mut tape, &batch.xa).unwrap();
    let fb = tb.features_tape(&mut tape, &batch.xb).unwrap();
    let ea = proto.forward_tape(&mut tape, fa).unwrap();
    let eb = proto.forward_tape(&mut tape, fb).unwrap();
    let l_ab = infonce_directional(&mut tape, ea, eb, 0.07, DenominatorMode::WithPositive).unwrap();
    let l_ba = infonce_directional(&mut tape, eb, ea, 0.07, DenominatorMode::WithPositive).unwrap();
    0.5 * (w.0 * tape.value(l_ab).scalar() + w.1 * tape.value(l_ba).scalar())
}

// ---------------------------------------------------------------------------

/// Scalar brute-force InfoNCE, fully independent of the tape: naive loops
/// and naive exponentials.
fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn oracle_infonce(anchor: &Mat, other: &Mat, tau: f64) -> f64 {
    let m = anchor.rows();
    let mut total = 0.0;
    for i in 0..m {
        let pos = (oracle_cosine(anchor.row(i), other.row(i)) / tau).exp();
        let mut denom = 0.0;
        for j in 0..m {
            denom += (oracle_cosine(anchor.row(i), other.row(j)) / tau).exp();
        }
        total -= (pos / denom).ln();
    }
    total
}

#[test]
fn criterion_02_loss_oracle_equivalence() {
    let mut checked = 0;
    for m in [2usize, 3, 4, 8] {
        for trial in 0..5u64 {
            let a = random_mat_away_from_zero(m, 5, 1000 + trial + m as u64);
            let b = random_mat_away_from_zero(m, 5, 2000 + trial + m as u64);
            let mut tape = Tape::new();
            let ia = tape.leaf(a.clone());
            let ib = tape.leaf(b.clone());
            let l_ab =
                infonce_directional(&mut tape, ia, ib, 0.07, DenominatorMode::WithPositive)
                    .unwrap();
            let l_ba =
                infonce_directional(&mut tape, ib, ia, 0.07, DenominatorMode::WithPositive)
                    .unwrap();
            let got_ab = tape.value(l_ab).scalar();
            let got_total = 0.5 * (got_ab + tape.value(l_ba).scalar());

            let want_ab = oracle_infonce(&a, &b, 0.07);
            let want_total = 0.5 * (want_ab + oracle_infonce(&b, &a, 0.07));
            assert!(
                (got_ab - want_ab).abs() <= 1e-12 * want_ab.abs().max(1.0),
                "m={m}: directional {got_ab} vs oracle {want_ab}"
            );
            assert!(
                (got_total - want_total).abs() <= 1e-12 * want_total.abs().max(1.0),
                "m={m}: bidirectional {got_total} vs oracle {want_total}"
            );
            checked += 1;
        }
    }
    println!("PASS criterion-2: loss matches the scalar brute-force oracle within 1e-12 ({checked} cases)");
}

#[test]
fn criterion_03_pair_count_contract() {
    let (_, store) = desk_world(0);
    let ds = store.get("imu_skel").unwrap();
    let mut rng = braid::rng::rng_from_seed(3);
    let batch = build_pairs(ds, 256, &mut rng).unwrap();
    assert_eq!(batch.positives(), 256);
    assert_eq!(batch.negatives(), 65_280);
    let small = build_pairs(ds, 2, &mut rng).unwrap();
    assert_eq!((small.positives(), small.negatives()), (2, 2));
    assert!(build_pairs(ds, 1, &mut rng).is_err());
    println!("PASS criterion-3: m positives and m^2-m negatives (m=256 -> 65280 exactly)");
}

#[test]
fn criterion_04_weight_contract() {
    // Forced arithmetic of the weight equations.
    let w = adaptive_weights(2.0, 0.5);
    assert_eq!((w.a_from_b, w.b_from_a), (0.2, 0.8));

    // Normalization on live steps.
    let (mut ta, mut tb, mut proto, batch) = loss_pipeline(0);
    let opts = StepOptions::plain(0.07);
    for _ in 0..5 {
        let r = weighted_loss_step(&mut ta, &mut tb, &mut proto, &batch, &opts, None).unwrap();
        assert!(r.weights_valid(), "weight contract violated: {r:?}");
    }

    // Forced equal weights reproduce the Eq-3 gradients bit-for-bit
    // against the fixed-equal configuration.
    let grads_of = |g: &braid::autodiff::ParameterGroup| -> Vec<f64> {
        g.tensors
            .iter()
            .flat_map(|t| t.grad.as_ref().unwrap().data().to_vec())
            .collect()
    };
    let (mut ta1, mut tb1, mut p1, batch) = loss_pipeline(7);
    let mut fixed = StepOptions::plain(0.07);
    fixed.adaptive = false;
    let r1 = weighted_loss_step(&mut ta1, &mut tb1, &mut p1, &batch, &fixed, None).unwrap();
    let (mut ta2, mut tb2, mut p2, _) = loss_pipeline(7);
    let mut forced = StepOptions::plain(0.07);
    forced.forced_weights = Some((0.5, 0.5));
    let r2 = weighted_loss_step(&mut ta2, &mut tb2, &mut p2, &batch, &forced, None).unwrap();
    assert_eq!(r1.loss_total, r2.loss_total);
    for (g1, g2) in [
        (&ta1.concept.mlp.group, &ta2.concept.mlp.group),
        (&tb1.concept.mlp.group, &tb2.concept.mlp.group),
        (&p1.mlp.group, &p2.mlp.group),
    ] {
        for (a, b) in grads_of(g1).iter().zip(&grads_of(g2)) {
            assert!((a - b).abs() <= 1e-12, "gradient mismatch: {a} vs {b}");
        }
    }
    println!("PASS criterion-4: weights sum to 1 in [0,1]; (2.0,0.5)->(0.2,0.8) exact; equal weights reduce to the unweighted loss");
}

// ---------------------------------------------------------------------------

/// Pre-training baselines calibrated once by a brute-force run and frozen
/// here (see tests/data/alignment_baseline.json, which must stay in sync).
const BASELINE_JSON: &str = include_str!("data/alignment_baseline.json");

#[test]
fn criterion_05_alignment_effect() {
    let baseline: serde_json::Value = serde_json::from_str(BASELINE_JSON).unwrap();
    let required: f64 = baseline["required_factor"].as_f64().unwrap();
    assert_eq!(required, 3.0);

    let mut factors = Vec::new();
    for seed in SEEDS {
        let (_, store) = desk_world(seed);
        let plan = desk_plan(&store);
        let cfg = TrainConfig::desk(seed);
        let mut model = assemble_model(&Topology::desk_small(1024, 128), &ModelDims::default(), seed).unwrap();
        let ds = store.get("imu_skel").unwrap();
        let chance = 1.0 / ds.n_test() as f64;
        let pre = pair_recall(&model, ds).max(chance);

        let recorded = baseline["pre_recall"][seed as usize].as_f64().unwrap();
        assert!(
            (pre - recorded).abs() < 1e-9,
            "seed {seed}: pre-training recall {pre} drifted from the calibrated baseline {recorded}"
        );

        let first = GrowthPlan {
            phases: vec![plan.phases[0].clone()],
        };
        let mut history = Vec::new();
        run_plan(&mut model, &first, &cfg, &store, &mut history, 0, None).unwrap();
        let post = pair_recall(&model, ds);
        factors.push(post / pre);
    }
    let mean_factor = mean(&factors);
    assert!(
        mean_factor >= 3.0,
        "alignment factor {mean_factor:.2} below 3.0 ({factors:?})"
    );
    println!(
        "PASS criterion-5: post/pre recall@1 factor mean {:.2} >= 3.0 (per-seed {:?})",
        mean_factor,
        factors.iter().map(|f| (f * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_06_forgetting_protection() {
    let mut drops_protected = Vec::new();
    let mut drops_unprotected = Vec::new();
    for seed in SEEDS {
        let (topo, store) = asym_world(1024, seed);
        let plan = asym_plan(&store);
        let cfg = TrainConfig::desk(seed);
        let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
        let first = GrowthPlan {
            phases: vec![plan.phases[0].clone()],
        };
        let mut history = Vec::new();
        run_plan(&mut model, &first, &cfg, &store, &mut history, 0, None).unwrap();
        let ds = store.get("imu_skel").unwrap();
        let before = model.clone();

        let mut protected = model.clone();
        let mut h1 = history.clone();
        run_plan(&mut protected, &plan, &cfg, &store, &mut h1, 1, None).unwrap();
        drops_protected.push(forgetting_probe(&before, &protected, ds).unwrap());

        let mut unprotected = model.clone();
        let mut cfg_u = cfg.clone();
        cfg_u.protect_prototype = false;
        let mut h2 = history.clone();
        run_plan(&mut unprotected, &plan, &cfg_u, &store, &mut h2, 1, None).unwrap();
        drops_unprotected.push(forgetting_probe(&before, &unprotected, ds).unwrap());
    }
    let p = mean(&drops_protected);
    let u = mean(&drops_unprotected);
    assert!(
        p < u,
        "protected drop {p:.4} not smaller than unprotected {u:.4} (prot {drops_protected:?} unprot {drops_unprotected:?})"
    );
    println!("PASS criterion-6: prior-pair recall@1 drop {p:.4} protected < {u:.4} unprotected");
}

#[test]
fn criterion_07_adaptive_weighting_effect() {
    let protocol = HeadProtocol::default();

    // (a) Final mean one-shot accuracy, adaptive vs fixed equal weights.
    // Both arms share the initial trunk and train the growth phase without
    // prototype protection so the comparison isolates the weighting switch.
    let mut acc_adaptive = Vec::new();
    let mut acc_fixed = Vec::new();
    for seed in SEEDS {
        let (topo, store) = asym_world(512, seed);
        let plan = asym_plan(&store);
        let cfg = TrainConfig::desk(seed);
        let mut base = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
        let first = GrowthPlan {
            phases: vec![plan.phases[0].clone()],
        };
        let mut h0 = Vec::new();
        run_plan(&mut base, &first, &cfg, &store, &mut h0, 0, None).unwrap();

        let mean_acc = |m: &AlignmentModel| -> f64 {
            let mut total = 0.0;
            for (modality, ds) in [("imu", "imu_skel"), ("skel", "imu_skel"), ("wifi", "wifi_skel")] {
                let task = OneShotTask::from_dataset(
                    store.get(ds).unwrap(),
                    &[modality],
                    topo.latent.num_classes,
                )
                .unwrap();
                total += one_shot_eval(m, &task, seed, &protocol).unwrap().mean / 3.0;
            }
            total
        };
        for adaptive in [true, false] {
            let mut cfg_g = cfg.clone();
            cfg_g.adaptive_weighting = adaptive;
            cfg_g.protect_prototype = false;
            cfg_g.max_epochs = 30;
            let mut m = base.clone();
            let mut h = h0.clone();
            run_plan(&mut m, &plan, &cfg_g, &store, &mut h, 1, None).unwrap();
            if adaptive {
                acc_adaptive.push(mean_acc(&m));
            } else {
                acc_fixed.push(mean_acc(&m));
            }
        }
    }
    let a = mean(&acc_adaptive);
    let f = mean(&acc_fixed);
    assert!(
        a >= f,
        "adaptive accuracy {a:.4} below fixed-equal {f:.4} (adaptive {acc_adaptive:?} fixed {acc_fixed:?})"
    );

    // (b) Junction weight trajectory on the asymmetric phase: starts above
    // 0.8, relaxes below 0.7 by convergence.
    let mut firsts = Vec::new();
    let mut lasts = Vec::new();
    for seed in SEEDS {
        let (topo, store) = asym_world(1024, seed);
        let plan = asym_plan(&store);
        let cfg = TrainConfig::desk(seed);
        let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
        let mut history: Vec<PhaseRecord> = Vec::new();
        run_plan(&mut model, &plan, &cfg, &store, &mut history, 0, None).unwrap();
        firsts.push(history[1].junction_weight_first.expect("growth phase ran"));
        lasts.push(history[1].junction_weight_last.expect("growth phase ran"));
    }
    let first = mean(&firsts);
    let last = mean(&lasts);
    assert!(first > 0.8, "junction weight starts at {first:.3}, needs > 0.8 ({firsts:?})");
    assert!(last < 0.7, "junction weight ends at {last:.3}, needs < 0.7 ({lasts:?})");
    println!(
        "PASS criterion-7: adaptive {a:.3} >= fixed {f:.3}; junction weight {first:.2} -> {last:.2}"
    );
}

#[test]
fn criterion_08_order_robustness() {
    let protocol = HeadProtocol::default();
    let tasks = [("imu", "imu_skel"), ("skel", "imu_skel"), ("video", "skel_video")];
    let mut acc_order1: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut acc_order2: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for seed in SEEDS {
        let (topo, store) = desk_world(seed);
        let summaries: Vec<DatasetSummary> = store.iter().map(DatasetSummary::from).collect();
        let cfg = TrainConfig::desk(seed);
        for (order_idx, mods) in [
            vec!["imu".to_string(), "skel".into(), "video".into()],
            vec!["video".to_string(), "skel".into(), "imu".into()],
        ]
        .into_iter()
        .enumerate()
        {
            let plan = resolve_plan(&mods, &summaries, OrderHeuristic::GivenOrder).unwrap();
            let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
            let mut h = Vec::new();
            run_plan(&mut model, &plan, &cfg, &store, &mut h, 0, None).unwrap();
            for (i, (modality, ds)) in tasks.iter().enumerate() {
                let task = OneShotTask::from_dataset(
                    store.get(ds).unwrap(),
                    &[modality],
                    topo.latent.num_classes,
                )
                .unwrap();
                let acc = one_shot_eval(&model, &task, seed, &protocol).unwrap().mean;
                if order_idx == 0 {
                    acc_order1[i].push(acc);
                } else {
                    acc_order2[i].push(acc);
                }
            }
        }
    }
    let mut gaps = Vec::new();
    for (i, (modality, _)) in tasks.iter().enumerate() {
        let gap = (mean(&acc_order1[i]) - mean(&acc_order2[i])).abs();
        assert!(
            gap <= 0.05,
            "{modality}: order gap {gap:.3} exceeds 5 points (order1 {:.3} vs order2 {:.3})",
            mean(&acc_order1[i]),
            mean(&acc_order2[i])
        );
        gaps.push((modality.to_string(), gap));
    }
    println!(
        "PASS criterion-8: per-modality one-shot gap across two growth orders {:?} (all <= 0.05)",
        gaps.iter().map(|(m, g)| format!("{m}: {:.3}", g)).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_09_fusion() {
    let protocol = HeadProtocol::default();
    let mut margins_trained_pair = Vec::new();
    let mut margins_cross_pair = Vec::new();
    for seed in SEEDS {
        let (topo, store) = desk_world(seed);
        let plan = desk_plan(&store);
        let cfg = TrainConfig::desk(seed);
        let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
        let mut h = Vec::new();
        run_plan(&mut model, &plan, &cfg, &store, &mut h, 0, None).unwrap();

        let acc = |mods: &[&str], ds: &braid::data::PairedDataset| -> f64 {
            let task = OneShotTask::from_dataset(ds, mods, topo.latent.num_classes).unwrap();
            if mods.len() > 1 {
                fusion_eval(&model, &task, seed, &protocol).unwrap().mean
            } else {
                one_shot_eval(&model, &task, seed, &protocol).unwrap().mean
            }
        };
        // The two least-noisy modalities share a training dataset.
        let ds_sv = store.get("skel_video").unwrap();
        let fused = acc(&["skel", "video"], ds_sv);
        let best = acc(&["skel"], ds_sv).max(acc(&["video"], ds_sv));
        margins_trained_pair.push(fused - best);
        // imu and video never co-occur in any training dataset.
        let ds_iv = store.get("imu_video_eval").unwrap();
        let fused = acc(&["imu", "video"], ds_iv);
        let best = acc(&["imu"], ds_iv).max(acc(&["video"], ds_iv));
        margins_cross_pair.push(fused - best);
    }
    let trained = mean(&margins_trained_pair);
    let cross = mean(&margins_cross_pair);
    assert!(
        trained >= -0.02,
        "skel+video fusion margin {trained:.4} below -2 points ({margins_trained_pair:?})"
    );
    assert!(
        cross >= -0.02,
        "imu+video fusion margin {cross:.4} below -2 points ({margins_cross_pair:?})"
    );
    println!(
        "PASS criterion-9: fusion vs best singular margin {trained:+.3} (trained pair), {cross:+.3} (never-co-present pair)"
    );
}

#[test]
fn criterion_10_determinism_and_persistence() {
    let seed = 7u64;
    let (topo, store) = desk_world(seed);
    let plan = desk_plan(&store);
    let mut cfg = TrainConfig::desk(seed);
    cfg.max_epochs = 12; // determinism needs no convergence

    // Identical (config, seed) twice -> byte-identical checkpoints.
    let run_all = || -> (AlignmentModel, Vec<PhaseRecord>) {
        let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
        let mut history = Vec::new();
        run_plan(&mut model, &plan, &cfg, &store, &mut history, 0, None).unwrap();
        (model, history)
    };
    let (m1, h1) = run_all();
    let (m2, h2) = run_all();
    let bytes1 = checkpoint_to_bytes(&m1, &h1, seed).unwrap();
    let bytes2 = checkpoint_to_bytes(&m2, &h2, seed).unwrap();
    assert_eq!(bytes1, bytes2, "same config+seed produced different checkpoints");

    // Save -> load -> save round-trips bit-exactly.
    let loaded = checkpoint_from_bytes(&bytes1, "mem").unwrap();
    let bytes3 = checkpoint_to_bytes(&loaded.model, &loaded.history, loaded.seed).unwrap();
    assert_eq!(bytes1, bytes3, "save/load/save changed the checkpoint bytes");

    // Interrupt after phase 0, resume from the checkpoint, finish: the
    // final state matches the uninterrupted run bit for bit.
    let mut partial = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
    let mut ph = Vec::new();
    let first = GrowthPlan {
        phases: vec![plan.phases[0].clone()],
    };
    run_plan(&mut partial, &first, &cfg, &store, &mut ph, 0, None).unwrap();
    let mid = checkpoint_to_bytes(&partial, &ph, seed).unwrap();
    let mut resumed = checkpoint_from_bytes(&mid, "mem").unwrap();
    let completed = resumed.history.len();
    run_plan(
        &mut resumed.model,
        &plan,
        &cfg,
        &store,
        &mut resumed.history,
        completed,
        None,
    )
    .unwrap();
    let resumed_bytes = checkpoint_to_bytes(&resumed.model, &resumed.history, seed).unwrap();
    assert_eq!(
        bytes1, resumed_bytes,
        "interrupted-and-resumed plan diverged from the uninterrupted run"
    );

    // Metric reports reproduce bit-for-bit from (checkpoint, seed).
    let task = OneShotTask::from_dataset(store.get("imu_skel").unwrap(), &["imu"], topo.latent.num_classes).unwrap();
    let p = HeadProtocol::default();
    let o1 = one_shot_eval(&m1, &task, seed, &p).unwrap();
    let o2 = one_shot_eval(&loaded.model, &task, seed, &p).unwrap();
    assert_eq!(serde_json::to_string(&o1).unwrap(), serde_json::to_string(&o2).unwrap());
    println!("PASS criterion-10: byte-identical checkpoints, exact round-trip, resume == uninterrupted, reports reproducible");
}

#[test]
fn criterion_11_frozen_state_integrity() {
    let seed = 3u64;
    let (topo, store) = desk_world(seed);
    let plan = desk_plan(&store);
    let mut cfg = TrainConfig::desk(seed);
    cfg.max_epochs = 15;
    let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();

    // Fixed probe batch per modality.
    let mut probes: BTreeMap<String, Mat> = BTreeMap::new();
    for t in &model.towers {
        probes.insert(
            t.modality.name.clone(),
            random_mat(4, t.modality.raw_dim, -1.0, 1.0, seed ^ t.modality.raw_dim as u64),
        );
    }
    let hashes_before = model.encoder_probe_hashes(&probes).unwrap();

    let mut history = Vec::new();
    let mut after_each = Vec::new();
    for (i, phase) in plan.phases.iter().enumerate() {
        let policy = braid::growth::PhasePolicy::for_phase(phase, i, &cfg, &model).unwrap();
        let record = braid::growth::run_phase(&mut model, phase, i, &policy, &store, None).unwrap();
        history.push(record);
        after_each.push(model.encoder_probe_hashes(&probes).unwrap());
    }
    for (i, hashes) in after_each.iter().enumerate() {
        assert_eq!(
            &hashes_before, hashes,
            "encoder outputs changed across phase {i}"
        );
    }

    // One-shot head training leaves every backbone parameter untouched.
    let backbone_before = model.params_hash();
    let task = OneShotTask::from_dataset(store.get("imu_skel").unwrap(), &["imu"], topo.latent.num_classes).unwrap();
    one_shot_eval(&model, &task, seed, &HeadProtocol::default()).unwrap();
    assert_eq!(model.params_hash(), backbone_before, "head training moved backbone parameters");
    println!("PASS criterion-11: encoder probe hashes stable across all phases; backbone untouched by head training");
}
