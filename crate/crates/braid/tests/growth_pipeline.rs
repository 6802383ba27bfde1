//! Growth orchestration edge cases and the tower-augmentation path.

mod common;

use braid::autodiff::mat::{self, Mat};
use braid::autodiff::{AdamW, Tape};
use braid::contrastive::{weighted_loss_step, PairBatch, StepOptions, WeightSmoother};
use braid::data::{generate::generate_topology, DatasetStore, Topology};
use braid::error::Error;
use braid::eval::{forgetting_probe, recall_at};
use braid::growth::{
    assemble_model, resolve_plan, run_phase, run_plan, DatasetSummary, GrowthPlan, ModelDims,
    OrderHeuristic, PhasePolicy, TrainConfig,
};
use braid::model::{augment_tower, embed_value, EncoderSpec, FrozenEncoder, Modality};

fn small_world(seed: u64) -> (Topology, DatasetStore) {
    let topo = Topology::desk_small(256, 64);
    let store = DatasetStore::new(generate_topology(&topo, seed).unwrap()).unwrap();
    (topo, store)
}

#[test]
fn zero_epoch_phase_is_a_no_op_and_forgetting_drop_is_zero() {
    let seed = 1;
    let (topo, store) = small_world(seed);
    let mods: Vec<String> = vec!["imu".into(), "skel".into(), "video".into()];
    let summaries: Vec<DatasetSummary> = store.iter().map(DatasetSummary::from).collect();
    let plan = resolve_plan(&mods, &summaries, OrderHeuristic::GivenOrder).unwrap();
    let mut cfg = TrainConfig::desk(seed);
    cfg.max_epochs = 8;
    let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
    let mut history = Vec::new();
    run_plan(
        &mut model,
        &GrowthPlan {
            phases: vec![plan.phases[0].clone()],
        },
        &cfg,
        &store,
        &mut history,
        0,
        None,
    )
    .unwrap();

    let before = model.clone();
    let mut cfg0 = cfg.clone();
    cfg0.max_epochs = 0;
    let policy = PhasePolicy::for_phase(&plan.phases[1], 1, &cfg0, &model).unwrap();
    let record = run_phase(&mut model, &plan.phases[1], 1, &policy, &store, None).unwrap();
    assert_eq!(record.steps_run, 0);
    assert_eq!(record.final_epoch_loss, None);

    let ds = store.get("imu_skel").unwrap();
    let drop = forgetting_probe(&before, &model, ds).unwrap();
    assert_eq!(drop, 0.0, "zero-epoch phase must not move any metric");
}

#[test]
fn ema_decay_one_leaves_prototype_unchanged_by_the_phase() {
    let seed = 2;
    let (topo, store) = small_world(seed);
    let mods: Vec<String> = vec!["imu".into(), "skel".into(), "video".into()];
    let summaries: Vec<DatasetSummary> = store.iter().map(DatasetSummary::from).collect();
    let plan = resolve_plan(&mods, &summaries, OrderHeuristic::GivenOrder).unwrap();
    let mut cfg = TrainConfig::desk(seed);
    cfg.max_epochs = 6;
    let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
    let mut history = Vec::new();
    run_plan(
        &mut model,
        &GrowthPlan {
            phases: vec![plan.phases[0].clone()],
        },
        &cfg,
        &store,
        &mut history,
        0,
        None,
    )
    .unwrap();

    let proto_before = model.prototype.mlp.group.content_hash();
    let mut cfg1 = cfg.clone();
    cfg1.ema_decay = 1.0;
    let policy = PhasePolicy::for_phase(&plan.phases[1], 1, &cfg1, &model).unwrap();
    run_phase(&mut model, &plan.phases[1], 1, &policy, &store, None).unwrap();
    assert_eq!(
        model.prototype.mlp.group.content_hash(),
        proto_before,
        "with rho = 1 the adopted shadow is the phase-start prototype"
    );
}

#[test]
fn non_finite_loss_aborts_and_restores_the_pre_phase_state() {
    let seed = 3;
    let (topo, store) = small_world(seed);
    let mods: Vec<String> = vec!["imu".into(), "skel".into(), "video".into()];
    let summaries: Vec<DatasetSummary> = store.iter().map(DatasetSummary::from).collect();
    let plan = resolve_plan(&mods, &summaries, OrderHeuristic::GivenOrder).unwrap();
    let mut cfg = TrainConfig::desk(seed);
    // A learning rate far beyond overflow territory: squared activations
    // overflow to infinity within a couple of steps.
    cfg.lr = 1e160;
    cfg.max_epochs = 5;
    let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
    let hash_before = model.params_hash();
    let policy = PhasePolicy::for_phase(&plan.phases[0], 0, &cfg, &model).unwrap();
    match run_phase(&mut model, &plan.phases[0], 0, &policy, &store, None) {
        Err(Error::PhaseAborted { phase: 0, .. }) => {}
        other => panic!("expected PhaseAborted, got {:?}", other.map(|_| ())),
    }
    assert_eq!(
        model.params_hash(),
        hash_before,
        "abort must restore the pre-phase parameters"
    );
    assert!(model.aligned.is_empty());
}

#[test]
fn junction_outside_trunk_is_rejected_at_runtime() {
    let seed = 4;
    let (topo, store) = small_world(seed);
    let mods: Vec<String> = vec!["imu".into(), "skel".into(), "video".into()];
    let summaries: Vec<DatasetSummary> = store.iter().map(DatasetSummary::from).collect();
    let plan = resolve_plan(&mods, &summaries, OrderHeuristic::GivenOrder).unwrap();
    let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
    let cfg = TrainConfig::desk(seed);
    // Skip the initial phase: the growth phase's junction is not aligned.
    let policy = PhasePolicy::for_phase(&plan.phases[1], 1, &cfg, &model).unwrap();
    assert!(matches!(
        run_phase(&mut model, &plan.phases[1], 1, &policy, &store, None),
        Err(Error::JunctionNotInTrunk { phase: 1, .. })
    ));
}

// ---- tower augmentation ----------------------------------------------------

/// Self-paired batches: the same raw samples through two towers of one
/// modality.
fn self_batch(modality: &str, samples: &Mat) -> PairBatch {
    PairBatch {
        modality_a: modality.into(),
        modality_b: modality.into(),
        xa: samples.clone(),
        xb: samples.clone(),
    }
}

#[test]
fn augmented_towers_with_identical_weights_keep_the_diagonal_maximal() {
    // Two identical encoder specs and identical concept init: the two
    // towers are the same function, the similarity matrix starts at
    // all-ones diagonal, and one step cannot break the symmetry.
    let modality = Modality {
        name: "wifi".into(),
        raw_dim: 8,
        encoder_ids: vec![],
    };
    let enc = |seed| {
        FrozenEncoder::from_spec(EncoderSpec {
            id: format!("e{seed}"),
            in_dim: 8,
            hidden: 10,
            out_dim: 6,
            seed: 11, // same seed: identical encoders
        })
    };
    let (mut towers, spec) = augment_tower(&modality, vec![enc(0), enc(1)], 8, 5, 0).unwrap();
    assert_eq!(spec.tower_keys.len(), 2);
    // Force identical concept weights.
    let snapshot = towers[0].concept.mlp.snapshot();
    towers[1].concept.mlp.restore(&snapshot);

    let mut proto = braid::model::PrototypeNetwork::new(5, 4, 2, 3);
    let samples = common::random_mat(4, 8, -1.0, 1.0, 9);
    let batch = self_batch("wifi", &samples);

    let (first, rest) = towers.split_at_mut(1);
    let opts = StepOptions::plain(0.07);
    let mut opt = AdamW::new(1e-3, 0.0);
    weighted_loss_step(&mut first[0], &mut rest[0], &mut proto, &batch, &opts, None).unwrap();
    opt.step(&mut [
        &mut first[0].concept.mlp.group,
        &mut rest[0].concept.mlp.group,
        &mut proto.mlp.group,
    ]);

    // After the step the two towers still embed identically, so every
    // diagonal similarity remains exactly 1.
    let ea = embed_value(&first[0], &proto, &samples).unwrap();
    let eb = embed_value(&rest[0], &proto, &samples).unwrap();
    let mut tape = Tape::new();
    let ia = tape.leaf(ea);
    let ib = tape.leaf(eb);
    let sim = tape.cosine_similarity(ia, ib).unwrap();
    for i in 0..4 {
        assert!((tape.value(sim).get(i, i) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn self_pairing_batch_counts_follow_the_m_squared_rule() {
    let samples = Mat::zeros(4, 8);
    let batch = self_batch("wifi", &samples);
    assert_eq!(batch.positives(), 4);
    assert_eq!(batch.negatives(), 12);
}

#[test]
fn intra_modality_alignment_improves_heldout_retrieval() {
    // Two distinct encoders for one modality; after aligning the augmented
    // towers on self-pairs, held-out cross-encoder retrieval must beat the
    // pre-alignment recall, on average over seeds 0-4.
    let mut pre_mean = 0.0;
    let mut post_mean = 0.0;
    for seed in 0..5u64 {
        let topo = Topology::desk_small(256, 64);
        let store = DatasetStore::new(generate_topology(&topo, seed).unwrap()).unwrap();
        let ds = store.get("imu_skel").unwrap();
        let modality = Modality {
            name: "imu".into(),
            raw_dim: ds.raw_dim_a(),
            encoder_ids: vec![],
        };
        let mk = |id: &str, s: u64| {
            FrozenEncoder::from_spec(EncoderSpec {
                id: id.into(),
                in_dim: ds.raw_dim_a(),
                hidden: 40,
                out_dim: 24,
                seed: s,
            })
        };
        let (mut towers, _) = augment_tower(
            &modality,
            vec![mk("e0", seed * 31 + 1), mk("e1", seed * 31 + 2)],
            32,
            32,
            seed,
        )
        .unwrap();
        let mut proto = braid::model::PrototypeNetwork::new(32, 16, 2, seed + 7);

        let recall = |towers: &[braid::model::ModalityTower], proto: &braid::model::PrototypeNetwork| {
            let qa = embed_value(&towers[0], proto, &ds.test_a).unwrap();
            let ga = embed_value(&towers[1], proto, &ds.test_a).unwrap();
            recall_at(&qa, &ga, 1).unwrap()
        };
        pre_mean += recall(&towers, &proto) / 5.0;

        let opts = StepOptions::plain(0.07);
        let mut smoother = WeightSmoother::new(0.9);
        let mut opt = AdamW::new(3e-3, 0.01);
        let mut rng = braid::rng::rng_from_seed(seed ^ 0xbeef);
        for _ in 0..150 {
            let idx = rand::seq::index::sample(&mut rng, ds.n_train(), 48).into_vec();
            let batch = self_batch("imu", &ds.train_a.select_rows(&idx));
            let (first, rest) = towers.split_at_mut(1);
            weighted_loss_step(
                &mut first[0],
                &mut rest[0],
                &mut proto,
                &batch,
                &opts,
                Some(&mut smoother),
            )
            .unwrap();
            opt.step(&mut [
                &mut first[0].concept.mlp.group,
                &mut rest[0].concept.mlp.group,
                &mut proto.mlp.group,
            ]);
        }
        post_mean += recall(&towers, &proto) / 5.0;
    }
    assert!(
        post_mean > pre_mean,
        "intra-modality recall@1 did not improve: {pre_mean:.3} -> {post_mean:.3}"
    );
}

#[test]
fn shared_prototype_is_observable_through_every_tower() {
    // Mutating the one prototype changes the embeddings of all towers.
    let seed = 8;
    let (topo, _) = small_world(seed);
    let mut model = assemble_model(&topo, &ModelDims::default(), seed).unwrap();
    let probes: Vec<(String, Mat)> = model
        .towers
        .iter()
        .map(|t| {
            (
                t.modality.name.clone(),
                common::random_mat(2, t.modality.raw_dim, -1.0, 1.0, seed),
            )
        })
        .collect();
    let before: Vec<Mat> = probes
        .iter()
        .map(|(m, x)| model.embed_modality(m, x).unwrap())
        .collect();
    // Nudge one prototype weight.
    let w = model.prototype.mlp.group.tensors[0].value.get(0, 0);
    model.prototype.mlp.group.tensors[0].value.set(0, 0, w + 0.5);
    for ((m, x), old) in probes.iter().zip(&before) {
        let new = model.embed_modality(m, x).unwrap();
        assert_ne!(&new, old, "prototype change invisible through tower {m}");
        assert!(mat::sub(&new, old).unwrap().is_finite());
    }
}
