use super::*;
use crate::dataset::{bin_monthly, month_key, month_start, Modality};
use crate::loss::{LossValue, Triplet};
use crate::numerics::{cosine, svd, Matrix, Vector};
use crate::synth::{generate, SynthConfig};

fn tiny_synth(per_cat: usize, months: usize, seed: u64) -> Dataset {
    generate(&SynthConfig {
        n_categories: 3,
        instances_per_category: per_cat,
        d_v: 10,
        d_t: 8,
        months,
        patterns: vec![],
        shifts: vec![],
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn tiny_config(ds: &Dataset) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 16,
        seed: 5,
        model: ModelConfig {
            hidden_dim: 12,
            time_dim: 4,
            embed_dim: 6,
            seed: 9,
            ..Default::default()
        },
        ..Default::default()
    }
    .with_dims_of(ds)
}

fn random_orthogonal(rng: &mut Rng, d: usize) -> Matrix {
    let a = Matrix::from_vec(d, d, (0..d * d).map(|_| rng.normal()).collect()).unwrap();
    let s = svd(&a).unwrap();
    s.u.matmul(&s.v.transpose()).unwrap()
}

fn orthogonality_error(q: &Matrix) -> f64 {
    q.transpose()
        .matmul(q)
        .unwrap()
        .sub(&Matrix::identity(q.cols()))
        .unwrap()
        .frobenius_norm()
}

#[test]
fn defaults_match_reference_configuration() {
    let c = TrainConfig::default();
    assert_eq!(
        (c.learning_rate, c.momentum, c.epochs, c.batch_size),
        (0.005, 0.9, 25, 64)
    );
    assert_eq!((c.loss.decay, c.loss.window_months, c.loss.margin), (0.1, 4.0, 1.0));
    assert_eq!(
        (c.model.hidden_dim, c.model.time_dim, c.model.embed_dim),
        (1024, 200, 200)
    );
}

#[test]
fn invalid_configs() {
    let ok = TrainConfig::default();
    for bad in [
        TrainConfig { learning_rate: 0.0, ..ok.clone() },
        TrainConfig { momentum: 1.0, ..ok.clone() },
        TrainConfig { batch_size: 1, ..ok.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn plain_sgd_step_is_exact() {
    let ds = tiny_synth(10, 6, 1);
    let cfg = tiny_config(&ds);
    let p: ModelParams = init(&cfg.model).unwrap();
    let rows: Vec<usize> = (0..ds.len()).collect();
    let triplets = sample_batch_triplets(&ds, &rows, &mut Rng::new(1), &cfg.loss);
    let (_, g) = batch_loss_and_grads(&p, &ds, &rows, &triplets, &cfg.loss).unwrap();
    let mut q = p.clone();
    let mut sgd = Sgd::new(&q, cfg.learning_rate, 0.0);
    sgd.step(&mut q, &g);
    for ((before, after), grad) in p.tensors().iter().zip(q.tensors()).zip(g.tensors()) {
        for ((&b, &a), &gr) in before.iter().zip(after.iter()).zip(grad.iter()) {
            assert_eq!(a.to_bits(), (b - cfg.learning_rate * gr).to_bits());
        }
    }
}

#[test]
fn trainer_with_zero_momentum_is_plain_sgd() {
    let ds = tiny_synth(6, 6, 2);
    let mut cfg = tiny_config(&ds);
    cfg.momentum = 0.0;
    cfg.epochs = 1;
    cfg.batch_size = ds.len();
    let empty = ds.subset(&[]);
    let (trained, _) = train_continuous(&ds, &empty, &cfg).unwrap();

    // replay the single step by hand
    let root = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    root.split(2).shuffle(&mut order);
    let triplets = sample_batch_triplets(&ds, &order, &mut root.split(3), &cfg.loss);
    let mut p: ModelParams = init(&cfg.model).unwrap();
    let (_, g) = batch_loss_and_grads(&p, &ds, &order, &triplets, &cfg.loss).unwrap();
    p.axpy(-cfg.learning_rate, &g);
    assert_eq!(trained, p);
}

#[test]
fn small_steps_decrease_batch_loss() {
    let ds = tiny_synth(4, 12, 3);
    let cfg = tiny_config(&ds);
    let p: ModelParams = init(&cfg.model).unwrap();
    let rows: Vec<usize> = (0..ds.len()).collect();
    // a large margin keeps every triplet active
    let loss_cfg = LossConfig {
        margin: 3.0,
        ..cfg.loss.clone()
    };
    let triplets: Vec<Triplet> = sample_batch_triplets(&ds, &rows, &mut Rng::new(2), &loss_cfg);
    let (before, g) = batch_loss_and_grads(&p, &ds, &rows, &triplets, &loss_cfg).unwrap();
    assert_eq!(before.active_triplet_count, triplets.len());
    for eta in [1e-3, 1e-4] {
        let mut q = p.clone();
        Sgd::new(&q, eta, 0.0).step(&mut q, &g);
        let after: LossValue = batch_loss(&q, &ds, &rows, &triplets, &loss_cfg).unwrap();
        assert!(after.total < before.total, "eta {eta}: {} -> {}", before.total, after.total);
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let ds = tiny_synth(20, 12, 4);
    let cfg = tiny_config(&ds);
    let val = tiny_synth(5, 12, 5);
    let (a, ra) = train_continuous(&ds, &val, &cfg).unwrap();
    let (b, rb) = train_continuous(&ds, &val, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.to_csv(), rb.to_csv());
}

#[test]
fn selects_lowest_validation_epoch() {
    let ds = tiny_synth(20, 12, 6);
    let val = tiny_synth(6, 12, 7);
    let mut cfg = tiny_config(&ds);
    cfg.epochs = 6;
    let (_, report) = train_continuous(&ds, &val, &cfg).unwrap();
    let best = report
        .epochs
        .iter()
        .min_by(|a, b| a.val_loss.unwrap().partial_cmp(&b.val_loss.unwrap()).unwrap())
        .unwrap();
    assert_eq!(report.selected_epoch, best.epoch);
    let csv = report.to_csv();
    assert!(csv.starts_with("epoch,train_loss,val_loss,selected\n"));
    assert_eq!(csv.lines().count(), 7);
    assert!(report.epochs.last().unwrap().train_loss < report.epochs[0].train_loss);
}

#[test]
fn exploding_step_reports_batch() {
    let ds = tiny_synth(10, 6, 8);
    let mut cfg = tiny_config(&ds);
    cfg.learning_rate = 1e308;
    let err = train_continuous(&ds, &ds.subset(&[]), &cfg).unwrap_err();
    assert!(matches!(err, Error::NanLoss { epoch: 1, .. }), "{err}");
    assert!(err.is_numerical());
}

#[test]
fn dimension_mismatch_is_rejected() {
    let ds = tiny_synth(5, 6, 9);
    let mut cfg = tiny_config(&ds);
    cfg.model.d_v += 1;
    assert!(matches!(
        train_continuous(&ds, &ds.subset(&[]), &cfg),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn procrustes_identity_case() {
    let mut rng = Rng::new(1);
    let m = Matrix::from_vec(50, 8, (0..400).map(|_| rng.normal()).collect()).unwrap();
    let omega = procrustes(&m, &m).unwrap();
    assert!(omega.sub(&Matrix::identity(8)).unwrap().frobenius_norm() < 1e-9);
}

#[test]
fn procrustes_recovers_planted_rotation() {
    let mut rng = Rng::new(2);
    let m = Matrix::from_vec(200, 32, (0..200 * 32).map(|_| rng.normal()).collect()).unwrap();
    let r = random_orthogonal(&mut rng, 32);
    let omega = procrustes(&m, &m.matmul(&r).unwrap()).unwrap();
    assert!(omega.sub(&r).unwrap().frobenius_norm() < 1e-6);
}

#[test]
fn procrustes_is_orthogonal_and_preserves_cosines() {
    let mut rng = Rng::new(3);
    for _ in 0..100 {
        let a = Matrix::from_vec(40, 6, (0..240).map(|_| rng.normal()).collect()).unwrap();
        let b = Matrix::from_vec(40, 6, (0..240).map(|_| rng.normal()).collect()).unwrap();
        let omega = procrustes(&a, &b).unwrap();
        assert!(orthogonality_error(&omega) < 1e-8);
        let rotated = a.matmul(&omega).unwrap();
        for (i, j) in [(0, 1), (3, 17), (39, 5)] {
            let before = cosine(&Vector::new(a.row(i).to_vec()).unwrap(), &Vector::new(a.row(j).to_vec()).unwrap()).unwrap();
            let after = cosine(
                &Vector::new(rotated.row(i).to_vec()).unwrap(),
                &Vector::new(rotated.row(j).to_vec()).unwrap(),
            )
            .unwrap();
            assert!((before - after).abs() < 1e-12);
        }
    }
}

#[test]
fn procrustes_shape_mismatch() {
    assert!(procrustes(&Matrix::<f64>::zeros(3, 2), &Matrix::zeros(3, 3)).is_err());
}

/// Model whose output units are a signed permutation of `p`'s.
fn permuted_output(p: &ModelParams, perm: &[usize], signs: &[f64]) -> (ModelParams, Matrix) {
    let mut q = p.clone();
    let d = perm.len();
    for (w, b, qw, qb) in [
        (&p.w_vo, &p.b_vo, &mut q.w_vo, &mut q.b_vo),
        (&p.w_to, &p.b_to, &mut q.w_to, &mut q.b_to),
    ] {
        for i in 0..d {
            for (dst, &src) in qw.row_mut(i).iter_mut().zip(w.row(perm[i])) {
                *dst = signs[i] * src;
            }
            qb[i] = signs[i] * b[perm[i]];
        }
    }
    // e_q = P e_p as columns, so the row-vector map is Pᵀ
    let mut pm = Matrix::zeros(d, d);
    for i in 0..d {
        pm.row_mut(i)[perm[i]] = signs[i];
    }
    (q, pm.transpose())
}

#[test]
fn align_chain_undoes_planted_rotation() {
    let ds = tiny_synth(30, 2, 10);
    let cfg = tiny_config(&ds).static_baseline();
    let mut p: ModelParams = init(&cfg.model).unwrap();
    // non-zero biases so the permutation also has to carry them
    let mut rng = Rng::new(4);
    for b in p.b_vo.iter_mut().chain(p.b_to.iter_mut()) {
        *b = 0.1 * rng.normal();
    }
    let perm = [3, 0, 5, 1, 4, 2];
    let signs = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
    let (q, expected) = permuted_output(&p, &perm, &signs);
    let binning = bin_monthly(&ds, 0);
    assert_eq!(binning.bins.len(), 2);
    let mut bm = BinnedModel::new(binning.bins.clone(), vec![p, q], ds.timespan).unwrap();
    align_chain(&mut bm, &ds, DEFAULT_ALIGN_SAMPLE_CAP, &mut Rng::new(1)).unwrap();
    assert!(bm.rotations[0].sub(&expected).unwrap().frobenius_norm() < 1e-6);
    assert_eq!(bm.rotations[1], Matrix::identity(6));
    // an instance from bin 0 lands where bin 1's model puts it
    let inst = &ds.instances[binning.bins[0].members[0]];
    let via_chain = bm.embed(inst.visual.as_slice(), Modality::Visual, inst.ts).unwrap();
    let direct = bm.embed_raw(1, inst.visual.as_slice(), Modality::Visual, inst.ts).unwrap();
    for (a, b) in via_chain.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn single_bin_chain_is_identity() {
    let ds = tiny_synth(10, 1, 11);
    let cfg = tiny_config(&ds);
    let binning = bin_monthly(&ds, 0);
    let bm = train_binned(&ds, &ds.subset(&[]), &cfg, &binning).unwrap();
    assert_eq!(bm.rotations, vec![Matrix::identity(6)]);
}

#[test]
fn binned_structure_and_round_trip() {
    let ds = tiny_synth(15, 3, 12);
    let cfg = tiny_config(&ds);
    let binning = bin_monthly(&ds, 2);
    assert_eq!(binning.bins.len(), 3);
    let bm = train_binned(&ds, &ds.subset(&[]), &cfg, &binning).unwrap();
    assert_eq!(bm.models.len(), 3);
    assert_eq!(bm.rotations.len(), 3);
    assert_eq!(bm.rotations[2], Matrix::identity(6));
    for r in &bm.rotations {
        assert!(orthogonality_error(r) < 1e-8);
    }
    assert!(bm.models.iter().all(|m| m.config.static_time));

    let dir = tempfile::tempdir().unwrap();
    bm.save(dir.path()).unwrap();
    let back: BinnedModel = BinnedModel::load(dir.path()).unwrap();
    assert_eq!(back.models, bm.models);
    assert_eq!(back.rotations, bm.rotations);
    let inst = &ds.instances[0];
    assert_eq!(
        back.embed(inst.text.as_slice(), Modality::Text, inst.ts).unwrap(),
        bm.embed(inst.text.as_slice(), Modality::Text, inst.ts).unwrap()
    );
}

#[test]
fn bins_train_in_isolation() {
    let ds = tiny_synth(15, 3, 13);
    let cfg = tiny_config(&ds);
    let binning = bin_monthly(&ds, 2);
    let a = train_binned(&ds, &ds.subset(&[]), &cfg, &binning).unwrap();
    // scramble every instance outside bin 0
    let mut other = ds.clone();
    for &r in binning.bins[1].members.iter().chain(&binning.bins[2].members) {
        for v in other.instances[r].visual.as_mut_slice() {
            *v = -*v * 3.0;
        }
    }
    let b = train_binned(&other, &other.subset(&[]), &cfg, &binning).unwrap();
    assert_eq!(a.models[0], b.models[0]);
    assert_ne!(a.models[1], b.models[1]);
}

#[test]
fn nearest_bin_for_uncovered_months() {
    let ds = tiny_synth(15, 5, 14);
    let cfg = tiny_config(&ds);
    let mut binning = bin_monthly(&ds, 2);
    // keep months 0 and 2 only
    binning.bins = vec![binning.bins[0].clone(), binning.bins[2].clone()];
    let bm = train_binned(&ds, &ds.subset(&[]), &cfg, &binning).unwrap();
    let month = |m: i64| month_start(month_key(ds.timespan.start) + m) + 100;
    assert_eq!(bm.bin_for(month(0)), 0);
    // equidistant: the earlier bin wins
    assert_eq!(bm.bin_for(month(1)), 0);
    assert_eq!(bm.bin_for(month(3)), 1);
    assert_eq!(bm.bin_for(month(4)), 1);
}

#[test]
fn tiny_bins_are_rejected() {
    let ds = tiny_synth(5, 6, 15);
    let cfg = tiny_config(&ds);
    let mut binning = bin_monthly(&ds, 0);
    binning.bins[0].members.truncate(1);
    assert!(matches!(
        train_binned(&ds, &ds.subset(&[]), &cfg, &binning),
        Err(Error::TooSmall(_))
    ));
}
