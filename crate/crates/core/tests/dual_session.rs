use std::sync::Arc;

use dualproj_core::datasets::gaussian_clusters;
use dualproj_core::dual::{gene_weights, hybrid_weights, train_pair, SessionSnapshot};
use dualproj_core::{DualSession, Matrix, ModificationEvent, ScaleCenter, Side, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn session() -> DualSession {
    let x = gaussian_clusters(60, 30, 3, 0.5, 6.0, 4).unwrap().x;
    let cfg = TrainConfig {
        hidden_dim: 16,
        epochs: 20,
        seed: 1,
        ..Default::default()
    };
    let (r, c) = train_pair(&x, &cfg, &cfg).unwrap();
    DualSession::new(x, Arc::new(r), Arc::new(c)).unwrap()
}

/// argmin_w |a w - b|^2 by brute-force normal equations.
fn lstsq(a: &[f64], b: &[f64]) -> f64 {
    let aa: f64 = a.iter().map(|v| v * v).sum();
    if aa == 0.0 {
        return 1.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / aa
}

#[test]
fn weights_match_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let (n, d) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let x = Matrix::from_fn(n, d, |_, _| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(-3.0..3.0) });
        let x2 = Matrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
        let g = gene_weights(&x, &x2).unwrap();
        for j in 0..d {
            let w = lstsq(&x.col(j), &x2.col(j));
            assert!((g[j] - w).abs() <= 1e-10 * w.abs().max(1.0));
        }
        let h = hybrid_weights(&x, &x2).unwrap();
        for i in 0..n {
            let w = lstsq(x.row(i), x2.row(i));
            assert!((h[i] - w).abs() <= 1e-10 * w.abs().max(1.0));
        }
    }
}

#[test]
fn zero_move_keeps_data() {
    let s0 = session();
    let mut s = s0.clone();
    let before = s.hybrids();
    s.apply_modification(&ModificationEvent::moved(Side::Rows, vec![0, 1, 2], [0.0, 0.0]))
        .unwrap();
    assert_eq!(s.hybrids(), before);
    assert_eq!(s.x_cur(), s0.x_orig());
    assert!(s.gene_weights().iter().all(|&w| w == 1.0));
    assert_eq!(s.genes(), s0.genes());

    let mut unit = s0.clone();
    unit.apply_modification(&ModificationEvent::scaled(Side::Rows, vec![0, 1, 2], 1.0, ScaleCenter::Centroid))
        .unwrap();
    assert_eq!(unit.x_cur(), s.x_cur());
    assert_eq!(unit.gene_weights(), s.gene_weights());
}

#[test]
fn gene_edit_keeps_other_columns() {
    let s0 = session();
    let mut s = s0.clone();
    s.apply_modification(&ModificationEvent::moved(Side::Cols, vec![2, 7], [0.1, 0.05]))
        .unwrap();
    let x = s0.x_orig();
    for j in (0..x.cols()).filter(|j| ![2, 7].contains(j)) {
        assert_eq!(s.x_cur().col(j), x.col(j));
    }
    assert!(s.hybrid_weights().iter().all(|w| w.is_finite()));
}

#[test]
fn only_moved_points_are_inverted() {
    let s0 = session();
    let mut s = s0.clone();
    s.apply_modification(&ModificationEvent::moved(Side::Rows, vec![4], [0.5, -0.25]))
        .unwrap();
    let x = s0.x_orig();
    for i in (0..x.rows()).filter(|&i| i != 4) {
        assert_eq!(s.x_cur().row(i), x.row(i));
    }
    // the moved row lands closer to its target than the raw inverse or the old row
    let target = s.hybrids().select_rows(&[4]);
    let m = s0.model_rows();
    let err = |row: &[f64]| {
        let p = m.project(&Matrix::from_fn(1, row.len(), |_, j| row[j])).unwrap();
        (p[(0, 0)] - target[(0, 0)]).powi(2) + (p[(0, 1)] - target[(0, 1)]).powi(2)
    };
    let raw = m.inverse_project(&target, m.config.phi_k).unwrap();
    assert!(err(s.x_cur().row(4)) <= err(raw.row(0)));
    assert!(err(s.x_cur().row(4)) <= err(x.row(4)));
}

#[test]
fn move_and_back_restores_layout() {
    let mut s = session();
    let start = s.hybrids();
    s.apply_modification(&ModificationEvent::moved(Side::Rows, vec![3, 4], [0.37, -1.1]))
        .unwrap();
    assert_ne!(s.hybrids(), start);
    s.apply_modification(&ModificationEvent::moved(Side::Rows, vec![3, 4], [-0.37, 1.1]))
        .unwrap();
    assert_eq!(s.hybrids(), start);

    let genes = s.genes();
    s.apply_modification(&ModificationEvent::scaled(Side::Cols, vec![0, 5], 2.5, ScaleCenter::Point([0.1, 0.2])))
        .unwrap();
    s.apply_modification(&ModificationEvent::scaled(Side::Cols, vec![0, 5], 0.4, ScaleCenter::Point([0.1, 0.2])))
        .unwrap();
    let back = s.genes();
    assert!(back.max_abs_diff(&genes).unwrap() < 1e-12);
}

#[test]
fn edits_update_the_other_view() {
    let mut s = session();
    let genes = s.genes();
    // onto the positions of other hybrids, which the model can reach
    let layout = s.hybrids();
    for i in 0..10 {
        let j = 59 - i;
        let delta = [layout[(j, 0)] - layout[(i, 0)], layout[(j, 1)] - layout[(i, 1)]];
        s.apply_modification(&ModificationEvent::moved(Side::Rows, vec![i], delta))
            .unwrap();
    }
    assert_ne!(s.genes(), genes);
    assert!(s.hybrid_weights().iter().all(|&w| w == 1.0));
    let hybrids = s.hybrids();
    s.apply_modification(&ModificationEvent::moved(Side::Cols, vec![1, 2], [0.0, 1.5]))
        .unwrap();
    assert_ne!(s.hybrids(), hybrids);
    assert!(s.gene_weights().iter().all(|&w| w == 1.0));
    assert_eq!(s.history().len(), 11);
}

#[test]
fn reset_and_replay() {
    let fresh = session();
    let mut s = fresh.clone();
    let events = vec![
        ModificationEvent::moved(Side::Rows, vec![0, 7], [1.0, 1.0]),
        ModificationEvent::scaled(Side::Cols, vec![2, 3, 4], 1.5, ScaleCenter::Centroid),
        ModificationEvent::moved(Side::Rows, vec![9], [-0.5, 0.25]),
    ];
    for e in &events {
        s.apply_modification(e).unwrap();
    }
    let replayed = DualSession::replay(
        fresh.x_orig().clone(),
        fresh.model_rows().clone(),
        fresh.model_cols().clone(),
        s.history(),
    )
    .unwrap();
    assert_eq!(replayed.snapshot().unwrap(), s.snapshot().unwrap());

    s.reset().unwrap();
    assert_eq!(s.snapshot().unwrap(), fresh.snapshot().unwrap());
    assert_eq!(s.x_cur(), fresh.x_orig());
}

#[test]
fn invalid_events_leave_state_alone() {
    let mut s = session();
    let before = s.snapshot().unwrap();
    assert!(s.apply_modification(&ModificationEvent::moved(Side::Rows, vec![], [1.0, 0.0])).is_err());
    assert!(s.apply_modification(&ModificationEvent::moved(Side::Cols, vec![99], [1.0, 0.0])).is_err());
    assert!(s
        .apply_modification(&ModificationEvent::scaled(Side::Rows, vec![0], 0.0, ScaleCenter::Centroid))
        .is_err());
    assert_eq!(s.snapshot().unwrap(), before);
}

#[test]
fn snapshot_json_round_trip() {
    let mut s = session();
    s.apply_modification(&ModificationEvent::moved(Side::Rows, vec![1], [0.5, 0.5])).unwrap();
    let snap = s.snapshot().unwrap();
    let back: SessionSnapshot = serde_json::from_str(&serde_json::to_string(&snap).unwrap()).unwrap();
    assert_eq!(back, snap);
}
