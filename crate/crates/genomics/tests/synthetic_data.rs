use dualproj_genomics::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let c: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        c / (va * vb).sqrt()
    }
}

fn gene_column(g: &GenotypeMatrix, j: usize) -> Vec<f64> {
    (0..g.n_hybrids()).map(|h| g.get(h, j) as f64).collect()
}

fn subset(g: &GenotypeMatrix, idx: &[usize]) -> GenotypeMatrix {
    GenotypeMatrix::new(
        idx.iter().map(|&i| g.hybrids[i].clone()).collect(),
        g.genes.clone(),
        idx.iter().flat_map(|&i| g.row(i).to_vec()).collect(),
    )
    .unwrap()
}

/// Held-out R² per trait, training on 80% of the hybrids.
fn held_out_r2(d: &SyntheticDataset, permute_labels: bool) -> Vec<f64> {
    let n = d.genotypes.n_hybrids();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let (test, train) = idx.split_at(n / 5);
    let mut y = d.traits.values.select_rows(train);
    if permute_labels {
        let mut p: Vec<usize> = (0..train.len()).collect();
        p.shuffle(&mut rng);
        y = y.select_rows(&p);
    }
    let table = TraitTable::new(
        d.traits.names.clone(),
        train.iter().map(|&i| d.traits.hybrids[i].clone()).collect(),
        y,
    )
    .unwrap();
    let p = train_trait_predictor(&subset(&d.genotypes, train), &table, &PredictorConfig::default()).unwrap();
    let pred = p.predict_matrix(&subset(&d.genotypes, test).to_matrix()).unwrap();
    let truth = d.traits.values.select_rows(test);
    (0..truth.cols()).map(|t| r_squared(&truth.col(t), &pred.col(t))).collect()
}

#[test]
fn predictor_recovers_planted_signal() {
    let d = generate_synthetic_dataset(&SyntheticConfig::bundled()).unwrap();
    for r2 in held_out_r2(&d, false) {
        assert!(r2 >= 0.5, "held-out R² {r2}");
    }
}

#[test]
fn permuted_labels_have_no_skill() {
    let d = generate_synthetic_dataset(&SyntheticConfig::bundled()).unwrap();
    for r2 in held_out_r2(&d, true) {
        assert!(r2 <= 0.1, "permuted R² {r2}");
    }
}

#[test]
fn pure_noise_traits_have_no_skill() {
    let d = generate_synthetic_dataset(&SyntheticConfig {
        effect_size: 0.0,
        ..SyntheticConfig::bundled()
    })
    .unwrap();
    for r2 in held_out_r2(&d, false) {
        assert!(r2 <= 0.1, "noise R² {r2}");
    }
}

#[test]
fn predictions_are_finite() {
    let d = generate_synthetic_dataset(&SyntheticConfig {
        n_hybrids: 60,
        n_genes: 96,
        n_regulatory: 8,
        ..Default::default()
    })
    .unwrap();
    let p = train_trait_predictor(
        &d.genotypes,
        &d.traits,
        &PredictorConfig {
            epochs: 30,
            ..Default::default()
        },
    )
    .unwrap();
    let out = p.predict(d.genotypes.row(0)).unwrap();
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|v| v.is_finite()));
}

#[test]
fn too_few_hybrids_rejected() {
    let d = generate_synthetic_dataset(&SyntheticConfig {
        n_hybrids: 40,
        n_genes: 48,
        n_regulatory: 4,
        ..Default::default()
    })
    .unwrap();
    assert!(train_trait_predictor(&d.genotypes, &d.traits, &PredictorConfig::default()).is_err());
}

#[test]
fn planted_genes_stand_out() {
    for effect_size in [1.0, 2.0] {
        let d = generate_synthetic_dataset(&SyntheticConfig {
            effect_size,
            ..SyntheticConfig::bundled()
        })
        .unwrap();
        for t in 0..d.traits.names.len() {
            let y = d.traits.values.col(t);
            let (mut planted, mut other) = (Vec::new(), Vec::new());
            for j in 0..d.genotypes.n_genes() {
                let c = corr(&gene_column(&d.genotypes, j), &y).abs();
                if d.planted.binary_search(&j).is_ok() {
                    planted.push(c);
                } else {
                    other.push(c);
                }
            }
            other.sort_by(f64::total_cmp);
            let p99 = other[(other.len() as f64 * 0.99) as usize];
            let mean = planted.iter().sum::<f64>() / planted.len() as f64;
            assert!(mean > p99, "effect {effect_size}, trait {t}: {mean} vs {p99}");
        }
    }
}

#[test]
fn generator_is_deterministic() {
    let cfg = SyntheticConfig {
        n_hybrids: 50,
        n_genes: 60,
        ..Default::default()
    };
    let a = generate_synthetic_dataset(&cfg).unwrap();
    let b = generate_synthetic_dataset(&cfg).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    let c = generate_synthetic_dataset(&SyntheticConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(a.genotypes, c.genotypes);
}

#[test]
fn parent_distances_symmetric() {
    let d = generate_synthetic_dataset(&SyntheticConfig::default()).unwrap();
    let lines: Vec<&ParentLine> = d.paternal.iter().chain(&d.maternal).collect();
    for a in &lines {
        assert_eq!(genomic_distance(&a.calls, &a.calls).unwrap(), 0);
        for b in &lines {
            assert_eq!(
                genomic_distance(&a.calls, &b.calls).unwrap(),
                genomic_distance(&b.calls, &a.calls).unwrap()
            );
        }
    }
}

#[test]
fn planted_gene_boxes_separate() {
    let d = generate_synthetic_dataset(&SyntheticConfig::bundled()).unwrap();
    let name = &d.traits.names[0];
    let separated = d
        .planted
        .iter()
        .filter(|&&j| {
            let b = genotype_boxplot_data(&d.genotypes, &d.traits, j, name).unwrap();
            match (b[0].q3, b[2].q1, b[0].q1, b[2].q3) {
                (Some(q3_ref), Some(q1_alt), Some(q1_ref), Some(q3_alt)) => q3_ref < q1_alt || q3_alt < q1_ref,
                _ => false,
            }
        })
        .count();
    assert!(separated > 0, "no planted gene separates genotypes 0 and 2");
}

#[test]
fn all_alt_hybrids_leave_empty_groups() {
    let genes = vec![Locus::new(1, 1), Locus::new(1, 2)];
    let g = GenotypeMatrix::new(vec!["a".into(), "b".into()], genes, vec![2, 0, 2, 1]).unwrap();
    let t = TraitTable::new(
        vec!["yield".into()],
        vec!["a".into(), "b".into()],
        dualproj_core::Matrix::from_rows(&[[1.0], [2.0]]).unwrap(),
    )
    .unwrap();
    let b = genotype_boxplot_data(&g, &t, 0, "yield").unwrap();
    assert_eq!((b[0].count, b[1].count, b[2].count), (0, 0, 2));
}

fn line(id: &str, calls: Vec<u8>) -> ParentLine {
    ParentLine {
        id: id.into(),
        role: ParentRole::Paternal,
        calls,
    }
}

proptest! {
    #[test]
    fn distance_is_a_metric(
        v in proptest::collection::vec((0u8..3, 0u8..3, 0u8..3), 1..40)
    ) {
        let a: Vec<u8> = v.iter().map(|t| t.0).collect();
        let b: Vec<u8> = v.iter().map(|t| t.1).collect();
        let c: Vec<u8> = v.iter().map(|t| t.2).collect();
        let d = |x: &[u8], y: &[u8]| genomic_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }

    #[test]
    fn selfing_reproduces_line(calls in proptest::collection::vec(prop_oneof![Just(0u8), Just(2u8)], 1..60)) {
        let p = line("p", calls.clone());
        let h = synthesize_hybrid(&p, &p).unwrap();
        prop_assert_eq!(genomic_distance(&h, &calls).unwrap(), 0);
    }

    #[test]
    fn encoding_round_trips(values in proptest::collection::vec(0u8..3, 1..30)) {
        let genes: Vec<Locus> = (0..values.len()).map(|i| Locus::new(1, i as u64 + 1)).collect();
        let calls: Vec<String> = values
            .iter()
            .map(|&v| match v { 0 => "AA", 1 => "AG", _ => "GG" }.to_string())
            .collect();
        let reference = vec!['A'; values.len()];
        let m = encode_genotypes(vec!["h".into()], genes, &[calls], &reference).unwrap();
        prop_assert_eq!(m.row(0), values.as_slice());
    }
}
