use oocluster::generator::{self, SchemaParams};
use oocluster::object_model::{parse_snapshot, Database};
use oocluster::workload::{self, AccessMode, Algorithm, KindSampler, StartDistribution, TransactionMix, TxKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn db(seed: u64, n: usize) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generator::generate_initial_db(&SchemaParams::default(), n, &mut rng, 4).unwrap()
}

#[test]
fn snapshot_round_trips() {
    for seed in 0..10 {
        let db = db(seed, 150);
        let snap = parse_snapshot(&db.snapshot()).unwrap();
        assert_eq!(snap.objects.len(), db.len());
        assert_eq!(snap.edges.len(), db.edges().len());
        for (rec, o) in snap.objects.iter().zip(db.objects()) {
            assert_eq!((rec.oid, rec.class, rec.version_no, rec.size), (o.oid, o.class, o.version_no, o.size));
        }
        for (rec, e) in snap.edges.iter().zip(db.edges()) {
            assert_eq!((rec.kind, rec.a, rec.b), (e.kind, e.endpoints.0, e.endpoints.1));
            assert!((rec.cost - e.lookup_cost).abs() < 1e-12);
        }
    }
}

#[test]
fn default_mixes_sum_to_one() {
    for alg in Algorithm::ALL {
        let mix = TransactionMix::default_for(alg);
        assert!((mix.pt.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{alg:?}");
        mix.validate().unwrap();
    }
}

#[test]
fn reclustering_frequency_matches_the_mix() {
    const DRAWS: u64 = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sampler = KindSampler::new(&TransactionMix::default_for(Algorithm::Cactis)).unwrap();
    let hits = (0..DRAWS).filter(|_| sampler.sample(&mut rng) == TxKind::Reclustering).count() as f64;
    let p = 0.0005;
    let sd = (DRAWS as f64 * p * (1.0 - p)).sqrt();
    assert!((hits - DRAWS as f64 * p).abs() < 4.0 * sd, "{hits} reclusterings");

    let ck = KindSampler::new(&TransactionMix::default_for(Algorithm::Ck)).unwrap();
    assert!((0..200_000).all(|_| ck.sample(&mut rng) != TxKind::Reclustering));
}

#[test]
fn uniform_start_passes_chi_square() {
    let db = db(3, 400);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    let mut counts = vec![0u64; db.len()];
    for _ in 0..draws {
        let o = workload::select_start_object(&db, StartDistribution::Uniform, &mut rng).unwrap();
        counts[o.0 as usize - 1] += 1;
    }
    let expected = draws as f64 / db.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // Upper 0.1% point of chi-square with 399 degrees of freedom (Wilson-Hilferty).
    let df = (db.len() - 1) as f64;
    let k = 2.0 / (9.0 * df);
    let critical = df * (1.0 - k + 3.090 * k.sqrt()).powi(3);
    assert!(stat < critical, "chi-square {stat:.1} >= {critical:.1}");
}

#[test]
fn normal_start_favours_the_middle() {
    let db = db(3, 400);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut deciles = [0u64; 10];
    for _ in 0..100_000 {
        let o = workload::select_start_object(&db, StartDistribution::Normal, &mut rng).unwrap();
        deciles[((o.0 - 1) * 10 / db.len() as u64) as usize] += 1;
    }
    for middle in [4, 5] {
        assert!(deciles[middle] > deciles[0] && deciles[middle] > deciles[9], "{deciles:?}");
    }
}

#[test]
fn resolved_transactions_are_well_formed() {
    let db = db(8, 300);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for round in 0..200 {
        for kind in TxKind::ALL {
            let dist = if round % 2 == 0 { StartDistribution::Uniform } else { StartDistribution::Normal };
            let tx = workload::resolve(kind, &db, &mut rng, 5, dist).unwrap();
            assert!(tx.accesses.iter().all(|a| db.object(a.oid).is_some()));
            match kind {
                TxKind::ObjectCreation | TxKind::Reclustering => assert!(tx.accesses.is_empty()),
                _ => assert!(!tx.accesses.is_empty(), "{kind:?}"),
            }
            if kind == TxKind::Editing {
                assert!(tx.accesses.iter().any(|a| a.mode == AccessMode::Write));
            }
            if matches!(
                kind,
                TxKind::ClosureVersion | TxKind::ClosureConfiguration | TxKind::ClosureEquivalence | TxKind::ClosureRandom
            ) {
                assert!((1..=6).contains(&tx.accesses.len()));
            }
            if kind == TxKind::NameLookup {
                assert_eq!(tx.accesses.len(), 1);
            }
        }
    }
}

#[test]
fn transaction_stream_is_reproducible() {
    let db = db(4, 200);
    let trace = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampler = KindSampler::new(&TransactionMix::default_for(Algorithm::Orion)).unwrap();
        (0..300u64)
            .map(|i| {
                let kind = sampler.sample(&mut rng);
                workload::resolve(kind, &db, &mut rng, 5, StartDistribution::Uniform).unwrap().trace_line(i)
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(trace(1), trace(1));
    assert_ne!(trace(1), trace(2));
}
