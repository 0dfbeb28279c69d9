use fairdarts::analysis::{
    count_dominant, discrepancy, parse_trajectory_csv, trajectory_csv, DominanceRule, Snapshot, Trajectory,
};
use fairdarts::derivation::{derive_fair_cell, edge_index, edge_pair, parse_genotype, random_genotype, EdgeRank, SigmaThreshold};
use fairdarts::searchspace::{ArchParams, OpKind, RelaxMode, SupernetSpec};
use proptest::prelude::*;

fn matrix(rows: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-6.0..6.0f64, 7), rows)
}

fn sigmoid_snapshot(alpha: &[Vec<f64>]) -> Snapshot {
    Snapshot {
        epoch: 0,
        groups: vec![alpha.iter().map(|r| RelaxMode::SigmoidCollaborative.relax(r)).collect()],
    }
}

proptest! {
    #[test]
    fn sigma_dominance_nonincreasing_in_threshold(alpha in matrix(14), a in 0.5..0.99f64, b in 0.5..0.99f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let s = sigmoid_snapshot(&alpha);
        let count = |t| count_dominant(&s, RelaxMode::SigmoidCollaborative, &OpKind::ALL, Some(t), DominanceRule::SigmaThreshold)
            .unwrap()
            .total();
        prop_assert!(count(hi) <= count(lo));
    }

    #[test]
    fn sigma_dominance_matches_recount(alpha in matrix(8), t in 0.5..0.95f64) {
        let s = sigmoid_snapshot(&alpha);
        let c = count_dominant(&s, RelaxMode::SigmoidCollaborative, &OpKind::ALL, Some(t), DominanceRule::SigmaThreshold).unwrap();
        for (o, &kind) in OpKind::ALL.iter().enumerate() {
            let brute = s.groups[0].iter().filter(|r| r[o] > t).count();
            prop_assert_eq!(c.get(kind), brute);
        }
    }

    #[test]
    fn fair_rule_monotone_in_threshold(alpha in matrix(14), a in 0.51..0.99f64, b in 0.51..0.99f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let derive = |t| derive_fair_cell(&alpha, &OpKind::ALL, SigmaThreshold::new(t).unwrap(), EdgeRank::BestOp).unwrap();
        let loose = derive(lo);
        for g in derive(hi) {
            prop_assert!(loose.contains(&g), "{:?} appears only at the higher threshold", g);
        }
    }

    #[test]
    fn discrepancy_zero_iff_discrete(row in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0..1.0f64], 1..8)) {
        let d = discrepancy(&row, RelaxMode::SigmoidCollaborative).unwrap();
        let discrete = row.iter().all(|&z| z == 0.0 || z == 1.0);
        prop_assert_eq!(d == 0.0, discrete);
    }

    #[test]
    fn softmax_discrepancy_zero_iff_one_hot(alpha in prop::collection::vec(-40.0..40.0f64, 2..7)) {
        let row = RelaxMode::SoftmaxExclusive.relax(&alpha);
        let d = discrepancy(&row, RelaxMode::SoftmaxExclusive).unwrap();
        let one_hot = row.iter().filter(|&&z| z == 1.0).count() == 1 && row.iter().all(|&z| z == 0.0 || z == 1.0);
        prop_assert_eq!(d == 0.0, one_hot);
    }

    #[test]
    fn trajectory_csv_round_trips(a in matrix(14), b in matrix(14), sigmoid in any::<bool>()) {
        let mode = if sigmoid { RelaxMode::SigmoidCollaborative } else { RelaxMode::SoftmaxExclusive };
        let spec = SupernetSpec::s1();
        let mut traj = Trajectory::for_arch(&ArchParams::zeros(&spec, mode));
        for (epoch, m) in [a, b].into_iter().enumerate() {
            let mut arch = ArchParams::zeros(&spec, mode);
            for (r, row) in m.iter().enumerate() {
                arch.set_row(0, r, row);
                arch.set_row(1, r, row);
            }
            traj.push(Snapshot::from_arch(epoch, &arch)).unwrap();
        }
        let text = trajectory_csv(&traj);
        let back = parse_trajectory_csv(&text, &traj.kinds, &traj.opset).unwrap();
        for (x, y) in back.iter().flat_map(|s| s.values()).zip(traj.snapshots.iter().flat_map(|s| s.values())) {
            prop_assert_eq!(x, format!("{y:.6}").parse::<f64>().unwrap());
        }
        prop_assert_eq!(trajectory_csv(&Trajectory { snapshots: back, ..traj }), text);
    }

    #[test]
    fn random_genotypes_round_trip(seed in any::<u64>(), cap in 0usize..4) {
        let g = random_genotype(cap, None, seed).unwrap();
        let back = parse_genotype(&g.serialize()).unwrap();
        prop_assert_eq!(back.serialize(), g.serialize());
        prop_assert_eq!(back, g);
    }
}

#[test]
fn edge_index_is_a_bijection() {
    for e in 0..14 {
        let (j, k) = edge_pair(e).unwrap();
        assert_eq!(edge_index(j, k).unwrap(), e);
    }
    assert!(edge_pair(14).is_err());
}
