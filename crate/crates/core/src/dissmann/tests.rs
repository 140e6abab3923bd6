use super::*;
use crate::numerics::RngStream;
use crate::pair_copulas::{default_candidates, Family, Rotation};
use crate::sampler::sample;
use proptest::prelude::*;

fn column(m: &Matrix, j: usize) -> Vec<f64> {
    m.column(j)
}

fn clayton(theta: f64) -> PairCopula {
    PairCopula::new(Family::Clayton, Rotation::R0, theta).unwrap()
}

fn tree_pairs(model: &VineModel, level: usize) -> Vec<[usize; 2]> {
    let mut pairs: Vec<[usize; 2]> = model.trees()[level - 1]
        .iter()
        .map(|e| {
            let [a, b] = e.conditioned;
            [a.min(b), a.max(b)]
        })
        .collect();
    pairs.sort();
    pairs
}

#[test]
fn pseudo_obs_ranks_and_ties() {
    let x = Matrix::from_columns(&[[3.0, 1.0, 2.0], [1.0, 1.0, 2.0]]).unwrap();
    let u = pseudo_obs(&x).unwrap();
    assert_eq!(column(&u, 0), [0.75, 0.25, 0.5]);
    assert_eq!(column(&u, 1), [0.375, 0.375, 0.75]);

    let inc: Vec<f64> = (0..20).map(|i| i as f64 * 1.5 - 4.0).collect();
    let u = pseudo_obs(&Matrix::from_columns(&[inc]).unwrap()).unwrap();
    let expect: Vec<f64> = (1..=20).map(|r| r as f64 / 21.0).collect();
    assert_eq!(column(&u, 0), expect);

    let constant = Matrix::from_columns(&[[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]).unwrap();
    assert!(matches!(pseudo_obs(&constant), Err(Error::Degenerate(_))));
}

#[test]
fn empirical_tau_examples() {
    assert_eq!(kendall_tau_empirical(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0);
    assert_eq!(kendall_tau_empirical(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
    let t = kendall_tau_empirical(&[1., 2., 3., 4.], &[2., 1., 3., 4.]).unwrap();
    assert!((t - 2.0 / 3.0).abs() < 1e-15);
    assert!(matches!(kendall_tau_empirical(&[1., 1.], &[1., 2.]), Err(Error::Degenerate(_))));
    assert!(kendall_tau_empirical(&[1.], &[1.]).is_err());
    assert!(kendall_tau_empirical(&[1., 2.], &[1., 2., 3.]).is_err());
}

#[test]
fn conditional_pseudo_obs_examples() {
    let (a, b) = conditional_pseudo_obs(&PairCopula::independence(), &[0.2, 0.7], &[0.9, 0.1]);
    assert_eq!((a, b), (vec![0.2, 0.7], vec![0.9, 0.1]));

    let g = PairCopula::new(Family::Gaussian, Rotation::R0, 0.9).unwrap();
    let (a, b) = conditional_pseudo_obs(&g, &[0.5], &[0.5]);
    assert!((a[0] - 0.5).abs() < 1e-12 && (b[0] - 0.5).abs() < 1e-12);

    let (a, b) = conditional_pseudo_obs(&clayton(2.0), &[0.5], &[0.5]);
    // h = v^{-3} (u^{-2} + v^{-2} - 1)^{-3/2} = 8 · 7^{-3/2}
    let expect = 8.0 * 7f64.powf(-1.5);
    assert!((a[0] - expect).abs() < 1e-12 && (b[0] - expect).abs() < 1e-12);
    assert!((expect - 0.43200).abs() < 5e-5);
}

fn proposal(a: usize, b: usize, w: f64) -> Proposal {
    Proposal {
        p: a,
        q: b,
        conditioned: [a, b],
        conditioning: vec![],
        weight: w,
    }
}

#[test]
fn three_node_spanning_tree() {
    let t = spanning_tree(3, vec![proposal(0, 1, 0.8), proposal(1, 2, 0.7), proposal(0, 2, 0.1)]).unwrap();
    let ids: Vec<_> = t.iter().map(|e| e.conditioned).collect();
    assert_eq!(ids, [[0, 1], [1, 2]]);
}

#[test]
fn spanning_tree_ties_prefer_smallest_edge() {
    let t = spanning_tree(3, vec![proposal(1, 2, 0.5), proposal(0, 2, 0.5), proposal(0, 1, 0.5)]).unwrap();
    let ids: Vec<_> = t.iter().map(|e| e.conditioned).collect();
    assert_eq!(ids, [[0, 1], [0, 2]]);
    assert!(matches!(spanning_tree(3, vec![proposal(0, 1, 1.0)]), Err(Error::Structure(_))));
}

/// All spanning trees of the complete graph on `m` nodes, by subset enumeration.
fn all_spanning_trees(m: usize) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        if mask.count_ones() as usize != m - 1 {
            continue;
        }
        let chosen: Vec<_> = (0..pairs.len()).filter(|&k| mask >> k & 1 == 1).map(|k| pairs[k]).collect();
        let mut uf = UnionFind::new(m);
        if chosen.iter().all(|&(a, b)| uf.union(a, b)) {
            out.push(chosen);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn first_tree_has_maximal_weight(m in 3usize..=6, seed in 0u64..1000) {
        let mut gen = RngStream::new(seed, 0).generator();
        let n = 40;
        let base: Vec<f64> = (0..n).map(|_| crate::numerics::uniform01(&mut gen)).collect();
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let w = j as f64 / m as f64;
                base.iter().map(|&b| w * b + (1.0 - w) * crate::numerics::uniform01(&mut gen)).collect()
            })
            .collect();
        let u = pseudo_obs(&Matrix::from_columns(&cols).unwrap()).unwrap();
        let model = select_structure(&u, 1, &default_candidates()).unwrap();
        let weight = |edges: &[(usize, usize)]| -> f64 {
            edges.iter().map(|&(a, b)| kendall_tau(&u.column(a), &u.column(b)).abs()).sum()
        };
        let chosen: Vec<(usize, usize)> = tree_pairs(&model, 1).iter().map(|p| (p[0], p[1])).collect();
        let best = all_spanning_trees(m).iter().map(|t| weight(t)).fold(f64::MIN, f64::max);
        prop_assert!(weight(&chosen) >= best - 1e-12);
        prop_assert!(model.structure().is_valid());
    }
}

#[test]
fn two_variables_give_one_fitted_edge() {
    let model = crate::vine_model::VineModel::new(VineStructure::dvine(&[0, 1], &[vec![clayton(3.0)]], 1)).unwrap();
    let u = sample(&model, 500, RngStream::new(1, 0)).unwrap();
    let (fit, report) = select_structure_with_report(&u, 1, &default_candidates()).unwrap();
    assert_eq!(fit.trees().len(), 1);
    assert_eq!(tree_pairs(&fit, 1), [[0, 1]]);
    assert_eq!(fit.trees()[0][0].copula.family(), Family::Clayton);
    assert_eq!(report.len(), 1);
    assert_eq!(report[0].edge, "1,2");
}

#[test]
fn rejects_bad_arguments() {
    let u = Matrix::from_columns(&[[0.1, 0.5, 0.9]]).unwrap();
    assert!(matches!(select_structure(&u, 1, &default_candidates()), Err(Error::Config(_))));
    let u = Matrix::from_columns(&[[0.1, 0.5, 0.9], [0.2, 0.4, 0.8]]).unwrap();
    assert!(matches!(select_structure(&u, 0, &default_candidates()), Err(Error::Config(_))));
    assert!(matches!(select_structure(&u, 2, &default_candidates()), Err(Error::Config(_))));
}

fn clayton_chain(order: &[usize]) -> VineModel {
    let copulas = vec![vec![clayton(3.0); order.len() - 1]];
    VineModel::new(VineStructure::dvine(order, &copulas, 1)).unwrap()
}

#[test]
fn recovers_first_tree_of_a_clayton_chain() {
    let truth = clayton_chain(&[2, 0, 3, 1]);
    let expected = tree_pairs(&truth, 1);
    let hits = (0..100)
        .filter(|&r| {
            let u = sample(&truth, 2000, RngStream::new(100 + r, 0)).unwrap();
            let u = pseudo_obs(&u).unwrap();
            let fit = select_structure(&u, 1, &default_candidates()).unwrap();
            tree_pairs(&fit, 1) == expected
        })
        .count();
    assert!(hits >= 95, "recovered {hits}/100");
}

#[test]
fn selection_is_deterministic_and_valid_at_every_truncation() {
    let copulas = vec![vec![clayton(2.0), clayton(1.0), clayton(0.5), clayton(4.0)], vec![clayton(0.7); 3]];
    let truth = VineModel::new(VineStructure::cvine(&[1, 0, 4, 2, 3], &copulas, 2)).unwrap();
    let u = pseudo_obs(&sample(&truth, 600, RngStream::new(9, 3)).unwrap()).unwrap();
    for k in 1..=4 {
        let (a, ra) = select_structure_with_report(&u, k, &default_candidates()).unwrap();
        let (b, rb) = select_structure_with_report(&u, k, &default_candidates()).unwrap();
        assert_eq!(a.structure(), b.structure());
        assert_eq!(ra, rb);
        assert!(a.structure().is_valid());
        assert_eq!(a.truncation(), k);
        assert_eq!(ra.len(), 10);
        for r in &ra {
            assert_eq!(r.loglik.is_some(), r.tree <= k);
        }
        for level in k + 1..=4 {
            assert!(a.trees()[level - 1].iter().all(|e| e.copula.is_independence()));
        }
    }
}

#[test]
fn edge_report_csv() {
    let u = pseudo_obs(&sample(&clayton_chain(&[0, 1, 2]), 300, RngStream::new(2, 0)).unwrap()).unwrap();
    let (_, rows) = select_structure_with_report(&u, 1, &default_candidates()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("edges.csv");
    write_edge_report(&p, &rows).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "tree,edge,family,rotation,theta,tau_empirical,tau_model,loglik,aic"
    );
    assert_eq!(lines.count(), 3);
}
