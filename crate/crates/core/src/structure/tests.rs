use super::*;
use crate::bicop::Family;
use crate::testkit::{chain, draw, gauss_tau, hub, indep, names, vine};
use proptest::prelude::*;

/// Every labelled spanning tree on `n` nodes, from Pruefer sequences.
fn all_spanning_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let mut out = Vec::new();
    let total = n.pow((n - 2) as u32);
    for code in 0..total {
        let mut seq = Vec::with_capacity(n - 2);
        let mut c = code;
        for _ in 0..n - 2 {
            seq.push(c % n);
            c /= n;
        }
        let mut degree = vec![1; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &s in &seq {
            let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
            edges.push((leaf.min(s), leaf.max(s)));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
        edges.push((rest[0], rest[1]));
        out.push(edges);
    }
    out
}

fn tree_weight(w: &[Vec<f64>], t: &[(usize, usize)]) -> f64 {
    t.iter().map(|&(i, j)| w[i][j]).sum()
}

#[test]
fn cayley_counts() {
    for n in 2..=6 {
        assert_eq!(all_spanning_trees(n).len(), n.pow((n - 2) as u32));
    }
}

#[test]
fn triangle_drops_weakest_edge() {
    let w = vec![vec![0.0, 0.9, 0.1], vec![0.9, 0.0, 0.8], vec![0.1, 0.8, 0.0]];
    let mut t = max_spanning_tree(&w).unwrap();
    t.sort_unstable();
    assert_eq!(t, vec![(0, 1), (1, 2)]);
}

#[test]
fn equal_weights_give_lexicographically_first_tree() {
    let w = vec![vec![0.5; 4]; 4];
    for _ in 0..3 {
        let mut t = max_spanning_tree(&w).unwrap();
        t.sort_unstable();
        assert_eq!(t, vec![(0, 1), (0, 2), (0, 3)]);
    }
}

#[test]
fn spanning_tree_rejects_bad_input() {
    assert!(max_spanning_tree(&[vec![0.0]]).is_err());
    assert!(max_spanning_tree(&[vec![0.0, f64::NAN], vec![f64::NAN, 0.0]]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mst_matches_exhaustive_enumeration(n in 2usize..=6, raw in prop::collection::vec(0.0f64..1.0, 15)) {
        let mut w = vec![vec![0.0; n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                w[i][j] = raw[k];
                w[j][i] = raw[k];
                k += 1;
            }
        }
        let t = max_spanning_tree(&w).unwrap();
        prop_assert_eq!(t.len(), n - 1);
        let best = all_spanning_trees(n).iter().map(|t| tree_weight(&w, t)).fold(f64::MIN, f64::max);
        prop_assert!((tree_weight(&w, &t) - best).abs() < 1e-12);
    }
}

fn settings() -> FitSettings {
    FitSettings::with_families(&[Family::Gaussian, Family::Clayton, Family::Frank])
}

#[test]
fn two_variables_give_one_selected_edge() {
    let u = draw(&chain(2, 0.5), 500, 1);
    let s = build_rvine(&u, &settings()).unwrap();
    assert_eq!(s.n_edges(), 1);
    let e = &s.trees[0][0];
    assert_eq!(e.conditioned, [0, 1]);
    assert!(e.conditioning.is_empty());
    let spec = e.spec.as_ref().unwrap();
    assert!((spec.implied_tau() - 0.5).abs() < 0.06, "{}", spec.implied_tau());
    // a C-vine on two variables is the same model
    let c = build_cvine(&u, &settings()).unwrap();
    assert_eq!(c.trees[0][0].spec, s.trees[0][0].spec);
}

#[test]
fn markov_chain_gives_path_and_weak_second_tree() {
    let u = draw(&chain(3, 0.6), 2000, 2);
    let s = build_rvine(&u, &settings()).unwrap();
    assert_eq!(s.first_tree_pairs(), [(0, 1), (1, 2)].into_iter().collect());
    let top = &s.trees[1][0];
    assert_eq!((top.conditioned, top.conditioning.clone()), ([0, 2], vec![1]));
    assert!(top.spec.as_ref().unwrap().implied_tau().abs() < 0.05);
    assert!(validate_structure(&s).ok());
}

#[test]
fn built_structures_are_valid_and_complete() {
    let u = draw(&hub(5, 0.4), 600, 3);
    for s in [
        build_rvine(&u, &settings()).unwrap(),
        build_cvine(&u, &settings()).unwrap(),
        build_dvine(&u, &[4, 2, 0, 1, 3], &settings()).unwrap(),
    ] {
        let diag = validate_structure(&s);
        assert!(diag.ok(), "{:?} {:?}", s.kind, diag.violations);
        assert_eq!(s.n_edges(), 5 * 4 / 2);
        assert!(s.is_fitted());
    }
}

#[test]
fn dvine_follows_order_and_is_symmetric() {
    let u = draw(&chain(3, 0.5), 300, 4);
    let s = build_dvine(&u, &[0, 1, 2], &settings()).unwrap();
    assert_eq!(s.first_tree_pairs(), [(0, 1), (1, 2)].into_iter().collect());
    assert_eq!(s.trees[1][0].conditioned, [0, 2]);
    assert_eq!(s.trees[1][0].conditioning, vec![1]);
    let r = build_dvine(&u, &[2, 1, 0], &settings()).unwrap();
    assert_eq!(s.trees, r.trees);

    let u5 = draw(&chain(5, 0.3), 300, 5);
    let p = build_dvine(&u5, &[3, 0, 4, 1, 2], &settings()).unwrap();
    assert!(p.first_tree_degrees().iter().all(|&k| k <= 2));
    assert!(validate_structure(&p).ok());
    assert!(build_dvine(&u5, &[0, 1, 2, 3], &settings()).is_err());
    assert!(build_dvine(&u5, &[0, 1, 2, 3, 3], &settings()).is_err());
}

#[test]
fn cvine_centre_is_the_hub() {
    let u = draw(&hub(4, 0.5), 1000, 6);
    let s = build_cvine(&u, &settings()).unwrap();
    assert_eq!(s.centers[0].variable, 0);
    assert_eq!(s.centers[0].node, "X1");
    assert_eq!(s.centers[0].neighbors.len(), 3);
    assert_eq!(s.centers.len(), 3);
    // later centres are composite nodes
    assert!(s.centers[1].node.contains(','));
    assert!(validate_structure(&s).ok());
}

/// Brute-force centre: argmax of the sum of |tau| over the current
/// conditioned pseudo-observations, recomputed from scratch.
#[test]
fn cvine_centres_match_brute_force_at_every_level() {
    for seed in 0..4 {
        let u = draw(&hub(6, 0.3), 400, 100 + seed);
        let s = build_cvine(&u, &settings()).unwrap();
        let mut cols: Vec<(usize, Vec<f64>)> = (0..6).map(|j| (j, u.column(j).to_vec())).collect();
        for (m0, centre) in s.centers.iter().enumerate() {
            let k = cols.len();
            let mut score = vec![0.0; k];
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        score[i] += kendall_tau(&cols[i].1, &cols[j].1).unwrap().abs();
                    }
                }
            }
            let best = (0..k).max_by(|&a, &b| score[a].total_cmp(&score[b]).then(b.cmp(&a))).unwrap();
            assert_eq!(cols[best].0, centre.variable, "level {}", m0 + 1);
            assert!((score[best] - centre.score).abs() < 1e-9);
            // condition the rest on the centre with the fitted edges
            let (cv, cu) = cols.remove(best);
            cols = cols
                .into_iter()
                .map(|(j, x)| {
                    let e = s.trees[m0].iter().find(|e| e.conditioned.contains(&j)).unwrap();
                    let (l, r) = if j < cv { (&x, &cu) } else { (&cu, &x) };
                    let (hl, hr) = crate::vinefit::conditional_pseudo_obs(e, l, r).unwrap();
                    (j, if j < cv { hl } else { hr })
                })
                .collect();
        }
    }
}

#[test]
fn validation_reports_violations() {
    let ok = structure_from_edges(
        names(4),
        VineKind::Dvine,
        vec![vec![(0, 1, vec![]), (1, 2, vec![]), (2, 3, vec![])], vec![(0, 2, vec![1]), (1, 3, vec![2])], vec![(0, 3, vec![1, 2])]],
    )
    .unwrap();
    assert!(validate_structure(&ok).ok());

    let mut bad = ok.clone();
    bad.trees[1][0] = VineEdge {
        conditioned: [0, 3],
        conditioning: vec![1],
        level: 2,
        weight: 0.0,
        spec: None,
    };
    let diag = validate_structure(&bad);
    assert!(!diag.ok());
    assert!(diag.violations.iter().any(|v| v.contains("proximity") && v.contains("X1,X4|X2")), "{:?}", diag.violations);

    let mut small = ok.clone();
    small.trees[0].pop();
    let diag = validate_structure(&small);
    assert!(diag.violations.iter().any(|v| v.contains("tree 1 has 2 edges")), "{:?}", diag.violations);

    let cyc = structure_from_edges(names(3), VineKind::Rvine, vec![vec![(0, 1, vec![]), (0, 1, vec![])], vec![]]);
    assert!(cyc.is_err());

    let mut star = ok.clone();
    star.kind = VineKind::Cvine;
    assert!(validate_structure(&star).violations.iter().any(|v| v.contains("not a star")));
}

#[test]
fn structure_json_round_trips_and_rejects_invalid() {
    let u = draw(&hub(4, 0.4), 300, 7);
    let s = build_cvine(&u, &settings()).unwrap();
    let text = crate::json::to_string(&s).unwrap();
    let back: VineStructure = serde_json::from_str(&text).unwrap();
    assert_eq!(crate::json::to_string(&back).unwrap(), text);
    assert_eq!(back.centers.len(), 3);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let e = &v["trees"][0][0];
    for k in ["conditioned", "conditioning", "family", "params", "tau"] {
        assert!(e.get(k).is_some(), "missing {k}");
    }
    let broken = text.replacen("\"d\": 4", "\"d\": 5", 1);
    assert!(serde_json::from_str::<VineStructure>(&broken).is_err());
}

#[test]
fn dot_export_has_one_graph_per_tree() {
    let u = draw(&chain(4, 0.5), 300, 8);
    let s = build_rvine(&u, &settings()).unwrap();
    let dots = s.to_dot();
    assert_eq!(dots.len(), 3);
    assert!(dots[0].starts_with("graph \"T1\" {"));
    assert_eq!(dots[0].matches(" -- ").count(), 3);
    assert!(dots[1].contains("tau="));
}

#[test]
fn truncation_fixes_upper_levels_to_independence() {
    let u = draw(&hub(5, 0.5), 500, 9);
    let mut st = settings();
    st.trunc_level = Some(1);
    let s = build_rvine(&u, &st).unwrap();
    assert!(s.trees[0].iter().all(|e| e.spec.as_ref().unwrap().family() != Family::Independence));
    assert!(s.trees[1..]
        .iter()
        .flatten()
        .all(|e| e.spec.as_ref().unwrap().family() == Family::Independence));
}

#[test]
fn building_is_deterministic() {
    let u = draw(&hub(5, 0.4), 400, 10);
    let a = build_rvine(&u, &settings()).unwrap();
    let b = build_rvine(&u, &settings()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ties_in_weights_break_by_name() {
    // two identical copies of a column give equal weights to both partners
    let base = draw(&chain(2, 0.6), 200, 11);
    let cols = vec![base.column(0).to_vec(), base.column(1).to_vec(), base.column(1).to_vec()];
    let u = PseudoObs::new(cols, vec!["c".into(), "b".into(), "a".into()]).unwrap();
    let s = build_rvine(&u, &settings()).unwrap();
    // (b, a) has tau 1; among the equal (c, b) and (c, a) edges "a" sorts first
    assert_eq!(s.first_tree_pairs(), [(0, 2), (1, 2)].into_iter().collect());
}

#[test]
fn rvine_beats_random_dvine_on_star_data() {
    let truth = vine(
        VineKind::Cvine,
        4,
        vec![
            vec![(0, 1, vec![], gauss_tau(0.6)), (0, 2, vec![], gauss_tau(0.5)), (0, 3, vec![], gauss_tau(0.4))],
            vec![(1, 2, vec![0], indep()), (1, 3, vec![0], indep())],
            vec![(2, 3, vec![0, 1], indep())],
        ],
    );
    let mut wins = 0;
    for seed in 0..20 {
        let u = draw(&truth, 500, 200 + seed);
        let r = build_rvine(&u, &settings()).unwrap();
        let order = [1, 2, 3, 0];
        let d = build_dvine(&u, &order, &settings()).unwrap();
        let ll = |s: &VineStructure| s.edges().map(|e| e.spec.as_ref().unwrap().loglik).sum::<f64>();
        if ll(&r) >= ll(&d) {
            wins += 1;
        }
    }
    assert!(wins > 10, "{wins}/20");
}
