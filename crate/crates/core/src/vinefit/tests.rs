use super::*;
use crate::bicop::{Copula, Family, Rotation};
use crate::special::gauss_legendre;
use crate::structure::{structure_from_edges, with_copulas};
use crate::testkit::{chain, cop, draw, gauss, hub, indep, names, vine};
use proptest::prelude::*;

fn wrap(s: VineStructure, n: usize) -> FittedVine {
    FittedVine::new(s, Vec::new(), n, 0, TiePolicy::Jitter, FitSettings::default()).unwrap()
}

fn fit(u: &PseudoObs, kind: VineKind) -> FittedVine {
    let st = FitSettings::with_families(&[Family::Gaussian, Family::StudentT, Family::Clayton, Family::Frank]);
    wrap(fit_structure(u, kind, None, &st).unwrap(), u.n())
}

#[test]
fn independence_vine_has_zero_loglik_and_criteria() {
    let s = vine(
        VineKind::Rvine,
        3,
        vec![vec![(0, 1, vec![], indep()), (1, 2, vec![], indep())], vec![(0, 2, vec![1], indep())]],
    );
    let fv = wrap(s, 777);
    let u = draw(&chain(3, 0.7), 200, 1);
    assert_eq!(vine_loglik(&fv, &u).unwrap(), 0.0);
    assert_eq!(fv.loglik, 0.0);
    assert_eq!((fv.aic, fv.bic), (0.0, 0.0));
    assert_eq!(model_criteria(&fv), (0.0, 0.0));
}

#[test]
fn criteria_count_parameters_across_edges() {
    let mut s = vine(
        VineKind::Dvine,
        3,
        vec![
            vec![(0, 1, vec![], gauss(0.5)), (1, 2, vec![], cop(Family::StudentT, &[0.3, 5.0]))],
            vec![(0, 2, vec![1], indep())],
        ],
    );
    for (e, ll) in s.trees.iter_mut().flatten().zip([10.0, 4.0, 0.0]) {
        e.spec.as_mut().unwrap().loglik = ll;
    }
    let fv = wrap(s, 100);
    assert_eq!(fv.n_params, 3);
    assert_eq!(fv.loglik, 14.0);
    assert_eq!(fv.aic, 2.0 * 3.0 - 28.0);
    assert_eq!(fv.bic, 3.0 * 100f64.ln() - 28.0);

    let one = wrap(vine(VineKind::Rvine, 2, vec![vec![(0, 1, vec![], gauss(0.4))]]), 50);
    assert_eq!(one.aic, 2.0 - 2.0 * one.loglik);
}

#[test]
fn two_variable_vine_is_the_bivariate_loglik() {
    let c = cop(Family::Clayton, &[2.0]);
    let s = vine(VineKind::Rvine, 2, vec![vec![(0, 1, vec![], c)]]);
    let u = draw(&s, 300, 2);
    let fv = wrap(s, 300);
    let direct = crate::bicop::loglik(&c, u.column(0), u.column(1));
    assert!((vine_loglik(&fv, &u).unwrap() - direct).abs() < 1e-9);
}

#[test]
fn three_variable_dvine_matches_direct_product() {
    let c12 = cop(Family::Clayton, &[1.5]);
    let c23 = cop(Family::Frank, &[4.0]);
    let c13 = Copula::new(Family::Gumbel, Rotation::R90, &[1.4]).unwrap();
    let s = vine(
        VineKind::Dvine,
        3,
        vec![vec![(0, 1, vec![], c12), (1, 2, vec![], c23)], vec![(0, 2, vec![1], c13)]],
    );
    let u = draw(&s, 100, 3);
    let dens = log_density(&s, &u).unwrap();
    for (i, ld) in dens.iter().enumerate() {
        let r = u.row(i);
        let a = c12.hfunc(r[0], r[1], CondOn::Second);
        let b = c23.hfunc(r[1], r[2], CondOn::First);
        let direct = c12.log_pdf(r[0], r[1]) + c23.log_pdf(r[1], r[2]) + c13.log_pdf(a, b);
        assert!((ld - direct).abs() < 1e-8, "row {i}: {ld} vs {direct}");
    }
}

#[test]
fn conditional_pseudo_obs_examples() {
    let e = |c: Copula| VineEdge {
        conditioned: [0, 1],
        conditioning: Vec::new(),
        level: 1,
        weight: 0.0,
        spec: Some(BicopSpec::from_fit(c, 0.0, 0.0, 0, true)),
    };
    let x: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let y: Vec<f64> = x.iter().rev().copied().collect();
    let (a, b) = conditional_pseudo_obs(&e(indep()), &x, &y).unwrap();
    assert_eq!((a, b), (x.clone(), y.clone()));

    let (a, b) = conditional_pseudo_obs(&e(gauss(0.99)), &x, &x).unwrap();
    for ((&u, &p), &q) in x.iter().zip(&a).zip(&b) {
        if (0.05..=0.95).contains(&u) {
            assert!((p - 0.5).abs() < 0.05 && (q - 0.5).abs() < 0.05, "{u}: {p} {q}");
        }
    }

    let mut unfitted = e(indep());
    unfitted.spec = None;
    assert!(conditional_pseudo_obs(&unfitted, &x, &y).is_err());
}

proptest! {
    #[test]
    fn conditional_outputs_stay_inside_the_unit_interval(
        rho in -0.999f64..0.999,
        pts in prop::collection::vec((1e-12f64..1.0, 1e-12f64..1.0), 1..50),
    ) {
        let edge = VineEdge {
            conditioned: [0, 1],
            conditioning: Vec::new(),
            level: 1,
            weight: 0.0,
            spec: Some(BicopSpec::from_fit(gauss(rho), 0.0, 0.0, 0, true)),
        };
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let (a, b) = conditional_pseudo_obs(&edge, &x, &y).unwrap();
        prop_assert!(a.iter().chain(&b).all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn sequential_fit_loglik_matches_re_evaluation() {
    let u = draw(&hub(5, 0.45), 800, 4);
    for kind in [VineKind::Rvine, VineKind::Cvine, VineKind::Dvine] {
        let fv = fit(&u, kind);
        let again = vine_loglik(&fv, &u).unwrap();
        assert!((fv.loglik - again).abs() < 1e-6, "{kind}: {} vs {again}", fv.loglik);
    }
}

#[test]
fn fitted_three_variable_density_integrates_to_one() {
    let u = draw(&chain(3, 0.3), 1000, 5);
    let st = FitSettings::with_families(&[Family::Gaussian, Family::Frank]);
    let s = build_dvine(&u, &[0, 1, 2], &st).unwrap();
    let (nodes, weights) = gauss_legendre(40);
    let x: Vec<f64> = nodes.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let w: Vec<f64> = weights.iter().map(|w| 0.5 * w).collect();
    let mut cols = vec![Vec::new(), Vec::new(), Vec::new()];
    let mut wt = Vec::new();
    for i in 0..40 {
        for j in 0..40 {
            for k in 0..40 {
                cols[0].push(x[i]);
                cols[1].push(x[j]);
                cols[2].push(x[k]);
                wt.push(w[i] * w[j] * w[k]);
            }
        }
    }
    let grid = PseudoObs::from_columns(cols).unwrap();
    let ld = log_density(&s, &grid).unwrap();
    let total: f64 = ld.iter().zip(&wt).map(|(l, w)| l.exp() * w).sum();
    assert!((total - 1.0).abs() < 2e-2, "{total}");
}

#[test]
fn refit_keeps_families_and_recovers_parameters() {
    let truth = vine(
        VineKind::Dvine,
        3,
        vec![
            vec![(0, 1, vec![], cop(Family::Clayton, &[2.0])), (1, 2, vec![], gauss(0.5))],
            vec![(0, 2, vec![1], cop(Family::Frank, &[3.0]))],
        ],
    );
    let u = draw(&truth, 3000, 6);
    let re = refit(&truth, &u, &RefitMode::KeepFamilies).unwrap();
    for (a, b) in truth.edges().zip(re.edges()) {
        let (sa, sb) = (a.spec.as_ref().unwrap(), b.spec.as_ref().unwrap());
        assert_eq!(sa.family(), sb.family());
        let rel = (sa.params()[0] - sb.params()[0]).abs() / sa.params()[0].abs();
        assert!(rel < 0.15, "{} vs {}", sa.label(), sb.label());
    }
    let sel = refit(&truth, &u, &RefitMode::Select(SelectionSettings::default())).unwrap();
    assert!(sel.is_fitted());
}

#[test]
fn adding_a_dependent_variable_never_lowers_loglik() {
    let u = draw(&chain(3, 0.5), 600, 7);
    let st = FitSettings::with_families(&[Family::Gaussian, Family::Clayton, Family::Frank]);
    let two = PseudoObs::new(u.columns()[..2].to_vec(), u.names()[..2].to_vec()).unwrap();
    let a = wrap(build_dvine(&two, &[0, 1], &st).unwrap(), 600);
    let b = wrap(build_dvine(&u, &[0, 1, 2], &st).unwrap(), 600);
    assert!(b.loglik >= a.loglik - 1e-9);
}

#[test]
fn model_json_round_trips_byte_identically() {
    let u = draw(&hub(4, 0.4), 300, 8);
    let fv = fit(&u, VineKind::Cvine);
    let text = fv.to_json().unwrap();
    let back = FittedVine::from_json(&text).unwrap();
    assert_eq!(back.to_json().unwrap(), text);
    assert!(text.contains("\"version\": 1"));
    assert!(text.contains("\"loglik_scale\": \"copula\""));
    let future = text.replacen("\"version\": 1", "\"version\": 99", 1);
    assert!(FittedVine::from_json(&future).is_err());
}

#[test]
fn dimension_mismatch_is_rejected() {
    let fv = wrap(chain(3, 0.3), 10);
    let u = draw(&chain(2, 0.3), 50, 9);
    assert!(vine_loglik(&fv, &u).is_err());
    let unfitted = structure_from_edges(names(2), VineKind::Rvine, vec![vec![(0, 1, vec![])]]).unwrap();
    assert!(FittedVine::new(unfitted.clone(), Vec::new(), 1, 0, TiePolicy::Jitter, FitSettings::default()).is_err());
    assert!(with_copulas(unfitted, Vec::new()).is_err());
}
