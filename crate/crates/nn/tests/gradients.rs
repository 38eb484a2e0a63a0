use querytrack_nn::gradcheck::{check, run_suite, CheckKind, REL_TOL};

#[test]
fn every_backward_matches_finite_differences() {
    let outcomes = run_suite(120, 1000).unwrap();
    for kind in CheckKind::ALL {
        let worst = outcomes
            .iter()
            .filter(|o| o.kind == kind)
            .map(|o| o.max_rel_err)
            .fold(0.0, f64::max);
        println!("{:12} worst rel err {worst:.3e}", kind.name());
    }
    for o in &outcomes {
        assert!(
            o.passed(),
            "{:?} seed {}: {:.3e} >= {REL_TOL}",
            o.kind,
            o.seed,
            o.max_rel_err
        );
        assert!(o.checked > 0);
    }
}

#[test]
fn attention_holds_on_further_seeds() {
    for seed in 0..20 {
        let o = check(CheckKind::Attention, seed).unwrap();
        assert!(o.passed(), "seed {seed}: {:.3e}", o.max_rel_err);
    }
}
