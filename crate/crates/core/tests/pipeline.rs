use decisive::abstraction::{build_abstraction, initial_partition, refine, DEFAULT_STEP_CAP};
use decisive::fixtures;
use decisive::reachability::btilde;
use decisive::shs::{BlockMatcher, Shs};
use decisive::sts::run_rng;
use rayon::prelude::*;

fn cycle_reset_models() -> Vec<(&'static str, Shs)> {
    fixtures::CYCLE_RESET.iter().map(|(n, s)| (*n, fixtures::load(s))).collect()
}

#[test]
fn refinement_adds_one_block_per_split_and_refines_the_start() {
    let mut models = cycle_reset_models();
    models.push(("strong_loop", fixtures::strong_loop()));
    models.push(("no_finite_abs", fixtures::no_finite_abs()));
    for (name, m) in models {
        let p0 = initial_partition(&m, &m.targets[0].blocks);
        let out = refine(&m, &p0, if name == "no_finite_abs" { 10 } else { DEFAULT_STEP_CAP });
        let p = out.partition();
        p.check(&m).unwrap();
        assert_eq!(p.len(), p0.len() + out.steps(), "{name}");
        for (i, s) in out.trace().iter().enumerate() {
            assert_eq!(s.created, p0.len() + i, "{name}");
        }
        p.parents_in(&p0).unwrap();
    }
}

#[test]
fn runs_never_leave_the_avoid_set_for_the_target() {
    for (name, m) in cycle_reset_models() {
        let target = m.targets[0].blocks.clone();
        let avoid = btilde(&m, &target, DEFAULT_STEP_CAP).unwrap();
        let (hit, inside) = (BlockMatcher::new(&m, &target), BlockMatcher::new(&m, &avoid.blocks));
        let sampler = m.sampler();
        let escapes: usize = (0..10_000u64)
            .into_par_iter()
            .map(|i| {
                let run = sampler.run(1_000, &mut run_rng(9, i)).unwrap();
                match run.iter().position(|s| inside.contains(s)) {
                    Some(k) => usize::from(run[k..].iter().any(|s| hit.contains(s))),
                    None => 0,
                }
            })
            .sum();
        assert_eq!(escapes, 0, "{name}");
    }
}

#[test]
fn observed_steps_follow_the_abstract_support() {
    for (name, m) in cycle_reset_models() {
        let p0 = initial_partition(&m, &m.targets[0].blocks);
        let out = refine(&m, &p0, DEFAULT_STEP_CAP);
        let abs = build_abstraction(&m, out.partition()).unwrap();
        let classify = abs.classifier();
        let sampler = m.sampler();
        for i in 0..1_000 {
            let run = sampler.run(50, &mut run_rng(4, i)).unwrap();
            for w in run.windows(2) {
                let (a, b) = (classify.classify(&w[0]).unwrap(), classify.classify(&w[1]).unwrap());
                assert!(abs.successors(a).contains(&b), "{name}: {a} -> {b} not in the support");
            }
        }
    }
}
