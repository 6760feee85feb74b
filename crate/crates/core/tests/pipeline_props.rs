use proptest::prelude::*;

use sweepddm::pipeline::*;

fn spec() -> impl Strategy<Value = PipelineSpec> {
    (prop::collection::vec(1usize..6, 2..=3), 1usize..40, 1usize..6, 0.1..3.0f64)
        .prop_map(|(c, r, it, t0)| PipelineSpec::new(&c, r, it, t0).unwrap())
}

proptest! {
    #[test]
    fn diagonal_never_slower_than_recursive(s in spec()) {
        if s.cores() + s.dim > s.counts[..s.dim].iter().sum::<usize>() + 1 {
            prop_assert!(average_time_diagonal(&s) <= average_time_recursive(&s));
        }
    }

    #[test]
    fn schedule_is_consistent(s in spec()) {
        let sch = simulate_pipeline(&s);
        let n = s.cores();
        // No core runs two tasks at once.
        for c in 0..n {
            let mut t: Vec<_> = sch.tasks.iter().filter(|t| t.core == c).collect();
            t.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
            for w in t.windows(2) {
                prop_assert!(w[1].start >= w[0].end - 1e-12);
            }
            prop_assert_eq!(t.len(), s.sweeps() * s.n_iter * s.n_rhs);
        }
        prop_assert!(sch.utilization.iter().all(|&u| u > 0.0 && u <= 1.0 + 1e-12));
        // The model never beats perfect pipelining by more than one idle fill step.
        prop_assert!(sch.avg_per_rhs >= sch.formula_avg - s.t0 / s.n_rhs as f64 - 1e-9);
        let q = (s.sweeps() * s.n_iter) as f64;
        let lower = (s.steps() - 1) as f64 * s.t0 + q * s.n_rhs as f64 * s.t0;
        prop_assert!(sch.makespan >= lower - 1e-9);
    }

    #[test]
    fn mirrored_assignment_covers_every_subdomain(s in spec()) {
        let dirs: Vec<[i8; 3]> = if s.dim == 2 {
            vec![[1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0]]
        } else {
            (0..8).map(|m| [if m & 1 == 0 { 1 } else { -1 }, if m & 2 == 0 { 1 } else { -1 }, if m & 4 == 0 { 1 } else { -1 }]).collect()
        };
        for d in dirs {
            let mut seen = vec![false; s.cores()];
            for i in 0..s.counts[0] {
                for j in 0..s.counts[1] {
                    for k in 0..s.counts[2] {
                        let a = assigned_subdomain(&s, [i, j, k], d);
                        let r = core_rank(&s, a);
                        prop_assert!(!seen[r]);
                        seen[r] = true;
                    }
                }
            }
        }
    }
}

#[test]
fn average_time_decreases_with_more_right_hand_sides() {
    let mut last = f64::INFINITY;
    for r in 1..60 {
        let s = PipelineSpec::new(&[4, 3, 5], r, 3, 1.0).unwrap();
        let a = average_time_diagonal(&s);
        assert!(a < last);
        last = a;
    }
}
