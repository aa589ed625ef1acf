use levy_euler::levy::LevyMeasure;
use levy_euler::schemes::{
    adapted_times, make_uniform_grid, uniform_cells, Partition, PartitionKind,
};
use proptest::prelude::*;

fn assert_partition(times: &[f64], delta: f64, horizon: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(times[0], 0.0);
    prop_assert_eq!(*times.last().unwrap(), horizon);
    for w in times.windows(2) {
        prop_assert!(w[1] > w[0], "not increasing: {:?}", w);
        prop_assert!(
            w[1] - w[0] <= delta * (1.0 + 1e-12),
            "step {} > {}",
            w[1] - w[0],
            delta
        );
    }
    Ok(())
}

proptest! {
    #[test]
    fn uniform_grid_has_equal_cells(horizon in 0.1..10.0f64, frac in 1e-3..1.0f64) {
        let delta = horizon * frac;
        let p = make_uniform_grid(horizon, delta).unwrap();
        assert_partition(p.times(), delta, horizon)?;
        prop_assert_eq!(p.n_steps(), uniform_cells(horizon, delta));
        prop_assert!(p.step_sum_sq() <= delta * horizon * (1.0 + 1e-12));
    }

    #[test]
    fn adapted_times_contain_every_jump(
        horizon in 0.1..5.0f64,
        frac in 1e-2..1.0f64,
        mut jumps in prop::collection::vec(0.0..1.0f64, 0..40),
    ) {
        let delta = horizon * frac;
        for t in &mut jumps {
            *t *= horizon;
        }
        jumps.sort_by(f64::total_cmp);
        jumps.dedup();
        let times = adapted_times(jumps.iter().copied(), delta, horizon);
        assert_partition(&times, delta, horizon)?;
        for t in jumps.iter().filter(|&&t| t > 0.0) {
            prop_assert!(times.contains(t), "jump {} missing", t);
        }
        let p = Partition::new(times, PartitionKind::JumpAdapted, delta).unwrap();
        prop_assert!(p.step_sum_sq() <= delta * horizon * (1.0 + 1e-12));
    }

    #[test]
    fn truncation_functionals_are_monotone(
        index in 0.2..1.8f64,
        s1 in 1e-3..1.0f64,
        s2 in 1e-3..1.0f64,
    ) {
        let alpha = (index + 0.1).min(2.0);
        let m = LevyMeasure::truncated_stable(1, index, 1.0, 1.0, alpha, 2.0 * alpha).unwrap();
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        let p = (alpha + 0.2).min(3.0);
        prop_assert!(m.tail_mass(lo).unwrap() >= m.tail_mass(hi).unwrap());
        prop_assert!(m.small_moment(lo, p).unwrap() <= m.small_moment(hi, p).unwrap());
        prop_assert!(m.small_moment(lo, p).unwrap() >= 0.0);
    }
}
