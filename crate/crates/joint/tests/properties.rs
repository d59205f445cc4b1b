use promptsim_core::instance_gen::{generate_synthetic, SyntheticConfig};
use promptsim_joint::{solve_joint, validate_trajectory, JointMipSpec, PolicyClass};
use promptsim_mip::Backend;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Optimal trajectories replay cleanly, report their own objective, and
    /// the three policy classes are nested.
    #[test]
    fn optimal_trajectories_replay_and_nest(
        seed in any::<u64>(),
        num_content in 1usize..=2,
        num_providers in 1usize..=2,
        num_users in 1usize..=3,
        horizon in 1usize..=2,
    ) {
        let inst = generate_synthetic(&SyntheticConfig::new(num_content, num_providers, num_users, seed)).unwrap();
        let backend = Backend::Oracle { max_binaries: 24 };
        let mut values = Vec::new();
        for class in PolicyClass::ALL {
            let sol = solve_joint(&JointMipSpec::new(inst.clone(), horizon, class), &backend).unwrap();
            let report = validate_trajectory(&sol.trajectory, &inst);
            prop_assert!(report.is_empty(), "{class}: {report:?}");
            prop_assert!((sol.trajectory.time_averaged_welfare() - sol.solution.objective).abs() < 1e-6);
            values.push(sol.solution.objective);
        }
        prop_assert!(values[0] >= values[1] - 1e-6 && values[1] >= values[2] - 1e-6, "{values:?}");
    }
}
