use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use relaxbench::builder::{decouple, demo, from_reaction_diffusion, DecouplingTransform, RawSystem};
use relaxbench::diagnostics::{energy, limit_residual};
use relaxbench::hypersolver::well_prepared;
use relaxbench::validator::{
    check_petrowski, recheck, unit_directions, validate_all, ParabolicSource, ParabolicityMode, SampleSet, StateBox,
};
use relaxbench::{
    Coefficient, FieldState, ParabolicTarget, ReactionDiffusion, RelaxationSystem, SpatialGrid, StiffSource,
};

fn spd2() -> impl Strategy<Value = DMatrix<f64>> {
    (0.2f64..3.0, 0.2f64..3.0, -1.0f64..1.0).prop_map(|(a, c, r)| {
        let b = r * (a * c).sqrt() * 0.9;
        DMatrix::from_row_slice(2, 2, &[a, b, b, c])
    })
}

fn scalar(v: f64) -> Coefficient {
    Coefficient::Constant(DMatrix::from_element(1, 1, v))
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn principal_symbol_is_linear_in_xi(
        name in prop::sample::select(vec!["heat2d", "aniso2d"]),
        x in prop::array::uniform2(0.0f64..1.0),
        xi in prop::array::uniform2(-5.0f64..5.0),
        a in -4.0f64..4.0,
    ) {
        let grid = SpatialGrid::unit(2, 8).unwrap();
        let sys = demo(name, &grid).unwrap().system;
        let scaled: Vec<f64> = xi.iter().map(|v| a * v).collect();
        let lhs = sys.principal_symbol(&x, &scaled).unwrap();
        let rhs = sys.principal_symbol(&x, &xi).unwrap() * nalgebra::Complex::new(a, 0.0);
        let scale = rhs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        for (p, q) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((p - q).norm() <= 1e-14 * scale);
        }
    }

    #[test]
    fn stiff_jacobian_matches_central_differences(
        name in prop::sample::select(vec!["carleman", "quasilinear-bu2", "logistic1d"]),
        s in 0.0f64..1.0,
        z in -1.0f64..1.0,
    ) {
        let grid = SpatialGrid::unit(1, 8).unwrap();
        let d = demo(name, &grid).unwrap();
        let u = DVector::from_element(1, d.state_box.lower[0] + s * (d.state_box.upper[0] - d.state_box.lower[0]));
        let zv = DVector::from_element(1, z);
        let h = 1e-5;
        let plus = d.system.stiff_source(&[0.3], &u, &DVector::from_element(1, z + h));
        let minus = d.system.stiff_source(&[0.3], &u, &DVector::from_element(1, z - h));
        let fd = (plus - minus) / (2.0 * h);
        let jac = d.system.stiff_jacobian(&[0.3], &u, &zv).unwrap();
        prop_assert!((jac[(0, 0)] - fd[0]).abs() <= 1e-6 * jac[(0, 0)].abs().max(1.0));
    }

    #[test]
    fn energy_is_translation_invariant(
        values in prop::collection::vec(-3.0f64..3.0, 64),
        shift in 0usize..32,
        eps in 0.01f64..1.0,
    ) {
        let grid = SpatialGrid::unit(1, 32).unwrap();
        let (a, b) = values.split_at(32);
        let state = FieldState::new(vec![a.to_vec()], vec![b.to_vec()], 0.0, eps, &grid).unwrap();
        let rot = |v: &[f64]| { let mut w = v.to_vec(); w.rotate_left(shift); w };
        let moved = FieldState::new(vec![rot(a)], vec![rot(b)], 0.0, eps, &grid).unwrap();
        let (e0, e1) = (energy(&state, &grid), energy(&moved, &grid));
        prop_assert!((e0 - e1).abs() <= 1e-12 * e0.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn generator_reproduces_random_anisotropic_targets(
        w in spd2(),
        x in prop::array::uniform2(0.0f64..1.0),
        xi in prop::array::uniform2(-6.0f64..6.0),
    ) {
        let target = ReactionDiffusion::scalar(&w).unwrap();
        let sys = from_reaction_diffusion(&target, &[x.to_vec()]).unwrap();
        let u = DVector::zeros(1);
        let g = sys.limit_generator(&x, &u, &xi).unwrap();
        let s = ParabolicTarget::ReactionDiffusion(target).symbol(&x, &u, &xi);
        prop_assume!(s.norm() > 1e-8);
        prop_assert!(rel(&g, &s) <= 1e-12);
    }

    #[test]
    fn limit_alpha_dominates_target_c(w in spd2()) {
        let target = ReactionDiffusion::scalar(&w).unwrap();
        let sys = from_reaction_diffusion(&target, &[vec![0.0, 0.0]]).unwrap();
        let target = ParabolicTarget::ReactionDiffusion(target);
        let set = SampleSet::new(vec![vec![0.0, 0.0], vec![0.5, 0.25]], unit_directions(2, 64), StateBox::symmetric(1, 1.0).unwrap()).unwrap();
        let strong = check_petrowski(ParabolicSource::Target(&target), &set, ParabolicityMode::Strong);
        prop_assume!(strong.passed);
        let alpha = check_petrowski(ParabolicSource::Limit(&sys), &set, ParabolicityMode::Petrowski);
        prop_assert!(alpha.passed);
        prop_assert!(alpha.margin >= strong.margin - 1e-9);
    }

    #[test]
    fn decoupling_round_trips_coefficients(
        p in prop::array::uniform4(-2.0f64..2.0),
        a in prop::array::uniform3(-2.0f64..2.0),
        c in -3.0f64..-0.1,
    ) {
        let pm = DMatrix::from_row_slice(2, 2, &p);
        prop_assume!(pm.determinant().abs() > 0.1);
        let transform = DecouplingTransform::new(pm.clone(), 1).unwrap();
        let pinv = transform.inverse().clone();
        // conserved in the decoupled frame by construction
        let raw_c = &pinv * DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, c]) * &pm;
        let raw_a = DMatrix::from_row_slice(2, 2, &[a[0], a[1], a[1], a[2]]);
        let raw = RawSystem::linear(vec![Coefficient::Constant(raw_a.clone())], raw_c).unwrap();
        let sys = decouple(&raw, &transform, &[vec![0.0]]).unwrap();
        let built = sys.axis_matrix(&[0.0], 0).unwrap();
        prop_assert!((&pinv * built * &pm - &raw_a).norm() <= 1e-12 * raw_a.norm().max(1.0));
    }

    #[test]
    fn failing_witnesses_are_self_certifying(
        m12 in -2.0f64..2.0,
        m21 in -2.0f64..2.0,
        m22 in -1.0f64..1.0,
        q in -2.0f64..2.0,
    ) {
        let sys = RelaxationSystem::differential(
            "random", 1, 1, vec![scalar(m12)], vec![scalar(m21)], vec![scalar(m22)],
            StiffSource::linear(scalar(q)),
        ).unwrap();
        let state_box = StateBox::symmetric(1, 1.0).unwrap();
        let set = SampleSet::new(vec![vec![0.0], vec![0.5]], unit_directions(1, 0), state_box.clone()).unwrap();
        let Ok(report) = validate_all(&sys, None, None, &set) else { return Ok(()); };
        for entry in report.entries.iter().filter(|e| !e.passed) {
            let w = entry.witness.as_ref().unwrap();
            let slack = recheck(entry.kind, &sys, None, None, &state_box, w);
            prop_assert!(!entry.kind.passes(slack));
        }
        let again = validate_all(&sys, None, None, &set).unwrap();
        prop_assert_eq!(report.to_csv(), again.to_csv());
    }

    #[test]
    fn well_prepared_states_have_zero_limit_residual(
        amps in prop::collection::vec(-1.0f64..1.0, 3),
        eps in 0.01f64..0.5,
        name in prop::sample::select(vec!["heat1d", "quasilinear-bu2", "sqrt-heat"]),
    ) {
        let grid = SpatialGrid::unit(1, 64).unwrap();
        let d = demo(name, &grid).unwrap();
        let u = grid.sample(|x| {
            let t = 2.0 * std::f64::consts::PI * x[0];
            0.3 * (amps[0] * t.sin() + amps[1] * (2.0 * t).cos() + amps[2] * (3.0 * t).sin())
        });
        let state = well_prepared(&d.system, &grid, vec![u], eps).unwrap();
        let r = limit_residual(&state, &d.system, &grid).unwrap();
        prop_assert!(r <= 1e-12, "residual {}", r);
    }
}
