use nalgebra::{DMatrix, DVector};
use relaxbench::builder::{carleman, decouple, demo, from_reaction_diffusion, DecouplingTransform, RawSystem};
use relaxbench::validator::{
    check_conserved_block, check_dissipativity, check_rank_condition, check_symmetrizer, unit_directions, SampleSet,
    StateBox,
};
use relaxbench::{Coefficient, ReactionDiffusion, SpatialGrid, Symmetrizer};

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[test]
fn builder_outputs_satisfy_the_structural_hypotheses() {
    for (name, dim) in [
        ("carleman", 1),
        ("heat1d", 1),
        ("heat2d", 2),
        ("aniso2d", 2),
        ("quasilinear-bu2", 1),
        ("sqrt-heat", 1),
        ("logistic1d", 1),
    ] {
        let grid = SpatialGrid::unit(dim, 16).unwrap();
        let d = demo(name, &grid).unwrap();
        let set = SampleSet::for_grid(&grid, d.state_box.clone()).unwrap();
        let sys = &d.system;
        assert!(check_conserved_block(sys, &set).passed, "{name}");
        assert!(check_rank_condition(sys, &set).passed, "{name}");
        assert!(check_dissipativity(sys, &set).passed, "{name}");
        let r = Symmetrizer::identity(sys.k(), sys.m());
        assert!(check_symmetrizer(sys, &r, &set).unwrap().passed, "{name}");
    }
}

#[test]
fn limit_generators_reproduce_target_symbols() {
    for (name, dim) in [
        ("heat1d", 1),
        ("heat2d", 2),
        ("aniso2d", 2),
        ("quasilinear-bu2", 1),
        ("sqrt-heat", 1),
    ] {
        let grid = SpatialGrid::unit(dim, 16).unwrap();
        let d = demo(name, &grid).unwrap();
        let target = d.target.as_ref().unwrap();
        let set = SampleSet::new(grid.subsample(8), unit_directions(dim, 8), d.state_box.clone()).unwrap();
        for x in set.points() {
            for xi in set.directions() {
                for u in set.states() {
                    let xi3: Vec<f64> = xi.iter().map(|v| 3.0 * v).collect();
                    let g = d.system.limit_generator(x, u, &xi3).unwrap();
                    let s = target.symbol(x, u, &xi3);
                    assert!(rel_err(&g, &s) <= 1e-12, "{name} at {x:?} {xi:?}");
                }
            }
        }
    }
}

#[test]
fn transform_round_trips_block_coefficients() {
    let (raw, p, sys) = carleman();
    let a = raw.a[0].eval(&[0.0]);
    let built = sys.axis_matrix(&[0.0], 0).unwrap();
    let back = p.inverse() * &built * p.matrix();
    assert!((back - a).norm() < 1e-14);
    let w = DVector::from_vec(vec![0.3, 1.7]);
    let z = p.to_decoupled(&w);
    let (u, v) = (z.rows(0, 1).clone_owned(), z.rows(1, 1).clone_owned());
    assert!((p.to_raw(&u, &v) - w).norm() < 1e-14);
}

#[test]
fn general_transform_round_trips() {
    let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.5, 1.0, 0.2, 0.0, 0.5, 0.0, -0.3]);
    let c = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, -2.0, 0.1, 0.0, 0.1, -1.0]);
    let raw = RawSystem::linear(vec![Coefficient::Constant(a.clone())], c).unwrap();
    let p = DecouplingTransform::identity(3, 1).unwrap();
    let sys = decouple(&raw, &p, &[vec![0.0], vec![0.5]]).unwrap();
    let built = sys.axis_matrix(&[0.25], 0).unwrap();
    assert!((p.inverse() * built * p.matrix() - a).norm() < 1e-14);
}

#[test]
fn off_diagonal_weights_are_rejected_when_indefinite() {
    let w = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
    let target = ReactionDiffusion::scalar(&w).unwrap();
    assert!(from_reaction_diffusion(&target, &[vec![0.0, 0.0]]).is_err());
}

#[test]
fn quasilinear_builder_needs_invertible_diffusion() {
    use relaxbench::builder::from_quasilinear;
    use relaxbench::QuasilinearDivergence;
    use std::sync::Arc;
    let target = QuasilinearDivergence::new(1, 1, Arc::new(|u| DMatrix::from_element(1, 1, u[0])));
    let b = StateBox::symmetric(1, 1.0).unwrap();
    assert!(from_quasilinear(&target, &b).is_err());
}
