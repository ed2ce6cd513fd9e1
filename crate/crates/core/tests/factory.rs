use mshift::factory::{self, Convention, ScalarPhiSpec};
use mshift::lattice::{MultiIndex, TruncationBox};
use mshift::linalg::{self, c64, CMatrix};
use mshift::shift;
use mshift::weights::WeightFamily;

#[test]
fn identity_spec_gives_identity_family() {
    let spec = ScalarPhiSpec::new(2, 3, |_, _| c64(1.0, 0.0), |_| linalg::identity(3));
    let fam = factory::generate(&spec, TruncationBox::new(2, 3).unwrap(), 1e-12).unwrap();
    for j in 0..2 {
        for w in fam.weights_on_axis(j) {
            assert_eq!(*w, linalg::identity(3));
        }
    }
}

#[test]
fn example33_is_commuting() {
    let fam = factory::example33(2, 6).unwrap();
    let rep = fam.check_commuting(1e-12);
    assert!(rep.commuting, "{}", rep.worst_residual);
    assert!(fam.check_invertible(1e-12).unwrap().invertible);
}

#[test]
fn example33_first_weight_is_the_printed_matrix() {
    let fam = factory::example33(2, 3).unwrap();
    let s = 3f64.sqrt();
    let printed = CMatrix::from_row_slice(
        2,
        2,
        &[c64(s + 1.0, 0.0), c64(1.0 - s, 0.0), c64(1.0 - s, 0.0), c64(s + 1.0, 0.0)],
    ) / c64(2.0 * s, 0.0);
    assert!(linalg::max_abs(&(fam.weight(0, &MultiIndex::zero(2)) - printed)) < 1e-15);
}

#[test]
fn example33_matches_remark34_as_printed() {
    let ex = factory::example33(2, 5).unwrap();
    let (_, rm) = factory::remark34_family(2, 5, Convention::AsPrinted).unwrap();
    for j in 0..2 {
        for (a, b) in ex.weights_on_axis(j).iter().zip(rm.weights_on_axis(j)) {
            assert!(linalg::max_abs(&(a - b)) < 1e-12);
        }
    }
}

#[test]
fn example33_survives_serialization() {
    let fam = factory::example33(2, 4).unwrap();
    assert_eq!(WeightFamily::from_json(&fam.to_json()).unwrap(), fam);
}

#[test]
fn generated_families_commute() {
    let spec = ScalarPhiSpec::new(
        2,
        2,
        |j, a| c64(((a.get(j) + 1) as f64).sqrt(), 0.0),
        |n| CMatrix::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(n as f64, 0.0), c64(0.0, 0.0), c64(2.0, 0.0)]),
    );
    let fam = factory::generate(&spec, TruncationBox::new(2, 6).unwrap(), 1e-12).unwrap();
    assert!(fam.check_commuting(1e-12).commuting);
}

#[test]
fn incompatible_scalars_are_a_spec_error() {
    let spec = ScalarPhiSpec::new(2, 1, |j, a| c64(1.0 + (j * a.get(0)) as f64, 0.0), |_| linalg::identity(1));
    assert!(factory::generate(&spec, TruncationBox::new(2, 3).unwrap(), 1e-12).is_err());
}

#[test]
fn example33_contraction_classes() {
    for d in 1..=3 {
        let c = factory::classify(&factory::example33_spec(d), 6).unwrap();
        assert!(c.row_contraction.holds, "d={d}");
        assert_eq!(c.joint_contraction.holds, d == 1, "d={d}");
        assert!(c.joint_contraction.paths_agree && c.row_contraction.paths_agree && c.joint_expansion.paths_agree);
    }
    let c = factory::classify(&factory::example33_spec(2), 6).unwrap();
    let e1 = MultiIndex::unit(2, 0);
    let (_, v) = c.joint_contraction.violations.iter().find(|(a, _)| *a == e1).unwrap();
    assert!((v - 3.0 / (2.0 * 2f64.sqrt())).abs() < 1e-10);
}

#[test]
fn classical_family_classes() {
    let spec = ScalarPhiSpec::new(1, 1, |_, _| c64(1.0, 0.0), |_| linalg::identity(1));
    let c = factory::classify(&spec, 4).unwrap();
    assert!(c.joint_contraction.holds && c.row_contraction.holds && c.joint_expansion.holds);
}

#[test]
fn diag_powers_moments() {
    let fam = factory::diag_powers(2, 4, 2.0, 0.5).unwrap();
    for a in fam.points() {
        let k = a.degree() as i32;
        let b = shift::moment_b_alpha(&fam, &a);
        let expected = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c64(2f64.powi(k), 0.0), c64(0.5f64.powi(k), 0.0)]));
        assert!(linalg::max_abs(&(b - expected)) < 1e-12);
    }
    let fam = factory::diag_powers(2, 4, 0.5, 1.0 / 3.0).unwrap();
    for a in fam.points() {
        let k = a.degree() as i32;
        let g = shift::gram_g(&fam, &a);
        assert!((g[(0, 0)].re - 0.25f64.powi(k)).abs() < 1e-14);
        assert!((g[(1, 1)].re - (1.0f64 / 9.0).powi(k)).abs() < 1e-14);
    }
}

#[test]
fn unit_diagonal_is_the_identity() {
    let fam = factory::diag_powers(3, 2, 1.0, 1.0).unwrap();
    assert!(fam.weights_on_axis(2).iter().all(|w| *w == linalg::identity(2)));
}

#[test]
fn remark34_b_sequence() {
    let (bs, _) = factory::remark34_family(2, 4, Convention::Model).unwrap();
    assert_eq!(bs[0], linalg::identity(2));
    for p in &bs {
        for q in &bs {
            assert!(linalg::op_norm(&(p * q - q * p)) < 1e-12);
        }
    }
    for a in TruncationBox::new(3, 4).unwrap().enumerate() {
        assert!(linalg::max_abs(&(factory::remark34_b(&a) - factory::remark34_b_closed(&a))) < 1e-12);
    }
}

#[test]
fn remark34_conventions() {
    let (_, printed) = factory::remark34_family(2, 3, Convention::AsPrinted).unwrap();
    let (bs, model) = factory::remark34_family(2, 3, Convention::Model).unwrap();
    let z = MultiIndex::zero(2);
    assert!(linalg::max_abs(&(printed.weight(0, &z) - factory::example33_a0())) < 1e-12);
    // Under the model convention B_alpha is the moment operator itself.
    for (r, a) in model.points().iter().enumerate() {
        assert!(linalg::max_abs(&(shift::moment_b_alpha(&model, a) - &bs[r])) < 1e-10);
    }
    assert!(model.check_commuting(1e-12).commuting);
}
