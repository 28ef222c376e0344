use approx::assert_relative_eq;
use gscr_core::network::{
    build_susceptance, extended_jacobian, operation_jacobian, Branch, DeviceSpec, GridSpec, OperatingPoint, System,
    Weighting,
};
use gscr_core::reference;
use gscr_core::smallsignal::DeviceModel;
use gscr_core::strength::{gscr, ogscr, participation, scr_single, sensitivities, weighted_eigensystem, IndexKind};
use gscr_core::studies::{random_system, RandomSystemOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model() -> DeviceModel {
    DeviceModel::reference(0.037, 1.0)
}

const PUBLISHED_SPECTRUM: [f64; 5] = [6.0944, 24.9627, 46.6669, 56.6602, 94.3062];

#[test]
fn published_spectrum_with_fitted_grounding() {
    let sys = reference::five_vsc(&model(), reference::B50_FITTED).unwrap();
    let j = operation_jacobian(&sys.b, &sys.devices, &sys.rated_op(), Weighting::AbsolutePower).unwrap();
    let e = weighted_eigensystem(&j).unwrap();
    for (got, want) in e.eigenvalues.iter().zip(PUBLISHED_SPECTRUM) {
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }
}

#[test]
fn printed_grounding_does_not_reproduce_spectrum() {
    let sys = reference::five_vsc(&model(), reference::B50_PRINTED).unwrap();
    for w in [Weighting::AbsolutePower, Weighting::PerUnitPower] {
        let j = operation_jacobian(&sys.b, &sys.devices, &sys.rated_op(), w).unwrap();
        let e = weighted_eigensystem(&j).unwrap();
        assert!((e.eigenvalues[0] - PUBLISHED_SPECTRUM[0]).abs() > 0.1);
    }
}

#[test]
fn published_participation() {
    let sys = reference::five_vsc(&model(), reference::B50_FITTED).unwrap();
    let j = operation_jacobian(&sys.b, &sys.devices, &sys.rated_op(), Weighting::AbsolutePower).unwrap();
    let p = participation(&weighted_eigensystem(&j).unwrap(), 1).unwrap();
    let want = [0.6948, 0.8730, 0.4810, 1.0, 0.3029];
    for (got, w) in p.normalized.iter().zip(want) {
        assert!((got - w).abs() < 5e-3, "{got} vs {w}");
    }
    assert_relative_eq!(p.raw.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
}

#[test]
fn eigen_decomposition_reconstructs() {
    let sys = reference::five_vsc(&model(), reference::B50_FITTED).unwrap();
    let j = operation_jacobian(&sys.b, &sys.devices, &sys.rated_op(), Weighting::AbsolutePower).unwrap();
    let e = weighted_eigensystem(&j).unwrap();
    let (a, r) = (j.matrix(), e.reconstruct());
    for i in 0..5 {
        for k in 0..5 {
            assert!((a[(i, k)] - r[(i, k)]).abs() < 1e-10 * a[(i, i)].abs());
        }
        for k in 0..5 {
            let vu: f64 = e.left(i).iter().zip(e.right(k)).map(|(x, y)| x * y).sum();
            assert!((vu - if i == k { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
    assert!(e.right(0).iter().all(|x| *x > 0.0));
}

#[test]
fn single_infeed_identities() {
    let g = GridSpec::new(&["1"], vec![Branch::reactance("1", "0", 0.4)]);
    let d = vec![DeviceSpec::new("1", 1.3, 0.8, model())];
    let b = build_susceptance(&g, &d).unwrap();
    let e = weighted_eigensystem(&extended_jacobian(&b, &d).unwrap()).unwrap();
    assert_eq!(gscr(&e), scr_single(1.3, 0.4).unwrap());
}

#[test]
fn ogscr_equals_gscr_at_unit_loading() {
    let mut sys = reference::five_vsc(&model(), reference::B50_FITTED).unwrap();
    for d in &mut sys.devices {
        d.p_b = 1.0;
    }
    let op = OperatingPoint::rated(&sys.devices);
    let g = weighted_eigensystem(&extended_jacobian(&sys.b, &sys.devices).unwrap()).unwrap();
    let o = weighted_eigensystem(&operation_jacobian(&sys.b, &sys.devices, &op, Weighting::AbsolutePower).unwrap())
        .unwrap();
    assert_relative_eq!(gscr(&g), ogscr(&o), max_relative = 1e-14);
}

/// Central differences of λ1 with respect to every capacity, power and branch.
fn check_against_finite_differences(sys: &System, kind: IndexKind, tol: f64) {
    let weighting = match kind {
        IndexKind::Ogscr(w) => Some(w),
        IndexKind::Gscr => None,
    };
    let lam = |s: &System| -> f64 {
        let j = match weighting {
            Some(w) => operation_jacobian(&s.b, &s.devices, &s.rated_op(), w).unwrap(),
            None => extended_jacobian(&s.b, &s.devices).unwrap(),
        };
        weighted_eigensystem(&j).unwrap().eigenvalues[0]
    };
    let base = lam(sys);
    let j = match weighting {
        Some(w) => operation_jacobian(&sys.b, &sys.devices, &sys.rated_op(), w).unwrap(),
        None => extended_jacobian(&sys.b, &sys.devices).unwrap(),
    };
    let e = weighted_eigensystem(&j).unwrap();
    let rep = sensitivities(&e, &sys.grid, &sys.devices, kind).unwrap();
    let h = 1e-5;
    let rebuild = |grid: GridSpec, devices: Vec<DeviceSpec>| System::new(grid, devices).unwrap();
    let close = |fd: f64, an: f64| (fd - an).abs() <= tol * an.abs().max(1e-3 * base);
    for i in 0..sys.n() {
        let mut fd = [0.0; 2];
        for (k, field) in [0usize, 1].into_iter().enumerate() {
            let v = if field == 0 { sys.devices[i].s_b } else { sys.devices[i].p_b };
            let dv = h * v;
            let mut up = sys.devices.clone();
            let mut dn = sys.devices.clone();
            if field == 0 {
                up[i].s_b += dv;
                dn[i].s_b -= dv;
            } else {
                up[i].p_b += dv;
                dn[i].p_b -= dv;
            }
            fd[k] = (lam(&rebuild(sys.grid.clone(), up)) - lam(&rebuild(sys.grid.clone(), dn))) / (2.0 * dv);
        }
        assert!(close(fd[0], rep.capacity[i]), "capacity {i}: fd {} analytic {}", fd[0], rep.capacity[i]);
        assert!(close(fd[1], rep.power[i]), "power {i}: fd {} analytic {}", fd[1], rep.power[i]);
    }
    for (k, br) in sys.grid.branches.iter().enumerate() {
        let b = br.b();
        let db = h * b;
        let with = |v: f64| {
            let mut g = sys.grid.clone();
            g.branches[k] = Branch::susceptance(&br.from, &br.to, v);
            lam(&rebuild(g, sys.devices.clone()))
        };
        let fd = (with(b + db) - with(b - db)) / (2.0 * db);
        assert!(close(fd, rep.branches[k].d_db), "branch {k}: fd {fd} analytic {}", rep.branches[k].d_db);
    }
}

fn sign_constraints(sys: &System) {
    let j = operation_jacobian(&sys.b, &sys.devices, &sys.rated_op(), Weighting::AbsolutePower).unwrap();
    let e = weighted_eigensystem(&j).unwrap();
    let rep = sensitivities(&e, &sys.grid, &sys.devices, IndexKind::Ogscr(Weighting::AbsolutePower)).unwrap();
    assert!(rep.capacity.iter().all(|x| *x < 0.0));
    assert!(rep.power.iter().all(|x| *x < 0.0));
    assert!(rep.branches.iter().all(|b| b.d_db >= 0.0));
}

#[test]
fn sensitivities_on_reference_system() {
    let sys = reference::five_vsc(&model(), reference::B50_FITTED).unwrap();
    for kind in [IndexKind::Gscr, IndexKind::Ogscr(Weighting::AbsolutePower), IndexKind::Ogscr(Weighting::PerUnitPower)]
    {
        check_against_finite_differences(&sys, kind, 1e-5);
    }
    sign_constraints(&sys);
}

#[test]
fn sensitivities_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = RandomSystemOptions { passive: 2, ..Default::default() };
    for _ in 0..40 {
        let sys = random_system(&mut rng, &model(), &opts).unwrap();
        check_against_finite_differences(&sys, IndexKind::Ogscr(Weighting::AbsolutePower), 1e-5);
        sign_constraints(&sys);
    }
}
