use proptest::prelude::*;

use doss_core::engine::{Execution, McParams};
use doss_core::numerics::QuadratureRule;
use doss_core::paths::supnorm_bound_rhs;
use doss_core::potentials::{PotentialSpec, PotentialTerm, TimeDependentPotential};
use doss_core::propagator::{propagate, PropagatorRequest};
use doss_core::states::{hermite_function, InitialState};
use doss_core::testfunctions::{complement_inner, ray, TestFunction};
use doss_core::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn real_polynomials_commute_with_conjugation(a in -2.0..2.0f64, b in -2.0..2.0f64, re in -2.0..2.0f64, im in -2.0..2.0f64) {
        let coefficients = vec![c(a, 0.0), c(b, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let v = PotentialSpec::new(vec![PotentialTerm::Polynomial { coefficients }]).unwrap();
        let z = c(re, im);
        let lhs = v.eval(z.conj()).unwrap();
        let rhs = v.eval(z).unwrap().conj();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn hermite_functions_have_parity(m in 0u32..=10, x in -5.0..5.0f64, y in -2.0..2.0f64) {
        let z = c(x, y);
        let a = hermite_function(m, z).unwrap()[0];
        let b = hermite_function(m, -z).unwrap()[0];
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((a - sign * b).norm() <= 1e-12 * a.norm().max(1e-300) + 1e-300);
    }

    #[test]
    fn complement_inner_is_symmetric_and_linear(s1 in 0.2..1.5f64, s2 in 0.2..1.5f64, m1 in -1.0..1.0f64, w in -2.0..2.0f64, t in 0.0..1.0f64) {
        let g = TestFunction::gaussian(1.0, m1, s1);
        let h = TestFunction::gaussian(0.7, 0.3, s2);
        let gh = complement_inner(&g, &h, 0.0, t).unwrap().value;
        let hg = complement_inner(&h, &g, 0.0, t).unwrap().value;
        prop_assert!((gh - hg).norm() < 1e-12);
        let gg = complement_inner(&g, &g, 0.0, t).unwrap().value;
        let hh = complement_inner(&h, &h, 0.0, t).unwrap().value;
        let r = ray(&g, &h, c(w, 0.0));
        let rr = complement_inner(&r, &r, 0.0, t).unwrap().value;
        prop_assert!((rr - (gg + 2.0 * w * gh + w * w * hh)).norm() < 1e-10 * rr.norm().max(1.0));
    }

    #[test]
    fn supnorm_bound_shifts_with_constants(scale in 0.1..3.0f64, horizon in 0.1..2.0f64) {
        let quad = QuadratureRule::gauss_legendre(100, 0.0, 1.0).unwrap();
        let low = supnorm_bound_rhs(|u| u, horizon, &quad, None).unwrap().value;
        let high = supnorm_bound_rhs(|u| u + scale, horizon, &quad, None).unwrap().value;
        prop_assert!(high > low);
        prop_assert!((high - low - 2.0 * scale).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn chunking_and_execution_leave_bits_alone(seed in 0u64..1000, chunk in 1usize..300) {
        let base = PotentialSpec::new(vec![PotentialTerm::sextic(1.0)]).unwrap();
        let req = PropagatorRequest::new(
            TimeDependentPotential::time_independent(base),
            InitialState::hermite(1),
            0.0,
            0.3,
            c(0.2, 0.0),
            McParams::new(600, 20, seed).with_chunk_size(chunk),
        );
        let par = propagate(&req).unwrap();
        let seq = propagate(&PropagatorRequest { mc: req.mc.with_execution(Execution::Sequential), ..req.clone() }).unwrap();
        prop_assert_eq!(par, seq);
    }
}
