use algcalc_core::field::{Dims, FieldArray, Point, Tensor};
use algcalc_core::fixtures::{self, Geometry, RandomGeometry};
use algcalc_core::lagrange::{
    build_gl_space, finsler_checks, hessian_metric, levi_civita_normal, recover_torsions, regularity_check,
    torsion_deform, FinslerTolerances, FundamentalFunction, TorsionConvention, TorsionPair,
};
use algcalc_core::metric::{canonical_dconnection, metrizability_residual};
use algcalc_core::sampling::{generate, SampleSpec};
use algcalc_core::{lang, linalg, Error};

fn values(t: &Tensor, at: &Point) -> Vec<f64> {
    t.eval(at, 0).unwrap().values()
}

fn lagrangian(src: &str, m: usize, r: usize) -> FundamentalFunction {
    FundamentalFunction::lagrange(lang::field(src, Dims::new(m, r)).unwrap())
}

fn fiber_samples(m: usize, r: usize, n: usize, seed: u64) -> algcalc_core::sampling::SampleSet {
    generate(&SampleSpec::cube(m, r, -1.0, 1.0, n, seed).with_fiber_floor(1e-2)).unwrap()
}

/// Levi-Civita coefficients from the Koszul formula, with every directional
/// derivative `delta_c f` taken by central differences along the anchor and
/// connection, and brackets from the structure functions.
fn koszul_oracle(geo: &Geometry, at: &Point) -> Vec<f64> {
    let frame = &geo.frame;
    let (m, r) = (frame.dims().m, frame.r());
    let g = geo.metric.gv();
    let rho = values(frame.algebroid().anchor(), at);
    let gam = values(frame.connection().gamma(), at);
    let l = values(frame.algebroid().structure(), at);
    let h = 1e-5;
    // dg[c][i][j] = delta_c g_ij
    let mut dg = vec![0.0; r * r * r];
    for c in 0..r {
        let mut a = at.clone();
        let mut b = at.clone();
        for i in 0..m {
            a.x[i] += h * rho[c * m + i];
            b.x[i] -= h * rho[c * m + i];
        }
        for e in 0..r {
            a.y[e] -= h * gam[e * r + c];
            b.y[e] += h * gam[e * r + c];
        }
        let (ga, gb) = (values(g, &a), values(g, &b));
        for k in 0..r * r {
            dg[c * r * r + k] = (ga[k] - gb[k]) / (2.0 * h);
        }
    }
    let g0 = values(g, at);
    let gi = linalg::inverse(&g0, r).unwrap();
    let gg = |i: usize, j: usize| g0[i * r + j];
    // [e_a, e_b] = L^t_{ab} e_t
    let br = |a: usize, b: usize, z: usize| (0..r).map(|t| l[(t * r + a) * r + b] * gg(t, z)).sum::<f64>();
    let mut out = vec![0.0; r * r * r];
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                // X = e_c, Y = e_b, Z = e_d
                let mut s = 0.0;
                for d in 0..r {
                    let k = dg[c * r * r + b * r + d] + dg[b * r * r + c * r + d] - dg[d * r * r + c * r + b]
                        + br(c, b, d)
                        - br(c, d, b)
                        - br(b, d, c);
                    s += gi[a * r + d] * k;
                }
                out[(a * r + b) * r + c] = 0.5 * s;
            }
        }
    }
    out
}

#[test]
fn hessian_examples() {
    let at = Point::new(vec![0.1], vec![0.7, -0.3]);
    let g = hessian_metric(&lagrangian("y1^2 + y2^2", 1, 2));
    assert_eq!(values(&g, &at), vec![1.0, 0.0, 0.0, 1.0]);
    let g = hessian_metric(&lagrangian("y1^4", 1, 1));
    let at1 = Point::new(vec![0.1], vec![0.7]);
    assert!((values(&g, &at1)[0] - 6.0 * 0.49).abs() < 1e-14);
    let g = hessian_metric(&fixtures::euclidean_norm(1, 2).unwrap());
    for (u, v) in values(&g, &at).iter().zip([1.0, 0.0, 0.0, 1.0]) {
        assert!((u - v).abs() < 1e-14);
    }
    let zero = Point::new(vec![0.1], vec![0.0, 0.0]);
    assert!(matches!(g.eval(&zero, 0), Err(Error::NonSmoothPoint(_))));
}

#[test]
fn regularity() {
    let s = fiber_samples(1, 2, 20, 4);
    assert!(regularity_check(&hessian_metric(&lagrangian("y1^2 + y2^2", 1, 2)), &s).unwrap().pass());
    let s1 = fiber_samples(1, 1, 20, 4);
    let bad = regularity_check(&hessian_metric(&lagrangian("y1", 1, 1)), &s1).unwrap();
    assert!(!bad.pass());
    assert_eq!(bad.get("rank_deficit").unwrap().value, 1.0);
    let randers = hessian_metric(&fixtures::randers(2, 2, 0.3).unwrap());
    assert!(regularity_check(&randers, &fiber_samples(2, 2, 50, 8)).unwrap().pass());
}

#[test]
fn finsler_norms() {
    let lambdas = [0.5, 2.0, 3.7];
    let s = fiber_samples(2, 2, 50, 1);
    let tol = FinslerTolerances::default();
    let rep = finsler_checks(&fixtures::euclidean_norm(2, 2).unwrap(), &s, &lambdas, tol).unwrap();
    assert!(rep.pass(), "{rep:?}");
    let rep = finsler_checks(&fixtures::randers(2, 2, 0.3).unwrap(), &s, &lambdas, tol).unwrap();
    assert!(rep.pass(), "{rep:?}");
    let sq = FundamentalFunction::finsler(lang::field("y1^2", Dims::new(2, 2)).unwrap());
    let probe = generate(&SampleSpec::new(vec![(0.0, 0.0); 2], vec![(1.0, 1.0), (0.0, 0.0)], 1, 0)).unwrap();
    let rep = finsler_checks(&sq, &probe, &[2.0], tol).unwrap();
    assert_eq!(rep.get("homogeneity").unwrap().value, 2.0);
    assert!(!rep.pass());
    assert!(matches!(
        finsler_checks(&sq, &probe, &[-1.0], tol),
        Err(Error::Invalid(_))
    ));
}

#[test]
fn levi_civita_classical_and_so3() {
    let geo = fixtures::poincare().unwrap();
    let lc = levi_civita_normal(&geo.frame, geo.metric.gv()).unwrap();
    let at = Point::new(vec![0.4, 1.0], vec![0.1, 0.2]);
    let h = values(lc.h(), &at);
    assert!((h[1] + 1.0).abs() < 1e-12);
    assert!((h[4] - 1.0).abs() < 1e-12);
    assert!((h[7] + 1.0).abs() < 1e-12);

    let geo = fixtures::so3().unwrap();
    let lc = levi_civita_normal(&geo.frame, geo.metric.gv()).unwrap();
    let at = Point::new(vec![0.0; 3], vec![0.5, 0.1, 0.2]);
    let h = values(lc.h(), &at);
    assert!((h[5] + 0.5).abs() < 1e-10, "H^1_23 = {}", h[5]);
    for (u, v) in h.iter().zip(koszul_oracle(&geo, &at)) {
        assert!((u - v).abs() < 1e-10);
    }

    let geo = fixtures::flat(2, 2).unwrap();
    let lc = levi_civita_normal(&geo.frame, geo.metric.gv()).unwrap();
    assert!(values(lc.h(), &at_2()).iter().all(|v| *v == 0.0));
}

fn at_2() -> Point {
    Point::new(vec![0.3, -0.2], vec![0.5, 0.5])
}

#[test]
fn levi_civita_matches_koszul_on_random_frames() {
    for seed in [1, 2, 3] {
        let mut rg = RandomGeometry::with_dims(seed, 2, 2);
        let s = rg.samples(5, seed).unwrap();
        let geo = rg.geometry(&s.points).unwrap();
        let lc = levi_civita_normal(&geo.frame, geo.metric.gv()).unwrap();
        for at in &s.points {
            for (u, v) in values(lc.h(), at).iter().zip(koszul_oracle(&geo, at)) {
                assert!((u - v).abs() < 1e-7 * (1.0 + v.abs()), "{u} vs {v}");
            }
        }
    }
}

#[test]
fn levi_civita_is_torsion_free_under_consistent_reading() {
    let mut geos = vec![
        (fixtures::so3().unwrap(), fiber_samples(3, 3, 10, 1)),
        (fixtures::poincare().unwrap(), fixtures::poincare_samples(10, 1).unwrap()),
    ];
    let mut rg = RandomGeometry::with_dims(4, 3, 3);
    let s = rg.samples(10, 4).unwrap();
    geos.push((rg.geometry(&s.points).unwrap(), s));
    for (geo, s) in &geos {
        let lc = levi_civita_normal(&geo.frame, geo.metric.gv()).unwrap();
        let ts = recover_torsions(&lc, TorsionConvention::Consistent).unwrap();
        for at in &s.points {
            for v in values(&ts.t, at).into_iter().chain(values(&ts.s, at)) {
                assert!(v.abs() < 1e-8, "{v}");
            }
        }
    }
    // the other sign leaves -2L behind on so(3)
    let (geo, s) = &geos[0];
    let lc = levi_civita_normal(&geo.frame, geo.metric.gv()).unwrap();
    let ts = recover_torsions(&lc, TorsionConvention::Printed).unwrap();
    let t = values(&ts.t, &s.points[0]);
    assert!((t[5] + 2.0).abs() < 1e-12, "T^1_23 = {}", t[5]);
}

#[test]
fn conventions_agree_without_structure_functions() {
    let geo = fixtures::poincare().unwrap();
    let lc = levi_civita_normal(&geo.frame, geo.metric.gv()).unwrap();
    let a = recover_torsions(&lc, TorsionConvention::Consistent).unwrap();
    let b = recover_torsions(&lc, TorsionConvention::Printed).unwrap();
    for at in &fixtures::poincare_samples(5, 2).unwrap().points {
        assert_eq!(values(&a.t, at), values(&b.t, at));
    }
}

#[test]
fn torsion_round_trip_and_metricity() {
    for seed in [10, 11, 12] {
        let mut rg = RandomGeometry::with_dims(seed, 2 + (seed as usize % 2), 2 + (seed as usize % 2));
        let s = rg.samples(10, seed).unwrap();
        let geo = rg.geometry(&s.points).unwrap();
        let g = geo.metric.gv().clone();
        let ts = rg.torsions().unwrap();
        let lc = levi_civita_normal(&geo.frame, &g).unwrap();
        let d = torsion_deform(&lc, &g, &ts, &s.points).unwrap();
        let back = recover_torsions(&d, TorsionConvention::Consistent).unwrap();
        for at in &s.points {
            for (u, v) in values(&back.t, at).iter().zip(values(&ts.t, at)) {
                assert!((u - v).abs() < 1e-10);
            }
            for (u, v) in values(&back.s, at).iter().zip(values(&ts.s, at)) {
                assert!((u - v).abs() < 1e-10);
            }
        }
        let gs = build_gl_space(&geo.frame, &g, &s.points).unwrap();
        let m = metrizability_residual(&d.to_dconnection(), &gs, &s).unwrap();
        assert!(m.metrizable(1e-8), "{:?}", m.residuals);
    }
}

#[test]
fn torsion_deform_matches_naive_loop() {
    let geo = fixtures::flat(2, 2).unwrap();
    let dims = Dims::new(2, 2);
    let mut t = vec![0.0; 8];
    t[1] = 0.7; // T^1_12
    t[2] = -0.7;
    t[5] = -0.3; // T^2_12
    t[6] = 0.3;
    let mk = |v: &[f64]| {
        FieldArray::new(dims, vec![2, 2, 2], v.iter().map(|x| algcalc_core::field::constant(dims, *x)).collect())
            .unwrap()
            .into_tensor()
    };
    let ts = TorsionPair::new(mk(&t), mk(&[0.0; 8])).unwrap();
    let g = geo.metric.gv().clone();
    let zero = FieldArray::zeros(dims, vec![2, 2, 2]).into_tensor();
    let base = algcalc_core::dtensor::NormalDConnection::new(geo.frame.clone(), zero.clone(), zero).unwrap();
    let at = at_2();
    let d = torsion_deform(&base, &g, &ts, std::slice::from_ref(&at)).unwrap();
    let h = values(d.h(), &at);
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let naive = 0.5 * (t[(a * 2 + b) * 2 + c] - t[(b * 2 + a) * 2 + c] + t[(c * 2 + b) * 2 + a]);
                assert!((h[(a * 2 + b) * 2 + c] - naive).abs() < 1e-15);
            }
        }
    }
    let sym = TorsionPair::new(mk(&[1.0; 8]), mk(&[0.0; 8])).unwrap();
    assert!(matches!(
        torsion_deform(&base, &g, &sym, std::slice::from_ref(&at)),
        Err(Error::AntisymmetryViolation(_))
    ));
}

#[test]
fn gl_space_from_finsler_norm() {
    let geo = fixtures::flat(2, 2).unwrap();
    let s = fiber_samples(2, 2, 10, 3);
    let g = hessian_metric(&fixtures::euclidean_norm(2, 2).unwrap());
    let gs = build_gl_space(&geo.frame, &g, &s.points).unwrap();
    for (u, v) in values(gs.gh(), &s.points[0]).iter().zip([1.0, 0.0, 0.0, 1.0]) {
        assert!((u - v).abs() < 1e-14);
    }
    let randers = hessian_metric(&fixtures::randers(2, 2, 0.3).unwrap());
    let mut rg = RandomGeometry::with_dims(2, 2, 2);
    let frame = rg.geometry(&s.points).unwrap().frame;
    let gs = build_gl_space(&frame, &randers, &s.points).unwrap();
    let c = canonical_dconnection(&gs, &algcalc_core::metric::berwald_base(&frame)).unwrap();
    let m = metrizability_residual(&c, &gs, &s).unwrap();
    assert!(m.metrizable(1e-8), "{:?}", m.residuals);
    let degenerate = hessian_metric(&lagrangian("y1 + y2", 2, 2));
    assert!(matches!(
        build_gl_space(&geo.frame, &degenerate, &s.points),
        Err(Error::SingularMetric(_))
    ));
}
