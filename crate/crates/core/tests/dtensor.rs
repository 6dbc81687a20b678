use algcalc_core::algebroid::{GeneralizedAlgebroid, Section};
use algcalc_core::dtensor::{transform_round_trip, DConnection, DTensorField, IndexSignature, Slot};
use algcalc_core::field::{self, Dims, Field, Point, Tensor, Var};
use algcalc_core::fixtures::{self, RandomGeometry};
use algcalc_core::lang;
use algcalc_core::nlconn::{AdaptedFrame, FrameChange, NonlinearConnection};
use algcalc_core::sampling::{generate, SampleSet, SampleSpec};
use proptest::prelude::*;

fn samples(d: Dims, n: usize, seed: u64) -> SampleSet {
    generate(&SampleSpec::cube(d.m, d.r, -1.0, 1.0, n, seed)).unwrap()
}

fn values(t: &Tensor, at: &Point) -> Vec<f64> {
    t.eval(at, 0).unwrap().values()
}

fn max_gap(a: &DTensorField, b: &DTensorField, pts: &[Point]) -> f64 {
    assert_eq!(a.signature(), b.signature());
    pts.iter()
        .flat_map(|p| {
            let (u, v) = (a.values(p).unwrap(), b.values(p).unwrap());
            u.into_iter().zip(v).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

fn random_tensor(rg: &mut RandomGeometry, slots: Vec<Slot>) -> DTensorField {
    let sig = IndexSignature::new(slots).unwrap();
    let t = rg.poly_tensor(sig.shape(rg.p, rg.dims.r)).unwrap();
    DTensorField::new(sig, rg.p, rg.dims.r, t).unwrap()
}

fn setup(seed: u64) -> (RandomGeometry, DConnection, SampleSet) {
    let mut rg = RandomGeometry::new(seed);
    let s = samples(rg.dims, 8, seed);
    let geo = rg.geometry(&s.points).unwrap();
    let d = rg.dconnection(&geo.frame).unwrap();
    (rg, d, s)
}

fn kronecker(d: Dims, n: usize, family_v: bool, p: usize) -> DTensorField {
    let slots = if family_v {
        vec![Slot::V_UP, Slot::V_DOWN]
    } else {
        vec![Slot::H_UP, Slot::H_DOWN]
    };
    let r = d.r;
    DTensorField::new(IndexSignature::new(slots).unwrap(), p, r, fixtures::identity(d, n).unwrap()).unwrap()
}

#[test]
fn kronecker_tensors_are_parallel() {
    for seed in 0..4 {
        let (rg, d, s) = setup(seed);
        for (v, n) in [(false, rg.p), (true, rg.dims.r)] {
            let k = kronecker(rg.dims, n, v, rg.p);
            for t in [d.h_cov_deriv(&k).unwrap(), d.v_cov_deriv(&k).unwrap()] {
                for p in &s.points {
                    assert!(t.values(p).unwrap().iter().all(|x| x.abs() < 1e-15));
                }
            }
        }
    }
}

#[test]
fn fiber_position_under_berwald() {
    let d = Dims::new(1, 1);
    let alg = GeneralizedAlgebroid::standard(d);
    let c = NonlinearConnection::new(d, 1, fixtures::tensor(d, vec![1, 1], &["y1".to_string()]).unwrap()).unwrap();
    let fr = AdaptedFrame::new(alg, c).unwrap();
    let b = DConnection::berwald(&fr).unwrap();
    let w = DTensorField::new(
        IndexSignature::new(vec![Slot::V_UP]).unwrap(),
        1,
        1,
        fixtures::tensor(d, vec![1], &["y1".to_string()]).unwrap(),
    )
    .unwrap();
    let h = b.h_cov_deriv(&w).unwrap();
    let v = b.v_cov_deriv(&w).unwrap();
    for y in [-0.7, 0.2, 1.5] {
        let at = Point::new(vec![0.3], vec![y]);
        assert_eq!(h.values(&at).unwrap(), [0.0]);
        assert_eq!(v.values(&at).unwrap(), [1.0]);
    }
}

#[test]
fn scalar_derivatives_are_frame_actions() {
    let (mut rg, d, s) = setup(5);
    let f = lang::field(&rg.poly(), rg.dims).unwrap();
    let t = DTensorField::scalar(&f, rg.p, rg.dims.r);
    let h = d.h_cov_deriv(&t).unwrap();
    let v = d.v_cov_deriv(&t).unwrap();
    for p in &s.points {
        let hv = h.values(p).unwrap();
        for g in 0..rg.p {
            let dg = d.frame().delta_action(g, &f).unwrap();
            assert!((hv[g] - field::eval(dg.as_ref(), p).unwrap()).abs() < 1e-14);
        }
        let vv = v.values(p).unwrap();
        for c in 0..rg.dims.r {
            let dc = field::partial(&f, Var::Y(c));
            assert!((vv[c] - field::eval(dc.as_ref(), p).unwrap()).abs() < 1e-14);
        }
    }
}

/// Hand-coded classical rule for `T^alpha_b` over the standard algebroid:
/// `T^alpha_{b|g} = d_g T - Gamma^e_g d_e T + H^alpha_{eg} T^e_b - H^e_{bg}
/// T^alpha_e` with plain partial derivatives.
#[test]
fn classical_mixed_tensor_derivative() {
    let d = Dims::new(2, 2);
    let mut rg = RandomGeometry::with_dims(17, 2, 2);
    let gamma = rg.poly_tensor(vec![2, 2]).unwrap();
    let frame = AdaptedFrame::new(GeneralizedAlgebroid::standard(d), NonlinearConnection::new(d, 2, gamma.clone()).unwrap()).unwrap();
    let conn = rg.dconnection(&frame).unwrap();
    let t = random_tensor(&mut rg, vec![Slot::H_UP, Slot::V_DOWN]);
    let got = conn.h_cov_deriv(&t).unwrap();
    let got_v = conn.v_cov_deriv(&t).unwrap();
    let comps: Vec<Field> = field::components(t.tensor());
    let s = samples(d, 10, 3);
    for p in &s.points {
        let (hh, hv, vh, vv) = (values(conn.hh(), p), values(conn.hv(), p), values(conn.vh(), p), values(conn.vv(), p));
        let gm = values(&gamma, p);
        let tv = t.values(p).unwrap();
        let dt = |k: usize, v: Var| field::eval(field::partial(&comps[k], v).as_ref(), p).unwrap();
        let (gv, gvv) = (got.values(p).unwrap(), got_v.values(p).unwrap());
        for al in 0..2 {
            for b in 0..2 {
                let k = al * 2 + b;
                for g in 0..2 {
                    let mut e = dt(k, Var::X(g));
                    for a in 0..2 {
                        e -= gm[a * 2 + g] * dt(k, Var::Y(a));
                    }
                    for x in 0..2 {
                        e += hh[(al * 2 + x) * 2 + g] * tv[x * 2 + b];
                        e -= hv[(x * 2 + b) * 2 + g] * tv[al * 2 + x];
                    }
                    assert!((gv[k * 2 + g] - e).abs() < 1e-10);
                }
                for c in 0..2 {
                    let mut e = dt(k, Var::Y(c));
                    for x in 0..2 {
                        e += vh[(al * 2 + x) * 2 + c] * tv[x * 2 + b];
                        e -= vv[(x * 2 + b) * 2 + c] * tv[al * 2 + x];
                    }
                    assert!((gvv[k * 2 + c] - e).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn along_picks_basis_directions() {
    let (mut rg, d, s) = setup(9);
    let t = random_tensor(&mut rg, vec![Slot::V_UP, Slot::H_DOWN]);
    let (dm, p) = (rg.dims, rg.p);
    let zero = d.cov_deriv_along(&Section::zero(dm, p), &t).unwrap();
    for pt in &s.points {
        assert!(zero.values(pt).unwrap().iter().all(|v| *v == 0.0));
    }
    for g in 0..p {
        let a = d.cov_deriv_along(&Section::basis_h(dm, p, g), &t).unwrap();
        assert!(max_gap(&a, &d.h_cov_deriv_at(&t, g).unwrap(), &s.points) == 0.0);
    }
    for c in 0..dm.r {
        let a = d.cov_deriv_along(&Section::basis_v(dm, p, c), &t).unwrap();
        assert!(max_gap(&a, &d.v_cov_deriv_at(&t, c).unwrap(), &s.points) == 0.0);
    }
}

#[test]
fn contraction_of_kronecker_is_trace() {
    let d = Dims::new(2, 3);
    let k = kronecker(d, 3, true, 2);
    let tr = k.contract(0, 1).unwrap();
    assert!(tr.signature().is_empty());
    assert_eq!(tr.values(&Point::new(vec![0.0; 2], vec![0.0; 3])).unwrap(), [3.0]);
    assert!(k.contract(1, 0).is_err());
    let h = kronecker(d, 2, false, 2);
    assert!(h.tensor_product(&k).unwrap().contract(0, 3).is_err());
}

#[test]
fn contraction_commutes_with_derivative() {
    let (mut rg, d, s) = setup(13);
    let t = random_tensor(&mut rg, vec![Slot::H_UP, Slot::V_UP, Slot::H_DOWN]);
    let lhs = d.h_cov_deriv(&t.contract(0, 2).unwrap()).unwrap();
    let rhs = d.h_cov_deriv(&t).unwrap().contract(0, 2).unwrap();
    assert!(max_gap(&lhs, &rhs, &s.points) < 1e-12);
    let lhs = d.v_cov_deriv(&t.contract(0, 2).unwrap()).unwrap();
    let rhs = d.v_cov_deriv(&t).unwrap().contract(0, 2).unwrap();
    assert!(max_gap(&lhs, &rhs, &s.points) < 1e-12);
}

#[test]
fn constant_matrices_transform_vertical_block() {
    let d = Dims::new(2, 2);
    let t = |shape: Vec<usize>, v: &[&str]| fixtures::tensor(d, shape, &v.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap();
    let x = t(vec![2], &["x1", "x2"]);
    let fc = FrameChange::new(
        d,
        2,
        t(vec![2, 2], &["2", "1", "0", "1"]),
        t(vec![2, 2], &["0.5", "-0.5", "0", "1"]),
        t(vec![2, 2], &["1", "0", "3", "2"]),
        t(vec![2, 2], &["1", "0", "-1.5", "0.5"]),
        x.clone(),
        x,
    )
    .unwrap();
    let mut rg = RandomGeometry::with_dims(4, 2, 2);
    let frame = AdaptedFrame::new(GeneralizedAlgebroid::standard(d), NonlinearConnection::zero(d, 2)).unwrap();
    let conn = rg.dconnection(&frame).unwrap();
    let primed = conn.transform(&fc).unwrap();
    let mm = [1.0, 0.0, 3.0, 2.0];
    let mi = [1.0, 0.0, -1.5, 0.5];
    for at in &samples(d, 10, 8).points {
        // the primed point (x, y') with y = M^{-1} y'
        let y: Vec<f64> = (0..2).map(|a| mi[a * 2] * at.y[0] + mi[a * 2 + 1] * at.y[1]).collect();
        let vv = values(conn.vv(), &Point::new(at.x.clone(), y));
        let got = values(primed.vv(), at);
        for ap in 0..2 {
            for bp in 0..2 {
                for cp in 0..2 {
                    let mut e = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            for c in 0..2 {
                                e += mm[ap * 2 + a] * vv[(a * 2 + b) * 2 + c] * mi[b * 2 + bp] * mi[c * 2 + cp];
                            }
                        }
                    }
                    assert!((got[(ap * 2 + bp) * 2 + cp] - e).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn dconnection_transform_round_trip() {
    for seed in 0..4 {
        let (mut rg, d, _) = setup(seed);
        let fc = rg.frame_change().unwrap();
        let small = generate(&SampleSpec::cube(rg.dims.m, rg.dims.r, -0.5, 0.5, 10, seed)).unwrap();
        fc.validate(&small).unwrap();
        let back = d.transform(&fc).unwrap().transform(&fc.inverse()).unwrap();
        for p in &small.points {
            let (a, b) = (values(d.joint(), p), values(back.joint(), p));
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-10, "seed {seed}: {u} vs {v}");
            }
        }
        let id = d.transform(&FrameChange::identity(rg.dims, rg.p)).unwrap();
        for p in &small.points {
            assert_eq!(values(d.joint(), p), values(id.joint(), p));
        }
    }
}

#[test]
fn round_trip_report_passes() {
    for seed in 0..3 {
        let (mut rg, d, _) = setup(seed);
        let fc = rg.frame_change().unwrap();
        let small = generate(&SampleSpec::cube(rg.dims.m, rg.dims.r, -0.5, 0.5, 10, seed)).unwrap();
        let rep = transform_round_trip(&fc, &d, &small, 1e-10).unwrap();
        let names: Vec<&str> = rep.residuals.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(
            names,
            ["transition_inverse", "gamma_round_trip", "anchor_round_trip", "structure_round_trip", "dconnection_round_trip", "identity_exact"]
        );
        assert!(rep.pass(), "seed {seed}: {:?}", rep.residuals);
    }
}

fn slots() -> impl Strategy<Value = Vec<Slot>> {
    prop::collection::vec(prop::sample::select(vec![Slot::H_UP, Slot::H_DOWN, Slot::V_UP, Slot::V_DOWN]), 0..3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leibniz_over_tensor_products(seed in 0u64..1000, a in slots(), b in slots()) {
        let (mut rg, d, s) = setup(seed);
        let (na, nb) = (a.len(), b.len());
        let sa = random_tensor(&mut rg, a);
        let tb = random_tensor(&mut rg, b);
        let st = sa.tensor_product(&tb).unwrap();
        // S_{|g} (x) T has the derivative slot in the middle
        let mut perm: Vec<usize> = (0..na).collect();
        perm.extend(na + 1..na + nb + 1);
        perm.push(na);
        for deriv in [DConnection::h_cov_deriv, DConnection::v_cov_deriv] {
            let lhs = deriv(&d, &st).unwrap();
            let first = deriv(&d, &sa).unwrap().tensor_product(&tb).unwrap().permute(&perm).unwrap();
            let second = sa.tensor_product(&deriv(&d, &tb).unwrap()).unwrap();
            prop_assert!(max_gap(&lhs, &first.add(&second).unwrap(), &s.points) < 1e-9);
        }
    }

    #[test]
    fn derivatives_commute_with_relabelling(seed in 0u64..1000, a in slots(), shuffle in any::<prop::sample::Index>()) {
        let (mut rg, d, s) = setup(seed);
        let mut a = a;
        a.push(Slot::V_DOWN);
        let n = a.len();
        let t = random_tensor(&mut rg, a);
        let k = shuffle.index(n);
        let perm: Vec<usize> = (0..n).map(|i| (i + k) % n).collect();
        let mut ext = perm.clone();
        ext.push(n);
        for deriv in [DConnection::h_cov_deriv, DConnection::v_cov_deriv] {
            let x = deriv(&d, &t.permute(&perm).unwrap()).unwrap();
            let y = deriv(&d, &t).unwrap().permute(&ext).unwrap();
            for p in &s.points {
                let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
                prop_assert_eq!(bits(x.values(p).unwrap()), bits(y.values(p).unwrap()));
            }
        }
    }

    #[test]
    fn along_is_linear(seed in 0u64..1000, ca in -2.0..2.0_f64, cb in -2.0..2.0_f64) {
        let (mut rg, d, s) = setup(seed);
        let (dm, p) = (rg.dims, rg.p);
        let t = random_tensor(&mut rg, vec![Slot::H_UP, Slot::V_DOWN]);
        let sec = |rg: &mut RandomGeometry| {
            let z = (0..p).map(|_| lang::field(&rg.poly(), dm).unwrap()).collect();
            let y = (0..dm.r).map(|_| lang::field(&rg.poly(), dm).unwrap()).collect();
            Section::new(dm, z, y).unwrap()
        };
        let (x, y) = (sec(&mut rg), sec(&mut rg));
        let (fa, fb) = (field::constant(dm, ca), field::constant(dm, cb));
        let comb = x.scale_by(&fa).add(&y.scale_by(&fb)).unwrap();
        let lhs = d.cov_deriv_along(&comb, &t).unwrap();
        let sa = DTensorField::scalar(&fa, p, dm.r);
        let sb = DTensorField::scalar(&fb, p, dm.r);
        let rhs = sa
            .tensor_product(&d.cov_deriv_along(&x, &t).unwrap())
            .unwrap()
            .add(&sb.tensor_product(&d.cov_deriv_along(&y, &t).unwrap()).unwrap())
            .unwrap();
        prop_assert!(max_gap(&lhs, &rhs, &s.points) < 1e-12);
    }
}
