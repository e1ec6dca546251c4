use proptest::prelude::*;
use skewlab::covers::{lift_map, rescaled_lift, rescaled_rotation, CoverIndex};
use skewlab::maps::{FiberedMap, Primitive};
use skewlab::rotation::make_rational_vector;
use skewlab::torus::{torus_dist_raw, wrap};

fn primitive() -> impl Strategy<Value = FiberedMap> {
    prop_oneof![
        (0.25f64..4.0).prop_map(|lambda| Primitive::Stretch { lambda }),
        (1u64..6, 0.05f64..0.95).prop_map(|(q, f)| Primitive::Shear { q, delta: f * 0.25 / q as f64 }),
        (-0.9f64..0.9, -3i64..4).prop_map(|(amplitude, x_freq)| Primitive::SineFiber { amplitude, x_freq }),
    ]
    .prop_map(FiberedMap::Primitive)
}

fn composite() -> impl Strategy<Value = FiberedMap> {
    prop::collection::vec(primitive(), 1..5).prop_map(|maps| FiberedMap::Compose { maps })
}

fn rational() -> impl Strategy<Value = (i64, i64, i64)> {
    (2i64..12).prop_flat_map(|q| (0..q, 0..q, Just(q))).prop_filter("coprime", |&(p, pp, q)| make_rational_vector(p, pp, q).is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inverse_round_trip(h in composite(), x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let p = h.compile();
        let back = p.inverse().eval(p.eval([x, y]));
        prop_assert!(torus_dist_raw(back, [x, y]) < 1e-9, "{:?}", back);
    }

    #[test]
    fn fibered_maps_fix_the_base(h in composite(), x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let z = h.compile().eval([x, y]);
        prop_assert!(torus_dist_raw([z[0], 0.0], [x, 0.0]) < 1e-12);
    }

    #[test]
    fn rational_conjugates_are_periodic(h in composite(), r in rational(), x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let (p, pp, q) = r;
        let phi = FiberedMap::conjugate(h, make_rational_vector(p, pp, q).unwrap());
        let z = phi.iterate(q).compile().eval([x, y]);
        prop_assert!(torus_dist_raw(z, [x, y]) < 1e-8, "{:?}", z);
    }

    #[test]
    fn lifts_project_to_the_base_map(
        h in composite(), r in rational(), l in 1u32..4, m in 1u32..4,
        s1 in 0u32..4, s2 in 0u32..4, x in 0.0f64..4.0, y in 0.0f64..4.0,
    ) {
        let (p, pp, q) = r;
        let psi = FiberedMap::conjugate(h, make_rational_vector(p, pp, q).unwrap());
        let cover = CoverIndex::new(l, m, [s1 % l, s2 % m]).unwrap();
        let lift = lift_map(&psi, cover).unwrap();
        let (xl, yl) = (x % l as f64, y % m as f64);
        let up = lift.eval([xl, yl]);
        prop_assert!((0.0..l as f64).contains(&up[0]) && (0.0..m as f64).contains(&up[1]));
        let down = psi.compile().eval([wrap(xl), wrap(yl)]);
        prop_assert!(torus_dist_raw([wrap(up[0]), wrap(up[1])], down) < 1e-9);
        let o = lift.at_origin();
        prop_assert!(o[0] >= cover.s[0] as f64 && o[0] < cover.s[0] as f64 + 1.0);
        prop_assert!(o[1] >= cover.s[1] as f64 && o[1] < cover.s[1] as f64 + 1.0);
    }

    #[test]
    fn rescaled_lifts_of_rotations_are_rotations(
        r in rational(), l in 1u32..5, m in 1u32..5, s1 in 0u32..5, s2 in 0u32..5, x in 0.0f64..1.0, y in 0.0f64..1.0,
    ) {
        let (p, pp, q) = r;
        let rho = make_rational_vector(p, pp, q).unwrap();
        let cover = CoverIndex::new(l, m, [s1 % l, s2 % m]).unwrap();
        let rr = rescaled_rotation(&rho, cover).unwrap().to_f64();
        let z = rescaled_lift(&FiberedMap::rotation(rho), cover).unwrap().compile().eval([x, y]);
        prop_assert!(torus_dist_raw(z, [wrap(x + rr[0]), wrap(y + rr[1])]) < 1e-12);
    }
}
