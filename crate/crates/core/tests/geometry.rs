use proptest::prelude::*;

use viewscore::raster::Raster;
use viewscore::sphere_geom::{
    angular_distance, erp_project_angular, erp_unproject_angular, frustum_solid_angle,
    gnomonic_forward, gnomonic_inverse, longitude_gap, normalize_longitude, solid_angle, ErpFrame,
    Glimpse, Viewpoint, DEFAULT_ASPECT,
};

fn viewpoint() -> impl Strategy<Value = Viewpoint> {
    (-90.0..=90.0f64, -720.0..720.0f64).prop_map(|(t, p)| Viewpoint::new(t, p).unwrap())
}

fn same_direction(a: &Viewpoint, b: &Viewpoint, tol: f64) -> bool {
    let at_pole = a.theta().abs() > 90.0 - 1e-9;
    (a.theta() - b.theta()).abs() <= tol && (at_pole || longitude_gap(a.phi(), b.phi()) <= tol)
}

proptest! {
    #[test]
    fn longitude_is_always_normalized(phi in -1e4..1e4f64) {
        let p = normalize_longitude(phi);
        prop_assert!((0.0..360.0).contains(&p));
    }

    #[test]
    fn erp_angular_round_trip(p in viewpoint(), theta1 in -60.0..60.0f64, phi0 in 0.0..360.0f64) {
        let (x, y) = erp_project_angular(&p, theta1, phi0);
        let q = erp_unproject_angular(x, y, theta1, phi0).unwrap();
        prop_assert!(same_direction(&p, &q, 1e-9), "{p:?} -> {q:?}");
    }

    #[test]
    fn erp_pixel_round_trip(theta in -89.0..89.0f64, phi in 0.0..360.0f64) {
        let frame = ErpFrame::new(Raster::new(64, 32, 1)).unwrap();
        let p = Viewpoint::new(theta, phi).unwrap();
        let (col, row) = frame.project(&p);
        let q = frame.unproject(col, row).unwrap();
        prop_assert!(same_direction(&p, &q, 1e-9), "{p:?} -> {q:?}");
    }

    #[test]
    fn gnomonic_round_trip(center in viewpoint(), bearing in 0.0..360.0f64, dist in 0.0..80.0f64) {
        // walk `dist` degrees from the center along `bearing` in its tangent frame
        let r = dist.to_radians().tan();
        let (s, c) = bearing.to_radians().sin_cos();
        let p = gnomonic_inverse(r * c, r * s, &center);
        prop_assert!((angular_distance(&p, &center) - dist).abs() < 1e-9);
        let (u, v) = gnomonic_forward(&p, &center).unwrap();
        let q = gnomonic_inverse(u, v, &center);
        prop_assert!(same_direction(&p, &q, 1e-9), "{p:?} -> {q:?}");
    }

    #[test]
    fn angular_distance_is_a_symmetric_bounded_metric(a in viewpoint(), b in viewpoint(), c in viewpoint()) {
        let ab = angular_distance(&a, &b);
        prop_assert_eq!(ab, angular_distance(&b, &a));
        prop_assert!((0.0..=180.0).contains(&ab));
        prop_assert!(ab <= angular_distance(&a, &c) + angular_distance(&c, &b) + 1e-9);
    }

    #[test]
    fn projected_area_grows_with_field_of_view(h1 in 20.0..150.0f64, dh in 1.0..20.0f64) {
        let center = Viewpoint::new(10.0, 20.0).unwrap();
        let small = Glimpse::new(center, h1, DEFAULT_ASPECT, 0).unwrap();
        let large = Glimpse::new(center, (h1 + dh).min(170.0), DEFAULT_ASPECT, 0).unwrap();
        let (a, b) = (small.half_extents(0.0), large.half_extents(0.0));
        prop_assert!(frustum_solid_angle(a.0, a.1) < frustum_solid_angle(b.0, b.1));
        // nested footprints see the same samples, so the estimates are ordered too
        let ea = solid_angle(&small, 0.0, 100_000, 3).unwrap().value;
        let eb = solid_angle(&large, 0.0, 100_000, 3).unwrap().value;
        prop_assert!(ea <= eb);
    }
}
