//! Bound checks should not drift by more than 20% under one dyadic refinement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sobext::fermi::{Boundary, DomainSpec};
use sobext::geometry::{ModelSurface, Point, WarpProfile};
use sobext::heat::{
    assemble, diagonal_bound_check, doubling_constant, geometric_grid, gn_check, gn_test_fields, kato_quantity,
    sample_nodes, CurvatureField, DiscreteDomain, SpectralOptions,
};

struct Constants {
    diagonal: f64,
    doubling: f64,
    gn: f64,
    kato: f64,
}

fn constants(domain: &DiscreteDomain) -> Constants {
    let system = assemble(domain, &SpectralOptions::default()).unwrap();
    let diam = domain.diameter();
    let points = sample_nodes(domain, 12);
    let t_grid = geometric_grid(1e-3, diam * diam, 16);
    let diagonal = diagonal_bound_check(domain, &system, &t_grid, &points).unwrap().c_obs;
    let doubling = doubling_constant(domain, diam, &points, 16).unwrap().c_d;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fields = gn_test_fields(&system, &mut rng, 4);
    let gn = gn_check(domain, &system, 4.0, &[0.1 * diam, 0.25 * diam, 0.5 * diam], &fields)
        .unwrap()
        .c_gn;
    let rho = CurvatureField::from_domain(domain).unwrap();
    let kato = kato_quantity(&system, &rho.rho_minus, 0.2).unwrap();
    Constants {
        diagonal,
        doubling,
        gn,
        kato,
    }
}

fn assert_stable(name: &str, coarse: &Constants, fine: &Constants) {
    let pairs = [
        ("diagonal", coarse.diagonal, fine.diagonal),
        ("doubling", coarse.doubling, fine.doubling),
        ("gn", coarse.gn, fine.gn),
        ("kato", coarse.kato, fine.kato),
    ];
    for (what, a, b) in pairs {
        assert!(a.is_finite() && b.is_finite(), "{name} {what}: {a} / {b}");
        let scale = a.abs().max(1e-12);
        assert!((a - b).abs() <= 0.2 * scale, "{name} {what}: {a} -> {b}");
    }
}

#[test]
fn interval_constants_are_mesh_stable() {
    let a = constants(&DiscreteDomain::interval(1.0, 100).unwrap());
    let b = constants(&DiscreteDomain::interval(1.0, 200).unwrap());
    assert_stable("interval", &a, &b);
}

#[test]
fn warped_disk_constants_are_mesh_stable() {
    // negatively curved cap: f = r + r³/2 gives Gauss curvature -3/(1 + r²/2)
    let surface = ModelSurface::warped(WarpProfile::polynomial(vec![0.0, 1.0, 0.0, 0.5]), 0.0, 3.0).unwrap();
    let region = DomainSpec::new(
        surface,
        Boundary::GeodesicDisk {
            center: Point::new(0.0, 0.0),
            radius: 0.8,
        },
    )
    .unwrap();
    let a = constants(&DiscreteDomain::disk_like(region.clone(), 16, 32).unwrap());
    let b = constants(&DiscreteDomain::disk_like(region, 32, 64).unwrap());
    assert!(a.kato > 0.0);
    assert_stable("warped disk", &a, &b);
}
