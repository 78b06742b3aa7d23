use jkoflow::energy::{
    ac_pushforward, DiscreteMeasure, GradientStencil, InternalEnergy, JkoProblem, Mode, Objective, Order,
    PotentialSpec, Selection,
};
use jkoflow::laguerre::build_diagram;
use jkoflow::ma::{ma, ma_jacobian};
use jkoflow::raster::Grid;
use jkoflow::validate::random_instance;
use jkoflow::{ConvexDomain, ConvexPolygon, Point2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn square2() -> ConvexDomain {
    ConvexDomain::square(2.0).unwrap()
}

fn instance(seed: u64, n: usize) -> (Vec<Point2>, Vec<f64>) {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), n, 0.02).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn areas_partition_the_domain(seed in any::<u64>(), n in 1usize..60) {
        let (pts, phi) = instance(seed, n);
        let total: f64 = ma(&pts, &phi, &square2()).unwrap().iter().sum();
        prop_assert!((total - 4.0).abs() <= 1e-9 * 4.0);
    }

    #[test]
    fn areas_ignore_constant_shifts(seed in any::<u64>(), n in 1usize..40, c in -3.0f64..3.0) {
        let (pts, phi) = instance(seed, n);
        let shifted: Vec<f64> = phi.iter().map(|v| v + c).collect();
        let a = ma(&pts, &phi, &square2()).unwrap();
        let b = ma(&pts, &shifted, &square2()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn jacobian_symmetric_with_zero_row_sums(seed in any::<u64>(), n in 2usize..40) {
        let (pts, phi) = instance(seed, n);
        let j = ma_jacobian(&pts, &phi, &square2()).unwrap().to_dense();
        for p in 0..n {
            let mut s = 0.0;
            for q in 0..n {
                prop_assert!((j[[p, q]] - j[[q, p]]).abs() <= 1e-9);
                if p != q {
                    prop_assert!(j[[p, q]] >= -1e-12);
                }
                s += j[[p, q]];
            }
            prop_assert!(s.abs() <= 1e-9);
        }
    }

    #[test]
    fn pushforward_keeps_mass(seed in any::<u64>(), n in 1usize..40) {
        let (pts, phi) = instance(seed, n);
        let mu = DiscreteMeasure::uniform(pts).unwrap();
        let ac = ac_pushforward(&mu, &phi, &square2()).unwrap();
        prop_assert!((ac.total_mass() - 1.0).abs() <= 1e-12);
        let grid = Grid::new(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0), 13, 9).unwrap();
        let masses: Vec<f64> = ac.cells.iter().zip(&ac.density).map(|(c, d)| c.area() * d).collect();
        let raster = grid.rasterize(&ac.cells, &masses);
        prop_assert!((raster.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(raster.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn objective_ignores_constant_shifts(seed in any::<u64>(), n in 2usize..25, c in -2.0f64..2.0) {
        let (pts, phi) = instance(seed, n);
        let mu = DiscreteMeasure::uniform(pts).unwrap();
        let pr = JkoProblem::new(mu, square2(), 0.1, InternalEnergy::Entropy, PotentialSpec::crowd(), Mode::Ac, Selection::Steiner).unwrap();
        let shifted: Vec<f64> = phi.iter().map(|v| v + c).collect();
        let a = pr.evaluate(&phi, Order::Gradient).unwrap();
        let b = pr.evaluate(&shifted, Order::Gradient).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-10 * (1.0 + a.value.abs()));
        let g = a.gradient.unwrap();
        prop_assert!(g.iter().sum::<f64>().abs() <= 1e-10);
    }

    #[test]
    fn clipping_splits_area(nx in -1.0f64..1.0, ny in -1.0f64..1.0, off in -1.0f64..1.0) {
        prop_assume!(nx.abs() + ny.abs() > 1e-3);
        let sq = ConvexPolygon::rectangle(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0)).unwrap();
        let h = jkoflow::HalfPlane::new(Point2::new(nx, ny), off).unwrap();
        let cut = sq.clip(&h);
        let rest = sq.clip(&h.reversed());
        prop_assert!(cut.area() <= sq.area() + 1e-12);
        prop_assert!((cut.area() + rest.area() - sq.area()).abs() <= 1e-12);
    }

    #[test]
    fn stencil_exact_for_quadratic_potentials(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, nx in 3usize..9, ny in 3usize..9) {
        let grid = Grid::new(Point2::new(-2.0, -1.0), Point2::new(2.0, 1.0), nx, ny).unwrap();
        let st = GradientStencil::grid(&grid).unwrap();
        let phi: Vec<f64> = grid.centers().iter().map(|p| a * p.x * p.x + b * p.x * p.y + c * p.y * p.y).collect();
        for (p, g) in grid.centers().into_iter().zip(st.apply(&phi)) {
            let exact = Point2::new(2.0 * a * p.x + b * p.y, b * p.x + 2.0 * c * p.y);
            prop_assert!((g - exact).norm() <= 1e-10);
        }
    }

    #[test]
    fn cells_cover_their_sites_voronoi(seed in any::<u64>(), n in 1usize..30) {
        let (pts, _) = instance(seed, n);
        let phi: Vec<f64> = pts.iter().map(|p| 0.5 * p.norm2()).collect();
        let d = build_diagram(&pts, &phi, &square2()).unwrap();
        for (p, c) in pts.iter().zip(&d.cells) {
            prop_assert!(c.polygon.contains(*p, 1e-9));
        }
    }
}
