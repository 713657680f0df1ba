use lgcp_core::data::{filter_shots, Encoding, GridSpec, RawShot};
use lgcp_core::geometry::{Point, Region};
use proptest::prelude::*;

fn raw_shot() -> impl Strategy<Value = RawShot> {
    (0u8..5, -30.0f64..30.0, -2.0f64..40.0, any::<bool>(), any::<bool>(), any::<bool>()).prop_map(
        |(g, x, y, made, home, strong)| RawShot { game_id: format!("g{g}"), x, y, made, home, strong },
    )
}

proptest! {
    #[test]
    fn filtering_is_idempotent(raw in proptest::collection::vec(raw_shot(), 0..80)) {
        let region = Region::half_court();
        let once = filter_shots(&raw, region, Encoding::Interaction);
        let twice = filter_shots(&once.to_raw(), region, Encoding::Interaction);
        prop_assert_eq!(&once.games.iter().filter(|g| !g.shots.is_empty()).cloned().collect::<Vec<_>>(), &twice.games);
        let report = once.filter.unwrap();
        prop_assert_eq!(report.kept + report.removed(), raw.len());
        for g in &once.games {
            for s in &g.shots {
                let d = s.location.norm();
                prop_assert!((1.0..=28.0).contains(&d) && region.contains(s.location));
            }
        }
    }

    #[test]
    fn grid_cells_tile_region(nx in 1usize..40, ny in 1usize..40, x in -25.0f64..25.0, y in 0.0f64..35.0) {
        let g = GridSpec::new(Region::half_court(), nx, ny).unwrap();
        let total = g.cell_area() * g.len() as f64;
        prop_assert!((total - Region::half_court().area()).abs() < 1e-9);
        let h = g.locate(Point::new(x, y)).unwrap();
        let c = g.center(h);
        prop_assert!((c.x - x).abs() <= g.dx() / 2.0 + 1e-9 && (c.y - y).abs() <= g.dy() / 2.0 + 1e-9);
    }
}
