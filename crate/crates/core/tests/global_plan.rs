mod common;

use hanav::costmap::CostmapStack;
use hanav::global_plan::{plan_global, plan_global_with, GlobalPlannerParams};
use hanav::world::{CellIndex, Pose2D};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn free_cell(rng: &mut ChaCha8Rng, stack: &CostmapStack) -> Option<CellIndex> {
    let g = stack.grid();
    (0..200).find_map(|_| {
        let c = CellIndex::new(rng.gen_range(0..g.width()), rng.gen_range(0..g.height()));
        (stack.cost(c) < 255).then_some(c)
    })
}

fn check_against_dijkstra(stack: &CostmapStack, rng: &mut ChaCha8Rng) -> Result<(), TestCaseError> {
    let (Some(s), Some(g)) = (free_cell(rng, stack), free_cell(rng, stack)) else {
        return Ok(());
    };
    let grid = stack.grid();
    let start = Pose2D::from_point(grid.grid_to_world(s), 0.0);
    let goal = Pose2D::from_point(grid.grid_to_world(g), 0.0);
    let reference = common::dijkstra_units(stack, s, g, GlobalPlannerParams::default().cost_scale);
    match (plan_global(stack, start, goal), reference) {
        (Ok(path), Some(units)) => {
            let expected = units as f64 / 1e6 * grid.resolution();
            prop_assert_eq!(path.total_cost, expected);
            for w in path.waypoints.windows(2) {
                let a = grid.pose_to_grid(&w[0]).unwrap();
                let b = grid.pose_to_grid(&w[1]).unwrap();
                prop_assert!(a.col.abs_diff(b.col) <= 1 && a.row.abs_diff(b.row) <= 1);
                prop_assert!(stack.cost(b) < 255);
            }
        }
        (Err(_), None) => {}
        (got, want) => prop_assert!(false, "planner {:?} vs reference {:?}", got.map(|p| p.total_cost), want),
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn astar_cost_equals_dijkstra_on_occupancy(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = CostmapStack::from_grid(common::random_grid(&mut rng, 15, 15, 0.2));
        check_against_dijkstra(&stack, &mut rng)?;
    }

    #[test]
    fn astar_cost_equals_dijkstra_on_graded_costs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = CostmapStack::from_grid(common::random_grid(&mut rng, 15, 15, 0.1)).inflate(0.15, 6.0);
        check_against_dijkstra(&stack, &mut rng)?;
    }
}

#[test]
fn higher_cost_scale_never_shortens_detours() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let stack = CostmapStack::from_grid(common::random_grid(&mut rng, 30, 30, 0.05)).inflate(0.2, 4.0);
    let g = stack.grid();
    let start = Pose2D::from_point(g.grid_to_world(CellIndex::new(1, 1)), 0.0);
    let goal = Pose2D::from_point(g.grid_to_world(CellIndex::new(28, 28)), 0.0);
    if stack.cost(CellIndex::new(1, 1)) == 255 || stack.cost(CellIndex::new(28, 28)) == 255 {
        return;
    }
    let flat = GlobalPlannerParams {
        cost_scale: 0.0,
        ..Default::default()
    };
    let a = plan_global_with(&stack, start, goal, &flat).unwrap();
    let b = plan_global(&stack, start, goal).unwrap();
    assert!(b.length() >= a.length() - 1e-9);
}
