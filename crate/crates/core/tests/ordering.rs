mod common;

use std::collections::BTreeMap;

use common::{grid_of, random_tasks};
use privknap::block::BlockId;
use privknap::rdp::RdpCurve;
use privknap::sched::{area_efficiency, sort_by_efficiency, Policy};
use privknap::task::Task;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn dpk_reduces_to_area_ordering_on_one_order() {
    let grid = grid_of(1);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..500 {
        let n = rng.random_range(1..=30);
        let m = rng.random_range(1..=8);
        let mut tasks = random_tasks(&mut rng, &grid, n, m, true);
        for t in &mut tasks {
            t.arrival = rng.random_range(0..3);
        }
        let remaining: BTreeMap<BlockId, RdpCurve> = (0..m)
            .map(|j| {
                (
                    BlockId(j as u64),
                    RdpCurve::new(grid.clone(), vec![rng.random_range(0.5..3.0)]).unwrap(),
                )
            })
            .collect();
        let refs: Vec<&Task> = tasks.iter().collect();
        let area: Vec<_> = refs.iter().map(|t| area_efficiency(t, &remaining).unwrap()).collect();
        let expected: Vec<_> = sort_by_efficiency(&refs, &area).iter().map(|t| t.id).collect();
        let got: Vec<_> = Policy::dpk()
            .order(&refs, &remaining)
            .unwrap()
            .iter()
            .map(|t| t.id)
            .collect();
        assert_eq!(got, expected);
    }
}
