use adamb_core::agents::{AdaMbAgent, Agent};
use adamb_core::envs::{Environment, Oil, OilConfig};
use adamb_core::estimators::{aggregate_reward, aggregate_transition};
use adamb_core::geometry::{sup_distance, BallId, DyadicCube, PartitionTree};
use num_traits::One;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One operation on a partition tree: split the active ball containing the
/// point, or record a sample there.
#[derive(Debug, Clone)]
enum Op {
    Split(Vec<f64>),
    Sample(Vec<f64>, f64, Vec<f64>),
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, dim)
}

fn ops(d_s: usize, d_a: usize, len: usize) -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        point(d_s + d_a).prop_map(Op::Split),
        (point(d_s + d_a), 0.0..=1.0f64, point(d_s)).prop_map(|(p, r, y)| Op::Sample(p, r, y)),
        (point(d_s + d_a), 0.0..=1.0f64, point(d_s)).prop_map(|(p, r, y)| Op::Sample(p, r, y)),
    ];
    prop::collection::vec(op, 1..len)
}

/// Raw samples per ball, recorded independently of the tree.
type Log = Vec<Vec<(f64, Vec<f64>)>>;

fn replay(d_s: usize, d_a: usize, ops: &[Op]) -> (PartitionTree, Log) {
    let mut tree = PartitionTree::new(1, d_s, d_a, 1.0, true).unwrap();
    let mut log: Log = vec![Vec::new()];
    for op in ops {
        match op {
            Op::Split(p) => {
                let id = tree.ball_containing(&p[..d_s], &p[d_s..]).unwrap();
                if tree.ball(id).unwrap().level() < 5 {
                    let kids = tree.split_ball(id).unwrap();
                    log.resize(log.len().max(kids.last().unwrap().0 + 1), Vec::new());
                }
            }
            Op::Sample(p, r, y) => {
                let id = tree.ball_containing(&p[..d_s], &p[d_s..]).unwrap();
                tree.record_sample(id, *r, y).unwrap();
                log[id.0].push((*r, y.clone()));
            }
        }
    }
    (tree, log)
}

fn brute_chain(tree: &PartitionTree, id: BallId) -> Vec<BallId> {
    let target = tree.ball(id).unwrap();
    tree.balls()
        .iter()
        .filter(|b| {
            b.state_cell().contains_cube(target.state_cell())
                && b.action_cell().contains_cube(target.action_cell())
        })
        .map(|b| b.id())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn active_balls_tile_the_space(
        (d_s, d_a, seq, queries) in (1usize..=2, 1usize..=2).prop_flat_map(|(s, a)| {
            (Just(s), Just(a), ops(s, a, 40), prop::collection::vec(point(s + a), 1..20))
        })
    ) {
        let (tree, _) = replay(d_s, d_a, &seq);
        prop_assert!(tree.kraft_sum().is_one());
        for q in &queries {
            let (x, a) = q.split_at(d_s);
            let hits: Vec<BallId> =
                tree.active_balls().filter(|b| b.contains(x, a)).map(|b| b.id()).collect();
            prop_assert_eq!(hits.len(), 1);
            prop_assert_eq!(hits[0], tree.ball_containing(x, a).unwrap());

            let mut relevant = tree.relevant_balls(x).unwrap();
            relevant.sort();
            let brute: Vec<BallId> = tree
                .active_balls()
                .filter(|b| b.state_cell().contains(x))
                .map(|b| b.id())
                .collect();
            prop_assert_eq!(relevant, brute);
        }
    }

    #[test]
    fn aggregates_match_the_raw_samples(
        (d_s, d_a, seq) in (1usize..=2, 1usize..=2).prop_flat_map(|(s, a)| {
            (Just(s), Just(a), ops(s, a, 60))
        })
    ) {
        let (tree, log) = replay(d_s, d_a, &seq);
        for ball in tree.balls() {
            let chain = brute_chain(&tree, ball.id());
            let samples: Vec<&(f64, Vec<f64>)> =
                chain.iter().flat_map(|c| log[c.0].iter()).collect();
            let Ok((r_bar, t)) = aggregate_reward(&tree, ball.id()) else {
                prop_assert!(samples.is_empty());
                continue;
            };
            prop_assert_eq!(t as usize, samples.len());
            let mean = samples.iter().map(|s| s.0).sum::<f64>() / samples.len() as f64;
            prop_assert!((r_bar - mean).abs() <= 1e-9);

            // Each sample from a ball at level l' spreads its mass evenly over
            // the level-l cubes inside its level-l' landing cube.
            let level = ball.level();
            let t_bar = aggregate_transition(&tree, ball.id()).unwrap();
            prop_assert!((t_bar.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for (lin, p) in t_bar.iter().enumerate() {
                let fine = DyadicCube::from_linear(level, d_s, lin);
                let mut mass = 0.0;
                for c in &chain {
                    let coarse = tree.ball(*c).unwrap().level();
                    let share = 0.5f64.powi(((level - coarse) as usize * d_s) as i32);
                    for (_, y) in &log[c.0] {
                        let landed = y.iter().zip(fine.index()).all(|(&v, &i)| {
                            let cells = (1u64 << coarse) as f64;
                            let k = ((v * cells).floor() as u64).min((1u64 << coarse) - 1);
                            i >> (level - coarse) == k
                        });
                        if landed {
                            mass += share;
                        }
                    }
                }
                prop_assert!((p - mass / samples.len() as f64).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn adamb_value_estimates_behave(seed in any::<u64>(), center in 0.0..=1.0f64, episodes in 5usize..40) {
        let env = Oil::new(OilConfig::quadratic(1.0, center, 1.0, 3)).unwrap();
        let mut params = adamb_core::estimators::BonusParams::new(3, 100, 1, 1, env.lipschitz());
        params.bonus_scale = 0.05;
        params.phi = 2.0;
        let mut agent = AdaMbAgent::new(params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..episodes {
            let before: Vec<Vec<(DyadicCube, f64)>> = agent
                .trees()
                .iter()
                .map(|t| t.regions().map(|(c, v)| (c.clone(), v)).collect())
                .collect();
            let mut x = env.reset(&mut rng);
            for h in 1..=3 {
                let sel = agent.select_action(h, &x).unwrap();
                let t = env.step(h, &x, &sel.action, &mut rng).unwrap();
                agent.observe(h, &x, &sel, t.reward, &t.next_state).unwrap();
                x = t.next_state;
            }
            agent.end_episode().unwrap();
            for (h, tree) in agent.trees().iter().enumerate() {
                let cap = (3 - h) as f64;
                for (region, v) in tree.regions() {
                    prop_assert!((0.0..=cap).contains(&v));
                    let old = before[h]
                        .iter()
                        .find(|(c, _)| c.contains_cube(region))
                        .unwrap()
                        .1;
                    prop_assert!(v <= old);
                }
                for b in tree.balls() {
                    prop_assert!((0.0..=cap).contains(&b.q_hat()));
                }
            }
        }
        let lv = env.lipschitz().value;
        for _ in 0..50 {
            let x = [rng.random::<f64>()];
            let y = [rng.random::<f64>()];
            for h in 1..=4 {
                let gap = (agent.v_hat(h, &x).unwrap() - agent.v_hat(h, &y).unwrap()).abs();
                prop_assert!(gap <= lv * sup_distance(&x, &y) + 1e-9);
            }
        }
    }
}
