mod common;

use bimdp::mdp::{brute_force_return, simulate, value_iteration, DEFAULT_MAX_ITERS, DEFAULT_STEP_CAP};
use bimdp::rover::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{load, random_rover_config, rover_oracle};

fn every_state(world: &RoverWorld) -> impl Iterator<Item = RoverState> + '_ {
    let ix = world.indexer();
    (0..ix.rover_state_count()).map(move |i| ix.decode(i).unwrap())
}

#[test]
fn flat_values_match_the_environment_oracle() {
    for seed in 0..24u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = random_rover_config(&mut rng, seed % 2 == 1);
        let world = RoverWorld::new(cfg.clone()).unwrap();
        let mdp = compile(&world).unwrap();
        let s0 = world.start_state();
        let i0 = world.indexer().encode(&s0).unwrap();
        let rep = value_iteration(&mdp, 1e-10, DEFAULT_MAX_ITERS).unwrap();
        let expect = rover_oracle(&world, &s0);
        assert!((rep.value_function.get(i0) - expect).abs() < 1e-6, "seed {seed}: {} vs {expect}", rep.value_function.get(i0));
        let bf = brute_force_return(&mdp, i0, cfg.horizon as usize + 1).unwrap();
        assert!((bf - expect).abs() < 1e-6, "seed {seed}: brute force {bf} vs {expect}");
    }
}

#[test]
fn three_by_three_by_hand() {
    // start (1,1), hibernation at (3,3) worth 10, no obstacles: four moves
    let cfg = GridConfig {
        schema_version: 1,
        width: 3,
        height: 3,
        horizon: 6,
        discount: 0.9,
        simplified: true,
        start: StartState { x: 1, y: 1, t: 0 },
        targets: vec![Target::hibernation(0, Cell::new(3, 3), 10.0)],
        shadows: ShadowSchedule::default(),
        activity_durations: [1.0, 0.0, 0.0],
        end_penalty: -1.0,
    };
    let world = RoverWorld::new(cfg).unwrap();
    let v = rover_oracle(&world, &world.start_state());
    assert!((v - 10.0 * 0.9f64.powi(3)).abs() < 1e-12);
    let mdp = compile(&world).unwrap();
    let rep = value_iteration(&mdp, 1e-12, DEFAULT_MAX_ITERS).unwrap();
    let i0 = world.indexer().encode(&world.start_state()).unwrap();
    assert!((rep.value_function.get(i0) - v).abs() < 1e-9);
}

#[test]
fn state_counts_follow_the_tracking_layout() {
    for name in ["exp1.json", "exp2_small.json"] {
        let cfg = load(name);
        let per_target: usize = cfg
            .targets
            .iter()
            .map(|t| if cfg.simplified || t.is_hibernation { 2 } else { 3 })
            .product();
        let expect = cfg.width as usize * cfg.height as usize * (cfg.horizon as usize + 1) * per_target + 1;
        let (mdp, ix) = enumerate(&cfg).unwrap();
        assert_eq!(mdp.state_count(), expect, "{name}");
        assert_eq!(ix.state_count(), expect);
        for i in (0..ix.rover_state_count()).step_by(97) {
            assert_eq!(ix.encode(&ix.decode(i).unwrap()), Some(i));
        }
    }
}

#[test]
fn oversized_problem_is_a_resource_error() {
    let cfg = load("exp2_large.json");
    assert!(matches!(enumerate(&cfg), Err(bimdp::Error::Resource(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = load("exp1.json");
    cfg.targets[0].cell = Cell::new(11, 1);
    assert!(RoverWorld::new(cfg).is_err());
    let mut cfg = load("exp1.json");
    cfg.activity_durations = [0.5, 0.2, 0.2];
    assert!(RoverWorld::new(cfg).is_err());
    assert!(GridConfig::from_json(r#"{"width": 3}"#).is_err());
}

fn world_strategy() -> impl Strategy<Value = RoverWorld> {
    (any::<u64>(), any::<bool>()).prop_map(|(seed, stochastic)| {
        RoverWorld::new(random_rover_config(&mut ChaCha8Rng::seed_from_u64(seed), stochastic)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn probabilities_close(world in world_strategy()) {
        for s in every_state(&world).filter(|s| !world.is_terminal(s)) {
            for &a in world.actions() {
                let total: f64 = world.step(&s, a).iter().map(|o| o.probability).sum();
                prop_assert!((total - 1.0).abs() < 1e-9, "{s:?} {a:?}: {total}");
            }
        }
    }

    #[test]
    fn flags_only_grow_and_time_advances(world in world_strategy()) {
        for s in every_state(&world).filter(|s| !world.is_terminal(s)) {
            for &a in world.actions() {
                for o in world.step(&s, a) {
                    if let Successor::State(n) = o.next {
                        prop_assert_eq!(n.measured & s.measured, s.measured);
                        prop_assert_eq!(n.drilled & s.drilled, s.drilled);
                        prop_assert_eq!(n.visited & s.visited, s.visited);
                        prop_assert_eq!(n.drilled & !n.measured, 0);
                        prop_assert!(n.t > s.t);
                    }
                }
            }
        }
    }

    #[test]
    fn reward_parts_add_up_and_targets_pay_once(world in world_strategy()) {
        let cfg = world.config();
        for s in every_state(&world).filter(|s| !world.is_terminal(s)) {
            for &a in world.actions() {
                for o in world.step(&s, a) {
                    prop_assert!((o.reward.total - o.reward.targets - o.reward.obstacles).abs() < 1e-12);
                    let Successor::State(n) = o.next else {
                        prop_assert_eq!(o.reward.targets, 0.0);
                        continue;
                    };
                    // the target part is exactly the payout of flags that flipped
                    let mut paid = 0.0;
                    for (i, t) in cfg.targets.iter().enumerate() {
                        let bit = 1u32 << i;
                        if cfg.simplified {
                            if n.visited & bit != 0 && s.visited & bit == 0 {
                                paid += t.payout();
                            }
                        } else {
                            if n.measured & bit != 0 && s.measured & bit == 0 {
                                paid += t.measure_reward;
                            }
                            if n.drilled & bit != 0 && s.drilled & bit == 0 {
                                paid += t.drill_reward;
                            }
                        }
                    }
                    prop_assert!((o.reward.targets - paid).abs() < 1e-9, "{s:?} {a:?} -> {n:?}");
                }
            }
        }
    }
}

fn parse_attr(line: &str, name: &str) -> u32 {
    let key = format!(" {name}=\"");
    let start = line.find(&key).unwrap() + key.len();
    line[start..].split('"').next().unwrap().parse().unwrap()
}

#[test]
fn svg_path_reads_back_as_the_trace() {
    let cfg = load("exp1.json");
    let world = RoverWorld::new(cfg.clone()).unwrap();
    let mdp = compile(&world).unwrap();
    let rep = value_iteration(&mdp, 1e-6, DEFAULT_MAX_ITERS).unwrap();
    let i0 = world.indexer().encode(&world.start_state()).unwrap();
    let trace = simulate(&mdp, &rep.policy, i0, 0, DEFAULT_STEP_CAP).unwrap();
    let svg = render(&world, &trace, RenderFormat::Svg, None).unwrap();
    assert_eq!(svg, render(&world, &trace, RenderFormat::Svg, None).unwrap());

    let header = svg.lines().next().unwrap();
    let px = parse_attr(header, "width") / cfg.width as u32;
    let to_cell = |x: u32, y: u32| (((x - px / 2) / px + 1) as u16, (cfg.height as u32 - (y - px / 2) / px) as u16);
    let mut read = Vec::new();
    for line in svg.lines().filter(|l| l.starts_with("<line")) {
        let from = to_cell(parse_attr(line, "x1"), parse_attr(line, "y1"));
        let to = to_cell(parse_attr(line, "x2"), parse_attr(line, "y2"));
        if read.is_empty() {
            read.push(from);
        }
        assert_eq!(*read.last().unwrap(), from);
        read.push(to);
    }
    // the end sink has no cell and is drawn where the rover stopped
    let mut expect: Vec<(u16, u16)> = Vec::new();
    for i in trace.states() {
        let c = match world.indexer().decode(i) {
            Some(s) => (s.x, s.y),
            None => *expect.last().unwrap(),
        };
        expect.push(c);
    }
    assert_eq!(read, expect);
}

#[test]
fn ascii_render_marks_start_and_targets() {
    let cfg = load("exp2_small.json");
    let world = RoverWorld::new(cfg).unwrap();
    let mdp = compile(&world).unwrap();
    let rep = value_iteration(&mdp, 1e-6, DEFAULT_MAX_ITERS).unwrap();
    let i0 = world.indexer().encode(&world.start_state()).unwrap();
    let trace = simulate(&mdp, &rep.policy, i0, 0, DEFAULT_STEP_CAP).unwrap();
    let text = render(&world, &trace, RenderFormat::Ascii, Some(0)).unwrap();
    let grid: Vec<&str> = text.lines().take(10).collect();
    assert_eq!(grid[9].chars().next(), Some('S'));
    assert!(text.contains('#'));
    assert!(text.lines().count() > 10 + trace.len());
}
