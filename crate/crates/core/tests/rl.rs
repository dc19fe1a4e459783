use igmn::rl::{env_step, AgentConfig, EnvSpec, QAgent, TaskName, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Cart-pole written out from the pole-on-cart equations of motion with the
// pole's half length and total mass kept explicit.
fn cart_pole_oracle(s: [f64; 4], push_right: bool) -> ([f64; 4], bool) {
    let (g, mc, mp, l, dt) = (9.8_f64, 1.0_f64, 0.1_f64, 0.5_f64, 0.02_f64);
    let f = if push_right { 10.0 } else { -10.0 };
    let [x, v, th, w] = s;
    let m = mc + mp;
    let num = g * th.sin() + th.cos() * ((-f - mp * l * w * w * th.sin()) / m);
    let den = l * (4.0 / 3.0 - mp * th.cos().powi(2) / m);
    let alpha = num / den;
    let acc = (f + mp * l * (w * w * th.sin() - alpha * th.cos())) / m;
    let next = [x + dt * v, v + dt * acc, th + dt * w, w + dt * alpha];
    let done = next[0] < -2.4 || next[0] > 2.4 || next[2] < -0.20943951023931953 || next[2] > 0.20943951023931953;
    (next, done)
}

fn mountain_car_oracle(s: [f64; 2], action: usize) -> ([f64; 2], bool) {
    let mut v = s[1] + 0.001 * (action as f64 - 1.0) - 0.0025 * (3.0 * s[0]).cos();
    v = v.clamp(-0.07, 0.07);
    let p = (s[0] + v).clamp(-1.2, 0.6);
    if p <= -1.2 && v < 0.0 {
        v = 0.0;
    }
    ([p, v], p >= 0.5)
}

#[test]
fn cart_pole_matches_oracle() {
    let spec = EnvSpec::cart_pole();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut s = spec.reset(&mut rng);
        let mut o = [s[0], s[1], s[2], s[3]];
        for step in 0..200 {
            let a = usize::from((step / 3) % 2 == 0);
            let t = env_step(&spec, &s, a);
            let (on, od) = cart_pole_oracle(o, a == 1);
            for (k, (got, want)) in t.next_state.iter().zip(on).enumerate() {
                assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "step {step} var {k}");
            }
            assert_eq!(t.terminal, od, "step {step}");
            if t.terminal {
                break;
            }
            s = t.next_state;
            o = [s[0], s[1], s[2], s[3]];
        }
    }
}

#[test]
fn mountain_car_matches_oracle() {
    let spec = EnvSpec::mountain_car();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let mut s = spec.reset(&mut rng);
        let mut o = [s[0], s[1]];
        for _ in 0..300 {
            let a = rng.gen_range(0..3);
            let t = env_step(&spec, &s, a);
            let (on, od) = mountain_car_oracle(o, a);
            for k in 0..2 {
                assert!((t.next_state[k] - on[k]).abs() <= 1e-15 * (1.0 + on[k].abs()), "{:?} vs {on:?}", t.next_state);
            }
            assert_eq!(t.terminal, od);
            if od {
                break;
            }
            s = t.next_state;
            o = [s[0], s[1]];
        }
    }
}

#[test]
fn mountain_car_left_wall_stops_car() {
    let spec = EnvSpec::mountain_car();
    let t = env_step(&spec, &[-1.19, -0.05], 0);
    assert_eq!(t.next_state, vec![-1.2, 0.0]);
}

/// Two states, two actions: 0 stays, 1 switches. Staying in state 1 pays 1,
/// staying in state 0 pays 0.2, switching pays 0.
fn toy_step(s: usize, a: usize) -> (usize, f64) {
    match (s, a) {
        (0, 0) => (0, 0.2),
        (1, 0) => (1, 1.0),
        (s, _) => (1 - s, 0.0),
    }
}

fn value_iteration(gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0_f64; 2]; 2];
    for _ in 0..2000 {
        let mut next = q;
        for (s, row) in next.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (s2, r) = toy_step(s, a);
                *v = r + gamma * q[s2][0].max(q[s2][1]);
            }
        }
        q = next;
    }
    q
}

#[test]
fn toy_mdp_greedy_policy_matches_value_iteration() {
    let gamma = 0.5;
    let q_star = value_iteration(gamma);
    let optimal: Vec<usize> = q_star.iter().map(|r| usize::from(r[1] > r[0])).collect();
    assert_eq!(optimal, vec![1, 0], "oracle sanity");

    let mut cfg = AgentConfig {
        gamma,
        q_scale: 10.0,
        ..AgentConfig::default()
    };
    cfg.learner.pruning = false;
    let mut agent = QAgent::for_space(&[1.0], 2, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..4000 {
        let s = rng.gen_range(0..2);
        let a = rng.gen_range(0..2);
        let (s2, r) = toy_step(s, a);
        agent
            .agent_step(&Transition {
                state: vec![s as f64],
                action: a,
                reward: r,
                next_state: vec![s2 as f64],
                terminal: false,
            })
            .unwrap();
    }
    for s in 0..2 {
        let q = agent.q_values(&[s as f64]).unwrap();
        let greedy = usize::from(q[1] > q[0]);
        assert_eq!(greedy, optimal[s], "state {s}: learned {q:?}, optimal {:?}", q_star[s]);
    }
}

#[test]
fn task_names_parse() {
    assert_eq!("cart_pole".parse::<TaskName>().unwrap(), TaskName::CartPole);
    assert_eq!("Mountain-Car".parse::<TaskName>().unwrap(), TaskName::MountainCar);
    assert!("acrobot".parse::<TaskName>().is_err());
}
