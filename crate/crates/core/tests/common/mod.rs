//! Checks shared by the environment tests and the acceptance suite.
#![allow(dead_code)]

use approxviol::env::geometry::distance;
use approxviol::env::{make_task, NavEnv, Observation, Outcome, Task, TerminalMode, N_ACTIONS};
use approxviol::mlp::{Gradient, Mlp, MlpSpec};
use approxviol::{rng_from_seed, Rng};
use rand::Rng as _;

pub fn obs_in_range(obs: &Observation) -> bool {
    obs.len() == 13
        && obs[..11].iter().all(|v| (0.0..=1.0).contains(v))
        && (0.0..=1.0).contains(&obs[11])
        && (-1.0..=1.0).contains(&obs[12])
        && obs.iter().all(|v| v.is_finite())
}

/// Number of out-of-range observations over `steps` uniformly random actions.
pub fn random_walk_range_violations(task: Task, steps: usize, seed: u64) -> usize {
    let mut env = NavEnv::new(make_task(task)).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut bad = usize::from(!obs_in_range(&env.reset_seeded(seed).unwrap()));
    for _ in 0..steps {
        if env.is_done() {
            bad += usize::from(!obs_in_range(&env.reset().unwrap()));
        }
        let r = env.step(rng.random_range(0..N_ACTIONS)).unwrap();
        bad += usize::from(!obs_in_range(&r.obs));
    }
    bad
}

/// Worst deviation of Σr from `d_start − d_end − β·n` over maximal random-walk
/// segments without goal arrivals or collisions, and the number of segments.
pub fn telescoping_worst_error(task: Task, steps: usize, seed: u64) -> (f64, usize) {
    let mut env = NavEnv::new(make_task(task)).unwrap();
    let beta = env.config().beta;
    let mut rng = rng_from_seed(seed);
    env.reset_seeded(seed).unwrap();
    let dist = |env: &NavEnv| distance(env.goal(), env.pose().position());
    let mut worst = 0.0f64;
    let mut segments = 0;
    let mut start = dist(&env);
    let mut sum = 0.0;
    let mut n = 0usize;
    let close = |sum: f64, n: usize, start: f64, end: f64, worst: &mut f64, segments: &mut usize| {
        if n > 0 {
            *worst = worst.max((sum - (start - end - beta * n as f64)).abs());
            *segments += 1;
        }
    };
    for _ in 0..steps {
        if env.is_done() {
            env.reset().unwrap();
            start = dist(&env);
            sum = 0.0;
            n = 0;
        }
        let before = dist(&env);
        let r = env.step(rng.random_range(0..N_ACTIONS)).unwrap();
        if r.goal_reached || r.collision {
            close(sum, n, start, before, &mut worst, &mut segments);
            start = dist(&env);
            sum = 0.0;
            n = 0;
            continue;
        }
        sum += r.reward;
        n += 1;
        if r.done {
            close(sum, n, start, dist(&env), &mut worst, &mut segments);
        }
    }
    close(sum, n, start, dist(&env), &mut worst, &mut segments);
    (worst, segments)
}

/// Episodes (out of `episodes`) breaking the terminal-mode contract: the only
/// step that may report a collision is the last one, which must end with
/// [`Outcome::Collision`].
pub fn terminal_contract_failures(task: Task, episodes: usize, seed: u64) -> usize {
    let cfg = make_task(task);
    assert_eq!(cfg.terminal_mode, TerminalMode::Terminal);
    let mut env = NavEnv::new(cfg).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut failures = 0;
    for ep in 0..episodes {
        env.reset_seeded(seed.wrapping_add(ep as u64)).unwrap();
        let mut collisions = 0;
        let ok = loop {
            let r = env.step(rng.random_range(0..N_ACTIONS)).unwrap();
            collisions += usize::from(r.collision);
            if r.done {
                break collisions == usize::from(r.outcome == Outcome::Collision)
                    && (r.outcome != Outcome::Collision || r.collision);
            }
            if r.collision {
                break false;
            }
        };
        failures += usize::from(!ok);
    }
    failures
}

pub const H: f64 = 1e-5;

pub fn random_net(rng: &mut Rng) -> Mlp {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=6)];
    for _ in 0..depth {
        sizes.push(rng.random_range(1..=7));
    }
    Mlp::new(MlpSpec::new(sizes).unwrap(), rng).unwrap()
}

pub fn perturbed(net: &Mlp, layer: usize, weight: bool, j: usize, delta: f64) -> Mlp {
    let mut n = net.clone();
    let l = &mut n.layers_mut()[layer];
    if weight {
        l.weights[j] += delta;
    } else {
        l.biases[j] += delta;
    }
    n
}

/// Every hidden pre-activation, from a direct dense forward pass.
pub fn pre_activations(net: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut pattern = Vec::new();
    let n = net.layers().len();
    for (li, l) in net.layers().iter().enumerate() {
        let z: Vec<f64> = (0..l.n_out)
            .map(|o| (0..l.n_in).map(|i| l.weights[o * l.n_in + i] * h[i]).sum::<f64>() + l.biases[o])
            .collect();
        if li + 1 < n {
            pattern.extend(z.iter().copied());
            h = z.iter().map(|&v| v.max(0.0)).collect();
        }
    }
    pattern
}

pub fn relu_pattern(net: &Mlp, x: &[f64]) -> Vec<bool> {
    pre_activations(net, x).iter().map(|&z| z > 0.0).collect()
}

/// Random input whose hidden pre-activations all keep clear of the kink.
pub fn input_away_from_kinks(net: &Mlp, rng: &mut Rng) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        if pre_activations(net, &x).iter().all(|z| z.abs() > 1e-3) {
            return x;
        }
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Compare every parameter's analytic derivative with a central difference
/// of `loss`. Parameters whose perturbation crosses a kink (as reported by
/// `smooth`) are skipped; returns the worst error and the number checked.
pub fn check_all(
    net: &Mlp,
    grad: &Gradient,
    loss: impl Fn(&Mlp) -> f64,
    smooth: impl Fn(&Mlp, &Mlp) -> bool,
) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (li, layer) in net.layers().iter().enumerate() {
        for (weight, len) in [(true, layer.weights.len()), (false, layer.biases.len())] {
            for j in 0..len {
                let (up, down) = (perturbed(net, li, weight, j, H), perturbed(net, li, weight, j, -H));
                if !(smooth(net, &up) && smooth(net, &down)) {
                    continue;
                }
                checked += 1;
                let fd = (loss(&up) - loss(&down)) / (2.0 * H);
                let g = if weight { grad.weights[li][j] } else { grad.biases[li][j] };
                worst = worst.max(rel_err(g, fd));
            }
        }
    }
    (worst, checked)
}

/// Brute-force definition: A_t = Σ_j (γλ)^{j−t} δ_j up to and including the
/// first terminal transition.
pub fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], boot: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for j in t..n {
                let next = if j + 1 < n { v[j + 1] } else { boot };
                let delta = r[j] + if d[j] { 0.0 } else { g * next } - v[j];
                sum += (g * l).powi((j - t) as i32) * delta;
                if d[j] {
                    break;
                }
            }
            sum
        })
        .collect()
}

/// One random network, input and loss weighting; returns the worst relative
/// error of `backward` against central differences.
pub fn backward_case(rng: &mut Rng) -> f64 {
    let net = random_net(rng);
    let x = input_away_from_kinks(&net, rng);
    let c: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |n: &Mlp| n.forward(&x).unwrap().iter().zip(&c).map(|(y, c)| y * c).sum::<f64>();
    let grad = net.backward(&x, &c).unwrap();
    let smooth = |a: &Mlp, b: &Mlp| relu_pattern(a, &x) == relu_pattern(b, &x);
    let (worst, checked) = check_all(&net, &grad, loss, smooth);
    assert!(checked * 10 >= net.num_params() * 9, "only {checked} smooth parameters");
    worst
}
