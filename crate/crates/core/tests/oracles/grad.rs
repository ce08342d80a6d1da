//! Analytic gradients against central finite differences, all in f64.

use nest_core::intrinsic::{nt_xent, Algorithm, IcmModule, IntrinsicConfig, RndModule};
use nest_core::nn::{dot, LayerSpec, NetworkSpec, Sequential, Tensor};
use nest_core::ppo::{sample_loss, PolicyNet, PpoConfig};
use nest_core::rng::{rng_from_seed, Rng};
use nest_core::world::Action;
use rand::Rng as _;

pub const INSTANCES: usize = 20;
pub const COORDS: usize = 16;
pub const REL_TOL: f64 = 1e-4;
const SMALL: [usize; 3] = [3, 36, 36];

/// Central difference with two step sizes; `None` when they disagree,
/// which means a ReLU or clip kink lies inside the stencil.
fn central(mut f: impl FnMut(f64) -> f64) -> Option<f64> {
    let d = |h: f64, f: &mut dyn FnMut(f64) -> f64| (f(h) - f(-h)) / (2.0 * h);
    let a = d(1e-5, &mut f);
    let b = d(1e-6, &mut f);
    ((a - b).abs() <= 1e-6 * (1.0 + a.abs())).then_some(b)
}

fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na.max(nn) < 1e-12 {
        0.0
    } else {
        diff / na.max(nn)
    }
}

fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Picks up to `COORDS` (param, element) coordinates over several nets.
fn coords(nets: &[&Sequential<f64>], rng: &mut Rng) -> Vec<(usize, usize, usize)> {
    let mut all = Vec::new();
    for (k, n) in nets.iter().enumerate() {
        for (p, param) in n.params().iter().enumerate() {
            all.push((k, p, param.value.len()));
        }
    }
    (0..COORDS)
        .map(|_| {
            let (k, p, len) = all[rng.random_range(0..all.len())];
            (k, p, rng.random_range(0..len))
        })
        .collect()
}

/// Worst relative error over `INSTANCES` random instances of a loss over
/// the parameters of one or more networks.
pub struct Outcome {
    pub worst: f64,
    pub instances: usize,
    pub skipped: usize,
}

fn run_param_check<M>(
    seed: u64,
    mut make: impl FnMut(&mut Rng) -> M,
    nets_mut: impl Fn(&mut M) -> Vec<&mut Sequential<f64>>,
    analytic: impl Fn(&mut M),
    loss: impl Fn(&M) -> f64,
) -> Outcome {
    let mut rng = rng_from_seed(seed);
    let (mut worst, mut skipped) = (0.0f64, 0);
    for _ in 0..INSTANCES {
        let mut m = make(&mut rng);
        for n in nets_mut(&mut m) {
            n.zero_grad();
        }
        analytic(&mut m);
        let picks = {
            let nets = nets_mut(&mut m);
            let refs: Vec<&Sequential<f64>> = nets.iter().map(|n| &**n).collect();
            coords(&refs, &mut rng)
        };
        let (mut a, mut n) = (Vec::new(), Vec::new());
        for (k, p, i) in picks {
            let g = nets_mut(&mut m)[k].params()[p].grad[i];
            let fd = central(|h| {
                nets_mut(&mut m)[k].params_mut()[p].value[i] += h;
                let l = loss(&m);
                nets_mut(&mut m)[k].params_mut()[p].value[i] -= h;
                l
            });
            match fd {
                Some(fd) => {
                    a.push(g);
                    n.push(fd);
                }
                None => skipped += 1,
            }
        }
        worst = worst.max(rel_err(&a, &n));
    }
    Outcome {
        worst,
        instances: INSTANCES,
        skipped,
    }
}

fn single_layer(layer: LayerSpec, input: Vec<usize>, rng: &mut Rng) -> Sequential<f64> {
    Sequential::new(
        &NetworkSpec {
            input_shape: input,
            layers: vec![layer],
        },
        "l",
        rng,
    )
    .unwrap()
}

struct Linear {
    net: Sequential<f64>,
    x: Tensor<f64>,
    r: Tensor<f64>,
}

fn linear_check(seed: u64, spec: LayerSpec, input: Vec<usize>) -> (Outcome, f64) {
    let make = |rng: &mut Rng| {
        let net = single_layer(spec.clone(), input.clone(), rng);
        let x = random_tensor(&input, rng);
        let shape = net.infer(&x).unwrap().shape;
        let n = shape.iter().product();
        let r = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        Linear { net, x, r }
    };
    let params = run_param_check(
        seed,
        make,
        |m| vec![&mut m.net],
        |m| {
            m.net.forward(&m.x).unwrap();
            m.net.backward(&m.r).unwrap();
        },
        |m| dot(&m.net.infer(&m.x).unwrap().data, &m.r.data),
    );
    // Input gradient.
    let mut rng = rng_from_seed(seed ^ 0xabc);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let mut m = make(&mut rng);
        m.net.forward(&m.x).unwrap();
        let gx = m.net.backward(&m.r).unwrap().data;
        let (mut a, mut n) = (Vec::new(), Vec::new());
        for _ in 0..COORDS {
            let i = rng.random_range(0..m.x.len());
            let fd = central(|h| {
                let mut x = m.x.clone();
                x.data[i] += h;
                dot(&m.net.infer(&x).unwrap().data, &m.r.data)
            })
            .expect("linear in the input");
            a.push(gx[i]);
            n.push(fd);
        }
        worst = worst.max(rel_err(&a, &n));
    }
    (params, worst)
}

pub fn conv_check() -> (Outcome, f64) {
    linear_check(
        1,
        LayerSpec::Conv {
            filters: 4,
            kernel: 4,
            stride: 2,
        },
        vec![3, 12, 12],
    )
}

pub fn dense_check() -> (Outcome, f64) {
    linear_check(2, LayerSpec::Dense { units: 7 }, vec![19])
}

struct PolicyCase {
    net: PolicyNet<f64>,
    x: Tensor<f64>,
    action: Action,
    old_logp: f64,
    adv: f64,
    ret: f64,
}

fn small_ppo() -> PpoConfig {
    PpoConfig {
        hidden_units: 16,
        ..PpoConfig::default()
    }
}

pub fn policy_check() -> Outcome {
    let cfg = small_ppo();
    run_param_check(
        3,
        |rng| {
            let net = PolicyNet::<f64>::new(SMALL, &cfg, rng).unwrap();
            let x = random_tensor(&SMALL, rng);
            let action = Action::from_index(rng.random_range(0..9));
            let out = net.infer(&x).unwrap();
            PolicyCase {
                old_logp: out.log_prob(action) + rng.random_range(-0.3..0.3),
                adv: rng.random_range(-2.0..2.0),
                ret: rng.random_range(-2.0..2.0),
                net,
                x,
                action,
            }
        },
        |c| vec![&mut c.net.net],
        |c| {
            let out = c.net.net.forward(&c.x).unwrap().data;
            let (_, g) = sample_loss(&out, c.action, c.old_logp, c.adv, c.ret, &cfg);
            c.net.net.backward_params(&Tensor::from_vec(g)).unwrap();
        },
        |c| {
            let out = c.net.net.infer(&c.x).unwrap().data;
            sample_loss(&out, c.action, c.old_logp, c.adv, c.ret, &cfg)
                .0
                .total(&cfg)
        },
    )
}

fn small_intrinsic(algorithm: Algorithm) -> IntrinsicConfig {
    IntrinsicConfig {
        algorithm,
        hidden_units: 16,
        embedding_dim: 16,
        ..IntrinsicConfig::default()
    }
}

struct IcmCase {
    m: IcmModule<f64>,
    s: Tensor<f64>,
    s2: Tensor<f64>,
    a: Action,
}

pub fn icm_check() -> Outcome {
    let cfg = small_intrinsic(Algorithm::Icm);
    run_param_check(
        4,
        |rng| IcmCase {
            m: IcmModule::new(SMALL, &cfg, rng).unwrap(),
            s: random_tensor(&SMALL, rng),
            s2: random_tensor(&SMALL, rng),
            a: Action::from_index(rng.random_range(0..9)),
        },
        |c| vec![&mut c.m.encoder, &mut c.m.forward_model, &mut c.m.inverse_model],
        |c| {
            c.m.accumulate_gradients(&c.s, c.a, &c.s2).unwrap();
        },
        |c| c.m.loss(&c.s, c.a, &c.s2).unwrap().total,
    )
}

struct RndCase {
    m: RndModule<f64>,
    s: Tensor<f64>,
}

pub fn rnd_check() -> Outcome {
    let cfg = small_intrinsic(Algorithm::Rnd);
    run_param_check(
        5,
        |rng| RndCase {
            m: RndModule::new(SMALL, &cfg, rng).unwrap(),
            s: random_tensor(&SMALL, rng),
        },
        |c| vec![&mut c.m.predictor],
        |c| {
            c.m.accumulate_gradients(&c.s).unwrap();
        },
        |c| c.m.raw_reward(&c.s).unwrap(),
    )
}

pub fn nt_xent_check() -> f64 {
    let mut rng = rng_from_seed(6);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let views = 2 * rng.random_range(2..6);
        let dim = rng.random_range(3..10);
        let tau = rng.random_range(0.1..1.0);
        let h: Vec<Vec<f64>> = (0..views)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let (_, g) = nt_xent(&h, tau);
        let (mut a, mut n) = (Vec::new(), Vec::new());
        for _ in 0..COORDS {
            let (v, d) = (rng.random_range(0..views), rng.random_range(0..dim));
            let fd = central(|e| {
                let mut hh = h.clone();
                hh[v][d] += e;
                nt_xent(&hh, tau).0
            })
            .expect("smooth");
            a.push(g[v][d]);
            n.push(fd);
        }
        worst = worst.max(rel_err(&a, &n));
    }
    worst
}
