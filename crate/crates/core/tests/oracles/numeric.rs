//! Independent routes to values the library computes another way.

/// Composite Simpson over `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Two-sided Student-t tail by direct quadrature. Substituting
/// `t = √ν·tan θ` turns the density into `cos^{ν-1} θ`, so
/// `p = ∫_{θ*}^{π/2} cos^{ν-1} / ∫_0^{π/2} cos^{ν-1}` with `θ* = atan(|t|/√ν)`.
pub fn t_two_sided_p(t: f64, df: usize) -> f64 {
    let nu = df as f64;
    let f = |th: f64| th.cos().powf(nu - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let cut = (t.abs() / nu.sqrt()).atan();
    let n = 200_000;
    let tail = simpson(f, cut, half, n);
    let whole = simpson(f, 0.0, half, n);
    tail / whole
}

/// `A_t = Σ_k (γλ)^k δ_{t+k}`, truncated after the first episode end at or
/// after `t`.
pub fn gae_double_sum(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let boot = if dones[t] { 0.0 } else { values[t + 1] };
            rewards[t] + gamma * boot - values[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for k in 0..n - t {
                acc += (gamma * lambda).powi(k as i32) * delta[t + k];
                if dones[t + k] {
                    break;
                }
            }
            acc
        })
        .collect()
}

/// Point-in-triangle by the signs of the three sub-areas, in f64. Returns
/// `None` when the point is within `eps` of an edge line, where the fill
/// convention rather than geometry decides.
pub fn inside_triangle(tri: [[f64; 2]; 3], p: [f64; 2], eps: f64) -> Option<bool> {
    let cross = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut signs = [0.0; 3];
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let c = cross(a, b);
        if len == 0.0 || (c / len).abs() < eps {
            return None;
        }
        signs[i] = c.signum();
    }
    Some(signs[0] == signs[1] && signs[1] == signs[2])
}

/// Coverage mask over the pixel centers of a `w × h` grid, or `None` if any
/// center is ambiguous.
pub fn coverage_mask(tri: [[f64; 2]; 3], w: usize, h: usize, eps: f64) -> Option<Vec<bool>> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(inside_triangle(tri, [x as f64 + 0.5, y as f64 + 0.5], eps)?);
        }
    }
    Some(out)
}

/// Population mean and sample variance in two passes.
pub fn two_pass(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    (m, ss / (n - 1.0))
}
