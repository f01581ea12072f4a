use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wall-anchored mass-spring-damper chain.
///
/// Spring `i` joins body `i - 1` to body `i` (body `-1` is the wall). The wall
/// spring carries the cubic hardening term `a * p_1^3`. The external force
/// acts on the first body. The state is `(p_1..p_n, v_1..v_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdParams {
    pub masses: Vec<f64>,
    pub springs: Vec<f64>,
    pub dampers: Vec<f64>,
    pub hardening: f64,
}

impl MsdParams {
    /// Data-generating 3-DOF system.
    pub fn truth() -> Self {
        MsdParams {
            masses: vec![0.5, 0.4, 0.1],
            springs: vec![100.0; 3],
            dampers: vec![0.5; 3],
            hardening: 100.0,
        }
    }

    /// Linear 2-DOF model with the true values of the first two bodies.
    pub fn ideal_baseline() -> Self {
        MsdParams {
            masses: vec![0.5, 0.4],
            springs: vec![100.0; 2],
            dampers: vec![0.5; 2],
            hardening: 0.0,
        }
    }

    /// Linear 2-DOF model with perturbed spring and damper values.
    pub fn approx_baseline() -> Self {
        MsdParams {
            masses: vec![0.5, 0.4],
            springs: vec![95.0; 2],
            dampers: vec![0.45; 2],
            hardening: 0.0,
        }
    }

    pub fn bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn state_width(&self) -> usize {
        2 * self.bodies()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        if n == 0 || self.springs.len() != n || self.dampers.len() != n {
            return Err(Error::InvalidArgument(
                "masses, springs and dampers need one entry per body".into(),
            ));
        }
        let positive = self.masses.iter().chain(&self.springs).chain(&self.dampers);
        if positive.clone().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument("physical parameters must be positive".into()));
        }
        if !(self.hardening.is_finite() && self.hardening >= 0.0) {
            return Err(Error::InvalidArgument("hardening coefficient must be nonnegative".into()));
        }
        Ok(())
    }

    /// `(masses, springs, dampers)` stacked.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.masses.clone();
        t.extend_from_slice(&self.springs);
        t.extend_from_slice(&self.dampers);
        t
    }

    pub fn from_theta(theta: &[f64], hardening: f64) -> Self {
        assert_eq!(theta.len() % 3, 0, "theta holds three groups");
        let n = theta.len() / 3;
        MsdParams {
            masses: theta[..n].to_vec(),
            springs: theta[n..2 * n].to_vec(),
            dampers: theta[2 * n..].to_vec(),
            hardening,
        }
    }

    /// Kinetic energy plus spring potential (quartic hardening term included).
    pub fn energy(&self, state: &[f64]) -> f64 {
        let n = self.bodies();
        let (p, v) = state.split_at(n);
        let mut e = 0.0;
        for i in 0..n {
            let d = p[i] - if i == 0 { 0.0 } else { p[i - 1] };
            e += 0.5 * self.masses[i] * v[i] * v[i] + 0.5 * self.springs[i] * d * d;
        }
        e + 0.25 * self.hardening * p[0].powi(4)
    }
}

/// Time derivative of the chain state under external force `force` on body 1.
pub fn msd_derivative(params: &MsdParams, state: &[f64], force: f64) -> Vec<f64> {
    let n = params.bodies();
    let (p, v) = state.split_at(n);
    let mut out = vec![0.0; 2 * n];
    out[..n].copy_from_slice(v);
    let mut net = vec![0.0; n];
    net[0] = force;
    for i in 0..n {
        let (pp, vp) = if i == 0 { (0.0, 0.0) } else { (p[i - 1], v[i - 1]) };
        let d = p[i] - pp;
        let mut s = params.springs[i] * d + params.dampers[i] * (v[i] - vp);
        if i == 0 {
            s += params.hardening * d * d * d;
        }
        net[i] -= s;
        if i > 0 {
            net[i - 1] += s;
        }
    }
    for i in 0..n {
        out[n + i] = net[i] / params.masses[i];
    }
    out
}

/// Reverse-mode product of [`msd_derivative`] with cotangent `g`.
///
/// Returns `(d state, d force, d theta)` with theta ordered as
/// [`MsdParams::theta`].
pub fn msd_derivative_vjp(params: &MsdParams, state: &[f64], force: f64, g: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
    let n = params.bodies();
    let (p, v) = state.split_at(n);
    let mut gx = vec![0.0; 2 * n];
    let mut gtheta = vec![0.0; 3 * n];
    gx[n..].copy_from_slice(&g[..n]);

    let mut net = vec![0.0; n];
    net[0] = force;
    let mut deltas = Vec::with_capacity(n);
    for i in 0..n {
        let (pp, vp) = if i == 0 { (0.0, 0.0) } else { (p[i - 1], v[i - 1]) };
        let d = p[i] - pp;
        let dd = v[i] - vp;
        let mut s = params.springs[i] * d + params.dampers[i] * dd;
        if i == 0 {
            s += params.hardening * d * d * d;
        }
        net[i] -= s;
        if i > 0 {
            net[i - 1] += s;
        }
        deltas.push((d, dd));
    }
    let mut gnet = vec![0.0; n];
    for i in 0..n {
        let m = params.masses[i];
        gnet[i] = g[n + i] / m;
        gtheta[i] = -g[n + i] * net[i] / (m * m);
    }
    for i in 0..n {
        let gs = -gnet[i] + if i > 0 { gnet[i - 1] } else { 0.0 };
        let (d, dd) = deltas[i];
        gtheta[n + i] = gs * d;
        gtheta[2 * n + i] = gs * dd;
        let mut gd = gs * params.springs[i];
        if i == 0 {
            gd += gs * 3.0 * params.hardening * d * d;
        }
        let gdd = gs * params.dampers[i];
        gx[i] += gd;
        gx[n + i] += gdd;
        if i > 0 {
            gx[i - 1] -= gd;
            gx[n + i - 1] -= gdd;
        }
    }
    (gx, gnet[0], gtheta)
}

/// One classical Runge-Kutta step of `dx/dt = f(x)` with step `h`.
///
/// Inputs are held constant across the step by capturing them in `f`.
pub fn rk4_step(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let shifted = |k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let k1 = f(x);
    let k2 = f(&shifted(&k1, 0.5 * h));
    let k3 = f(&shifted(&k2, 0.5 * h));
    let k4 = f(&shifted(&k3, h));
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// One RK4 step of the chain with zero-order-hold force.
pub fn msd_step(params: &MsdParams, state: &[f64], force: f64, ts: f64) -> Vec<f64> {
    rk4_step(|s| msd_derivative(params, s, force), state, ts)
}

/// Reverse-mode product of [`msd_step`]: `(d state, d force, d theta)`.
pub fn msd_step_vjp(params: &MsdParams, state: &[f64], force: f64, ts: f64, g: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
    let shifted = |k: &[f64], c: f64| -> Vec<f64> { state.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let f = |s: &[f64]| msd_derivative(params, s, force);
    let s1 = state.to_vec();
    let k1 = f(&s1);
    let s2 = shifted(&k1, 0.5 * ts);
    let k2 = f(&s2);
    let s3 = shifted(&k2, 0.5 * ts);
    let k3 = f(&s3);
    let s4 = shifted(&k3, ts);

    let mut gx = g.to_vec();
    let mut gu = 0.0;
    let mut gth = vec![0.0; 3 * params.bodies()];
    let add = |acc: &mut Vec<f64>, v: &[f64], c: f64| acc.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);

    let gk: Vec<f64> = g.iter().map(|v| ts / 6.0 * v).collect();
    let mut gk1 = gk.clone();
    let mut gk2: Vec<f64> = gk.iter().map(|v| 2.0 * v).collect();
    let mut gk3 = gk2.clone();
    let gk4 = gk;

    // Stage 4: s4 = x + ts k3.
    let (gs, g_u, g_t) = msd_derivative_vjp(params, &s4, force, &gk4);
    add(&mut gx, &gs, 1.0);
    add(&mut gk3, &gs, ts);
    gu += g_u;
    add(&mut gth, &g_t, 1.0);
    // Stage 3: s3 = x + ts/2 k2.
    let (gs, g_u, g_t) = msd_derivative_vjp(params, &s3, force, &gk3);
    add(&mut gx, &gs, 1.0);
    add(&mut gk2, &gs, 0.5 * ts);
    gu += g_u;
    add(&mut gth, &g_t, 1.0);
    // Stage 2: s2 = x + ts/2 k1.
    let (gs, g_u, g_t) = msd_derivative_vjp(params, &s2, force, &gk2);
    add(&mut gx, &gs, 1.0);
    add(&mut gk1, &gs, 0.5 * ts);
    gu += g_u;
    add(&mut gth, &g_t, 1.0);
    // Stage 1: s1 = x.
    let (gs, g_u, g_t) = msd_derivative_vjp(params, &s1, force, &gk1);
    add(&mut gx, &gs, 1.0);
    gu += g_u;
    add(&mut gth, &g_t, 1.0);
    (gx, gu, gth)
}

/// Simulates the chain from `x0` and returns the position of `output_body`
/// at every sample, read before the state update.
pub fn simulate_msd(params: &MsdParams, x0: &[f64], u: &[f64], ts: f64, output_body: usize) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut y = Vec::with_capacity(u.len());
    for &uk in u {
        y.push(x[output_body]);
        x = msd_step(params, &x, uk, ts);
    }
    y
}
