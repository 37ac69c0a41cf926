//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the Monte Carlo or regression code of the crate:
//! the dynamic program integrates over observations with the trapezoid rule
//! on fixed nodes and interpolates the first-stage value on a lattice.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Belief of a one-coefficient score map and one-coefficient cost map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalar {
    pub ma: f64,
    pub sa: f64,
    pub mb: f64,
    pub sb: f64,
}

fn density(z: f64, m: f64, v: f64) -> f64 {
    (-(z - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

/// Nodes and trapezoid weights for integrating against `N(m, v)`.
pub fn normal_nodes(m: f64, v: f64, n: usize, width: f64) -> Vec<(f64, f64)> {
    if v <= 0.0 {
        return vec![(m, 1.0)];
    }
    let sd = v.sqrt();
    let (lo, hi) = (m - width * sd, m + width * sd);
    let h = (hi - lo) / (n - 1) as f64;
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let z = lo + h * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
            (z, w * density(z, m, v))
        })
        .collect();
    let total: f64 = raw.iter().map(|p| p.1).sum();
    raw.into_iter().map(|(z, w)| (z, w / total)).collect()
}

/// Scalar filter update in information form.
pub fn update(m: f64, s: f64, f: f64, obs: f64, noise_sd: f64) -> (f64, f64) {
    let r = noise_sd * noise_sd;
    if s == 0.0 || f == 0.0 {
        return (m, s);
    }
    let s1 = 1.0 / (1.0 / s + f * f / r);
    let m1 = m + s1 * f * (obs - m * f) / r;
    (m1, s1)
}

pub struct DpProblem {
    pub phi: fn(f64) -> f64,
    pub psi: fn(f64) -> f64,
    pub sigma_h: f64,
    pub sigma_t: f64,
    pub gamma: f64,
    pub controls: Vec<f64>,
    pub nodes: usize,
}

/// `E[max(T, 0)]` for `T ~ N(m, v)` by quadrature.
pub fn positive_part(m: f64, v: f64, n: usize) -> f64 {
    normal_nodes(m, v, n, 9.0).iter().map(|(t, w)| w * t.max(0.0)).sum()
}

struct Axis {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Axis {
    fn at(&self, i: usize) -> f64 {
        if self.n == 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
        }
    }

    /// Lower index and weight of the upper neighbour, clamped to the range.
    fn locate(&self, x: f64) -> (usize, f64) {
        if self.n == 1 {
            return (0, 0.0);
        }
        let p = ((x - self.lo) / (self.hi - self.lo) * (self.n - 1) as f64).clamp(0.0, (self.n - 1) as f64);
        let i = (p.floor() as usize).min(self.n - 2);
        (i, p - i as f64)
    }
}

/// First-stage value on a lattice over `(ma, sa, mb, sb)`.
pub struct Lattice {
    axes: [Axis; 4],
    values: Vec<f64>,
}

impl Lattice {
    fn index(&self, i: [usize; 4]) -> usize {
        ((i[0] * self.axes[1].n + i[1]) * self.axes[2].n + i[2]) * self.axes[3].n + i[3]
    }

    pub fn interpolate(&self, x: Scalar) -> f64 {
        let coords = [x.ma, x.sa, x.mb, x.sb];
        let loc: Vec<(usize, f64)> = self.axes.iter().zip(coords).map(|(a, c)| a.locate(c)).collect();
        let mut acc = 0.0;
        for corner in 0..16 {
            let mut w = 1.0;
            let mut idx = [0usize; 4];
            for d in 0..4 {
                let up = corner >> d & 1 == 1;
                let (i, f) = loc[d];
                if up {
                    if self.axes[d].n == 1 {
                        w = 0.0;
                    }
                    idx[d] = (i + 1).min(self.axes[d].n - 1);
                    w *= f;
                } else {
                    idx[d] = i;
                    w *= 1.0 - f;
                }
            }
            if w != 0.0 {
                acc += w * self.values[self.index(idx)];
            }
        }
        acc
    }
}

impl DpProblem {
    fn expected_cost(&self, x: Scalar, u: f64) -> f64 {
        let p = (self.psi)(u);
        positive_part(x.mb * p, p * p * x.sb + self.sigma_t * self.sigma_t, self.nodes)
    }

    /// Score part of the one-step value: `E[ma_1] phi(u)` by quadrature.
    fn expected_score(&self, x: Scalar, u: f64) -> f64 {
        let f = (self.phi)(u);
        let v = f * f * x.sa + self.sigma_h * self.sigma_h;
        normal_nodes(x.ma * f, v, self.nodes, 8.0)
            .iter()
            .map(|(h, w)| w * update(x.ma, x.sa, f, *h, self.sigma_h).0 * f)
            .sum()
    }

    /// `V_1(x) = max_u E[m_alpha(u, x_1)] - gamma E[t^+]`.
    pub fn v1(&self, x: Scalar) -> f64 {
        self.controls
            .iter()
            .map(|&u| self.expected_score(x, u) - self.gamma * self.expected_cost(x, u))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Tabulate `V_1` on a lattice covering the given ranges.
    pub fn lattice(&self, ranges: [(f64, f64, usize); 4]) -> Lattice {
        let axes = ranges.map(|(lo, hi, n)| Axis { lo, hi, n });
        // The score and cost parts separate, so tabulate them per control.
        let nu = self.controls.len();
        let mut score = vec![0.0; axes[0].n * axes[1].n * nu];
        for i in 0..axes[0].n {
            for j in 0..axes[1].n {
                let x = Scalar {
                    ma: axes[0].at(i),
                    sa: axes[1].at(j),
                    mb: 0.0,
                    sb: 0.0,
                };
                for (c, &u) in self.controls.iter().enumerate() {
                    score[(i * axes[1].n + j) * nu + c] = self.expected_score(x, u);
                }
            }
        }
        let mut cost = vec![0.0; axes[2].n * axes[3].n * nu];
        for k in 0..axes[2].n {
            for l in 0..axes[3].n {
                let x = Scalar {
                    ma: 0.0,
                    sa: 0.0,
                    mb: axes[2].at(k),
                    sb: axes[3].at(l),
                };
                for (c, &u) in self.controls.iter().enumerate() {
                    cost[(k * axes[3].n + l) * nu + c] = self.expected_cost(x, u);
                }
            }
        }
        let mut values = Vec::with_capacity(axes.iter().map(|a| a.n).product());
        for i in 0..axes[0].n {
            for j in 0..axes[1].n {
                for k in 0..axes[2].n {
                    for l in 0..axes[3].n {
                        let s = &score[(i * axes[1].n + j) * nu..][..nu];
                        let c = &cost[(k * axes[3].n + l) * nu..][..nu];
                        let v = s
                            .iter()
                            .zip(c)
                            .map(|(a, b)| a - self.gamma * b)
                            .fold(f64::NEG_INFINITY, f64::max);
                        values.push(v);
                    }
                }
            }
        }
        Lattice { axes, values }
    }

    /// `V_2(x) = max_u { -gamma E[t^+] + E[max(m_alpha(u, x_1), V_1(x_1))] }`.
    pub fn v2(&self, x: Scalar, v1: &Lattice) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for &u in &self.controls {
            let f = (self.phi)(u);
            let p = (self.psi)(u);
            let hs = normal_nodes(x.ma * f, f * f * x.sa + self.sigma_h.powi(2), self.nodes, 8.0);
            let ts = normal_nodes(x.mb * p, p * p * x.sb + self.sigma_t.powi(2), self.nodes, 8.0);
            let post_t: Vec<(f64, f64, f64)> = ts
                .iter()
                .map(|(t, w)| {
                    let (mb, sb) = update(x.mb, x.sb, p, *t, self.sigma_t);
                    (mb, sb, *w)
                })
                .collect();
            let mut acc = 0.0;
            for (h, wh) in &hs {
                let (ma, sa) = update(x.ma, x.sa, f, *h, self.sigma_h);
                let stop = ma * f;
                for &(mb, sb, wt) in &post_t {
                    let cont = v1.interpolate(Scalar { ma, sa, mb, sb });
                    acc += wh * wt * stop.max(cont);
                }
            }
            best = best.max(acc - self.gamma * self.expected_cost(x, u));
        }
        best
    }
}
