//! Cubic smoothing spline minimizing Σ(g(xᵢ) − uᵢ)² + λ∫g″², fitted by the
//! Reinsch value/second-derivative formulation, with λ chosen by generalized
//! cross-validation when not given.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolcalError};

/// How to choose λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(untagged)]
pub enum Smoothing {
    Fixed(f64),
    #[default]
    #[serde(with = "gcv_tag")]
    Gcv,
}

mod gcv_tag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("gcv")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s.eq_ignore_ascii_case("gcv") {
            Ok(())
        } else {
            Err(D::Error::custom(format!("expected a number or \"gcv\", got {s:?}")))
        }
    }
}

impl std::str::FromStr for Smoothing {
    type Err = VolcalError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("gcv") {
            return Ok(Smoothing::Gcv);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| VolcalError::Config(format!("lambda must be a number or \"gcv\", got {s:?}")))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(VolcalError::Config(format!("lambda must be non-negative, got {v}")));
        }
        Ok(Smoothing::Fixed(v))
    }
}

/// Natural cubic spline through (xᵢ, gᵢ) with second derivatives γᵢ
/// (γ₀ = γₙ₋₁ = 0), extended linearly outside the sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCurve {
    x: Vec<f64>,
    g: Vec<f64>,
    gamma: Vec<f64>,
    pub lambda: f64,
    /// uᵢ − g(xᵢ) per site.
    pub residuals: Vec<f64>,
}

/// Q (n × (n−2), three nonzeros per column) and R ((n−2) × (n−2),
/// tridiagonal), stored by column and by diagonal.
struct Reinsch {
    q: Vec<[f64; 3]>,
    r_diag: Vec<f64>,
    r_off: Vec<f64>,
}

impl Reinsch {
    fn new(x: &[f64]) -> Self {
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m = x.len() - 2;
        Reinsch {
            q: (0..m)
                .map(|k| [1.0 / h[k], -1.0 / h[k] - 1.0 / h[k + 1], 1.0 / h[k + 1]])
                .collect(),
            r_diag: (0..m).map(|k| (h[k] + h[k + 1]) / 3.0).collect(),
            r_off: (0..m).map(|k| if k + 1 < m { h[k + 1] / 6.0 } else { 0.0 }).collect(),
        }
    }

    /// The three upper diagonals of QᵀQ.
    fn qtq(&self) -> [Vec<f64>; 3] {
        let m = self.q.len();
        let q = &self.q;
        let d0 = q.iter().map(|c| c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).collect();
        let d1 = (0..m)
            .map(|k| {
                if k + 1 < m {
                    q[k][1] * q[k + 1][0] + q[k][2] * q[k + 1][1]
                } else {
                    0.0
                }
            })
            .collect();
        let d2 = (0..m)
            .map(|k| if k + 2 < m { q[k][2] * q[k + 2][0] } else { 0.0 })
            .collect();
        [d0, d1, d2]
    }

    fn qt_mul(&self, u: &[f64]) -> Vec<f64> {
        self.q
            .iter()
            .enumerate()
            .map(|(k, c)| c[0] * u[k] + c[1] * u[k + 1] + c[2] * u[k + 2])
            .collect()
    }

    fn q_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len() + 2];
        for (k, (c, &vk)) in self.q.iter().zip(v).enumerate() {
            out[k] += c[0] * vk;
            out[k + 1] += c[1] * vk;
            out[k + 2] += c[2] * vk;
        }
        out
    }
}

/// LDLᵀ of a symmetric pentadiagonal matrix given by its upper diagonals.
struct BandLdl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl BandLdl {
    fn new(m0: &[f64], m1: &[f64], m2: &[f64]) -> Option<Self> {
        let n = m0.len();
        let (mut d, mut l1, mut l2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let mut di = m0[i];
            let mut off = m1[i];
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
                off -= l2[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            if !(di > 0.0) {
                return None;
            }
            d[i] = di;
            l1[i] = off / di;
            l2[i] = m2[i] / di;
        }
        Some(BandLdl { d, l1, l2 })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            if i >= 1 {
                y[i] -= self.l1[i - 1] * y[i - 1];
            }
            if i >= 2 {
                y[i] -= self.l2[i - 2] * y[i - 2];
            }
        }
        for (v, d) in y.iter_mut().zip(&self.d) {
            *v /= d;
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                y[i] -= self.l1[i] * y[i + 1];
            }
            if i + 2 < n {
                y[i] -= self.l2[i] * y[i + 2];
            }
        }
        y
    }

    /// Central five diagonals of the inverse (Hutchinson–de Hoog recursion).
    fn inverse_band(&self) -> [Vec<f64>; 3] {
        let n = self.d.len();
        let (mut s0, mut s1, mut s2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in (0..n).rev() {
            let (a, b) = (self.l1[i], self.l2[i]);
            let at = |v: &Vec<f64>, k: usize| if k < n { v[k] } else { 0.0 };
            s2[i] = -a * at(&s1, i + 1) - b * at(&s0, i + 2);
            s1[i] = -a * at(&s0, i + 1) - b * at(&s1, i + 1);
            s0[i] = 1.0 / self.d[i] - a * s1[i] - b * s2[i];
        }
        [s0, s1, s2]
    }
}

fn check_sites(x: &[f64], u: &[f64]) -> Result<()> {
    if x.len() != u.len() {
        return Err(VolcalError::GridMismatch {
            expected: x.len(),
            got: u.len(),
        });
    }
    if x.len() < 4 {
        return Err(VolcalError::TooFewQuotes {
            needed: 4,
            got: x.len(),
        });
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().chain(u).any(|v| !v.is_finite()) {
        return Err(VolcalError::domain(
            "spline sites must be finite and strictly increasing",
        ));
    }
    Ok(())
}

struct Fit {
    g: Vec<f64>,
    gamma: Vec<f64>,
    /// tr(I − A(λ)) with A the influence matrix.
    dof_residual: f64,
}

/// Solves (R + λQᵀQ)γ = Qᵀu, then g = u − λQγ; O(n) per λ.
fn fit(sys: &Reinsch, u: &[f64], lambda: f64, want_trace: bool) -> Result<Fit> {
    let p = sys.qtq();
    let m0: Vec<f64> = sys.r_diag.iter().zip(&p[0]).map(|(r, q)| r + lambda * q).collect();
    let m1: Vec<f64> = sys.r_off.iter().zip(&p[1]).map(|(r, q)| r + lambda * q).collect();
    let m2: Vec<f64> = p[2].iter().map(|q| lambda * q).collect();
    let ldl = BandLdl::new(&m0, &m1, &m2)
        .ok_or_else(|| VolcalError::domain(format!("smoothing system is not positive definite at lambda {lambda}")))?;
    let inner = ldl.solve(&sys.qt_mul(u));
    let g = u.iter().zip(sys.q_mul(&inner)).map(|(u, q)| u - lambda * q).collect();
    let n = u.len();
    let mut gamma = vec![0.0; n];
    gamma[1..n - 1].copy_from_slice(&inner);
    // tr(I − A) = λ·tr((R + λQᵀQ)⁻¹QᵀQ), which only needs the inverse's band
    let dof_residual = if want_trace {
        let s = ldl.inverse_band();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| a * b).sum::<f64>();
        lambda * (dot(&s[0], &p[0]) + 2.0 * dot(&s[1], &p[1]) + 2.0 * dot(&s[2], &p[2]))
    } else {
        f64::NAN
    };
    Ok(Fit { g, gamma, dof_residual })
}

/// GCV(λ) = n·RSS/tr(I − A(λ))² over λ = h̄³·10^k, k ∈ [−6, 8] in quarter steps.
pub fn gcv_scores(x: &[f64], u: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_sites(x, u)?;
    let sys = Reinsch::new(x);
    let n = x.len() as f64;
    let mean_h = (x[x.len() - 1] - x[0]) / (n - 1.0);
    (0..=56)
        .map(|k| {
            let lambda = mean_h.powi(3) * 10f64.powf(-6.0 + 0.25 * k as f64);
            let f = fit(&sys, u, lambda, true)?;
            let rss: f64 = f.g.iter().zip(u).map(|(g, u)| (u - g) * (u - g)).sum();
            Ok((lambda, n * rss / (f.dof_residual * f.dof_residual)))
        })
        .collect()
}

impl SmoothedCurve {
    pub fn fit(x: &[f64], u: &[f64], smoothing: Smoothing) -> Result<Self> {
        let lambda = match smoothing {
            Smoothing::Fixed(l) if l >= 0.0 && l.is_finite() => l,
            Smoothing::Fixed(l) => return Err(VolcalError::Config(format!("lambda must be non-negative, got {l}"))),
            Smoothing::Gcv => gcv_scores(x, u)?
                .into_iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(l, _)| l)
                .expect("non-empty lambda grid"),
        };
        check_sites(x, u)?;
        let f = fit(&Reinsch::new(x), u, lambda, false)?;
        let residuals = u.iter().zip(&f.g).map(|(u, g)| u - g).collect();
        Ok(SmoothedCurve {
            x: x.to_vec(),
            g: f.g,
            gamma: f.gamma,
            lambda,
            residuals,
        })
    }

    pub fn sites(&self) -> &[f64] {
        &self.x
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Interval index and the weights A = (x₁ − t)/h, B = (t − x₀)/h.
    fn locate(&self, t: f64) -> (usize, f64, f64, f64) {
        let n = self.x.len();
        let i = self.x.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        (i, (self.x[i + 1] - t) / h, (t - self.x[i]) / h, h)
    }

    fn end_slope(&self, left: bool) -> f64 {
        let n = self.x.len();
        let (i, t) = if left { (0, self.x[0]) } else { (n - 2, self.x[n - 1]) };
        let h = self.x[i + 1] - self.x[i];
        let (a, b) = ((self.x[i + 1] - t) / h, (t - self.x[i]) / h);
        self.slope_at(i, a, b, h)
    }

    fn slope_at(&self, i: usize, a: f64, b: f64, h: f64) -> f64 {
        (self.g[i + 1] - self.g[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * self.gamma[i]
            + (3.0 * b * b - 1.0) / 6.0 * h * self.gamma[i + 1]
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = self.range();
        if t < lo {
            return self.g[0] + (t - lo) * self.end_slope(true);
        }
        if t > hi {
            return self.g[self.g.len() - 1] + (t - hi) * self.end_slope(false);
        }
        let (i, a, b, h) = self.locate(t);
        a * self.g[i]
            + b * self.g[i + 1]
            + ((a * a * a - a) * self.gamma[i] + (b * b * b - b) * self.gamma[i + 1]) * h * h / 6.0
    }

    pub fn d1(&self, t: f64) -> f64 {
        let (lo, hi) = self.range();
        if t <= lo {
            return self.end_slope(true);
        }
        if t >= hi {
            return self.end_slope(false);
        }
        let (i, a, b, h) = self.locate(t);
        self.slope_at(i, a, b, h)
    }

    /// Piecewise linear in t, zero outside the sites.
    pub fn d2(&self, t: f64) -> f64 {
        let (lo, hi) = self.range();
        if t < lo || t > hi {
            return 0.0;
        }
        let (i, a, b, _) = self.locate(t);
        a * self.gamma[i] + b * self.gamma[i + 1]
    }
}
