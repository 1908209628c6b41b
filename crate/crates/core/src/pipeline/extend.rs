//! Extension of data from ω̄ to Ω: a quintic smoothstep taper on
//! [b, b + (B − b)/2] and zero beyond.

use crate::error::{Result, VolcalError};
use crate::model::Grid;

/// 1 − (10t³ − 15t⁴ + 6t⁵) on [0, 1]; C² at both ends.
pub fn taper(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// Samples `curve` on every grid node, tapered to zero outside ω.
pub fn extend_data<F: Fn(f64) -> f64>(curve: F, grid: &Grid) -> Result<Vec<f64>> {
    let (b, big_b) = (grid.b(), grid.half_width());
    if !(big_b > b) {
        return Err(VolcalError::domain(format!(
            "outer half-width {big_b} must exceed b = {b}"
        )));
    }
    let blend = 0.5 * (big_b - b);
    Ok(grid
        .nodes()
        .iter()
        .map(|&y| {
            let w = taper((y.abs() - b) / blend);
            if w == 0.0 {
                0.0
            } else {
                w * curve(y)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_is_c2() {
        let h = 1e-4;
        for t in [0.0, 1.0] {
            let d1 = (taper(t + h) - taper(t - h)) / (2.0 * h);
            let d2 = (taper(t + h) - 2.0 * taper(t) + taper(t - h)) / (h * h);
            assert!(d1.abs() < 1e-6 && d2.abs() < 1e-2, "{t}: {d1} {d2}");
        }
        assert_eq!(taper(0.5), 0.5);
    }

    #[test]
    fn identical_on_omega_and_zero_at_edges() {
        let g = Grid::new(0.05, 0.3, 40).unwrap();
        let f = |y: f64| 1.0 + y.sin();
        let e = extend_data(f, &g).unwrap();
        for i in g.omega_range() {
            assert_eq!(e[i], f(g.node(i)));
        }
        let n = e.len();
        for k in 0..3 {
            assert_eq!(e[k], 0.0);
            assert_eq!(e[n - 1 - k], 0.0);
        }
    }
}
