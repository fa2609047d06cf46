//! Revised simplex for the metric LP, solved through its flow dual.
//!
//! Primal: max cᵀg s.t. gᵢ − gⱼ ≤ Dᵢⱼ for each allowed ordered pair, and
//! ±gᵢ ≤ 1. Dual: min Σ Dᵢⱼxᵢⱼ + Σ(uᵢ + vᵢ) s.t. Σ flows into each point
//! equal cᵢ, all variables ≥ 0, where xᵢⱼ has column eᵢ − eⱼ, uᵢ has eᵢ and
//! vᵢ has −eᵢ. Choosing uᵢ or vᵢ by the sign of cᵢ gives a feasible starting
//! basis, so no phase 1 is needed. The simplex multipliers of the optimal
//! basis are an optimal primal g, which is checked for feasibility before
//! the value is returned.
//!
//! Every basis is a network basis, so B⁻¹ has entries in {0, ±1} and the
//! dense update is exact up to the right-hand side.

use crate::error::{Error, Result};

/// Optimal value with the certificate that produced it.
#[derive(Clone, Debug)]
pub struct LpStats {
    pub value: f64,
    /// Optimal test function at the (sorted, merged) support points.
    pub g: Vec<f64>,
    pub pivots: usize,
    pub duality_gap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Col {
    Up(usize),
    Down(usize),
    Arc(usize, usize),
}

struct Problem<'a> {
    pos: &'a [f64],
    zeta: f64,
    all_pairs: bool,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.pos.len()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        let d = (self.pos[i] - self.pos[j]).abs();
        if self.zeta == 1.0 {
            d
        } else {
            d.powf(self.zeta)
        }
    }

    fn cost(&self, col: Col) -> f64 {
        match col {
            Col::Up(_) | Col::Down(_) => 1.0,
            Col::Arc(i, j) => self.dist(i, j),
        }
    }

    // Bland order: ground columns first, then arcs lexicographically.
    fn index(&self, col: Col) -> usize {
        let n = self.n();
        match col {
            Col::Up(i) => i,
            Col::Down(i) => n + i,
            Col::Arc(i, j) => 2 * n + i * n + j,
        }
    }

    fn reduced(&self, col: Col, y: &[f64]) -> f64 {
        match col {
            Col::Up(i) => 1.0 - y[i],
            Col::Down(i) => 1.0 + y[i],
            Col::Arc(i, j) => self.dist(i, j) - (y[i] - y[j]),
        }
    }

    fn for_each_col(&self, mut f: impl FnMut(Col) -> bool) {
        let n = self.n();
        for i in 0..n {
            if !f(Col::Up(i)) {
                return;
            }
        }
        for i in 0..n {
            if !f(Col::Down(i)) {
                return;
            }
        }
        if self.all_pairs {
            for i in 0..n {
                for j in 0..n {
                    if i != j && !f(Col::Arc(i, j)) {
                        return;
                    }
                }
            }
        } else {
            for i in 0..n {
                if i > 0 && !f(Col::Arc(i, i - 1)) {
                    return;
                }
                if i + 1 < n && !f(Col::Arc(i, i + 1)) {
                    return;
                }
            }
        }
    }
}

const PRICE_EPS: f64 = 1e-11;
const PIVOT_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-9;

pub(crate) fn solve(pos: &[f64], c: &[f64], zeta: f64, all_pairs: bool) -> Result<LpStats> {
    let n = pos.len();
    if n == 0 {
        return Ok(LpStats {
            value: 0.0,
            g: Vec::new(),
            pivots: 0,
            duality_gap: 0.0,
        });
    }
    let prob = Problem {
        pos,
        zeta,
        all_pairs,
    };

    let mut basis: Vec<Col> = Vec::with_capacity(n);
    let mut binv = vec![0.0; n * n];
    let mut xb = vec![0.0; n];
    for i in 0..n {
        if c[i] >= 0.0 {
            basis.push(Col::Up(i));
            binv[i * n + i] = 1.0;
        } else {
            basis.push(Col::Down(i));
            binv[i * n + i] = -1.0;
        }
        xb[i] = c[i].abs();
    }
    let mut y = vec![0.0; n];
    refresh_duals(&prob, &basis, &binv, &mut y);

    let max_pivots = 200 * n + 1000;
    let mut pivots = 0;
    let mut degenerate_run = 0;
    let mut d = vec![0.0; n];
    let mut row_p = vec![0.0; n];
    loop {
        let bland = degenerate_run > 2 * n + 10;
        let mut enter: Option<(Col, f64)> = None;
        prob.for_each_col(|col| {
            let r = prob.reduced(col, &y);
            if r < -PRICE_EPS {
                if bland {
                    enter = Some((col, r));
                    return false;
                }
                if enter.is_none_or(|(_, best)| r < best) {
                    enter = Some((col, r));
                }
            }
            true
        });
        let Some((q, rq)) = enter else { break };

        // d = B⁻¹ a_q
        for (r, dr) in d.iter_mut().enumerate() {
            let row = &binv[r * n..(r + 1) * n];
            *dr = match q {
                Col::Up(i) => row[i],
                Col::Down(i) => -row[i],
                Col::Arc(i, j) => row[i] - row[j],
            };
        }

        let mut leave: Option<(usize, f64)> = None;
        for r in 0..n {
            if d[r] > PIVOT_EPS {
                let theta = xb[r].max(0.0) / d[r];
                let better = match leave {
                    None => true,
                    Some((p, t)) => {
                        if theta < t - 1e-15 {
                            true
                        } else if theta <= t + 1e-15 {
                            if bland {
                                prob.index(basis[r]) < prob.index(basis[p])
                            } else {
                                d[r] > d[p]
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((r, theta));
                }
            }
        }
        let Some((p, theta)) = leave else {
            return Err(Error::Solver("unbounded dual ray".into()));
        };

        for r in 0..n {
            if r != p {
                xb[r] -= theta * d[r];
                if xb[r] < 0.0 && xb[r] > -1e-12 {
                    xb[r] = 0.0;
                }
            }
        }
        xb[p] = theta;

        let dp = d[p];
        row_p.copy_from_slice(&binv[p * n..(p + 1) * n]);
        let t = rq / dp;
        for (yk, rk) in y.iter_mut().zip(&row_p) {
            *yk += t * rk;
        }
        for v in row_p.iter_mut() {
            *v /= dp;
        }
        binv[p * n..(p + 1) * n].copy_from_slice(&row_p);
        for r in 0..n {
            if r != p && d[r] != 0.0 {
                let dr = d[r];
                let row = &mut binv[r * n..(r + 1) * n];
                for (v, rp) in row.iter_mut().zip(&row_p) {
                    *v -= dr * rp;
                }
            }
        }
        basis[p] = q;

        if theta <= 1e-15 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        pivots += 1;
        if pivots % 64 == 0 {
            refresh_duals(&prob, &basis, &binv, &mut y);
        }
        if pivots > max_pivots {
            return Err(Error::Solver(format!(
                "no optimum after {pivots} pivots on {n} points"
            )));
        }
    }

    refresh_duals(&prob, &basis, &binv, &mut y);
    for (r, x) in xb.iter_mut().enumerate() {
        *x = (0..n).map(|k| binv[r * n + k] * c[k]).sum();
    }
    certify(&prob, c, &basis, &xb, y, pivots)
}

fn refresh_duals(prob: &Problem, basis: &[Col], binv: &[f64], y: &mut [f64]) {
    let n = prob.n();
    y.iter_mut().for_each(|v| *v = 0.0);
    for (r, &col) in basis.iter().enumerate() {
        let cb = prob.cost(col);
        for k in 0..n {
            y[k] += cb * binv[r * n + k];
        }
    }
}

fn certify(
    prob: &Problem,
    c: &[f64],
    basis: &[Col],
    xb: &[f64],
    y: Vec<f64>,
    pivots: usize,
) -> Result<LpStats> {
    let n = prob.n();
    let scale = 1.0 + c.iter().map(|v| v.abs()).sum::<f64>();
    if let Some(x) = xb.iter().find(|x| **x < -FEAS_EPS * scale) {
        return Err(Error::Solver(format!("negative basic flow {x}")));
    }
    if let Some(v) = y.iter().find(|v| v.abs() > 1.0 + FEAS_EPS) {
        return Err(Error::Solver(format!("test function value {v} outside [-1,1]")));
    }
    // Hölder constraints on every pair, even when only consecutive arcs were
    // priced: for ζ = 1 that checks the reduction as well.
    let pairs_ok = if prob.all_pairs || n <= 512 {
        (0..n).all(|i| (i + 1..n).all(|j| (y[i] - y[j]).abs() <= prob.dist(i, j) + FEAS_EPS))
    } else {
        (1..n).all(|i| (y[i] - y[i - 1]).abs() <= prob.dist(i, i - 1) + FEAS_EPS)
    };
    if !pairs_ok {
        return Err(Error::Solver("test function violates the Hölder bound".into()));
    }
    let primal: f64 = c.iter().zip(&y).map(|(a, b)| a * b).sum();
    let dual: f64 = basis.iter().zip(xb).map(|(&col, x)| prob.cost(col) * x).sum();
    let gap = (primal - dual).abs();
    if gap > FEAS_EPS * scale {
        return Err(Error::Solver(format!("duality gap {gap}")));
    }
    Ok(LpStats {
        value: primal.max(0.0),
        g: y,
        pivots,
        duality_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair() {
        let s = solve(&[0.0, 0.25], &[1.0, -1.0], 0.5, true).unwrap();
        assert!((s.value - 0.5).abs() < 1e-12);
        let s = solve(&[0.0, 1.0], &[1.0, -1.0], 1.0, false).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_constraint_binds_for_far_points_with_small_zeta() {
        // |1 - 0|^0.1 = 1 so the pair separation caps below 2.
        let s = solve(&[0.0, 1.0], &[1.0, -1.0], 0.1, true).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn certificate_is_feasible() {
        let pos = [0.0, 0.1, 0.35, 0.6, 0.61, 0.9];
        let c = [0.4, -0.9, 0.3, 0.7, -0.2, -0.6];
        for (zeta, all) in [(1.0, false), (1.0, true), (0.5, true)] {
            let s = solve(&pos, &c, zeta, all).unwrap();
            assert!(s.g.iter().all(|v| v.abs() <= 1.0 + 1e-9));
            let obj: f64 = c.iter().zip(&s.g).map(|(a, b)| a * b).sum();
            assert!((obj - s.value).abs() < 1e-9);
        }
        let a = solve(&pos, &c, 1.0, false).unwrap().value;
        let b = solve(&pos, &c, 1.0, true).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }
}
