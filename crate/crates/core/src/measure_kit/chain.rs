//! Exact optimum of max Σ cₖgₖ subject to |gₖ| ≤ 1 and
//! |gₖ₊₁ − gₖ| ≤ pₖ₊₁ − pₖ, for sorted positions pₖ.
//!
//! Dynamic program over the chain: Vₖ(g) is the best partial objective with
//! gₖ = g. Each Vₖ is concave and piecewise linear on [−1,1]. Moving to the
//! next point replaces V by its sliding-window maximum of half-width d, which
//! pushes the increasing part left by d and the decreasing part right by d;
//! then the linear term cₖg is added. Breakpoints are stored as slope
//! decrements on either side of the plateau where the maximum is attained,
//! with lazy offsets for the shifts.

use std::collections::VecDeque;

struct Chain {
    // Innermost breakpoint at the back. (stored position, slope decrement)
    left: VecDeque<(f64, f64)>,
    left_off: f64,
    // Innermost breakpoint at the front.
    right: VecDeque<(f64, f64)>,
    right_off: f64,
    max: f64,
}

impl Chain {
    fn new() -> Self {
        Chain {
            left: VecDeque::new(),
            left_off: 0.0,
            right: VecDeque::new(),
            right_off: 0.0,
            max: 0.0,
        }
    }

    fn window(&mut self, d: f64) {
        self.left_off -= d;
        self.right_off += d;
        while let Some(&(b, _)) = self.left.front() {
            if b + self.left_off < -1.0 {
                self.left.pop_front();
            } else {
                break;
            }
        }
        while let Some(&(b, _)) = self.right.back() {
            if b + self.right_off > 1.0 {
                self.right.pop_back();
            } else {
                break;
            }
        }
    }

    fn add_linear(&mut self, c: f64) {
        if c > 0.0 {
            self.climb_right(c);
        } else if c < 0.0 {
            self.climb_left(-c);
        }
    }

    // Plateau slope becomes s > 0; walk right until the slope turns.
    fn climb_right(&mut self, mut s: f64) {
        let pr = self.right.front().map_or(1.0, |b| b.0 + self.right_off);
        let mut x = pr;
        let mut val = self.max + s * pr;
        loop {
            match self.right.front_mut() {
                Some(front) => {
                    let b = front.0 + self.right_off;
                    let a = front.1;
                    val += s * (b - x);
                    x = b;
                    let stored = b - self.left_off;
                    if a < s {
                        self.right.pop_front();
                        self.left.push_back((stored, a));
                        s -= a;
                    } else if a == s {
                        self.right.pop_front();
                        self.left.push_back((stored, a));
                        break;
                    } else {
                        front.1 = a - s;
                        self.left.push_back((stored, s));
                        break;
                    }
                }
                None => {
                    val += s * (1.0 - x);
                    self.left.push_back((1.0 - self.left_off, s));
                    break;
                }
            }
        }
        self.max = val;
    }

    // Plateau slope becomes −s < 0; walk left until the slope turns.
    fn climb_left(&mut self, mut s: f64) {
        let pl = self.left.back().map_or(-1.0, |b| b.0 + self.left_off);
        let mut x = pl;
        let mut val = self.max - s * pl;
        loop {
            match self.left.back_mut() {
                Some(back) => {
                    let b = back.0 + self.left_off;
                    let a = back.1;
                    val += s * (x - b);
                    x = b;
                    let stored = b - self.right_off;
                    if a < s {
                        self.left.pop_back();
                        self.right.push_front((stored, a));
                        s -= a;
                    } else if a == s {
                        self.left.pop_back();
                        self.right.push_front((stored, a));
                        break;
                    } else {
                        back.1 = a - s;
                        self.right.push_front((stored, s));
                        break;
                    }
                }
                None => {
                    val += s * (x + 1.0);
                    self.right.push_front((-1.0 - self.right_off, s));
                    break;
                }
            }
        }
        self.max = val;
    }
}

/// `atoms` must be sorted by position with distinct positions.
pub(crate) fn solve(atoms: &[(f64, f64)]) -> f64 {
    let mut chain = Chain::new();
    let mut prev = None;
    for &(p, c) in atoms {
        if let Some(q) = prev {
            chain.window(p - q);
        }
        chain.add_linear(c);
        prev = Some(p);
    }
    chain.max
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute force over g on a fine lattice for tiny instances.
    fn brute(atoms: &[(f64, f64)]) -> f64 {
        let steps = 400;
        let vals: Vec<f64> = (0..=steps)
            .map(|i| -1.0 + 2.0 * i as f64 / steps as f64)
            .collect();
        let mut best = vec![0.0; vals.len()];
        for (k, &(p, c)) in atoms.iter().enumerate() {
            let mut next = vec![f64::NEG_INFINITY; vals.len()];
            for (i, &g) in vals.iter().enumerate() {
                let base = if k == 0 {
                    0.0
                } else {
                    let d = p - atoms[k - 1].0;
                    vals.iter()
                        .zip(&best)
                        .filter(|(h, _)| (g - **h).abs() <= d + 1e-12)
                        .map(|(_, v)| *v)
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                next[i] = base + c * g;
            }
            best = next;
        }
        best.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn matches_lattice_search() {
        let cases: Vec<Vec<(f64, f64)>> = vec![
            vec![(0.0, 1.0), (1.0, -1.0)],
            vec![(0.0, 1.0), (1.0, -0.5)],
            vec![(0.1, 0.3), (0.4, -1.0), (0.6, 0.8)],
            vec![(0.0, -0.2), (0.25, 0.9), (0.5, -0.4), (0.75, 0.6), (1.0, -1.5)],
        ];
        for atoms in cases {
            let exact = solve(&atoms);
            let approx = brute(&atoms);
            assert!((exact - approx).abs() < 2e-2, "{atoms:?}: {exact} vs {approx}");
            assert!(exact >= approx - 1e-9);
        }
    }

    #[test]
    fn dirac_pair() {
        assert!((solve(&[(0.2, 1.0), (0.5, -1.0)]) - 0.3).abs() < 1e-15);
    }
}
