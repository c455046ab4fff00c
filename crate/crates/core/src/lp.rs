//! Dense two-phase simplex for the small LPs that arise on activation regions.
//!
//! Problems have the form `min cᵀx  s.t.  A x ≤ b, E x = f` with `x` free.
//! Free variables are split as `x = x⁺ − x⁻`. Region LPs have a handful of
//! variables and at most a few hundred rows, so a dense tableau is adequate.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

thread_local! {
    static LP_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of LPs solved on the current thread so far.
pub fn lp_calls() -> u64 {
    LP_CALLS.with(Cell::get)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowKind {
    Le,
    Eq,
}

#[derive(Debug, Clone)]
pub(crate) struct LinearProgram<T> {
    n: usize,
    coeffs: Vec<T>,
    rhs: Vec<T>,
    kinds: Vec<RowKind>,
    objective: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
}

impl<T: Scalar> LinearProgram<T> {
    pub(crate) fn new(objective: Vec<T>) -> Self {
        Self {
            n: objective.len(),
            coeffs: Vec::new(),
            rhs: Vec::new(),
            kinds: Vec::new(),
            objective,
        }
    }

    pub(crate) fn push(&mut self, row: &[T], kind: RowKind, rhs: T) {
        debug_assert_eq!(row.len(), self.n);
        self.coeffs.extend_from_slice(row);
        self.rhs.push(rhs);
        self.kinds.push(kind);
    }

    pub(crate) fn le(&mut self, row: &[T], rhs: T) {
        self.push(row, RowKind::Le, rhs);
    }

    pub(crate) fn eq(&mut self, row: &[T], rhs: T) {
        self.push(row, RowKind::Eq, rhs);
    }

    fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub(crate) fn solve(&self) -> Result<LpOutcome<T>> {
        LP_CALLS.with(|c| c.set(c.get() + 1));
        let m = self.rows();
        let n = self.n;
        let n_slack = self.kinds.iter().filter(|&&k| k == RowKind::Le).count();
        let needs_art: Vec<bool> = (0..m)
            .map(|i| self.kinds[i] == RowKind::Eq || self.rhs[i] < T::zero())
            .collect();
        let n_art = needs_art.iter().filter(|&&a| a).count();
        let slack0 = 2 * n;
        let art0 = slack0 + n_slack;
        let cols = art0 + n_art;

        let mut tab = Tableau::new(m, cols);
        let mut slack = slack0;
        let mut art = art0;
        #[allow(clippy::needless_range_loop)]
        for i in 0..m {
            let row = &self.coeffs[i * n..(i + 1) * n];
            let sign = if self.rhs[i] < T::zero() { -T::one() } else { T::one() };
            for (k, &a) in row.iter().enumerate() {
                tab.set(i, k, sign * a);
                tab.set(i, n + k, -sign * a);
            }
            tab.set_rhs(i, sign * self.rhs[i]);
            if self.kinds[i] == RowKind::Le {
                tab.set(i, slack, sign);
                if !needs_art[i] {
                    tab.basis[i] = slack;
                }
                slack += 1;
            }
            if needs_art[i] {
                tab.set(i, art, T::one());
                tab.basis[i] = art;
                art += 1;
            }
        }

        let max_iter = 200 * (m + cols) + 1_000;
        if n_art > 0 {
            let mut cost = vec![T::zero(); cols];
            cost[art0..].iter_mut().for_each(|c| *c = T::one());
            tab.load_objective(&cost);
            // Phase one cannot be unbounded: its objective is bounded below by 0.
            tab.run(max_iter)?;
            let scale = self
                .rhs
                .iter()
                .fold(T::one(), |acc, &b| acc.max(b.abs()));
            if tab.objective_value() > T::lp_tol() * scale {
                return Ok(LpOutcome::Infeasible);
            }
            tab.drive_out(art0);
            for j in art0..cols {
                tab.blocked[j] = true;
            }
        }

        let mut cost = vec![T::zero(); cols];
        for k in 0..n {
            cost[k] = self.objective[k];
            cost[n + k] = -self.objective[k];
        }
        tab.load_objective(&cost);
        if !tab.run(max_iter)? {
            return Ok(LpOutcome::Unbounded);
        }

        let mut xs = vec![T::zero(); cols];
        for (i, &b) in tab.basis.iter().enumerate() {
            xs[b] = tab.rhs(i).max(T::zero());
        }
        let x: Vec<T> = (0..n).map(|k| xs[k] - xs[n + k]).collect();
        let value = x
            .iter()
            .zip(&self.objective)
            .map(|(&a, &b)| a * b)
            .sum();
        Ok(LpOutcome::Optimal { x, value })
    }
}

struct Tableau<T> {
    m: usize,
    cols: usize,
    /// `m` rows of `cols + 1` entries; the last entry is the right-hand side.
    t: Vec<T>,
    /// Reduced costs, then `-z` in the last entry.
    obj: Vec<T>,
    basis: Vec<usize>,
    blocked: Vec<bool>,
}

impl<T: Scalar> Tableau<T> {
    fn new(m: usize, cols: usize) -> Self {
        Self {
            m,
            cols,
            t: vec![T::zero(); m * (cols + 1)],
            obj: vec![T::zero(); cols + 1],
            basis: vec![usize::MAX; m],
            blocked: vec![false; cols],
        }
    }

    #[inline]
    fn width(&self) -> usize {
        self.cols + 1
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.t[i * self.width() + j]
    }

    fn set(&mut self, i: usize, j: usize, v: T) {
        let w = self.width();
        self.t[i * w + j] = v;
    }

    fn rhs(&self, i: usize) -> T {
        self.at(i, self.cols)
    }

    fn set_rhs(&mut self, i: usize, v: T) {
        let c = self.cols;
        self.set(i, c, v);
    }

    fn objective_value(&self) -> T {
        -self.obj[self.cols]
    }

    fn load_objective(&mut self, cost: &[T]) {
        let w = self.width();
        self.obj.iter_mut().for_each(|v| *v = T::zero());
        self.obj[..self.cols].copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == T::zero() {
                continue;
            }
            let row = &self.t[i * w..(i + 1) * w];
            for (o, &r) in self.obj.iter_mut().zip(row) {
                *o = *o - cb * r;
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.at(r, c);
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v = *v / p;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != T::zero() {
                for (v, &pv) in row.iter_mut().zip(prow.iter()) {
                    *v = *v - f * pv;
                }
                row[c] = T::zero();
            }
        }
        let f = self.obj[c];
        if f != T::zero() {
            for (v, &pv) in self.obj.iter_mut().zip(prow.iter()) {
                *v = *v - f * pv;
            }
            self.obj[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the loaded objective. Returns `false` when
    /// the objective is unbounded below.
    fn run(&mut self, max_iter: usize) -> Result<bool> {
        let cost_scale = self.obj[..self.cols]
            .iter()
            .fold(T::one(), |acc, &v| acc.max(v.abs()));
        let tol = T::lp_tol() * cost_scale;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            // Dantzig's rule; Bland's rule once progress stalls, to rule out cycling.
            let bland = degenerate_run > 50;
            let mut enter = None;
            let mut best = -tol;
            for j in 0..self.cols {
                if self.blocked[j] {
                    continue;
                }
                let d = self.obj[j];
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                return Ok(true);
            };

            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a <= T::pivot_tol() {
                    continue;
                }
                let ratio = self.rhs(i).max(T::zero()) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - T::lp_tol()
                            || (ratio <= br + T::lp_tol() && self.basis[i] < self.basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            if ratio <= T::lp_tol() {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
        Err(Error::Solver(format!(
            "simplex did not converge within {max_iter} iterations"
        )))
    }

    /// Pivots zero-level artificial variables out of the basis where possible.
    fn drive_out(&mut self, art0: usize) {
        for i in 0..self.m {
            if self.basis[i] < art0 {
                continue;
            }
            let mut best: Option<(usize, T)> = None;
            for j in 0..art0 {
                let a = self.at(i, j).abs();
                if a > T::pivot_tol() && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                self.pivot(i, j);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(o: LpOutcome<f64>) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn box_minimum() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.le(&[1.0, 0.0], 1.0);
        lp.le(&[-1.0, 0.0], 0.0);
        lp.le(&[0.0, 1.0], 1.0);
        lp.le(&[0.0, -1.0], 0.0);
        let (x, v) = optimal(lp.solve().unwrap());
        assert!(v.abs() < 1e-12);
        assert!(x[0].abs() < 1e-12 && x[1].abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // 2 <= x <= 3, 1 <= y <= 4, minimise -x - y
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.le(&[-1.0, 0.0], -2.0);
        lp.le(&[1.0, 0.0], 3.0);
        lp.le(&[0.0, -1.0], -1.0);
        lp.le(&[0.0, 1.0], 4.0);
        let (x, v) = optimal(lp.solve().unwrap());
        assert!((v + 7.0).abs() < 1e-12);
        assert!((x[0] - 3.0).abs() < 1e-12 && (x[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![0.0]);
        lp.le(&[1.0], 0.0);
        lp.le(&[-1.0], -1.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.le(&[-1.0], 0.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn equality_rows() {
        // x + y = 1, x, y >= 0, min x - y  -> (0, 1)
        let mut lp = LinearProgram::new(vec![1.0, -1.0]);
        lp.eq(&[1.0, 1.0], 1.0);
        lp.le(&[-1.0, 0.0], 0.0);
        lp.le(&[0.0, -1.0], 0.0);
        let (x, v) = optimal(lp.solve().unwrap());
        assert!((v + 1.0).abs() < 1e-12);
        assert!(x[0].abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.eq(&[1.0], 2.0);
        lp.eq(&[2.0], 4.0);
        let (x, _) = optimal(lp.solve().unwrap());
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Many constraints through the optimum at the origin.
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        for k in 0..40 {
            let a = (k as f64 * 0.07).cos();
            let b = (k as f64 * 0.07).sin();
            if a + b > 0.0 {
                lp.le(&[-a, -b], 0.0);
            }
        }
        lp.le(&[-1.0, 0.0], 0.0);
        lp.le(&[0.0, -1.0], 0.0);
        let (_, v) = optimal(lp.solve().unwrap());
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn f32_solves_small_problem() {
        let mut lp = LinearProgram::<f32>::new(vec![-1.0]);
        lp.le(&[1.0], 0.75);
        lp.le(&[-1.0], 0.0);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { x, .. } => assert!((x[0] - 0.75).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }
}
