//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Problems are stated with arbitrary variable bounds and mixed row
//! relations, then brought into standard form (`A y = b`, `y >= 0`) by
//! shifting finite lower bounds, mirroring variables that only have an
//! upper bound, splitting free variables into a positive and a negative
//! part, and turning finite upper bounds into rows. Meant for small dense
//! problems; every step is deterministic.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const MAX_ITERATIONS: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize objective . x` subject to the constraints and bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; meaningful only when optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u64,
}

impl LinearProgram {
    /// `n` free variables with zero objective.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn add(&mut self, coefs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { coefs, relation, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution> {
        StandardForm::build(self).and_then(|sf| sf.solve(self))
    }
}

#[derive(Debug, Clone, Copy)]
enum ColumnMap {
    Fixed(f64),
    /// x = offset + y
    Shifted { col: usize, offset: f64 },
    /// x = offset - y
    Mirrored { col: usize, offset: f64 },
    /// x = y+ - y-
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    maps: Vec<ColumnMap>,
    n_struct: usize,
    rows: Vec<(Vec<f64>, Relation, f64)>,
    costs: Vec<f64>,
    infeasible_bounds: bool,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Result<Self> {
        let n = lp.num_vars();
        if lp.lower.len() != n || lp.upper.len() != n {
            return Err(Error::Solver("bound vectors do not match variable count".into()));
        }
        let mut maps = Vec::with_capacity(n);
        let mut n_struct = 0;
        let mut upper_rows = Vec::new();
        let mut infeasible_bounds = false;
        for j in 0..n {
            let (l, u) = (lp.lower[j], lp.upper[j]);
            if l > u {
                infeasible_bounds = true;
            }
            let m = if l.is_finite() && u.is_finite() && l == u {
                ColumnMap::Fixed(l)
            } else if l.is_finite() {
                let col = n_struct;
                n_struct += 1;
                if u.is_finite() {
                    upper_rows.push((col, u - l));
                }
                ColumnMap::Shifted { col, offset: l }
            } else if u.is_finite() {
                let col = n_struct;
                n_struct += 1;
                ColumnMap::Mirrored { col, offset: u }
            } else {
                let pos = n_struct;
                n_struct += 2;
                ColumnMap::Split { pos, neg: pos + 1 }
            };
            maps.push(m);
        }

        let mut costs = vec![0.0; n_struct];
        for (j, &c) in lp.objective.iter().enumerate() {
            add_mapped(&mut costs, maps[j], c);
        }

        let mut rows = Vec::with_capacity(lp.constraints.len() + upper_rows.len());
        for con in &lp.constraints {
            let mut a = vec![0.0; n_struct];
            let mut rhs = con.rhs;
            for &(j, v) in &con.coefs {
                if j >= n {
                    return Err(Error::Solver(format!("constraint references variable {j}")));
                }
                rhs -= add_mapped(&mut a, maps[j], v);
            }
            rows.push((a, con.relation, rhs));
        }
        for (col, cap) in upper_rows {
            let mut a = vec![0.0; n_struct];
            a[col] = 1.0;
            rows.push((a, Relation::Le, cap));
        }
        Ok(StandardForm {
            maps,
            n_struct,
            rows,
            costs,
            infeasible_bounds,
        })
    }

    fn solve(self, lp: &LinearProgram) -> Result<LpSolution> {
        let n = lp.num_vars();
        if self.infeasible_bounds {
            return Ok(infeasible(n, 0));
        }
        let mut tab = Tableau::new(self.n_struct, self.rows);
        let mut iterations = 0;

        if tab.has_artificials() {
            tab.load_phase_one();
            match tab.run(&mut iterations)? {
                Pivoting::Optimal => {}
                Pivoting::Unbounded => {
                    return Err(Error::Solver("phase one reported unbounded".into()))
                }
            }
            let scale = 1.0 + tab.max_abs_rhs;
            if tab.obj_value() > 1e-7 * scale {
                return Ok(infeasible(n, iterations));
            }
            tab.expel_artificials();
        }
        tab.load_phase_two(&self.costs);
        let status = match tab.run(&mut iterations)? {
            Pivoting::Optimal => LpStatus::Optimal,
            Pivoting::Unbounded => LpStatus::Unbounded,
        };
        if status == LpStatus::Unbounded {
            return Ok(LpSolution {
                status,
                x: vec![0.0; n],
                objective: f64::NEG_INFINITY,
                iterations,
            });
        }
        let y = tab.primal();
        let x: Vec<f64> = self
            .maps
            .iter()
            .map(|m| match *m {
                ColumnMap::Fixed(v) => v,
                ColumnMap::Shifted { col, offset } => offset + y[col],
                ColumnMap::Mirrored { col, offset } => offset - y[col],
                ColumnMap::Split { pos, neg } => y[pos] - y[neg],
            })
            .collect();
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            status,
            x,
            objective,
            iterations,
        })
    }
}

/// Adds coefficient `v` of an original variable into standard-form columns,
/// returning the constant it contributes.
fn add_mapped(target: &mut [f64], map: ColumnMap, v: f64) -> f64 {
    match map {
        ColumnMap::Fixed(c) => v * c,
        ColumnMap::Shifted { col, offset } => {
            target[col] += v;
            v * offset
        }
        ColumnMap::Mirrored { col, offset } => {
            target[col] -= v;
            v * offset
        }
        ColumnMap::Split { pos, neg } => {
            target[pos] += v;
            target[neg] -= v;
            0.0
        }
    }
}

fn infeasible(n: usize, iterations: u64) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![0.0; n],
        objective: f64::INFINITY,
        iterations,
    }
}

enum Pivoting {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    width: usize,
    /// Row-major, `m` rows of `width` columns; the last column is the rhs.
    cells: Vec<f64>,
    /// Reduced-cost row; its last cell is minus the objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    first_artificial: usize,
    n_cols: usize,
    max_abs_rhs: f64,
}

impl Tableau {
    fn new(n_struct: usize, mut rows: Vec<(Vec<f64>, Relation, f64)>) -> Self {
        for (a, rel, b) in rows.iter_mut() {
            if *b < 0.0 {
                a.iter_mut().for_each(|v| *v = -*v);
                *b = -*b;
                *rel = match *rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }
        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let first_artificial = n_struct + n_slack;
        let n_cols = first_artificial + n_art;
        let width = n_cols + 1;
        let m = rows.len();
        let mut cells = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n_struct, first_artificial);
        let mut max_abs_rhs: f64 = 0.0;
        for (i, (a, rel, b)) in rows.into_iter().enumerate() {
            let row = &mut cells[i * width..(i + 1) * width];
            row[..n_struct].copy_from_slice(&a);
            row[n_cols] = b;
            max_abs_rhs = max_abs_rhs.max(b.abs());
            match rel {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Tableau {
            m,
            width,
            cells,
            obj: vec![0.0; width],
            basis,
            first_artificial,
            n_cols,
            max_abs_rhs,
        }
    }

    fn has_artificials(&self) -> bool {
        self.first_artificial < self.n_cols
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.width..(i + 1) * self.width]
    }

    fn obj_value(&self) -> f64 {
        -self.obj[self.n_cols]
    }

    fn load_phase_one(&mut self) {
        self.obj.iter_mut().for_each(|v| *v = 0.0);
        for c in self.first_artificial..self.n_cols {
            self.obj[c] = 1.0;
        }
        self.price_out_basis();
    }

    fn load_phase_two(&mut self, costs: &[f64]) {
        self.obj.iter_mut().for_each(|v| *v = 0.0);
        self.obj[..costs.len()].copy_from_slice(costs);
        self.price_out_basis();
        self.retire_artificials();
    }

    /// Zeroes artificial columns so they can never re-enter the basis.
    fn retire_artificials(&mut self) {
        for i in 0..self.m {
            let w = self.width;
            let rhs = self.cells[i * w + self.n_cols];
            for c in self.first_artificial..self.n_cols {
                self.cells[i * w + c] = 0.0;
            }
            self.cells[i * w + self.n_cols] = rhs;
        }
        for c in self.first_artificial..self.n_cols {
            self.obj[c] = 0.0;
        }
    }

    fn price_out_basis(&mut self) {
        for i in 0..self.m {
            let b = self.basis[i];
            let cb = self.obj[b];
            if cb != 0.0 {
                let w = self.width;
                for c in 0..w {
                    self.obj[c] -= cb * self.cells[i * w + c];
                }
            }
        }
    }

    fn run(&mut self, iterations: &mut u64) -> Result<Pivoting> {
        loop {
            let entering = (0..self.n_cols).find(|&c| self.obj[c] < -COST_TOL && !self.is_basic(c));
            let Some(col) = entering else {
                return Ok(Pivoting::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.cells[i * self.width + col];
                if a > PIVOT_TOL {
                    let ratio = self.cells[i * self.width + self.n_cols] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                            if ratio < best && !tie || tie && self.basis[i] < self.basis[r] {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Ok(Pivoting::Unbounded);
            };
            self.pivot(row, col);
            *iterations += 1;
            if *iterations > MAX_ITERATIONS {
                return Err(Error::Solver("iteration limit exceeded".into()));
            }
        }
    }

    fn is_basic(&self, c: usize) -> bool {
        self.basis.contains(&c)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.cells[row * w + col];
        for c in 0..w {
            self.cells[row * w + c] /= p;
        }
        self.cells[row * w + col] = 1.0;
        let pivot_row: Vec<f64> = self.row(row).to_vec();
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = self.cells[i * w + col];
            if f != 0.0 {
                for c in 0..w {
                    self.cells[i * w + c] -= f * pivot_row[c];
                }
                self.cells[i * w + col] = 0.0;
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for c in 0..w {
                self.obj[c] -= f * pivot_row[c];
            }
            self.obj[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// After phase one, pivots artificial variables out of the basis, or
    /// drops their rows when redundant.
    fn expel_artificials(&mut self) {
        let mut i = 0;
        while i < self.m {
            if self.basis[i] >= self.first_artificial {
                let w = self.width;
                let col = (0..self.first_artificial)
                    .find(|&c| self.cells[i * w + c].abs() > PIVOT_TOL && !self.is_basic(c));
                match col {
                    Some(c) => self.pivot(i, c),
                    None => {
                        self.cells.drain(i * w..(i + 1) * w);
                        self.basis.remove(i);
                        self.m -= 1;
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.m {
            y[self.basis[i]] = self.cells[i * self.width + self.n_cols].max(0.0);
        }
        y
    }
}
