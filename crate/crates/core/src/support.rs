//! Essential support of grid functions on arbitrary cell sets, the set `E⁺`,
//! and checks of the support calculus.
//!
//! A cell is in `supp f` when it lies in `E` and the ball of radius `2h`
//! around it contains an `E` cell with `|f| > τ`. Cells outside `E` play the
//! role of a null set: their values are never read.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Mode};
use crate::grid_table::{GridTable, GridTableError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SupportError {
    #[error(transparent)]
    Table(#[from] GridTableError),
    #[error("grids differ: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// A boolean set of cells on a regular grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    pub shape: Vec<usize>,
    pub cells: Vec<bool>,
}

impl CellSet {
    pub fn empty(shape: &[usize]) -> Self {
        CellSet {
            shape: shape.to_vec(),
            cells: vec![false; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize]) -> Self {
        CellSet {
            shape: shape.to_vec(),
            cells: vec![true; shape.iter().product()],
        }
    }

    pub fn from_fn<F: Fn(&[usize]) -> bool>(shape: &[usize], f: F) -> Self {
        let len = shape.iter().product();
        CellSet {
            shape: shape.to_vec(),
            cells: (0..len).map(|i| f(&unflatten(shape, i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|c| *c)
    }

    pub fn contains(&self, idx: &[usize]) -> bool {
        self.cells[flatten(&self.shape, idx)]
    }

    fn zip(&self, o: &CellSet, f: impl Fn(bool, bool) -> bool) -> CellSet {
        CellSet {
            shape: self.shape.clone(),
            cells: self.cells.iter().zip(&o.cells).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn union(&self, o: &CellSet) -> CellSet {
        self.zip(o, |a, b| a || b)
    }

    pub fn intersection(&self, o: &CellSet) -> CellSet {
        self.zip(o, |a, b| a && b)
    }

    /// Cells of `self` missing from `o`.
    pub fn difference(&self, o: &CellSet) -> CellSet {
        self.zip(o, |a, b| a && !b)
    }

    pub fn is_subset(&self, o: &CellSet) -> bool {
        self.difference(o).is_empty()
    }

    /// Multi-indices of member cells.
    pub fn indices(&self) -> Vec<Vec<usize>> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c)
            .map(|(i, _)| unflatten(&self.shape, i))
            .collect()
    }
}

fn unflatten(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

fn flatten(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &m)| acc * m + i)
}

/// Piecewise-constant function on the cells of `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    /// Values off `E` are ignored and may be NaN.
    pub values: Vec<f64>,
    pub domain: CellSet,
    pub tolerance: f64,
}

impl GridFunction {
    pub fn new(
        origin: Vec<f64>,
        spacing: Vec<f64>,
        values: Vec<f64>,
        domain: CellSet,
    ) -> Result<Self, SupportError> {
        let n = domain.shape.len();
        if n == 0 || origin.len() != n || spacing.len() != n {
            return Err(SupportError::InvalidGrid("axis counts differ".into()));
        }
        if spacing.iter().any(|h| !(*h > 0.0)) {
            return Err(SupportError::InvalidGrid("spacing must be positive".into()));
        }
        if values.len() != domain.cells.len() {
            return Err(SupportError::InvalidGrid(format!(
                "{} values for {} cells",
                values.len(),
                domain.cells.len()
            )));
        }
        Ok(GridFunction {
            origin,
            spacing,
            values,
            domain,
            tolerance: 0.0,
        })
    }

    /// Unit grid with origin 0.
    pub fn on_cells(values: Vec<f64>, domain: CellSet) -> Result<Self, SupportError> {
        let n = domain.shape.len();
        Self::new(vec![0.0; n], vec![1.0; n], values, domain)
    }

    pub fn with_tolerance(mut self, tau: f64) -> Self {
        self.tolerance = tau;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.domain.shape
    }

    /// Reads column `value` and, if present, `mask` (nonzero = in `E`).
    /// Without a mask, `E` is the set of cells with a defined value.
    pub fn from_table(t: &GridTable) -> Result<Self, SupportError> {
        let values = t.column("value")?;
        let cells = match t.column("mask") {
            Ok(m) => m.iter().map(|v| *v != 0.0 && !v.is_nan()).collect(),
            Err(_) => values.iter().map(|v| !v.is_nan()).collect(),
        };
        let domain = CellSet {
            shape: t.shape.clone(),
            cells,
        };
        if domain.cells.iter().zip(&values).any(|(e, v)| *e && !v.is_finite()) {
            return Err(SupportError::InvalidGrid("non-finite value inside E".into()));
        }
        Self::new(t.origin.clone(), t.spacing.clone(), values, domain)
    }

    pub fn to_table(&self) -> GridTable {
        let mut t = GridTable::new(
            self.shape().to_vec(),
            self.origin.clone(),
            self.spacing.clone(),
            vec!["value".into(), "mask".into()],
        )
        .expect("valid grid");
        t.rows = self
            .values
            .iter()
            .zip(&self.domain.cells)
            .map(|(v, e)| {
                if *e {
                    vec![*v, 1.0]
                } else {
                    vec![f64::NAN, 0.0]
                }
            })
            .collect();
        t
    }

    fn check_same_grid(&self, o: &GridFunction) -> Result<(), SupportError> {
        if self.domain != o.domain || self.spacing != o.spacing || self.origin != o.origin {
            return Err(SupportError::GridMismatch("functions live on different grids or domains".into()));
        }
        Ok(())
    }

    fn pointwise(&self, o: &GridFunction, tau: f64, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        GridFunction {
            values: self
                .values
                .iter()
                .zip(&o.values)
                .zip(&self.domain.cells)
                .map(|((a, b), e)| if *e { f(*a, *b) } else { f64::NAN })
                .collect(),
            tolerance: tau,
            ..self.clone()
        }
    }

    fn sup_on_domain(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.domain.cells)
            .filter(|(_, e)| **e)
            .fold(0.0f64, |m, (v, _)| m.max(v.abs()))
    }
}

/// Integer offsets within the ball of radius `2 max h`.
fn ball_offsets(spacing: &[f64]) -> Vec<Vec<i64>> {
    let n = spacing.len();
    let h = spacing.iter().cloned().fold(0.0, f64::max);
    let r2 = 4.0 * h * h;
    let reach: Vec<i64> = spacing.iter().map(|s| (2.0 * h / s).floor() as i64).collect();
    let mut out = Vec::new();
    let mut o: Vec<i64> = reach.iter().map(|r| -r).collect();
    loop {
        let d2: f64 = o.iter().zip(spacing).map(|(k, s)| (*k as f64 * s).powi(2)).sum();
        if d2 <= r2 * (1.0 + 1e-12) {
            out.push(o.clone());
        }
        let mut axis = 0;
        loop {
            if axis == n {
                return out;
            }
            o[axis] += 1;
            if o[axis] <= reach[axis] {
                break;
            }
            o[axis] = -reach[axis];
            axis += 1;
        }
    }
}

/// Cells whose `2h`-ball meets `target`, restricted to `within` when given.
fn dilate(target: &CellSet, spacing: &[f64], within: Option<&CellSet>, mode: Mode) -> CellSet {
    let shape = &target.shape;
    let offsets = ball_offsets(spacing);
    let cells = exec::map_range(mode, target.cells.len(), |flat| {
        if within.is_some_and(|w| !w.cells[flat]) {
            return false;
        }
        let idx = unflatten(shape, flat);
        offsets.iter().any(|o| {
            let mut nb = 0usize;
            for k in 0..shape.len() {
                let j = idx[k] as i64 + o[k];
                if j < 0 || j >= shape[k] as i64 {
                    return false;
                }
                nb = nb * shape[k] + j as usize;
            }
            target.cells[nb]
        })
    });
    CellSet {
        shape: shape.clone(),
        cells,
    }
}

/// Cells of `E` where `|f| > τ`.
pub fn nonzero_cells(f: &GridFunction) -> CellSet {
    CellSet {
        shape: f.shape().to_vec(),
        cells: f
            .values
            .iter()
            .zip(&f.domain.cells)
            .map(|(v, e)| *e && v.abs() > f.tolerance)
            .collect(),
    }
}

pub fn essential_support(f: &GridFunction) -> CellSet {
    essential_support_with(f, Mode::default())
}

pub fn essential_support_with(f: &GridFunction, mode: Mode) -> CellSet {
    dilate(&nonzero_cells(f), &f.spacing, Some(&f.domain), mode)
}

/// Discrete `E⁺` on a grid with the given spacing.
pub fn plus_set(e: &CellSet, spacing: &[f64]) -> CellSet {
    dilate(e, spacing, None, Mode::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawResult {
    pub law: String,
    pub pass: bool,
    /// At most eight offending cells.
    pub counterexamples: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub laws: Vec<LawResult>,
    pub pass: bool,
}

impl LawReport {
    pub fn get(&self, law: &str) -> Option<&LawResult> {
        self.laws.iter().find(|l| l.law == law)
    }
}

fn law(name: &str, offending: CellSet, note: Option<String>) -> LawResult {
    let counterexamples: Vec<_> = offending.indices().into_iter().take(8).collect();
    LawResult {
        law: name.into(),
        pass: counterexamples.is_empty(),
        counterexamples,
        note,
    }
}

fn indicator(f: &CellSet, domain: &GridFunction) -> GridFunction {
    GridFunction {
        values: f.cells.iter().map(|c| if *c { 1.0 } else { 0.0 }).collect(),
        tolerance: 0.0,
        ..domain.clone()
    }
}

/// Evaluate spt-1, spt-2, spt-4, spt-5, spt-6 and spt-aaa for `f`, `g`.
///
/// Products and sums are thresholded at `τ·max(sup|f|, sup|g|, τ)` and `2τ`,
/// which keeps the inclusions exact for `τ > 0`. The indicator law uses
/// `F = {|f| > τ}` and `F = {|g| > τ}`.
pub fn check_support_laws(f: &GridFunction, g: &GridFunction) -> Result<LawReport, SupportError> {
    f.check_same_grid(g)?;
    let e = &f.domain;
    let tau = f.tolerance.max(g.tolerance);
    let f = &f.clone().with_tolerance(tau);
    let g = &g.clone().with_tolerance(tau);
    let sf = essential_support(f);
    let sg = essential_support(g);
    let mut laws = Vec::new();

    let plus = plus_set(e, &f.spacing);
    laws.push(law("spt-1", sf.difference(&plus.intersection(e)), None));

    // f vanishes on E ∖ supp f
    let zero_off = nonzero_cells(f).difference(&sf);
    laws.push(law("spt-2", zero_off, None));

    // a.e.-equal data: f against itself with values off E replaced, and the
    // given pair when it agrees on E
    let mut scrambled = f.clone();
    for (v, inside) in scrambled.values.iter_mut().zip(&e.cells) {
        if !inside {
            *v = if v.is_nan() { 1.0 } else { f64::NAN };
        }
    }
    let mut off = essential_support(&scrambled)
        .union(&sf)
        .difference(&essential_support(&scrambled).intersection(&sf));
    let agree = f
        .values
        .iter()
        .zip(&g.values)
        .zip(&e.cells)
        .all(|((a, b), inside)| !inside || a == b);
    if agree {
        off = off.union(&sf.union(&sg).difference(&sf.intersection(&sg)));
    }
    laws.push(law(
        "spt-4",
        off,
        (!agree).then(|| "f and g differ on E; checked against f with values off E changed".into()),
    ));

    let prod_tau = tau * f.sup_on_domain().max(g.sup_on_domain()).max(tau);
    let fg = essential_support(&f.pointwise(g, prod_tau, |a, b| a * b));
    laws.push(law("spt-5", fg.difference(&sf.intersection(&sg)), None));

    let sum = essential_support(&f.pointwise(g, 2.0 * tau, |a, b| a + b));
    laws.push(law("spt-6", sum.difference(&sf.union(&sg)), None));

    let mut bad = CellSet::empty(&e.shape);
    for big_f in [nonzero_cells(f), nonzero_cells(g)] {
        let lhs = essential_support(&indicator(&big_f, f));
        let rhs = plus_set(&big_f, &f.spacing).intersection(e);
        bad = bad.union(&lhs.union(&rhs).difference(&lhs.intersection(&rhs)));
    }
    laws.push(law("spt-aaa", bad, None));

    let pass = laws.iter().all(|l| l.pass);
    Ok(LawReport { laws, pass })
}
