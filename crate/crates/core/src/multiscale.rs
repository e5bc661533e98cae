//! Statistical multiscale constraint system.
//!
//! A [`WindowSystem`] holds every axis-aligned window of a set of sizes on an
//! image grid, each carrying a positive weight. For a candidate `v` and data
//! `y`, window `j` contributes `f_j(v) = |⟨w_j, v − y⟩|`, and the max penalty
//! is `θ(F_q(v)) = max(max_j f_j(v) − q, 0)`, where the trailing `0` stands for
//! the constant component appended to `F_q`. That component is never stored;
//! [`PenaltyEval::zero_active`] records whether it attains the max.
//!
//! Windows are ordered ascending by extent, then by offset (row-major), and
//! all reductions follow that order.

use crate::error::{Error, Result};
use crate::prox::mnp::HullGenerators;
use crate::signal::{Shape, Signal};

/// Relative tolerance for membership in the active set.
pub const ACTIVE_TOL_REL: f64 = 1e-10;

/// Weight given to a window of `k` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalingRule {
    /// `k^{-1/2}`: white noise of std σ has std σ on every window.
    #[default]
    InvSqrtSize,
    /// `1/k`: window means.
    InvSize,
    /// Plain window sums.
    Unit,
}

impl ScalingRule {
    pub fn weight(self, pixels: usize) -> f64 {
        match self {
            ScalingRule::InvSqrtSize => 1.0 / (pixels as f64).sqrt(),
            ScalingRule::InvSize => 1.0 / pixels as f64,
            ScalingRule::Unit => 1.0,
        }
    }
}

impl std::str::FromStr for ScalingRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inv-sqrt" | "inv-sqrt-size" => Ok(ScalingRule::InvSqrtSize),
            "inv" | "inv-size" | "mean" => Ok(ScalingRule::InvSize),
            "unit" | "sum" => Ok(ScalingRule::Unit),
            other => Err(Error::Config(format!("unknown scaling rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for ScalingRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScalingRule::InvSqrtSize => "inv-sqrt",
            ScalingRule::InvSize => "inv-size",
            ScalingRule::Unit => "unit",
        })
    }
}

/// One weighted window. `offset` and `extent` have one entry per image axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub offset: Vec<usize>,
    pub extent: Vec<usize>,
    pub scale: f64,
}

/// Internal rectangle in (row, col) coordinates; 1D images are a single row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Rect {
    pub r0: usize,
    pub c0: usize,
    pub h: usize,
    pub w: usize,
}

impl Rect {
    fn overlap(&self, o: &Rect) -> usize {
        let rows = (self.r0 + self.h).min(o.r0 + o.h).saturating_sub(self.r0.max(o.r0));
        let cols = (self.c0 + self.w).min(o.c0 + o.w).saturating_sub(self.c0.max(o.c0));
        rows * cols
    }
}

/// All windows of one extent.
#[derive(Debug, Clone)]
struct ScaleBlock {
    h: usize,
    w: usize,
    weight: f64,
    first: usize,
    pos_rows: usize,
    pos_cols: usize,
}

impl ScaleBlock {
    fn count(&self) -> usize {
        self.pos_rows * self.pos_cols
    }
}

#[derive(Debug, Clone)]
pub struct WindowSystem {
    shape: Shape,
    q: f64,
    rule: ScalingRule,
    blocks: Vec<ScaleBlock>,
    count: usize,
}

impl WindowSystem {
    /// All intervals of length `lmin..=lmax` on a signal of length `n`.
    pub fn build_1d(n: usize, lmin: usize, lmax: usize, q: f64, rule: ScalingRule) -> Result<Self> {
        if lmin < 1 || lmin > lmax || lmax > n {
            return Err(Error::invalid(format!(
                "window lengths need 1 <= lmin <= lmax <= n, got lmin={lmin} lmax={lmax} n={n}"
            )));
        }
        let shape = Shape::d1(n);
        let extents: Vec<(usize, usize)> = (lmin..=lmax).map(|l| (1, l)).collect();
        WindowSystem::from_extents(shape, &extents, q, rule)
    }

    /// All axis-aligned squares with side in `sizes` on an `h × w` image.
    pub fn build_2d(h: usize, w: usize, sizes: &[usize], q: f64, rule: ScalingRule) -> Result<Self> {
        let mut sizes = sizes.to_vec();
        sizes.sort_unstable();
        sizes.dedup();
        if sizes.is_empty() {
            return Err(Error::invalid("no window sizes given"));
        }
        if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > h.min(w)) {
            return Err(Error::invalid(format!("square of side {s} does not fit in {h}x{w}")));
        }
        let shape = Shape::new(&[h, w])?;
        let extents: Vec<(usize, usize)> = sizes.iter().map(|&s| (s, s)).collect();
        WindowSystem::from_extents(shape, &extents, q, rule)
    }

    fn from_extents(shape: Shape, extents: &[(usize, usize)], q: f64, rule: ScalingRule) -> Result<Self> {
        if !(q >= 0.0) || !q.is_finite() {
            return Err(Error::invalid(format!("constraint level q must be >= 0, got {q}")));
        }
        let (rows, cols) = shape.rows_cols();
        let mut blocks = Vec::with_capacity(extents.len());
        let mut first = 0;
        for &(h, w) in extents {
            let block = ScaleBlock {
                h,
                w,
                weight: rule.weight(h * w),
                first,
                pos_rows: rows - h + 1,
                pos_cols: cols - w + 1,
            };
            first += block.count();
            blocks.push(block);
        }
        Ok(WindowSystem {
            shape,
            q,
            rule,
            blocks,
            count: first,
        })
    }

    /// Number of windows `M`.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn with_q(&self, q: f64) -> Result<Self> {
        if !(q >= 0.0) || !q.is_finite() {
            return Err(Error::invalid(format!("constraint level q must be >= 0, got {q}")));
        }
        let mut ws = self.clone();
        ws.q = q;
        Ok(ws)
    }

    pub fn image_shape(&self) -> &Shape {
        &self.shape
    }

    pub fn scaling_rule(&self) -> ScalingRule {
        self.rule
    }

    pub fn num_scales(&self) -> usize {
        self.blocks.len()
    }

    fn locate(&self, j: usize) -> (&ScaleBlock, Rect) {
        let b = match self.blocks.binary_search_by(|b| b.first.cmp(&j)) {
            Ok(i) => &self.blocks[i],
            Err(i) => &self.blocks[i - 1],
        };
        let local = j - b.first;
        let rect = Rect {
            r0: local / b.pos_cols,
            c0: local % b.pos_cols,
            h: b.h,
            w: b.w,
        };
        (b, rect)
    }

    pub fn scale_of(&self, j: usize) -> f64 {
        self.locate(j).0.weight
    }

    pub fn window(&self, j: usize) -> Window {
        assert!(j < self.count, "window index {j} out of range");
        let (b, r) = self.locate(j);
        if self.shape.ndim() == 1 {
            Window {
                offset: vec![r.c0],
                extent: vec![r.w],
                scale: b.weight,
            }
        } else {
            Window {
                offset: vec![r.r0, r.c0],
                extent: vec![r.h, r.w],
                scale: b.weight,
            }
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = Window> + '_ {
        (0..self.count).map(move |j| self.window(j))
    }

    /// `⟨w_i, w_k⟩`
    pub fn window_inner(&self, i: usize, k: usize) -> f64 {
        let (bi, ri) = self.locate(i);
        let (bk, rk) = self.locate(k);
        bi.weight * bk.weight * ri.overlap(&rk) as f64
    }

    /// `⟨w_j, x⟩` by direct summation over the window.
    pub fn window_dot(&self, j: usize, x: &[f64]) -> f64 {
        let (b, r) = self.locate(j);
        let cols = self.shape.rows_cols().1;
        let mut acc = 0.0;
        for i in r.r0..r.r0 + r.h {
            acc += x[i * cols + r.c0..i * cols + r.c0 + r.w].iter().sum::<f64>();
        }
        b.weight * acc
    }

    /// `out += coef · w_j`
    pub fn window_axpy(&self, j: usize, coef: f64, out: &mut [f64]) {
        let (b, r) = self.locate(j);
        let cols = self.shape.rows_cols().1;
        let c = coef * b.weight;
        for i in r.r0..r.r0 + r.h {
            for x in &mut out[i * cols + r.c0..i * cols + r.c0 + r.w] {
                *x += c;
            }
        }
    }

    /// Dense copy of `w_j`.
    pub fn window_signal(&self, j: usize) -> Signal {
        let mut v = vec![0.0; self.shape.len()];
        self.window_axpy(j, 1.0, &mut v);
        Signal::from_parts(v, self.shape.clone())
    }

    /// `⟨w_j, x⟩` for every window, in canonical order, using one summed-area
    /// table: cost O(n + M).
    pub fn inner_products(&self, x: &[f64]) -> Vec<f64> {
        let (rows, cols) = self.shape.rows_cols();
        debug_assert_eq!(x.len(), rows * cols);
        let table = SummedArea::new(x, rows, cols);
        let mut out = Vec::with_capacity(self.count);
        for b in &self.blocks {
            for r0 in 0..b.pos_rows {
                for c0 in 0..b.pos_cols {
                    out.push(b.weight * table.rect_sum(r0, c0, b.h, b.w));
                }
            }
        }
        out
    }

    /// Audit manifest: one line per scale with extent, window count and weight.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "# window system: image {:?}, q = {}, scaling {}, M = {}\n",
            self.shape.dims(),
            self.q,
            self.rule,
            self.count
        ));
        s.push_str("# extent count scale\n");
        for b in &self.blocks {
            let extent = if self.shape.ndim() == 1 {
                format!("{}", b.w)
            } else {
                format!("{}x{}", b.h, b.w)
            };
            s.push_str(&format!("{extent} {} {}\n", b.count(), b.weight));
        }
        s
    }
}

/// Summed-area table with a zero guard row and column.
struct SummedArea {
    cols1: usize,
    table: Vec<f64>,
}

impl SummedArea {
    fn new(x: &[f64], rows: usize, cols: usize) -> Self {
        let cols1 = cols + 1;
        let mut table = vec![0.0; (rows + 1) * cols1];
        for i in 0..rows {
            let mut row_acc = 0.0;
            for j in 0..cols {
                row_acc += x[i * cols + j];
                table[(i + 1) * cols1 + j + 1] = table[i * cols1 + j + 1] + row_acc;
            }
        }
        SummedArea { cols1, table }
    }

    fn rect_sum(&self, r0: usize, c0: usize, h: usize, w: usize) -> f64 {
        let t = &self.table;
        let c = self.cols1;
        t[(r0 + h) * c + c0 + w] - t[r0 * c + c0 + w] - t[(r0 + h) * c + c0] + t[r0 * c + c0]
    }
}

/// Result of evaluating the max penalty at a point.
#[derive(Debug, Clone)]
pub struct PenaltyEval {
    /// `θ(F_q(v)) ≥ 0`
    pub theta: f64,
    /// Signed `⟨w_j, v − y⟩`; `f_j(v)` is the absolute value.
    pub inner: Vec<f64>,
    /// Active windows in canonical order.
    pub active: Vec<usize>,
    /// Whether the appended zero component attains the max.
    pub zero_active: bool,
}

impl PenaltyEval {
    pub fn value(&self, j: usize) -> f64 {
        self.inner[j].abs()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.inner.iter().map(|v| v.abs())
    }

    /// Signs of `⟨w_j, v − y⟩` over the active windows.
    pub fn inner_signs(&self) -> Vec<f64> {
        self.active.iter().map(|&j| self.inner[j].signum()).collect()
    }

    /// `|I(v)|` counting the zero component.
    pub fn active_len(&self) -> usize {
        self.active.len() + usize::from(self.zero_active)
    }

    pub fn max_value(&self) -> f64 {
        self.values().fold(0.0, f64::max)
    }
}

/// Evaluates `f_j`, `θ` and the active set `I(v)`.
pub fn eval_penalty(ws: &WindowSystem, v: &Signal, y: &Signal) -> Result<PenaltyEval> {
    v.check_shape(ws.image_shape())?;
    y.check_shape(ws.image_shape())?;
    let residual: Vec<f64> = v.values().iter().zip(y.values()).map(|(a, b)| a - b).collect();
    Ok(eval_residual(ws, &residual))
}

pub(crate) fn eval_residual(ws: &WindowSystem, residual: &[f64]) -> PenaltyEval {
    let inner = ws.inner_products(residual);
    penalty_from_inner(ws.q(), inner)
}

pub(crate) fn penalty_from_inner(q: f64, inner: Vec<f64>) -> PenaltyEval {
    let top = inner.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.abs() - q));
    let theta = top.max(0.0);
    let tol = ACTIVE_TOL_REL * (1.0 + theta);
    let active = inner
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() - q >= theta - tol)
        .map(|(j, _)| j)
        .collect();
    PenaltyEval {
        theta,
        inner,
        active,
        zero_active: theta <= tol,
    }
}

/// Implicit generators of `mult · ∂θ(F_q(v))`: signed, weighted window
/// indicators plus, when the zero component is active, the zero vector.
#[derive(Debug, Clone)]
pub struct ActiveGenerators<'a> {
    ws: &'a WindowSystem,
    windows: Vec<usize>,
    signs: Vec<f64>,
    include_zero: bool,
    mult: f64,
}

impl<'a> ActiveGenerators<'a> {
    pub fn new(ws: &'a WindowSystem, eval: &PenaltyEval, mult: f64) -> Result<Self> {
        let mut signs = Vec::with_capacity(eval.active.len());
        for &j in &eval.active {
            let s = eval.inner[j];
            if s == 0.0 {
                return Err(Error::Invariant(format!(
                    "active window {j} has zero inner product with the residual (q = {})",
                    ws.q()
                )));
            }
            signs.push(s.signum());
        }
        Ok(ActiveGenerators {
            ws,
            windows: eval.active.clone(),
            signs,
            include_zero: eval.zero_active,
            mult,
        })
    }

    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    pub fn includes_zero(&self) -> bool {
        self.include_zero
    }

    /// Window index behind generator `i`, `None` for the zero generator.
    pub fn window_of(&self, i: usize) -> Option<usize> {
        self.windows.get(i).copied()
    }

    pub fn to_dense(&self) -> Vec<Signal> {
        (0..self.len())
            .map(|i| {
                let mut v = vec![0.0; self.ws.image_shape().len()];
                self.axpy(i, 1.0, &mut v);
                Signal::from_parts(v, self.ws.image_shape().clone())
            })
            .collect()
    }
}

impl HullGenerators for ActiveGenerators<'_> {
    fn len(&self) -> usize {
        self.windows.len() + usize::from(self.include_zero)
    }

    fn dim(&self) -> usize {
        self.ws.image_shape().len()
    }

    fn dot(&self, i: usize, x: &[f64]) -> f64 {
        match self.windows.get(i) {
            Some(&j) => self.mult * self.signs[i] * self.ws.window_dot(j, x),
            None => 0.0,
        }
    }

    fn gram(&self, i: usize, k: usize) -> f64 {
        match (self.windows.get(i), self.windows.get(k)) {
            (Some(&a), Some(&b)) => {
                self.mult * self.mult * self.signs[i] * self.signs[k] * self.ws.window_inner(a, b)
            }
            _ => 0.0,
        }
    }

    fn axpy(&self, i: usize, coef: f64, out: &mut [f64]) {
        if let Some(&j) = self.windows.get(i) {
            self.ws.window_axpy(j, coef * self.mult * self.signs[i], out);
        }
    }
}

/// Dense generators `sign(⟨w_j, v−y⟩)·w_j` for `j ∈ I(v)`, plus the zero
/// vector when `θ = 0`. Their convex hull is `∂θ(F_q(v))`.
pub fn active_gradients(ws: &WindowSystem, eval: &PenaltyEval) -> Result<Vec<Signal>> {
    Ok(ActiveGenerators::new(ws, eval, 1.0)?.to_dense())
}

/// Windows whose constraint `f_j ≤ q` is violated.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub theta: f64,
    pub violated: Vec<usize>,
    pub max_violation: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violated.is_empty()
    }
}

pub fn feasibility(ws: &WindowSystem, v: &Signal, y: &Signal) -> Result<FeasibilityReport> {
    let eval = eval_penalty(ws, v, y)?;
    let q = ws.q();
    let violated: Vec<usize> = eval
        .inner
        .iter()
        .enumerate()
        .filter(|(_, s)| s.abs() > q)
        .map(|(j, _)| j)
        .collect();
    Ok(FeasibilityReport {
        theta: eval.theta,
        max_violation: eval.theta,
        violated,
    })
}
