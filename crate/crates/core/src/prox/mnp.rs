//! Projection onto the convex hull of finitely many points.
//!
//! `P_hull(r)` is computed as `r + x*`, where `x*` is the minimum-norm point of
//! the shifted hull `conv{g_i − r}`, using Wolfe's corral method. Generators
//! are accessed through [`HullGenerators`], so structured families (window
//! indicators) never need to be materialized.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::signal::{dot, Signal};

/// A finite family of vectors in `ℝ^dim`.
pub trait HullGenerators {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    /// `⟨g_i, x⟩`
    fn dot(&self, i: usize, x: &[f64]) -> f64;
    /// `⟨g_i, g_k⟩`
    fn gram(&self, i: usize, k: usize) -> f64;
    /// `out += coef · g_i`
    fn axpy(&self, i: usize, coef: f64, out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Explicit generator vectors.
#[derive(Debug, Clone, Copy)]
pub struct DenseGenerators<'a>(pub &'a [Signal]);

impl HullGenerators for DenseGenerators<'_> {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn dim(&self) -> usize {
        self.0.first().map_or(0, |g| g.len())
    }

    fn dot(&self, i: usize, x: &[f64]) -> f64 {
        dot(self.0[i].values(), x)
    }

    fn gram(&self, i: usize, k: usize) -> f64 {
        self.0[i].dot(&self.0[k])
    }

    fn axpy(&self, i: usize, coef: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(self.0[i].values()) {
            *o += coef * g;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MnpOptions {
    /// Relative optimality tolerance on `‖x‖² − min_i ⟨x, g_i − r⟩`,
    /// scaled by `max_i ‖g_i − r‖²`. Zero runs to working precision: the
    /// method then stops when the best vertex is already in the corral.
    pub tol: f64,
    /// Cap on major (vertex-adding) iterations.
    pub max_iter: usize,
}

impl Default for MnpOptions {
    fn default() -> Self {
        MnpOptions {
            tol: 0.0,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HullProjection {
    /// `z = Σ λ_i g_i`
    pub point: Signal,
    /// Convex weights, one per generator.
    pub coefficients: Vec<f64>,
    /// `max_i ⟨r − z, g_i − z⟩`; nonpositive at the exact projection.
    pub optimality_gap: f64,
    pub iterations: usize,
}

impl HullProjection {
    /// Generators carrying positive weight.
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Projects `r` onto `conv(generators)`.
pub fn min_norm_projection(r: &Signal, generators: &[Signal]) -> Result<HullProjection> {
    if let Some(g) = generators.iter().find(|g| g.shape() != r.shape()) {
        return Err(Error::ShapeMismatch {
            expected: r.shape().dims().to_vec(),
            actual: g.shape().dims().to_vec(),
        });
    }
    project_onto_hull(r, &DenseGenerators(generators), &MnpOptions::default())
}

struct Corral<'g, G: HullGenerators> {
    gens: &'g G,
    /// `⟨g_i, r⟩` for every generator.
    g_dot_r: Vec<f64>,
    members: Vec<usize>,
    weights: Vec<f64>,
}

impl<G: HullGenerators> Corral<'_, G> {
    /// Minimizer of `‖Σ α_i (g_i − r)‖²` over the affine hull of the corral.
    fn affine_minimizer(&self) -> Vec<f64> {
        let m = self.members.len();
        if m == 1 {
            return vec![1.0];
        }
        let s0 = self.members[0];
        let g00 = self.gens.gram(s0, s0);
        let k = m - 1;
        let mut d = DMatrix::<f64>::zeros(k, k);
        let mut c = DVector::<f64>::zeros(k);
        for a in 0..k {
            let sa = self.members[a + 1];
            let ga0 = self.gens.gram(sa, s0);
            for bb in a..k {
                let sb = self.members[bb + 1];
                let val = self.gens.gram(sa, sb) - ga0 - self.gens.gram(s0, sb) + g00;
                d[(a, bb)] = val;
                d[(bb, a)] = val;
            }
            // ⟨g_a − g_0, g_0 − r⟩
            c[a] = ga0 - self.g_dot_r[sa] - g00 + self.g_dot_r[s0];
        }
        let scale = d.diagonal().amax().max(f64::MIN_POSITIVE);
        let mu = match d.clone().cholesky() {
            Some(ch) => ch.solve(&(-&c)),
            None => d
                .svd(true, true)
                .solve(&(-&c), 1e-13 * scale)
                .unwrap_or_else(|_| DVector::zeros(k)),
        };
        let mut alpha = Vec::with_capacity(m);
        alpha.push(1.0 - mu.sum());
        alpha.extend(mu.iter().copied());
        alpha
    }

    fn point(&self, dim: usize) -> Vec<f64> {
        let mut z = vec![0.0; dim];
        for (&i, &w) in self.members.iter().zip(&self.weights) {
            self.gens.axpy(i, w, &mut z);
        }
        z
    }
}

/// Wolfe's minimum-norm-point method on `{g_i − r}`.
pub fn project_onto_hull<G: HullGenerators>(r: &Signal, gens: &G, opts: &MnpOptions) -> Result<HullProjection> {
    let m = gens.len();
    if m == 0 {
        return Err(Error::invalid("projection onto an empty hull"));
    }
    if gens.dim() != r.len() {
        return Err(Error::invalid(format!(
            "generators live in dimension {}, point in {}",
            gens.dim(),
            r.len()
        )));
    }
    let rv = r.values();
    let rr = r.norm_sq();
    let g_dot_r: Vec<f64> = (0..m).map(|i| gens.dot(i, rv)).collect();
    let sq_shifted = |i: usize| (gens.gram(i, i) - 2.0 * g_dot_r[i] + rr).max(0.0);
    let (start, max_sq) = (0..m).fold((0, 0.0f64), |(best, mx), i| {
        let s = sq_shifted(i);
        let best = if s < sq_shifted(best) { i } else { best };
        (best, mx.max(s))
    });
    let eps = opts.tol * max_sq.max(f64::MIN_POSITIVE);

    let mut corral = Corral {
        gens,
        g_dot_r,
        members: vec![start],
        weights: vec![1.0],
    };
    let mut in_corral = vec![false; m];
    in_corral[start] = true;

    let mut iterations = 0;
    let mut stalled = false;
    let mut prev_xx = f64::INFINITY;
    loop {
        let z = corral.point(rv.len());
        let x: Vec<f64> = z.iter().zip(rv).map(|(a, b)| a - b).collect();
        let xx = dot(&x, &x);
        // Each major cycle strictly shrinks ‖x‖ in exact arithmetic; a cycle
        // without progress means the remaining gap is rounding.
        if xx >= prev_xx {
            stalled = true;
        }
        prev_xx = xx;
        let xr = dot(&x, rv);
        // ⟨x, g_i − r⟩ for all i.
        let (entering, min_val) = (0..m)
            .map(|i| (i, gens.dot(i, &x) - xr))
            .fold((usize::MAX, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        let gap = xx - min_val;
        if gap <= eps || in_corral[entering] || stalled {
            let mut coefficients = vec![0.0; m];
            for (&i, &w) in corral.members.iter().zip(&corral.weights) {
                coefficients[i] = w;
            }
            return Ok(HullProjection {
                point: Signal::from_parts(z, r.shape().clone()),
                coefficients,
                optimality_gap: gap,
                iterations,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::SolverFailure {
                solver: "min-norm-point projection",
                iterations,
                residual: gap,
            });
        }
        iterations += 1;
        corral.members.push(entering);
        corral.weights.push(0.0);
        in_corral[entering] = true;

        // Minor cycle: move toward the affine minimizer until it lies inside.
        loop {
            let alpha = corral.affine_minimizer();
            if alpha.iter().all(|&a| a > 0.0) {
                corral.weights = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (&w, &a) in corral.weights.iter().zip(&alpha) {
                if a <= 0.0 && w - a > 0.0 {
                    theta = theta.min(w / (w - a));
                }
            }
            for (w, a) in corral.weights.iter_mut().zip(&alpha) {
                *w = theta * a + (1.0 - theta) * *w;
            }
            // Drop every member whose weight reached zero, always at least one.
            let min_pos = corral
                .weights
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            corral.weights[min_pos] = 0.0;
            let mut k = 0;
            while k < corral.members.len() {
                if corral.weights[k] <= 1e-15 {
                    in_corral[corral.members[k]] = false;
                    corral.members.swap_remove(k);
                    corral.weights.swap_remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = corral.weights.iter().sum();
            for w in &mut corral.weights {
                *w /= total;
            }
            if corral.members.len() == 1 {
                corral.weights[0] = 1.0;
                break;
            }
        }
        if !in_corral[entering] {
            // The entering vertex was expelled at once: no further progress is
            // possible at this precision. The next pass reports the point.
            stalled = true;
        }
    }
}
