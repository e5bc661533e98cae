//! Forward operators `A` and their adjoints.
//!
//! Convolution follows the convention
//! `(A u)[i] = Σ_k psf[k] · u[i − k + c]`, with `c` the PSF center, applied
//! per axis. The adjoint is the matching correlation
//! `(Aᵀ v)[j] = Σ_k psf[k] · v[j + k − c]`. Out-of-range indices wrap for
//! [`Boundary::Periodic`] and read as zero for [`Boundary::ZeroPad`].
//! Codomain and domain shapes coincide in both cases.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{Shape, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Periodic,
    ZeroPad,
}

impl std::str::FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "zero-pad" | "zeropad" | "zero" => Ok(Boundary::ZeroPad),
            other => Err(Error::Config(format!("unknown boundary `{other}`"))),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::ZeroPad => "zero-pad",
        })
    }
}

/// Which numerical route a convolution takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionPath {
    Auto,
    Direct,
    Fft,
}

#[derive(Debug, Clone)]
pub struct Convolution {
    psf: Signal,
    center: [usize; 2],
    boundary: Boundary,
    shape: Shape,
}

#[derive(Debug, Clone)]
pub enum LinearMap {
    Identity(Shape),
    Convolution(Arc<Convolution>),
}

/// Above this many multiply-adds the FFT route is used.
const DIRECT_WORK_LIMIT: usize = 1 << 15;

impl LinearMap {
    pub fn identity(shape: Shape) -> Self {
        LinearMap::Identity(shape)
    }

    /// Convolution by `psf` on signals of `shape`. `center` is the PSF origin
    /// (one index per axis); the PSF is used as given, not normalized.
    pub fn convolution(
        psf: Signal,
        center: &[usize],
        boundary: Boundary,
        shape: Shape,
    ) -> Result<Self> {
        if psf.shape().ndim() != shape.ndim() {
            return Err(Error::invalid(format!(
                "PSF is {}D but the image is {}D",
                psf.shape().ndim(),
                shape.ndim()
            )));
        }
        if center.len() != shape.ndim() {
            return Err(Error::invalid("PSF center needs one index per axis"));
        }
        let (kr, kc) = psf.shape().rows_cols();
        let (r, c) = shape.rows_cols();
        let center = if shape.ndim() == 1 {
            [0, center[0]]
        } else {
            [center[0], center[1]]
        };
        if kr > r || kc > c {
            return Err(Error::invalid(format!(
                "PSF {:?} larger than image {:?}",
                psf.shape().dims(),
                shape.dims()
            )));
        }
        if center[0] >= kr || center[1] >= kc {
            return Err(Error::invalid(format!(
                "PSF center {center:?} outside kernel {:?}",
                psf.shape().dims()
            )));
        }
        Ok(LinearMap::Convolution(Arc::new(Convolution {
            psf,
            center,
            boundary,
            shape,
        })))
    }

    /// Convolution with the PSF origin at the middle sample (`len/2` per axis).
    pub fn convolution_centered(psf: Signal, boundary: Boundary, shape: Shape) -> Result<Self> {
        let center: Vec<usize> = psf.shape().dims().iter().map(|d| d / 2).collect();
        LinearMap::convolution(psf, &center, boundary, shape)
    }

    pub fn domain_shape(&self) -> &Shape {
        match self {
            LinearMap::Identity(s) => s,
            LinearMap::Convolution(c) => &c.shape,
        }
    }

    pub fn codomain_shape(&self) -> &Shape {
        self.domain_shape()
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, LinearMap::Identity(_))
    }

    pub fn psf(&self) -> Option<&Signal> {
        match self {
            LinearMap::Identity(_) => None,
            LinearMap::Convolution(c) => Some(&c.psf),
        }
    }

    pub fn boundary(&self) -> Option<Boundary> {
        match self {
            LinearMap::Identity(_) => None,
            LinearMap::Convolution(c) => Some(c.boundary),
        }
    }

    /// Upper bound on the operator norm: the PSF's ℓ¹ norm (Young's inequality).
    pub fn norm_bound(&self) -> f64 {
        match self {
            LinearMap::Identity(_) => 1.0,
            LinearMap::Convolution(c) => c.psf.values().iter().map(|v| v.abs()).sum(),
        }
    }

    pub fn apply(&self, u: &Signal) -> Result<Signal> {
        self.apply_with(u, ConvolutionPath::Auto)
    }

    pub fn apply_adjoint(&self, v: &Signal) -> Result<Signal> {
        self.apply_adjoint_with(v, ConvolutionPath::Auto)
    }

    pub fn apply_with(&self, u: &Signal, path: ConvolutionPath) -> Result<Signal> {
        u.check_shape(self.domain_shape())?;
        Ok(match self {
            LinearMap::Identity(_) => u.clone(),
            LinearMap::Convolution(c) => c.run(u, false, path),
        })
    }

    pub fn apply_adjoint_with(&self, v: &Signal, path: ConvolutionPath) -> Result<Signal> {
        v.check_shape(self.codomain_shape())?;
        Ok(match self {
            LinearMap::Identity(_) => v.clone(),
            LinearMap::Convolution(c) => c.run(v, true, path),
        })
    }

    /// `AᵀA x`
    pub fn apply_normal(&self, x: &Signal) -> Result<Signal> {
        match self {
            LinearMap::Identity(_) => {
                x.check_shape(self.domain_shape())?;
                Ok(x.clone())
            }
            _ => self.apply_adjoint(&self.apply(x)?),
        }
    }
}

impl Convolution {
    fn run(&self, x: &Signal, adjoint: bool, path: ConvolutionPath) -> Signal {
        let use_fft = match path {
            ConvolutionPath::Direct => false,
            ConvolutionPath::Fft => true,
            ConvolutionPath::Auto => self.psf.len() * x.len() > DIRECT_WORK_LIMIT,
        };
        let values = if use_fft {
            self.fft(x.values(), adjoint)
        } else {
            self.direct(x.values(), adjoint)
        };
        Signal::from_parts(values, self.shape.clone())
    }

    fn direct(&self, x: &[f64], adjoint: bool) -> Vec<f64> {
        let (rows, cols) = self.shape.rows_cols();
        let (kr, kc) = self.psf.shape().rows_cols();
        let [cr, cc] = self.center;
        let psf = self.psf.values();
        let periodic = self.boundary == Boundary::Periodic;
        // Signed source index along one axis, wrapped or rejected.
        let resolve = |i: isize, n: usize| -> Option<usize> {
            if periodic {
                Some(i.rem_euclid(n as isize) as usize)
            } else if i >= 0 && (i as usize) < n {
                Some(i as usize)
            } else {
                None
            }
        };
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = 0.0;
                for a in 0..kr {
                    let si = if adjoint {
                        i as isize + a as isize - cr as isize
                    } else {
                        i as isize - a as isize + cr as isize
                    };
                    let Some(si) = resolve(si, rows) else { continue };
                    for b in 0..kc {
                        let sj = if adjoint {
                            j as isize + b as isize - cc as isize
                        } else {
                            j as isize - b as isize + cc as isize
                        };
                        let Some(sj) = resolve(sj, cols) else { continue };
                        acc += psf[a * kc + b] * x[si * cols + sj];
                    }
                }
                out[i * cols + j] = acc;
            }
        }
        out
    }

    fn fft(&self, x: &[f64], adjoint: bool) -> Vec<f64> {
        let (rows, cols) = self.shape.rows_cols();
        let (kr, kc) = self.psf.shape().rows_cols();
        let [cr, cc] = self.center;
        let psf = self.psf.values();
        match self.boundary {
            Boundary::Periodic => {
                // Kernel embedded so that index (k − c) mod N carries psf[k].
                let mut h = vec![Complex64::new(0.0, 0.0); rows * cols];
                for a in 0..kr {
                    let ia = (a + rows - cr) % rows;
                    for b in 0..kc {
                        let jb = (b + cols - cc) % cols;
                        h[ia * cols + jb].re += psf[a * kc + b];
                    }
                }
                let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                circular(&mut buf, &mut h, rows, cols, adjoint);
                buf.iter().map(|c| c.re).collect()
            }
            Boundary::ZeroPad => {
                let pr = if rows > 1 { rows + kr - 1 } else { 1 };
                let pc = cols + kc - 1;
                let mut h = vec![Complex64::new(0.0, 0.0); pr * pc];
                for a in 0..kr {
                    for b in 0..kc {
                        h[a * pc + b].re = psf[a * kc + b];
                    }
                }
                // Forward: data at the origin, output read at offset c.
                // Adjoint: data placed at offset c, output read at the origin.
                let (wr, wc, rr, rc) = if adjoint { (cr, cc, 0, 0) } else { (0, 0, cr, cc) };
                let mut buf = vec![Complex64::new(0.0, 0.0); pr * pc];
                for i in 0..rows {
                    for j in 0..cols {
                        buf[(i + wr) * pc + j + wc].re = x[i * cols + j];
                    }
                }
                circular(&mut buf, &mut h, pr, pc, adjoint);
                let mut out = vec![0.0; rows * cols];
                for i in 0..rows {
                    for j in 0..cols {
                        out[i * cols + j] = buf[(i + rr) * pc + j + rc].re;
                    }
                }
                out
            }
        }
    }
}

/// In-place circular convolution (or correlation when `conjugate`) of `buf`
/// with `kernel` on a rows × cols torus. `kernel` is overwritten.
fn circular(buf: &mut [Complex64], kernel: &mut [Complex64], rows: usize, cols: usize, conjugate: bool) {
    let mut planner = FftPlanner::<f64>::new();
    fft2(&mut planner, buf, rows, cols, false);
    fft2(&mut planner, kernel, rows, cols, false);
    let scale = 1.0 / (rows * cols) as f64;
    for (x, k) in buf.iter_mut().zip(kernel.iter()) {
        let k = if conjugate { k.conj() } else { *k };
        *x = *x * k * scale;
    }
    fft2(&mut planner, buf, rows, cols, true);
}

fn fft2(planner: &mut FftPlanner<f64>, data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let row_fft = if inverse {
        planner.plan_fft_inverse(cols)
    } else {
        planner.plan_fft_forward(cols)
    };
    for row in data.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    if rows > 1 {
        let col_fft = if inverse {
            planner.plan_fft_inverse(rows)
        } else {
            planner.plan_fft_forward(rows)
        };
        let mut column = vec![Complex64::new(0.0, 0.0); rows];
        for j in 0..cols {
            for i in 0..rows {
                column[i] = data[i * cols + j];
            }
            col_fft.process(&mut column);
            for i in 0..rows {
                data[i * cols + j] = column[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(v: &[f64]) -> Signal {
        Signal::from_vec(v.to_vec()).unwrap()
    }

    fn random_signal(rng: &mut ChaCha8Rng, shape: &Shape) -> Signal {
        let v = (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Signal::new(v, shape.clone()).unwrap()
    }

    /// Independent O(n²) oracle for the 1D periodic case: builds row i of the
    /// matrix by shifting the kernel.
    fn periodic_matrix_1d(psf: &[f64], center: usize, n: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for (k, &p) in psf.iter().enumerate() {
                let col = (i + n + center - k) % n;
                row[col] += p;
            }
        }
        m
    }

    #[test]
    fn identity_passthrough() {
        let a = LinearMap::identity(Shape::d1(3));
        assert_eq!(a.apply(&sig(&[1.0, 2.0, 3.0])).unwrap().values(), &[1.0, 2.0, 3.0]);
        let a = LinearMap::identity(Shape::d1(2));
        assert_eq!(a.apply_adjoint(&sig(&[5.0, 6.0])).unwrap().values(), &[5.0, 6.0]);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let a = LinearMap::convolution(sig(&[1.0, 0.0, 0.0, 0.0]), &[0], Boundary::Periodic, Shape::d1(4))
            .unwrap();
        let u = sig(&[1.0, 2.0, 3.0, 4.0]);
        for path in [ConvolutionPath::Direct, ConvolutionPath::Fft] {
            let out = a.apply_with(&u, path).unwrap();
            for (x, y) in out.values().iter().zip(u.values()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_tap_periodic_matches_matrix_oracle() {
        let psf = [0.5, 0.5, 0.0, 0.0];
        let m = periodic_matrix_1d(&psf, 0, 4);
        let u = [1.0, 0.0, 0.0, 0.0];
        let expected: Vec<f64> = m.iter().map(|row| row.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
        assert_eq!(expected, vec![0.5, 0.5, 0.0, 0.0]);
        let a = LinearMap::convolution(sig(&psf), &[0], Boundary::Periodic, Shape::d1(4)).unwrap();
        for path in [ConvolutionPath::Direct, ConvolutionPath::Fft] {
            let out = a.apply_with(&sig(&u), path).unwrap();
            for (x, y) in out.values().iter().zip(&expected) {
                assert!((x - y).abs() < 1e-14, "{path:?}");
            }
        }
    }

    #[test]
    fn asymmetric_adjoint_matches_correlation_oracle() {
        let n = 8;
        let psf = [0.7, 0.2, -0.1];
        let center = 1;
        let m = periodic_matrix_1d(&psf, center, n);
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        // Aᵀv via the transposed matrix.
        let expected: Vec<f64> = (0..n).map(|j| (0..n).map(|i| m[i][j] * v[i]).sum()).collect();
        let a = LinearMap::convolution(sig(&psf), &[center], Boundary::Periodic, Shape::d1(n)).unwrap();
        for path in [ConvolutionPath::Direct, ConvolutionPath::Fft] {
            let out = a.apply_adjoint_with(&sig(&v), path).unwrap();
            for (x, y) in out.values().iter().zip(&expected) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn symmetric_psf_is_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = Shape::d2(7, 6);
        let psf = Signal::new(vec![0.1, 0.2, 0.1, 0.2, 0.4, 0.2, 0.1, 0.2, 0.1], Shape::d2(3, 3)).unwrap();
        for boundary in [Boundary::Periodic, Boundary::ZeroPad] {
            let a = LinearMap::convolution_centered(psf.clone(), boundary, shape.clone()).unwrap();
            let v = random_signal(&mut rng, &shape);
            let av = a.apply(&v).unwrap();
            let atv = a.apply_adjoint(&v).unwrap();
            assert!(av.dist(&atv) < 1e-14);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = LinearMap::identity(Shape::d1(3));
        assert!(matches!(a.apply(&sig(&[1.0, 2.0])), Err(Error::ShapeMismatch { .. })));
        let c = LinearMap::convolution(sig(&[1.0, 1.0]), &[0], Boundary::ZeroPad, Shape::d1(5)).unwrap();
        assert!(c.apply_adjoint(&sig(&[1.0; 4])).is_err());
    }

    #[test]
    fn invalid_kernels_rejected() {
        assert!(LinearMap::convolution(sig(&[1.0; 6]), &[0], Boundary::Periodic, Shape::d1(5)).is_err());
        assert!(LinearMap::convolution(sig(&[1.0; 3]), &[3], Boundary::Periodic, Shape::d1(5)).is_err());
    }

    #[test]
    fn fft_and_direct_agree_up_to_64x64() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(h, w, kh, kw) in &[(64, 64, 7, 5), (33, 20, 4, 4), (1, 64, 1, 9)] {
            let shape = if h == 1 { Shape::d1(w) } else { Shape::d2(h, w) };
            let kshape = if h == 1 { Shape::d1(kw) } else { Shape::d2(kh, kw) };
            let psf = random_signal(&mut rng, &kshape);
            let center: Vec<usize> = kshape.dims().iter().map(|d| d / 3).collect();
            for boundary in [Boundary::Periodic, Boundary::ZeroPad] {
                let a = LinearMap::convolution(psf.clone(), &center, boundary, shape.clone()).unwrap();
                let u = random_signal(&mut rng, &shape);
                for adjoint in [false, true] {
                    let (d, f) = if adjoint {
                        (
                            a.apply_adjoint_with(&u, ConvolutionPath::Direct).unwrap(),
                            a.apply_adjoint_with(&u, ConvolutionPath::Fft).unwrap(),
                        )
                    } else {
                        (
                            a.apply_with(&u, ConvolutionPath::Direct).unwrap(),
                            a.apply_with(&u, ConvolutionPath::Fft).unwrap(),
                        )
                    };
                    assert!(d.dist(&f) <= 1e-10 * d.norm().max(1e-300), "{boundary:?} adj={adjoint}");
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn adjoint_identity_holds(seed in any::<u64>(), h in 1usize..9, w in 2usize..12,
                                  zero_pad in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = if h == 1 { Shape::d1(w) } else { Shape::d2(h, w) };
            let kdims: Vec<usize> = shape.dims().iter().map(|&d| rng.random_range(1..=d.min(4))).collect();
            let kshape = Shape::new(&kdims).unwrap();
            let psf = random_signal(&mut rng, &kshape);
            let center: Vec<usize> = kdims.iter().map(|&d| rng.random_range(0..d)).collect();
            let boundary = if zero_pad { Boundary::ZeroPad } else { Boundary::Periodic };
            let a = LinearMap::convolution(psf, &center, boundary, shape.clone()).unwrap();
            for _ in 0..4 {
                let u = random_signal(&mut rng, &shape);
                let v = random_signal(&mut rng, &shape);
                let lhs = a.apply(&u).unwrap().dot(&v);
                let rhs = u.dot(&a.apply_adjoint(&v).unwrap());
                prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + u.norm() * v.norm()));
            }
        }
    }
}
