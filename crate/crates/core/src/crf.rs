//! Fully connected CRF refinement of per-plane class probabilities.
//!
//! Unary `U_i(l) = -ln max(p_i(l), 1e-8)`; Potts pairwise terms weighted by
//! a spatial Gaussian kernel and a bilateral (position + intensity) kernel.
//! The mean-field update is
//! `Q_i(l) ∝ exp(-U_i(l) + Σ_{j≠i} k(i,j) Q_j(l))`, evaluated exactly over
//! all pixel pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::autograd::gemm;
use crate::volume::{argmax_plane, ImageStack, LabelMap, ProbMap, Task};

const PROB_FLOOR: f64 = 1e-8;
/// Largest plane (in pixels) whose kernel matrix is cached.
const DENSE_LIMIT: usize = 64 * 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfParams {
    pub w_smooth: f64,
    pub w_appearance: f64,
    pub theta_spatial: f64,
    pub theta_bilateral_spatial: f64,
    pub theta_bilateral_intensity: f64,
    pub iterations: usize,
}

impl Default for CrfParams {
    fn default() -> Self {
        Self {
            w_smooth: 1.0,
            w_appearance: 0.5,
            theta_spatial: 1.0,
            theta_bilateral_spatial: 2.0,
            theta_bilateral_intensity: 0.05,
            iterations: 5,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_smooth", self.w_smooth), ("w_appearance", self.w_appearance)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be a non-negative number"));
            }
        }
        for (name, v) in [
            ("theta_spatial", self.theta_spatial),
            ("theta_bilateral_spatial", self.theta_bilateral_spatial),
            ("theta_bilateral_intensity", self.theta_bilateral_intensity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        Ok(())
    }
}

struct Kernel<'a> {
    params: &'a CrfParams,
    image: &'a [f32],
    width: usize,
}

impl Kernel<'_> {
    fn eval(&self, i: usize, j: usize) -> f64 {
        let p = self.params;
        let (yi, xi) = ((i / self.width) as f64, (i % self.width) as f64);
        let (yj, xj) = ((j / self.width) as f64, (j % self.width) as f64);
        let d2 = (yi - yj).powi(2) + (xi - xj).powi(2);
        let mut k = 0.0;
        if p.w_smooth > 0.0 {
            k += p.w_smooth * (-d2 / (2.0 * p.theta_spatial * p.theta_spatial)).exp();
        }
        if p.w_appearance > 0.0 {
            let di = (self.image[i] - self.image[j]) as f64;
            let e = d2 / (2.0 * p.theta_bilateral_spatial.powi(2))
                + di * di / (2.0 * p.theta_bilateral_intensity.powi(2));
            k += p.w_appearance * (-e).exp();
        }
        k
    }

    /// Fill `k` with the symmetric `[N][N]` kernel matrix (zero diagonal).
    /// The spatial factors depend only on the pixel offset and are tabulated.
    fn matrix(&self, height: usize, k: &mut Vec<f64>) {
        let p = self.params;
        let (w, n) = (self.width, height * self.width);
        let table = |weight: f64, theta: f64| -> Vec<f64> {
            let mut t = vec![0.0; height * w];
            if weight > 0.0 {
                for dy in 0..height {
                    for dx in 0..w {
                        let d2 = (dy * dy + dx * dx) as f64;
                        t[dy * w + dx] = weight * (-d2 / (2.0 * theta * theta)).exp();
                    }
                }
            }
            t
        };
        let smooth = table(p.w_smooth, p.theta_spatial);
        let appearance = table(p.w_appearance, p.theta_bilateral_spatial);
        let inv = 1.0 / (2.0 * p.theta_bilateral_intensity.powi(2));
        k.resize(n * n, 0.0);
        for i in 0..n {
            k[i * n + i] = 0.0;
        }
        // lower triangle row by row, then mirror in cache-sized blocks
        for i in 1..n {
            let (yi, xi) = (i / w, i % w);
            let ii = self.image[i];
            for yj in 0..=yi {
                let dy = (yi - yj) * w;
                let end = if yj == yi { xi } else { w };
                let cells = &mut k[i * n + yj * w..i * n + yj * w + end];
                let pixels = &self.image[yj * w..yj * w + end];
                for (xj, (v, &ij)) in cells.iter_mut().zip(pixels).enumerate() {
                    let off = dy + xi.abs_diff(xj);
                    *v = smooth[off];
                    if p.w_appearance > 0.0 {
                        let di = (ii - ij) as f64;
                        *v += appearance[off] * (-di * di * inv).exp();
                    }
                }
            }
        }
        const BLOCK: usize = 64;
        for bi in (0..n).step_by(BLOCK) {
            for bj in (0..=bi).step_by(BLOCK) {
                for i in bi..(bi + BLOCK).min(n) {
                    for j in bj..(bj + BLOCK).min(i) {
                        k[j * n + i] = k[i * n + j];
                    }
                }
            }
        }
    }
}

fn check_inputs(probs: &[f64], image: &[f32], n_classes: usize, height: usize, width: usize) -> Result<()> {
    let n = height * width;
    if image.len() != n || probs.len() != n_classes * n {
        return Err(Error::Shape(format!(
            "{} probabilities and {} intensities for a {height}x{width} plane with {n_classes} classes",
            probs.len(),
            image.len()
        )));
    }
    for i in 0..n {
        let mut s = 0.0;
        for l in 0..n_classes {
            let v = probs[l * n + i];
            if !(v >= -1e-12) || !v.is_finite() {
                return Err(Error::invalid("probs", format!("pixel {i} has probability {v}")));
            }
            s += v;
        }
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("probs", format!("pixel {i} sums to {s}")));
        }
    }
    Ok(())
}

/// Variational distribution `[C][H*W]` after every iteration (the first
/// element is the initialisation `softmax(-U)`).
pub fn refine_trace(
    probs: &[f64],
    image: &[f32],
    n_classes: usize,
    height: usize,
    width: usize,
    params: &CrfParams,
) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    check_inputs(probs, image, n_classes, height, width)?;
    let n = height * width;
    let unary: Vec<f64> = probs.iter().map(|&p| -p.max(PROB_FLOOR).ln()).collect();
    let mut q = vec![0.0; n_classes * n];
    normalise(&mut q, &unary, None, n_classes, n);
    let mut trace = vec![q.clone()];
    if params.iterations == 0 || (params.w_smooth == 0.0 && params.w_appearance == 0.0) {
        return Ok(trace);
    }
    let kernel = Kernel { params, image, width };
    if n > DENSE_LIMIT {
        iterate(&kernel, None, &unary, &mut q, &mut trace, n_classes, n);
    } else {
        // reused across planes so the 128 MiB matrix is not re-faulted each time
        KERNEL_BUF.with_borrow_mut(|buf| {
            kernel.matrix(height, buf);
            iterate(&kernel, Some(buf), &unary, &mut q, &mut trace, n_classes, n);
        });
    }
    Ok(trace)
}

thread_local! {
    static KERNEL_BUF: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn iterate(
    kernel: &Kernel,
    dense: Option<&[f64]>,
    unary: &[f64],
    q: &mut Vec<f64>,
    trace: &mut Vec<Vec<f64>>,
    n_classes: usize,
    n: usize,
) {
    let mut msg = vec![0.0; n_classes * n];
    for _ in 0..kernel.params.iterations {
        match dense {
            // msg[C,N] = Q[C,N] · K[N,N] (K symmetric)
            Some(k) => gemm(n_classes, n, n, q, false, k, false, 0.0, &mut msg),
            None => {
                for i in 0..n {
                    for l in 0..n_classes {
                        msg[l * n + i] = 0.0;
                    }
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        let kij = kernel.eval(i, j);
                        for l in 0..n_classes {
                            msg[l * n + i] += kij * q[l * n + j];
                        }
                    }
                }
            }
        }
        normalise(q, unary, Some(&msg), n_classes, n);
        trace.push(q.clone());
    }
}

fn normalise(q: &mut [f64], unary: &[f64], msg: Option<&[f64]>, n_classes: usize, n: usize) {
    let mut logits = vec![0.0; n_classes];
    for i in 0..n {
        for (l, z) in logits.iter_mut().enumerate() {
            *z = -unary[l * n + i] + msg.map_or(0.0, |m| m[l * n + i]);
        }
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for z in logits.iter_mut() {
            *z = (*z - mx).exp();
            s += *z;
        }
        for (l, z) in logits.iter().enumerate() {
            q[l * n + i] = z / s;
        }
    }
}

/// Refined labels for one plane: argmax of the final distribution (lowest
/// class on ties). With no inference to run this is the argmax of `probs`.
pub fn refine(
    probs: &[f64],
    image: &[f32],
    n_classes: usize,
    height: usize,
    width: usize,
    params: &CrfParams,
) -> Result<Vec<u8>> {
    let n = height * width;
    if params.iterations == 0 || (params.w_smooth == 0.0 && params.w_appearance == 0.0) {
        params.validate()?;
        check_inputs(probs, image, n_classes, height, width)?;
        return Ok(argmax_plane(probs, n_classes, n));
    }
    let trace = refine_trace(probs, image, n_classes, height, width, params)?;
    Ok(argmax_plane(trace.last().expect("non-empty trace"), n_classes, n))
}

/// Refine every plane of a case.
pub fn refine_case(probs: &ProbMap, images: &ImageStack, task: Task, params: &CrfParams) -> Result<LabelMap> {
    if probs.dims != images.dims || probs.n_classes != task.n_classes() {
        return Err(Error::Shape("probability map does not match the image stack".into()));
    }
    let d = probs.dims;
    let mut out = LabelMap::background(task, d);
    for t in 0..d.frames {
        for s in 0..d.slices {
            let lab = refine(probs.plane(t, s), images.plane(t, s), probs.n_classes, d.height, d.width, params)?;
            out.plane_mut(t, s).copy_from_slice(&lab);
        }
    }
    Ok(out)
}
