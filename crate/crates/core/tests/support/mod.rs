//! Reference implementations shared by the property tests and the acceptance
//! run. Each is written from the definition, without calling the code it
//! checks.
#![allow(dead_code)]

use qcseg::curves::Unit;
use qcseg::qc::{weighted_youden, RocPoint};
use qcseg::volume::{Geometry, LabelMap};

/// Per-frame area or volume by visiting every voxel.
pub fn brute_force_series(labels: &LabelMap, class: u8, geom: &Geometry, unit: Unit) -> Vec<f64> {
    let d = labels.dims;
    (0..d.frames)
        .map(|t| {
            let mut n = 0u64;
            for s in 0..d.slices {
                for y in 0..d.height {
                    for x in 0..d.width {
                        let i = ((t * d.slices + s) * d.height + y) * d.width + x;
                        n += (labels.data[i] == class) as u64;
                    }
                }
            }
            // same conversion order as the library so equality can be exact
            let pixel = geom.pixel_spacing[0] * geom.pixel_spacing[1];
            match unit {
                Unit::SquareMm => n as f64 * pixel,
                Unit::Ml => n as f64 * pixel * geom.slice_thickness / 1000.0,
            }
        })
        .collect()
}

/// (sensitivity, specificity) for flagging `score < tau` as erroneous.
pub fn confusion(scores: &[f64], erroneous: &[bool], tau: f64) -> (f64, f64) {
    let pos = erroneous.iter().filter(|&&e| e).count() as f64;
    let neg = erroneous.len() as f64 - pos;
    let tp = scores.iter().zip(erroneous).filter(|(s, e)| **e && **s < tau).count() as f64;
    let tn = scores.iter().zip(erroneous).filter(|(s, e)| !**e && **s >= tau).count() as f64;
    (tp / pos, tn / neg)
}

/// Every midpoint between distinct scores plus both sentinels.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut distinct = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut taus = vec![f64::NEG_INFINITY, f64::INFINITY];
    taus.extend(distinct.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    taus
}

/// Best weighted Youden point by re-counting every candidate threshold;
/// ties go to higher sensitivity, then higher specificity.
pub fn exhaustive_youden(scores: &[f64], erroneous: &[bool], w: f64) -> RocPoint {
    let mut best: Option<RocPoint> = None;
    for tau in candidate_thresholds(scores) {
        let (se, sp) = confusion(scores, erroneous, tau);
        let p = RocPoint { threshold: tau, sensitivity: se, specificity: sp };
        let take = match &best {
            None => true,
            Some(b) => {
                let (j, bj) = (weighted_youden(&p, w), weighted_youden(b, w));
                j > bj || (j == bj && (se, sp) > (b.sensitivity, b.specificity))
            }
        };
        if take {
            best = Some(p);
        }
    }
    best.expect("at least the sentinels")
}

/// Repeatedly extract the maximum, smallest id among equals.
pub fn extraction_rank(scores: &[(String, f64)], k: usize) -> Vec<String> {
    let mut left = scores.to_vec();
    let mut out = Vec::new();
    while out.len() < k && !left.is_empty() {
        let mut bi = 0;
        for i in 1..left.len() {
            let (b, c) = (&left[bi], &left[i]);
            if c.1 > b.1 || (c.1 == b.1 && c.0 < b.0) {
                bi = i;
            }
        }
        out.push(left.remove(bi).0);
    }
    out
}

/// Mann-Whitney probability that an erroneous case scores below an accurate one.
pub fn mann_whitney(scores: &[f64], erroneous: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &a) in scores.iter().enumerate() {
        for (j, &b) in scores.iter().enumerate() {
            if erroneous[i] && !erroneous[j] {
                pairs += 1.0;
                wins += if a < b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

// ------------------------------------------------------------ 3x3 salt plane

pub const SALT_THETA: f64 = 3.0;
pub const SALT_N: usize = 9;
pub const SALT_ITERATIONS: usize = 5;

/// Every pixel is 90% sure of label 0 except the centre, 90% sure of label 1.
pub fn salt_plane() -> (Vec<f64>, Vec<f32>) {
    let mut p = vec![0.0; 2 * SALT_N];
    for i in 0..SALT_N {
        let p1 = if i == 4 { 0.9 } else { 0.1 };
        p[i] = 1.0 - p1;
        p[SALT_N + i] = p1;
    }
    (p, vec![0.5; SALT_N])
}

pub fn salt_kernel(i: usize, j: usize) -> f64 {
    let (yi, xi, yj, xj) = ((i / 3) as f64, (i % 3) as f64, (j / 3) as f64, (j % 3) as f64);
    (-((yi - yj).powi(2) + (xi - xj).powi(2)) / (2.0 * SALT_THETA * SALT_THETA)).exp()
}

/// Centre label of the exact minimum-energy labelling over all 2^9 options.
pub fn map_centre(w: f64) -> u8 {
    let (p, _) = salt_plane();
    let mut best = (f64::INFINITY, 0u32);
    for x in 0u32..(1 << SALT_N) {
        let lab = |i: usize| ((x >> i) & 1) as usize;
        let mut e = 0.0;
        for i in 0..SALT_N {
            e -= p[lab(i) * SALT_N + i].ln();
            for j in 0..i {
                if lab(i) != lab(j) {
                    e += w * salt_kernel(i, j);
                }
            }
        }
        if e < best.0 {
            best = (e, x);
        }
    }
    ((best.1 >> 4) & 1) as u8
}

/// Textbook mean-field on the salt plane:
/// `Q_i(l) ∝ p_i(l) · exp(w Σ_{j≠i} k(i,j) Q_j(l))`, starting from `Q = p`.
pub fn oracle_mean_field_centre(w: f64) -> u8 {
    let (p, _) = salt_plane();
    let mut q = p.clone();
    for _ in 0..SALT_ITERATIONS {
        let mut next = vec![0.0; 2 * SALT_N];
        for i in 0..SALT_N {
            let mut z = [0.0; 2];
            for l in 0..2 {
                let m: f64 = (0..SALT_N).filter(|&j| j != i).map(|j| salt_kernel(i, j) * q[l * SALT_N + j]).sum();
                z[l] = p[l * SALT_N + i] * (w * m).exp();
            }
            for l in 0..2 {
                next[l * SALT_N + i] = z[l] / (z[0] + z[1]);
            }
        }
        q = next;
    }
    u8::from(q[SALT_N + 4] > q[4])
}

/// Smallest weight in [0, 2] at which `centre` turns to 0, by bisection.
pub fn flip_point(centre: impl Fn(f64) -> u8) -> f64 {
    let (mut lo, mut hi) = (0.0, 2.0);
    assert_eq!(centre(lo), 1);
    assert_eq!(centre(hi), 0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if centre(mid) == 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

// ----------------------------------------------------------------- t-test

/// Paired t statistic and degrees of freedom from the textbook formula.
pub fn paired_t(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n;
    let ss: f64 = d.iter().map(|v| (v - mean) * (v - mean)).sum();
    let se = (ss / (n - 1.0) / n).sqrt();
    (mean / se, n - 1.0)
}
