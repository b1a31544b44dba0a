//! Independent oracles and property checks shared by the integration tests
//! and the acceptance harness.

#![allow(dead_code)]

use std::collections::BTreeMap;

use keytrack_core::geom::Point2;
use keytrack_core::layout::{MarkerLayout, MarkerStyle};
use keytrack_core::pipeline::{label_components, threshold, BinaryMask, Blob, BlobSet, GrayFrame, PipelineConfig};
use keytrack_core::tracker::{associate, predict, scalar_gain, update, Association, Cov2, MarkerTrack, NoiseParams};
use keytrack_core::tracker::{init_tracker, DeviationRecord, TrackerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Kalman oracle: textbook matrix form with explicit A, H, Q, R.

type M2 = [[f64; 2]; 2];

const I2: M2 = [[1.0, 0.0], [0.0, 1.0]];

fn mul(a: M2, b: M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn add(a: M2, b: M2) -> M2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

fn sub(a: M2, b: M2) -> M2 {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

fn scale(a: M2, s: f64) -> M2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

fn transpose(a: M2) -> M2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn inverse(a: M2) -> M2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    scale([[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]], 1.0 / det)
}

fn apply(a: M2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// One predict + update step of the reference filter.
pub fn oracle_step(mean: [f64; 2], p: M2, z: [f64; 2], sigma_w: f64, sigma_v: f64) -> ([f64; 2], M2, M2) {
    let (a, h) = (I2, I2);
    let q = scale(I2, sigma_w * sigma_w);
    let r = scale(I2, sigma_v * sigma_v);

    let x_pred = apply(a, mean);
    let p_pred = add(mul(mul(a, p), transpose(a)), q);

    let s = add(mul(mul(h, p_pred), transpose(h)), r);
    let k = mul(mul(p_pred, transpose(h)), inverse(s));
    let hx = apply(h, x_pred);
    let innov = [z[0] - hx[0], z[1] - hx[1]];
    let corr = apply(k, innov);
    let x_post = [x_pred[0] + corr[0], x_pred[1] + corr[1]];
    let p_post = mul(sub(I2, mul(k, h)), p_pred);
    (x_post, p_pred, p_post)
}

#[derive(Debug, Clone, Copy)]
pub struct KalmanCase {
    pub mean: [f64; 2],
    pub p: M2,
    pub z: [f64; 2],
    pub sigma_w: f64,
    pub sigma_v: f64,
}

pub fn random_kalman_case(rng: &mut impl Rng) -> KalmanCase {
    let p = if rng.random_bool(0.5) {
        scale(I2, rng.random_range(0.0..5.0))
    } else {
        let (l11, l21, l22) = (
            rng.random_range(0.01..2.0),
            rng.random_range(-1.5..1.5),
            rng.random_range(0.01..2.0),
        );
        let l = [[l11, 0.0], [l21, l22]];
        mul(l, transpose(l))
    };
    let mean = [rng.random_range(0.0..400.0), rng.random_range(0.0..400.0)];
    KalmanCase {
        mean,
        p,
        z: [
            mean[0] + rng.random_range(-20.0..20.0),
            mean[1] + rng.random_range(-20.0..20.0),
        ],
        sigma_w: rng.random_range(0.01..2.0),
        sigma_v: rng.random_range(0.005..2.0),
    }
}

/// Largest componentwise gap between the library and the oracle.
pub fn kalman_case_error(c: &KalmanCase) -> Result<f64, String> {
    let noise = NoiseParams::new(c.sigma_w, c.sigma_v).map_err(|e| e.to_string())?;
    let track = MarkerTrack {
        id: 0,
        x0: Point2::new(c.mean[0], c.mean[1]),
        mean: Point2::new(c.mean[0], c.mean[1]),
        cov: Cov2 {
            xx: c.p[0][0],
            xy: c.p[0][1],
            yy: c.p[1][1],
        },
        last_status: keytrack_core::tracker::TrackStatus::NoCandidates,
    };
    let predicted = predict(&track, &noise);
    let posterior = update(&predicted, Point2::new(c.z[0], c.z[1]), &noise).map_err(|e| e.to_string())?;
    let (x, p_pred, p_post) = oracle_step(c.mean, c.p, c.z, c.sigma_w, c.sigma_v);

    let cov_gap = |cov: Cov2, m: M2| {
        [
            (cov.xx - m[0][0]).abs(),
            (cov.xy - m[0][1]).abs(),
            (cov.xy - m[1][0]).abs(),
            (cov.yy - m[1][1]).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    };
    let gaps = [
        (predicted.mean.x - c.mean[0]).abs(),
        (predicted.mean.y - c.mean[1]).abs(),
        cov_gap(predicted.cov, p_pred),
        (posterior.mean.x - x[0]).abs(),
        (posterior.mean.y - x[1]).abs(),
        cov_gap(posterior.cov, p_post),
    ];
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Centroid oracle: union-find over 8-neighbourhoods, independent of the
// library's flood fill.

#[derive(Debug, Clone, PartialEq)]
pub struct RefBlob {
    /// Raster index of the first pixel, used for ordering.
    pub first: usize,
    pub area: usize,
    pub centroid: (f64, f64),
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

pub fn brute_force_components(mask: &BinaryMask) -> Vec<RefBlob> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            if !bits[y * w + x] {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if bits[j] {
                    let (a, b) = (find(&mut parent, y * w + x), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            if bits[y * w + x] {
                let root = find(&mut parent, y * w + x);
                groups.entry(root).or_default().push((x, y));
            }
        }
    }
    let mut blobs: Vec<RefBlob> = groups
        .into_values()
        .map(|pixels| {
            let n = pixels.len() as f64;
            let cx = pixels.iter().map(|p| p.0 as f64 + 0.5).sum::<f64>() / n;
            let cy = pixels.iter().map(|p| p.1 as f64 + 0.5).sum::<f64>() / n;
            RefBlob {
                first: pixels.iter().map(|p| p.1 * w + p.0).min().unwrap(),
                area: pixels.len(),
                centroid: (cx, cy),
            }
        })
        .collect();
    blobs.sort_by_key(|b| b.first);
    blobs
}

pub fn random_mask(rng: &mut impl Rng) -> BinaryMask {
    let w = rng.random_range(1..48);
    let h = rng.random_range(1..48);
    let density = rng.random_range(0.05..0.7);
    let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
    BinaryMask::new(w, h, bits).unwrap()
}

/// Compares the library's components with the oracle: same order, same
/// areas, centroids within `tol`.
pub fn compare_components(lib: &[Blob], reference: &[RefBlob], tol: f64) -> Check {
    if lib.len() != reference.len() {
        return Err(format!("{} components, oracle has {}", lib.len(), reference.len()));
    }
    for (i, (a, b)) in lib.iter().zip(reference).enumerate() {
        if a.area != b.area {
            return Err(format!("component {i}: area {} vs {}", a.area, b.area));
        }
        let gap = (a.centroid.x - b.centroid.0)
            .abs()
            .max((a.centroid.y - b.centroid.1).abs());
        if gap > tol {
            return Err(format!("component {i}: centroid off by {gap:e}"));
        }
        if !a.bbox.contains(a.centroid) {
            return Err(format!("component {i}: centroid outside bbox"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Property checks.

pub fn check_deviation_identity(records: &[DeviationRecord], layout: &MarkerLayout) -> Check {
    for r in records {
        let x0 = layout.initial_positions()[r.marker_id as usize];
        if r.deviation != r.mean - x0 {
            return Err(format!(
                "marker {} frame {}: deviation != mean - x0",
                r.marker_id, r.frame_index
            ));
        }
    }
    Ok(())
}

/// `k` empty frames: every track's trace grows by `2 k sigma_w^2`.
pub fn check_covariance_growth(k: usize, sigma_w: f64, p0: f64) -> Check {
    let layout = MarkerLayout::default_grid(MarkerStyle::Keyline);
    let noise = NoiseParams::new(sigma_w, 0.025).unwrap();
    let gate = TrackerConfig::for_layout(&layout).gate_radius_px;
    let mut state = init_tracker(&layout, noise, gate, p0).map_err(|e| e.to_string())?;
    let t0: Vec<f64> = state.tracks().iter().map(|t| t.cov.trace()).collect();
    for _ in 0..k {
        state.step(&BlobSet::default(), 0.0).map_err(|e| e.to_string())?;
    }
    let expected = 2.0 * k as f64 * sigma_w * sigma_w;
    for (track, t0) in state.tracks().iter().zip(t0) {
        let grown = track.cov.trace() - t0;
        if (grown - expected).abs() > 1e-12 * (1.0 + expected) {
            return Err(format!("trace grew by {grown}, expected {expected}"));
        }
        if !track.cov.is_psd() {
            return Err("covariance lost PSD".into());
        }
    }
    Ok(())
}

pub fn check_gain_bounds(p: f64, sigma_v: f64) -> Check {
    let k = scalar_gain(p, sigma_v);
    if k > 0.0 && k < 1.0 {
        Ok(())
    } else {
        Err(format!("gain {k} for p={p} sigma_v={sigma_v}"))
    }
}

pub fn check_threshold_monotone(frame: &GrayFrame, tau_lo: f32, tau_hi: f32) -> Check {
    let lo = threshold(frame, tau_lo);
    let hi = threshold(frame, tau_hi);
    for (i, (&a, &b)) in lo.bits().iter().zip(hi.bits()).enumerate() {
        if a && !b {
            return Err(format!("pixel {i} dark at {tau_lo} but not at {tau_hi}"));
        }
    }
    for (i, (&bit, &v)) in lo.bits().iter().zip(frame.pixels()).enumerate() {
        if bit != (v < tau_lo) {
            return Err(format!("pixel {i}: bit {bit} for value {v} at tau {tau_lo}"));
        }
    }
    Ok(())
}

pub fn check_partition(mask: &BinaryMask) -> Check {
    let comps = label_components(mask);
    let total: usize = comps.iter().map(|b| b.area).sum();
    if total != mask.count_dark() {
        return Err(format!(
            "areas sum to {total}, mask has {} dark pixels",
            mask.count_dark()
        ));
    }
    if comps.iter().any(|b| b.area == 0) {
        return Err("empty component".into());
    }
    Ok(())
}

/// Pads `mask` by `(dx, dy)` and checks that centroids shift by the same.
pub fn check_translation(mask: &BinaryMask, dx: usize, dy: usize) -> Check {
    let (w, h) = (mask.width() + dx, mask.height() + dy);
    let mut bits = vec![false; w * h];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            bits[(y + dy) * w + x + dx] = mask.get(x, y);
        }
    }
    let shifted = BinaryMask::new(w, h, bits).unwrap();
    let a = label_components(mask);
    let b = label_components(&shifted);
    if a.len() != b.len() {
        return Err("component count changed under translation".into());
    }
    for (p, q) in a.iter().zip(&b) {
        // Exact up to f64 rounding of the mean.
        let moved = q.centroid - Point2::new(dx as f64, dy as f64);
        if moved.distance(p.centroid) > 1e-9 || p.area != q.area || p.bbox.min_x + dx != q.bbox.min_x {
            return Err(format!("centroid {:?} moved to {:?}", p.centroid, q.centroid));
        }
    }
    Ok(())
}

/// The association must match an argmin over plain Euclidean distance.
pub fn check_argmin(track: &MarkerTrack, blobs: &BlobSet, gate: f64) -> Check {
    let got = associate(track, blobs, gate);
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in blobs.iter().enumerate() {
        let d = b.centroid.distance(track.mean);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    let ok = match (got, best) {
        (Association::NoCandidates, None) => true,
        (Association::Measured { blob_index, .. }, Some((i, d))) => blob_index == i && d <= gate,
        (Association::Gated { nearest_distance }, Some((_, d))) => d > gate && (nearest_distance - d).abs() < 1e-12,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("associate gave {got:?}, oracle {best:?}"))
    }
}

pub fn random_blobs(rng: &mut impl Rng, n: usize, extent: f64) -> BlobSet {
    let blobs = (0..n)
        .map(|_| Blob {
            centroid: Point2::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent)),
            area: 1,
            bbox: keytrack_core::pipeline::BBox {
                min_x: 0,
                min_y: 0,
                max_x: extent as usize,
                max_y: extent as usize,
            },
        })
        .collect();
    BlobSet {
        blobs,
        frame_timestamp: 0.0,
    }
}

pub fn random_frame(rng: &mut impl Rng, w: usize, h: usize) -> GrayFrame {
    let px = (0..w * h).map(|_| rng.random::<f32>()).collect();
    GrayFrame::new(w, h, px, 0.0).unwrap()
}

/// Per-marker RMSE of tracked deviations against the truth, skipping the
/// first `settle` frames. Returns the worst marker.
pub fn worst_marker_rmse(records: &[Vec<DeviationRecord>], truth: &[Vec<Point2>], settle: usize) -> f64 {
    let n_markers = records.first().map_or(0, Vec::len);
    let mut sums = vec![0.0; n_markers];
    let mut n = 0usize;
    for (frame, t) in records.iter().zip(truth).skip(settle) {
        for (r, d) in frame.iter().zip(t) {
            sums[r.marker_id as usize] += r.deviation.distance_sq(*d);
        }
        n += 1;
    }
    sums.into_iter()
        .map(|s| (s / n.max(1) as f64).sqrt())
        .fold(0.0, f64::max)
}

pub fn default_pipeline() -> PipelineConfig {
    PipelineConfig::for_layout(&MarkerLayout::default_grid(MarkerStyle::Keyline))
}
