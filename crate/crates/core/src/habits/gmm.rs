//! Full-covariance Gaussian mixtures in the 2-D (sin, cos) hour plane,
//! fitted by EM and ordered by BIC.

use log::debug;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Default lower bound on covariance eigenvalues.
pub const REG_FLOOR: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-7;
pub const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec2>,
    pub covariances: Vec<Mat2>,
    pub log_likelihood: f64,
    pub bic: f64,
    /// Sample count the model was fitted on.
    pub n: usize,
    pub iterations: usize,
    /// Log-likelihood evaluated before each M-step, first entry at the
    /// initial parameters.
    #[serde(skip)]
    pub ll_trace: Vec<f64>,
    /// Positions in `ll_trace` where components were pruned; the trace is
    /// only monotone between consecutive breaks.
    #[serde(skip)]
    pub trace_breaks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// Number of free parameters of a `k`-component full-covariance 2-D mixture.
pub fn free_parameters(k: usize) -> usize {
    (k - 1) + 2 * k + 3 * k
}

pub fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + free_parameters(k) as f64 * (n as f64).ln()
}

fn log_pdf(x: &Vec2, mean: &Vec2, cov: &Mat2) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let dx = x[0] - mean[0];
    let dy = x[1] - mean[1];
    // inverse of a symmetric 2x2
    let maha = (cov[1][1] * dx * dx - 2.0 * cov[0][1] * dx * dy + cov[0][0] * dy * dy) / det;
    -std::f64::consts::TAU.ln() - 0.5 * det.ln() - 0.5 * maha
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl GmmModel {
    /// Per-component log joint `ln w_k + ln N(x | mu_k, Sigma_k)`.
    fn log_joint(&self, x: &Vec2, out: &mut Vec<f64>) {
        out.clear();
        for c in 0..self.k {
            out.push(self.weights[c].ln() + log_pdf(x, &self.means[c], &self.covariances[c]));
        }
    }

    /// Posterior component probabilities for each sample.
    pub fn responsibilities(&self, data: &[Vec2]) -> Vec<Vec<f64>> {
        let mut buf = Vec::with_capacity(self.k);
        data.iter()
            .map(|x| {
                self.log_joint(x, &mut buf);
                let norm = log_sum_exp(&buf);
                buf.iter().map(|v| (v - norm).exp()).collect()
            })
            .collect()
    }

    pub fn score(&self, data: &[Vec2]) -> f64 {
        let mut buf = Vec::with_capacity(self.k);
        data.iter()
            .map(|x| {
                self.log_joint(x, &mut buf);
                log_sum_exp(&buf)
            })
            .sum()
    }

    /// Index of the most responsible component; ties go to the lower index.
    pub fn assign(&self, x: &Vec2) -> usize {
        let mut buf = Vec::with_capacity(self.k);
        self.log_joint(x, &mut buf);
        let mut best = 0;
        for c in 1..self.k {
            if buf[c] > buf[best] {
                best = c;
            }
        }
        best
    }
}

fn sq_dist(a: &Vec2, b: &Vec2) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// k-means++ seeding. Returns fewer than `k` seeds when the data has fewer
/// distinct points.
fn seed_means(data: &[Vec2], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    let mut seeds = vec![data[rng.random_range(0..data.len())]];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &seeds[0])).collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = data.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            if target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        // guard against rounding landing on an already-chosen point
        if d2[pick] <= 0.0 {
            pick = d2
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
        }
        let s = data[pick];
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, &s));
        }
        seeds.push(s);
    }
    seeds
}

/// Raises every eigenvalue of a symmetric 2x2 matrix to at least `floor`,
/// keeping its eigenvectors.
fn clip_eigenvalues(m: Mat2, floor: f64) -> Mat2 {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let half_tr = 0.5 * (a + d);
    let r = (0.25 * (a - d).powi(2) + b * b).sqrt();
    let (l1, l2) = (half_tr + r, half_tr - r);
    if l2 >= floor {
        return m;
    }
    if r == 0.0 {
        let l = l1.max(floor);
        return [[l, 0.0], [0.0, l]];
    }
    // unit eigenvector for l1
    let (vx, vy) = if a >= d { (l1 - d, b) } else { (b, l1 - a) };
    let norm = vx.hypot(vy);
    let (ux, uy) = (vx / norm, vy / norm);
    let (e1, e2) = (l1.max(floor), floor);
    [
        [e1 * ux * ux + e2 * uy * uy, (e1 - e2) * ux * uy],
        [(e1 - e2) * ux * uy, e1 * uy * uy + e2 * ux * ux],
    ]
}

/// Weighted M-step. `resp[i][c]` is the weight of sample `i` in component `c`.
fn m_step(
    data: &[Vec2],
    resp: &[Vec<f64>],
    k: usize,
    floor: f64,
) -> (Vec<f64>, Vec<Vec2>, Vec<Mat2>) {
    let n = data.len() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        let nk_safe = nk.max(f64::MIN_POSITIVE);
        let mut mu = [0.0; 2];
        for (x, r) in data.iter().zip(resp) {
            mu[0] += r[c] * x[0];
            mu[1] += r[c] * x[1];
        }
        mu[0] /= nk_safe;
        mu[1] /= nk_safe;
        let mut s = [[0.0; 2]; 2];
        for (x, r) in data.iter().zip(resp) {
            let dx = x[0] - mu[0];
            let dy = x[1] - mu[1];
            s[0][0] += r[c] * dx * dx;
            s[0][1] += r[c] * dx * dy;
            s[1][1] += r[c] * dy * dy;
        }
        let cov = clip_eigenvalues(
            [
                [s[0][0] / nk_safe, s[0][1] / nk_safe],
                [s[0][1] / nk_safe, s[1][1] / nk_safe],
            ],
            floor,
        );
        weights.push(nk / n);
        means.push(mu);
        covs.push(cov);
    }
    (weights, means, covs)
}

/// Fits a `k`-component mixture by EM from k-means++ seeds drawn with
/// `rng_seed`. Stops when the log-likelihood gain drops below [`TOLERANCE`]
/// or after [`MAX_ITERATIONS`]. Components whose weight falls below
/// `1/(2n)` are pruned; with fewer distinct points than `k` the model is
/// fitted with as many components as there are distinct seeds.
pub fn fit_gmm(data: &[Vec2], k: usize, rng_seed: u64) -> Result<GmmModel> {
    fit_gmm_with_floor(data, k, rng_seed, REG_FLOOR)
}

/// [`fit_gmm`] with an explicit covariance eigenvalue floor.
pub fn fit_gmm_with_floor(data: &[Vec2], k: usize, rng_seed: u64, floor: f64) -> Result<GmmModel> {
    let n = data.len();
    if !(floor.is_finite() && floor > 0.0) {
        return Err(Error::param(
            "reg_floor",
            format!("must be > 0, got {floor}"),
        ));
    }
    if k == 0 {
        return Err(Error::Input("mixture needs at least one component".into()));
    }
    if k > n {
        return Err(Error::Input(format!(
            "cannot fit {k} components to {n} points"
        )));
    }
    if data.iter().any(|x| !(x[0].is_finite() && x[1].is_finite())) {
        return Err(Error::Input("non-finite feature".into()));
    }
    let mut diagnostics = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let seeds = seed_means(data, k, &mut rng);
    if seeds.len() < k {
        diagnostics.push(format!(
            "only {} distinct seeds for k = {k}; fitted with {} components",
            seeds.len(),
            seeds.len()
        ));
    }

    // hard assignment to the nearest seed gives the starting parameters
    let resp: Vec<Vec<f64>> = data
        .iter()
        .map(|x| {
            let mut best = 0;
            for (c, s) in seeds.iter().enumerate() {
                if sq_dist(x, s) < sq_dist(x, &seeds[best]) {
                    best = c;
                }
            }
            let mut row = vec![0.0; seeds.len()];
            row[best] = 1.0;
            row
        })
        .collect();
    let (weights, means, covariances) = m_step(data, &resp, seeds.len(), floor);
    let mut model = GmmModel {
        k: seeds.len(),
        weights,
        means,
        covariances,
        log_likelihood: f64::NEG_INFINITY,
        bic: f64::INFINITY,
        n,
        iterations: 0,
        ll_trace: Vec::new(),
        trace_breaks: Vec::new(),
        diagnostics,
    };
    prune(&mut model, n);

    let mut prev = f64::NEG_INFINITY;
    let mut buf = Vec::new();
    loop {
        // E-step
        let mut ll = 0.0;
        let resp: Vec<Vec<f64>> = data
            .iter()
            .map(|x| {
                model.log_joint(x, &mut buf);
                let norm = log_sum_exp(&buf);
                ll += norm;
                buf.iter().map(|v| (v - norm).exp()).collect()
            })
            .collect();
        model.ll_trace.push(ll);
        model.log_likelihood = ll;
        if model.iterations >= MAX_ITERATIONS || ll - prev < TOLERANCE {
            break;
        }
        prev = ll;
        // M-step
        let (w, m, c) = m_step(data, &resp, model.k, floor);
        model.weights = w;
        model.means = m;
        model.covariances = c;
        model.iterations += 1;
        if prune(&mut model, n) {
            model.trace_breaks.push(model.ll_trace.len());
            prev = f64::NEG_INFINITY;
        }
    }
    if model.iterations >= MAX_ITERATIONS {
        debug!("EM hit the iteration cap (k = {})", model.k);
    }
    model.bic = bic(model.log_likelihood, model.k, n);
    Ok(model)
}

/// Drops components lighter than `1/(2n)` and renormalizes. Keeps at least
/// the heaviest component.
fn prune(model: &mut GmmModel, n: usize) -> bool {
    let floor = 1.0 / (2.0 * n as f64);
    if model.k <= 1 || model.weights.iter().all(|&w| w >= floor) {
        return false;
    }
    let heaviest = model
        .weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let keep: Vec<usize> = (0..model.k)
        .filter(|&c| model.weights[c] >= floor || c == heaviest)
        .collect();
    let dropped = model.k - keep.len();
    model.weights = keep.iter().map(|&c| model.weights[c]).collect();
    model.means = keep.iter().map(|&c| model.means[c]).collect();
    model.covariances = keep.iter().map(|&c| model.covariances[c]).collect();
    model.k = keep.len();
    let total: f64 = model.weights.iter().sum();
    for w in &mut model.weights {
        *w /= total;
    }
    model
        .diagnostics
        .push(format!("pruned {dropped} collapsed component(s)"));
    true
}

/// Fits `k = 1..=min(k_max, n)` with `restarts` seeded restarts each and
/// returns the model with the lowest BIC (ties to fewer components).
pub fn select_components(
    data: &[Vec2],
    k_max: usize,
    restarts: usize,
    rng_seed: u64,
) -> Result<GmmModel> {
    select_components_with_floor(data, k_max, restarts, rng_seed, REG_FLOOR)
}

/// [`select_components`] with an explicit covariance eigenvalue floor.
pub fn select_components_with_floor(
    data: &[Vec2],
    k_max: usize,
    restarts: usize,
    rng_seed: u64,
    floor: f64,
) -> Result<GmmModel> {
    if data.is_empty() {
        return Err(Error::Input("no features to fit".into()));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<GmmModel> = None;
    for k in 1..=k_max.min(data.len()).max(1) {
        let mut best_k: Option<GmmModel> = None;
        for _ in 0..restarts.max(1) {
            let m = fit_gmm_with_floor(data, k, seeds.next_u64(), floor)?;
            if best_k
                .as_ref()
                .is_none_or(|b| m.log_likelihood > b.log_likelihood)
            {
                best_k = Some(m);
            }
        }
        let cand = best_k.expect("at least one restart");
        let better = match &best {
            None => true,
            Some(b) => cand.bic < b.bic || (cand.bic == b.bic && cand.k < b.k),
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one k"))
}

/// Checks that `trace` never drops between pruning breaks, allowing for
/// floating-point rounding relative to the magnitude of the values.
pub fn trace_is_monotone(model: &GmmModel) -> bool {
    model.ll_trace.windows(2).enumerate().all(|(i, w)| {
        model.trace_breaks.contains(&(i + 1)) || w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{angle_to_hour, encode_hour_cyclic};
    use crate::synth::hour_modes;
    use proptest::prelude::*;

    fn features(hours: &[f64]) -> Vec<Vec2> {
        hours
            .iter()
            .map(|&h| encode_hour_cyclic(h).unwrap().as_array())
            .collect()
    }

    fn sampled(modes: &[f64], sigma: f64, n_per: usize, seed: u64) -> (Vec<Vec2>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hm = hour_modes(&mut rng, modes, sigma, n_per);
        let hours: Vec<f64> = hm.iter().map(|p| p.0).collect();
        (features(&hours), hm.iter().map(|p| p.1).collect())
    }

    fn min_eigenvalue(m: &Mat2) -> f64 {
        let half_tr = 0.5 * (m[0][0] + m[1][1]);
        half_tr - (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[0][1]).sqrt()
    }

    #[test]
    fn parameter_count() {
        assert_eq!(free_parameters(1), 5);
        assert_eq!(free_parameters(3), 17);
        let ll = -12.5;
        assert!((bic(ll, 2, 40) - (25.0 + 11.0 * 40f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn identical_points_sit_at_the_floor() {
        let data = vec![[0.6, 0.8]; 10];
        let m = fit_gmm(&data, 1, 0).unwrap();
        assert_eq!(m.k, 1);
        assert!((m.means[0][0] - 0.6).abs() < 1e-12 && (m.means[0][1] - 0.8).abs() < 1e-12);
        let c = m.covariances[0];
        assert!((c[0][0] - REG_FLOOR).abs() < 1e-15 && (c[1][1] - REG_FLOOR).abs() < 1e-15);
        assert!(c[0][1].abs() < 1e-15);
    }

    #[test]
    fn identical_points_collapse_extra_components() {
        let data = vec![[0.0, 1.0]; 8];
        let m = fit_gmm(&data, 3, 4).unwrap();
        assert_eq!(m.k, 1);
        assert!(!m.diagnostics.is_empty());
    }

    #[test]
    fn too_many_components_is_an_error() {
        let data = features(&[1.0, 2.0]);
        assert!(matches!(fit_gmm(&data, 3, 0), Err(Error::Input(_))));
        assert!(fit_gmm(&data, 0, 0).is_err());
        assert!(fit_gmm_with_floor(&data, 1, 0, 0.0).is_err());
        assert!(select_components(&[], 6, 5, 0).is_err());
    }

    #[test]
    fn two_modes_recover_their_hours() {
        let (data, _) = sampled(&[8.0, 18.0], 0.25, 50, 21);
        let m = fit_gmm(&data, 2, 3).unwrap();
        let mut hours: Vec<f64> = m
            .means
            .iter()
            .map(|mu| angle_to_hour(mu[0].atan2(mu[1])))
            .collect();
        hours.sort_by(f64::total_cmp);
        assert!((hours[0] - 8.0).abs() < 0.5, "{hours:?}");
        assert!((hours[1] - 18.0).abs() < 0.5, "{hours:?}");
        assert!(trace_is_monotone(&m));
    }

    #[test]
    fn selection_finds_planted_counts() {
        let (one, _) = sampled(&[8.0], 0.3, 20, 5);
        assert_eq!(select_components(&one, 6, 5, 1).unwrap().k, 1);
        let (three, _) = sampled(&[7.0, 13.0, 22.0], 0.3, 20, 5);
        assert_eq!(select_components(&three, 6, 5, 1).unwrap().k, 3);
    }

    #[test]
    fn selection_is_bounded_by_sample_count() {
        let data = features(&[1.0, 5.0, 9.0, 14.0, 20.0]);
        let m = select_components(&data, 6, 5, 0).unwrap();
        assert!(m.k <= 5);
    }

    #[test]
    fn selection_is_deterministic() {
        let (data, _) = sampled(&[7.5, 17.0], 0.6, 25, 8);
        assert_eq!(
            select_components(&data, 6, 5, 42).unwrap(),
            select_components(&data, 6, 5, 42).unwrap()
        );
    }

    #[test]
    fn clipping_keeps_eigenvectors() {
        let m = [[2.0, 0.0], [0.0, 1e-9]];
        assert_eq!(clip_eigenvalues(m, 1e-3), [[2.0, 0.0], [0.0, 1e-3]]);
        // rank-one along (s, s) with eigenvalue 2
        let r = clip_eigenvalues([[1.0, 1.0], [1.0, 1.0]], 0.1);
        let want = [[1.0 + 0.05, 1.0 - 0.05], [1.0 - 0.05, 1.0 + 0.05]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[i][j] - want[i][j]).abs() < 1e-12, "{r:?}");
            }
        }
        assert!((min_eigenvalue(&r) - 0.1).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn em_invariants(
            hours in prop::collection::vec(0.0f64..24.0, 3..40),
            k in 1usize..4,
            seed in any::<u64>(),
        ) {
            let data = features(&hours);
            let k = k.min(data.len());
            let m = fit_gmm(&data, k, seed).unwrap();
            prop_assert!(trace_is_monotone(&m), "{:?}", m.ll_trace);
            prop_assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for c in &m.covariances {
                prop_assert!((c[0][1] - c[1][0]).abs() < 1e-15);
                prop_assert!(min_eigenvalue(c) >= REG_FLOOR * (1.0 - 1e-9));
            }
            for row in m.responsibilities(&data) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for mu in &m.means {
                prop_assert!(mu[0].hypot(mu[1]) <= 1.0 + 1e-9);
            }
        }
    }
}
