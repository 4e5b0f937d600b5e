//! Generators for synthetic fixtures with known ground truth.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{LatLon, Point, UserId, EARTH_RADIUS_M};

/// Moves `c` by local north/east offsets in meters.
pub fn offset(c: LatLon, north_m: f64, east_m: f64) -> LatLon {
    let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
    let dlon = (east_m / (EARTH_RADIUS_M * c.lat.to_radians().cos())).to_degrees();
    LatLon::new(c.lat + dlat, c.lon + dlon)
}

/// `n` points uniform in a disc of `radius` meters around `c`.
pub fn disc<R: Rng>(rng: &mut R, c: LatLon, radius: f64, n: usize) -> Vec<LatLon> {
    (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            offset(c, r * a.sin(), r * a.cos())
        })
        .collect()
}

/// Points with their generating blob index.
#[derive(Debug, Clone)]
pub struct LabeledPoints {
    pub points: Vec<LatLon>,
    pub truth: Vec<Option<usize>>,
}

/// `k` blobs of radius `radius`, centres pairwise more than `separation`
/// apart, each with `per_blob.0..=per_blob.1` points, shuffled.
pub fn separated_blobs<R: Rng>(
    rng: &mut R,
    origin: LatLon,
    k: usize,
    radius: f64,
    separation: f64,
    per_blob: (usize, usize),
) -> LabeledPoints {
    let mut centres: Vec<(f64, f64)> = Vec::new();
    // place centres on a jittered ring large enough to satisfy the spacing
    let ring = separation * (k as f64).max(1.0);
    while centres.len() < k {
        let a = rng.random::<f64>() * std::f64::consts::TAU;
        let r = ring * (0.5 + rng.random::<f64>());
        let cand = (r * a.sin(), r * a.cos());
        let ok = centres.iter().all(|&(n, e)| {
            // the local plane overestimates nothing at these scales; keep slack
            ((n - cand.0).powi(2) + (e - cand.1).powi(2)).sqrt() > separation + 2.0 * radius + 1.0
        });
        if ok {
            centres.push(cand);
        }
    }
    let mut pairs: Vec<(LatLon, usize)> = Vec::new();
    for (i, &(n, e)) in centres.iter().enumerate() {
        let c = offset(origin, n, e);
        let m = rng.random_range(per_blob.0..=per_blob.1);
        pairs.extend(disc(rng, c, radius, m).into_iter().map(|p| (p, i)));
    }
    use rand::seq::SliceRandom;
    pairs.shuffle(rng);
    LabeledPoints {
        points: pairs.iter().map(|p| p.0).collect(),
        truth: pairs.iter().map(|p| Some(p.1)).collect(),
    }
}

/// Two dense 100 m blobs with centres 350 m apart, joined by a U-shaped
/// chain: dense legs rising out of each blob and a sparse top bar.
///
/// Labels: 0 and 1 for the blobs, `None` for chain points.
pub fn bridged_blobs<R: Rng>(rng: &mut R, origin: LatLon) -> LabeledPoints {
    let a = origin;
    let b = offset(origin, 0.0, 350.0);
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for (i, c) in [a, b].into_iter().enumerate() {
        for p in disc(rng, c, 100.0, 60) {
            points.push(p);
            truth.push(Some(i));
        }
    }
    // legs: 25 m spacing from 150 m to 350 m north of each blob centre
    for c in [a, b] {
        let mut north = 150.0;
        while north <= 350.0 {
            points.push(offset(c, north, 0.0));
            truth.push(None);
            north += 25.0;
        }
    }
    // top bar: sparse, 110 m spacing between the legs
    let mut east = 110.0;
    while east < 350.0 - 55.0 {
        points.push(offset(a, 350.0, east));
        truth.push(None);
        east += 110.0;
    }
    LabeledPoints { points, truth }
}

/// Start hours drawn from wrapped normals around `modes` (hours), `n_per`
/// samples each; returns `(hour, mode index)` pairs.
pub fn hour_modes<R: Rng>(
    rng: &mut R,
    modes: &[f64],
    sigma_h: f64,
    n_per: usize,
) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    for (i, &m) in modes.iter().enumerate() {
        let normal = Normal::new(m, sigma_h).expect("valid sigma");
        for _ in 0..n_per {
            let mut h = normal.sample(rng).rem_euclid(24.0);
            if h >= 24.0 {
                h = 0.0;
            }
            out.push((h, i));
        }
    }
    out
}

/// Commuter between two places with planted departure-hour modes.
#[derive(Debug, Clone)]
pub struct PlantedUser {
    pub points: Vec<Point>,
    pub home: LatLon,
    pub work: LatLon,
    /// `(departure time, outbound?, mode index)` for every planted trip.
    pub trips: Vec<(NaiveDateTime, bool, usize)>,
}

/// Builds `days` days of 30-second fixes: dwelling at home (5 m jitter),
/// a straight 4 km drive at 10 m/s to work, dwelling there, and the drive
/// back. Day `d` departs at `out_modes[d % 3]` and returns at
/// `back_modes[d % 3]`, each perturbed by `sigma_h` hours.
pub fn planted_commuter<R: Rng>(
    rng: &mut R,
    user: &str,
    days: usize,
    out_modes: &[f64],
    back_modes: &[f64],
    sigma_h: f64,
) -> PlantedUser {
    const STEP: i64 = 30;
    const SPEED: f64 = 10.0;
    let user = UserId::new(user);
    let home = LatLon::new(39.99993, 116.32730);
    let work = offset(home, 4000.0, 0.0);
    let day0 = NaiveDate::from_ymd_opt(2009, 3, 2)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let mut points = Vec::new();
    let mut trips = Vec::new();
    let mut t = day0;
    let jitter = |rng: &mut R, c: LatLon| disc(rng, c, 5.0, 1)[0];
    let push = |points: &mut Vec<Point>, p: LatLon, t: NaiveDateTime| {
        points.push(Point::new(user.clone(), p.lat, p.lon, t).expect("valid coordinates"));
    };
    let clamp = |h: f64, lo: f64, hi: f64| h.max(lo).min(hi);

    for d in 0..days {
        let mode = d % out_modes.len().min(back_modes.len());
        let noise = Normal::new(0.0, sigma_h).expect("valid sigma");
        let out_h = clamp(out_modes[mode] + noise.sample(rng), 0.5, 23.0);
        let back_h = clamp(back_modes[mode] + noise.sample(rng), out_h + 1.5, 23.5);
        let day = day0 + Duration::days(d as i64);
        for (hour, outbound) in [(out_h, true), (back_h, false)] {
            let depart = day + Duration::seconds((hour * 3600.0) as i64 / STEP * STEP);
            let (from, to) = if outbound { (home, work) } else { (work, home) };
            while t < depart {
                push(&mut points, jitter(rng, from), t);
                t += Duration::seconds(STEP);
            }
            trips.push((t, outbound, mode));
            let total = from.distance_to(&to);
            let mut travelled = 0.0;
            while travelled < total {
                travelled = (travelled + SPEED * STEP as f64).min(total);
                let frac = travelled / total;
                let p = LatLon::new(
                    from.lat + (to.lat - from.lat) * frac,
                    from.lon + (to.lon - from.lon) * frac,
                );
                t += Duration::seconds(STEP);
                push(&mut points, p, t);
            }
            t += Duration::seconds(STEP);
        }
    }
    // final evening at home
    let end = day0 + Duration::days(days as i64);
    while t < end {
        push(&mut points, jitter(rng, home), t);
        t += Duration::seconds(STEP);
    }
    PlantedUser {
        points,
        home,
        work,
        trips,
    }
}

/// A random single-user trace of alternating dwells and moves, with
/// occasional recording gaps. Fix intervals vary from 5 s to 15 min so both
/// dense GPS and sparse GSM sampling are exercised.
pub fn random_trace<R: Rng>(rng: &mut R, user: &str, n: usize) -> Vec<Point> {
    let user = UserId::new(user);
    let origin = LatLon::new(
        rng.random_range(-45.0..45.0),
        rng.random_range(-170.0..170.0),
    );
    let mut pos = origin;
    let mut t = NaiveDate::from_ymd_opt(2009, 3, 2)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
        + Duration::seconds(rng.random_range(0..86_400));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let step = *[5i64, 30, 60, 300, 900]
            .get(rng.random_range(0..5))
            .unwrap();
        let phase_len = rng.random_range(1..60usize);
        let dwelling = rng.random_bool(0.5);
        let jitter = rng.random_range(0.0..150.0);
        let speed = rng.random_range(0.5..25.0);
        let heading = rng.random::<f64>() * std::f64::consts::TAU;
        let anchor = pos;
        for _ in 0..phase_len {
            if out.len() == n {
                break;
            }
            if dwelling {
                pos = disc(rng, anchor, jitter, 1)[0];
            } else {
                let d = (speed * step as f64).min(1000.0);
                pos = offset(pos, d * heading.cos(), d * heading.sin());
            }
            out.push(
                Point::new(user.clone(), pos.lat, pos.lon, t).expect("coordinates stay in range"),
            );
            t += Duration::seconds(step);
        }
        if rng.random_bool(0.1) {
            t += Duration::seconds(rng.random_range(1800..20_000));
        }
    }
    out
}
