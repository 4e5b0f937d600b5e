//! Acceptance gate: one PASS/FAIL/SKIP line per criterion.
//!
//! Criteria 1-4 need the public Geolife data (`GEOLIFE_DIR`, the directory
//! holding user `004`) and the GSM file (`GSM_CSV`); without them they are
//! skipped. The process exits nonzero when a criterion fails that is not
//! listed in `KNOWN_FAILURES`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use mobmine::habits::gmm::{fit_gmm, select_components, trace_is_monotone, GmmModel};
use mobmine::habits::{classify_habits, cyclic_features, Trip};
use mobmine::ingest::{
    clean, parse_geolife_plt, parse_gsm_csv, write_geolife_plt, write_gsm_csv, GsmLayout,
};
use mobmine::pipeline::{load_input, process_user, InputConfig, PipelineConfig, UserResult};
use mobmine::report::compare_clusterers;
use mobmine::synth::{
    bridged_blobs, hour_modes, offset, planted_commuter, random_trace, separated_blobs,
};
use mobmine::{
    dbmeans, detect_stay_points, encode_hour_cyclic, haversine_distance, ClusterParams, LatLon,
    Point, Source, StayPointParams, UserId,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Criteria expected to fail; see the project notes for the reasons.
const KNOWN_FAILURES: &[&str] = &["AC7"];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn within_rel(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want
}

// ---------------------------------------------------------------------------
// Dataset-dependent criteria

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var)
        .map(PathBuf::from)
        .filter(|p| p.exists())
}

fn run_user(
    source: Source,
    path: PathBuf,
    user: &str,
    threads: usize,
) -> Result<(UserResult, Duration), String> {
    let mut cfg = PipelineConfig {
        input: InputConfig {
            paths: vec![path],
            format: source,
            users: Some(vec![user.to_string()]),
            gsm: GsmLayout::default(),
        },
        ..Default::default()
    };
    cfg.output.threads = threads;
    let start = Instant::now();
    let mut loaded = load_input(&cfg.input).map_err(|e| e.to_string())?;
    let id = UserId::new(user);
    let points = loaded
        .by_user
        .remove(&id)
        .ok_or_else(|| format!("user {user} not found in input"))?
        .points;
    let result = process_user(&id, points, &cfg).map_err(|e| e.to_string())?;
    Ok((result, start.elapsed()))
}

struct Datasets {
    geolife: Option<Result<(UserResult, Duration), String>>,
    gsm: Option<Result<(UserResult, Duration), String>>,
}

fn load_datasets() -> Datasets {
    let geolife = env_path("GEOLIFE_DIR").map(|p| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| e.to_string())
            .and_then(|pool| pool.install(|| run_user(Source::Geolife, p, "004", 1)))
    });
    let gsm = env_path("GSM_CSV").map(|p| run_user(Source::Gsm, p, "10837", 0));
    Datasets { geolife, gsm }
}

fn ac1(d: &Datasets) -> Outcome {
    let Some(res) = &d.geolife else {
        return Skip("GEOLIFE_DIR not set".into());
    };
    let (r, elapsed) = match res {
        Ok(v) => v,
        Err(e) => return Fail(e.clone()),
    };
    let t = r.trajectories.len() as f64;
    let s = r.stay_points.len() as f64;
    let p = r.places.len() as f64;
    let ok = within_rel(t, 1100.0, 0.05)
        && within_rel(s, 2437.0, 0.05)
        && within_rel(p, 50.0, 0.10)
        && elapsed.as_secs_f64() < 120.0;
    verdict(
        ok,
        format!(
            "trajectories {t} (1100 ±5%), stay points {s} (2437 ±5%), places {p} (50 ±10%), {:.1}s single-threaded",
            elapsed.as_secs_f64()
        ),
    )
}

fn ac2(d: &Datasets) -> Outcome {
    let Some(res) = &d.geolife else {
        return Skip("GEOLIFE_DIR not set".into());
    };
    let r = match res {
        Ok((r, _)) => r,
        Err(e) => return Fail(e.clone()),
    };
    if r.places.len() < 2 {
        return Fail(format!("only {} places", r.places.len()));
    }
    let want = [
        (LatLon::new(39.99993, 116.32730), 659.0),
        (LatLon::new(40.01086, 116.32186), 235.0),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (place, (c, visits)) in r.places.iter().zip(want) {
        let d = haversine_distance(place.centroid, c);
        let v = place.visit_count as f64;
        ok &= d <= 100.0 && within_rel(v, visits, 0.10);
        parts.push(format!(
            "rank {} {:.0} m off, {} visits (want {visits} ±10%)",
            place.rank, d, v
        ));
    }
    verdict(ok, parts.join("; "))
}

fn ac3(d: &Datasets) -> Outcome {
    let Some(res) = &d.gsm else {
        return Skip("GSM_CSV not set".into());
    };
    let r = match res {
        Ok((r, _)) => r,
        Err(e) => return Fail(e.clone()),
    };
    let Some(top) = r.places.first() else {
        return Fail("no places".into());
    };
    let dist = haversine_distance(top.centroid, LatLon::new(-18.96081, -48.32141));
    let ok = r.trajectories.len() == 19
        && r.stay_points.len() == 135
        && r.places.len() == 4
        && dist <= 100.0
        && top.visit_count.abs_diff(38) <= 2;
    verdict(
        ok,
        format!(
            "trajectories {} (19), stay points {} (135), places {} (4), top place {:.0} m off with {} visits (38 ±2)",
            r.trajectories.len(),
            r.stay_points.len(),
            r.places.len(),
            dist,
            top.visit_count
        ),
    )
}

fn ac4(d: &Datasets) -> Outcome {
    let Some(res) = &d.geolife else {
        return Skip("GEOLIFE_DIR not set".into());
    };
    let r = match res {
        Ok((r, _)) => r,
        Err(e) => return Fail(e.clone()),
    };
    let Some(top) = r.habits.first() else {
        return Fail("no habitual pair".into());
    };
    let ok = top.model.k == 3 && top.trip_count.abs_diff(37) <= 3;
    verdict(
        ok,
        format!(
            "top pair {} has {} trips (37 ±3) and k = {} (3)",
            top.od_pair, top.trip_count, top.model.k
        ),
    )
}

// ---------------------------------------------------------------------------
// Desk-scale criteria

/// Adjusted Rand index by direct pair counting. Noise labels count as
/// singleton clusters.
fn adjusted_rand(truth: &[Option<usize>], pred: &[Option<usize>]) -> f64 {
    let n = truth.len();
    let same = |l: &[Option<usize>], i: usize, j: usize| matches!((l[i], l[j]), (Some(a), Some(b)) if a == b);
    let (mut both, mut only_t, mut only_p, mut neither) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (same(truth, i, j), same(pred, i, j)) {
                (true, true) => both += 1.0,
                (true, false) => only_t += 1.0,
                (false, true) => only_p += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    if only_t == 0.0 && only_p == 0.0 {
        return 1.0;
    }
    let num = 2.0 * (both * neither - only_t * only_p);
    let den = (both + only_t) * (only_t + neither) + (both + only_p) * (only_p + neither);
    num / den
}

fn ac5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();
    for run in 0..100u64 {
        let params = ClusterParams {
            rng_seed: run,
            ..Default::default()
        };
        let k = rng.random_range(1..=5);
        let origin = LatLon::new(
            rng.random_range(-60.0..60.0),
            rng.random_range(-179.0..179.0),
        );
        let f = separated_blobs(
            &mut rng,
            origin,
            k,
            params.eps / 4.0 - 1.0,
            4.0 * params.eps + 1.0,
            (params.min_pts, 40),
        );
        let res = match dbmeans(&f.points, &params) {
            Ok(r) => r,
            Err(e) => return Fail(e.to_string()),
        };
        let ari = adjusted_rand(&f.truth, &res.labels);
        if res.cluster_count() != k || ari != 1.0 {
            failures.push(format!(
                "run {run}: k {k} got {} ari {ari:.4}",
                res.cluster_count()
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failures.is_empty() && secs < 10.0,
        format!(
            "{}/100 fixtures exact with ARI 1.0, {secs:.2}s {}",
            100 - failures.len(),
            failures.join(", ")
        ),
    )
}

fn ac6() -> Outcome {
    let mut bad = Vec::new();
    let mut counts = BTreeMap::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = bridged_blobs(&mut rng, LatLon::new(39.99993, 116.32730));
        let params = ClusterParams {
            rng_seed: seed,
            ..Default::default()
        };
        let cmp = match compare_clusterers(&f.points, &params) {
            Ok(c) => c,
            Err(e) => return Fail(e.to_string()),
        };
        let (m, s, l) = (
            cmp[0].cluster_count,
            cmp[1].cluster_count,
            cmp[2].cluster_count,
        );
        *counts.entry((m, s, l)).or_insert(0) += 1;
        if !(m == 2 && s == 1 && l >= 3) {
            bad.push(seed);
        }
    }
    verdict(
        bad.is_empty(),
        format!(
            "(dbmeans, dbscan, location) counts over 20 seeds: {counts:?}; failing seeds {bad:?}"
        ),
    )
}

fn ac7() -> Outcome {
    let params = StayPointParams::default();
    let doubled = StayPointParams {
        time_threshold: 2.0 * params.time_threshold,
        ..params
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut duration, mut containment, mut overlap, mut monotone) = (0, 0, 0, 0);
    let mut emitted = 0;
    for trace in 0..1000u64 {
        let n = rng.random_range(2..400);
        let pts = random_trace(&mut ChaCha8Rng::seed_from_u64(trace), "u", n);
        let sps = detect_stay_points(&pts, &params);
        emitted += sps.len();
        for sp in &sps {
            if sp.duration_s() < params.time_threshold {
                duration += 1;
            }
            let anchor = &pts[sp.anchor_index];
            let members = &pts[sp.anchor_index..sp.anchor_index + sp.point_count];
            if members
                .iter()
                .any(|p| anchor.distance_to(p) > params.distance_threshold)
                || haversine_distance(anchor.latlon(), sp.position()) > params.distance_threshold
            {
                containment += 1;
            }
        }
        overlap += sps
            .windows(2)
            .filter(|w| w[0].departure >= w[1].arrival)
            .count();
        if detect_stay_points(&pts, &doubled).len() > sps.len() {
            monotone += 1;
        }
    }
    verdict(
        duration + containment + overlap + monotone == 0,
        format!(
            "{emitted} stay points on 1000 traces; violations: duration {duration}, containment {containment}, overlap {overlap}, threshold monotonicity {monotone}"
        ),
    )
}

fn hour_features(hours: &[f64]) -> Vec<[f64; 2]> {
    hours
        .iter()
        .map(|&h| encode_hour_cyclic(h).expect("hour in range").as_array())
        .collect()
}

fn ac8() -> Outcome {
    let mut fits: Vec<GmmModel> = Vec::new();
    let mut hits = Vec::new();
    let mut row_error = 0f64;
    for modes in [&[8.0][..], &[8.0, 18.0], &[7.0, 13.0, 22.0]] {
        let mut ok = 0;
        for run in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * modes.len() as u64 + run);
            let hours: Vec<f64> = hour_modes(&mut rng, modes, 0.3, 20)
                .into_iter()
                .map(|p| p.0)
                .collect();
            let x = hour_features(&hours);
            let m = match select_components(&x, 6, 5, run) {
                Ok(m) => m,
                Err(e) => return Fail(e.to_string()),
            };
            if m.k == modes.len() {
                ok += 1;
            }
            if run < 10 {
                for k in 1..=4 {
                    if let Ok(g) = fit_gmm(&x, k, run) {
                        fits.push(g);
                    }
                }
            }
            for row in m.responsibilities(&x) {
                row_error = row_error.max((row.iter().sum::<f64>() - 1.0).abs());
            }
            fits.push(m);
        }
        hits.push(ok);
    }

    // wrap fixture: one circular mode straddling midnight
    let mut rng = ChaCha8Rng::seed_from_u64(2302);
    let normal = Normal::new(23.5f64, 0.5).expect("valid sigma");
    let hours: Vec<f64> = (0..20)
        .map(|_| normal.sample(&mut rng).rem_euclid(24.0) % 24.0)
        .collect();
    let t0 = chrono::NaiveDate::from_ymd_opt(2009, 3, 2)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let trips: Vec<Trip> = hours
        .iter()
        .enumerate()
        .map(|(i, &h)| Trip {
            trajectory_id: i,
            origin: 0,
            destination: 1,
            start_time: t0,
            start_hour: h,
            day_of_week: 0,
            length_m: 1000.0,
            duration_s: 600.0,
        })
        .collect();
    let wrap_model = select_components(&cyclic_features(&trips).unwrap(), 6, 5, 0).unwrap();
    let wrap = classify_habits(&trips, &wrap_model).unwrap();
    fits.push(wrap_model);

    let non_monotone = fits.iter().filter(|m| !trace_is_monotone(m)).count();
    let ok =
        non_monotone == 0 && row_error <= 1e-9 && hits.iter().all(|&h| h >= 95) && wrap.len() == 1;
    verdict(
        ok,
        format!(
            "planted k recovered {}/{}/{} of 100 (1/2/3 modes); {} fits, {non_monotone} non-monotone; max row error {row_error:.1e}; wrap fixture -> {} habit(s)",
            hits[0], hits[1], hits[2], fits.len(), wrap.len()
        ),
    )
}

/// Best fraction of trips whose habit matches the planted mode under any
/// one-to-one relabeling.
fn agreement(groups: &[Vec<usize>], truth: &BTreeMap<usize, usize>, modes: usize) -> f64 {
    let mut labels: Vec<usize> = (0..modes).collect();
    let mut best = 0;
    let mut perms = Vec::new();
    permutations(&mut labels, 0, &mut perms);
    for p in perms {
        let hits: usize = groups
            .iter()
            .enumerate()
            .map(|(g, ids)| {
                ids.iter()
                    .filter(|id| p.get(g).is_some_and(|&l| truth.get(id) == Some(&l)))
                    .count()
            })
            .sum();
        best = best.max(hits);
    }
    best as f64 / truth.len().max(1) as f64
}

fn permutations(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == v.len() {
        out.push(v.clone());
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, out);
        v.swap(k, i);
    }
}

fn ac9() -> Outcome {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let planted = planted_commuter(
            &mut rng,
            "planted",
            30,
            &[7.0, 9.0, 11.0],
            &[16.0, 18.5, 21.0],
            0.25,
        );
        let cfg = PipelineConfig::default();
        let result = process_user(&UserId::new("planted"), planted.points.clone(), &cfg);
        (planted, result)
    };
    let (planted, first) = run();
    let (_, second) = run();
    let (first, second) = match (first, second) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Fail(e.to_string()),
    };
    let deterministic = first.report == second.report && first.habits == second.habits;

    // planted mode of each trip, matched by direction and departure time
    let home_place = first
        .places
        .iter()
        .min_by(|a, b| {
            haversine_distance(a.centroid, planted.home)
                .total_cmp(&haversine_distance(b.centroid, planted.home))
        })
        .map(|p| p.place_id);
    let mut details = Vec::new();
    let mut ok =
        first.places.len() == 2 && first.trips.len() == planted.trips.len() && deterministic;
    let pairs: Vec<_> = first.habits.iter().map(|p| p.od_pair).collect();
    ok &= pairs.len() == 2
        && pairs[0].origin == pairs[1].destination
        && pairs[0].destination == pairs[1].origin;
    for pair in &first.habits {
        let outbound = Some(pair.od_pair.origin) == home_place;
        let mut truth = BTreeMap::new();
        for t in first.trips.iter().filter(|t| t.od_pair() == pair.od_pair) {
            let planted_trip = planted
                .trips
                .iter()
                .filter(|p| p.1 == outbound)
                .min_by_key(|p| (p.0 - t.start_time).num_seconds().abs());
            if let Some(p) = planted_trip {
                if (p.0 - t.start_time).num_seconds().abs() <= 600 {
                    truth.insert(t.trajectory_id, p.2);
                }
            }
        }
        let groups: Vec<Vec<usize>> = pair.habits.iter().map(|h| h.trip_ids.clone()).collect();
        let agree = agreement(&groups, &truth, 3);
        ok &= pair.habits.len() == 3 && agree >= 0.9 && truth.len() == pair.trip_count;
        details.push(format!(
            "{}: {} trips, {} habits, agreement {:.2}",
            pair.od_pair,
            pair.trip_count,
            pair.habits.len(),
            agree
        ));
    }
    verdict(
        ok,
        format!(
            "{} places, {} trips; {}; deterministic {deterministic}",
            first.places.len(),
            first.trips.len(),
            details.join("; ")
        ),
    )
}

fn ac10() -> Outcome {
    let mut round_trip_fail = 0;
    let mut idempotence_fail = 0;
    let mut identity_fail = 0;
    let mut rejected_ok = 0;
    for case in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let n = rng.random_range(0..300);
        let pts = random_trace(&mut rng, "u", n);

        let mut csv = Vec::new();
        write_gsm_csv(&pts, &mut csv).expect("in-memory write");
        let mut plt = Vec::new();
        write_geolife_plt(&pts, &mut plt).expect("in-memory write");
        let from_csv = parse_gsm_csv(csv.as_slice(), &GsmLayout::default());
        let from_plt = parse_geolife_plt(plt.as_slice(), &UserId::new("u"));
        if !matches!(&from_csv, Ok(p) if p.points == pts && p.rejected == 0)
            || !matches!(&from_plt, Ok(p) if p.points == pts && p.rejected == 0)
        {
            round_trip_fail += 1;
        }

        // fuzz: garbage rows, duplicates, spikes, shuffled order
        let mut text = String::from_utf8(csv).expect("utf8");
        let garbage = rng.random_range(0..5);
        for g in 0..garbage {
            text.push_str(
                [
                    "u,abc,1,2009-03-02 00:00:00\n",
                    "u,1,2\n",
                    "u,95,10,2009-03-02 00:00:00\n",
                    "u,,,\n",
                    "u,1,1,yesterday\n",
                ][g % 5],
            );
        }
        let parsed =
            parse_gsm_csv(text.as_bytes(), &GsmLayout::default()).expect("fuzzed csv parses");
        if parsed.rejected == garbage {
            rejected_ok += 1;
        }
        let mut input = parsed.points;
        let extra: Vec<Point> = input
            .iter()
            .filter(|_| rng.random_bool(0.1))
            .cloned()
            .collect();
        input.extend(extra);
        for p in input.iter_mut() {
            if rng.random_bool(0.03) {
                let far = offset(p.latlon(), rng.random_range(-50_000.0..50_000.0), 30_000.0);
                *p = Point::new(p.user.clone(), far.lat, far.lon, p.time).expect("in range");
            }
        }
        input.shuffle(&mut rng);
        let count = input.len();
        let (once, report) = clean(input, 50.0);
        if !report.is_consistent()
            || report.input_count != count
            || report.output_count != once.len()
        {
            identity_fail += 1;
        }
        let (twice, again) = clean(once.clone(), 50.0);
        if twice != once || !again.is_consistent() {
            idempotence_fail += 1;
        }
    }
    verdict(
        round_trip_fail + idempotence_fail + identity_fail == 0 && rejected_ok == 300,
        format!(
            "300 fuzzed cases: round-trip failures {round_trip_fail}, idempotence failures {idempotence_fail}, report identity failures {identity_fail}, garbage rows counted exactly in {rejected_ok}"
        ),
    )
}

fn main() {
    let datasets = load_datasets();
    let criteria: Vec<(&str, &str, Outcome)> = vec![
        ("AC1", "Geolife user 004 counts", ac1(&datasets)),
        ("AC2", "Geolife user 004 top places", ac2(&datasets)),
        ("AC3", "GSM user 10837 counts", ac3(&datasets)),
        ("AC4", "Geolife user 004 top pair habits", ac4(&datasets)),
        ("AC5", "clustering oracle equivalence", ac5()),
        ("AC6", "bridged blobs ordering", ac6()),
        ("AC7", "stay-point properties", ac7()),
        ("AC8", "mixture suite", ac8()),
        ("AC9", "planted end to end", ac9()),
        ("AC10", "ingest round trip and cleaning", ac10()),
    ];
    let mut unexpected = 0;
    for (id, name, outcome) in &criteria {
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => ("FAIL", d),
            Skip(d) => ("SKIP", d),
        };
        let known = KNOWN_FAILURES.contains(id);
        let note = match (outcome, known) {
            (Fail(_), true) => " [known failure]",
            (Fail(_), false) => {
                unexpected += 1;
                ""
            }
            _ => "",
        };
        println!("{id:<5} {tag} {name}: {detail}{note}");
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance criteria failed unexpectedly");
        std::process::exit(1);
    }
}
