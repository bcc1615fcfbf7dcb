//! Acceptance harness: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every expected value is computed here independently of the
//! library under test.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration as StdDuration, Instant};

use aurora_core::analytics::design::INTERCEPT;
use aurora_core::analytics::regression::{logit_loglik, nb_loglik, ordinal_loglik};
use aurora_core::analytics::{
    fit_logit, fit_nb, fit_ordinal, odds_ratio_from, sessionize_and_filter, AnalyticsConfig, DesignMatrix,
};
use aurora_core::bot::{
    compose_location_digests, compose_text, plan_cycle, BotConfig, BotPostKind, Tokenizer, MAX_TEXT_CHARS,
};
use aurora_core::centrality::{rw_betweenness_scores, LocationInteractionGraph};
use aurora_core::diversity::{extract_features, select_div, select_pm, timeline_entropy, FilterConfig, Pool};
use aurora_core::events::{
    replay_path, Condition, EventLog, EventSource, EventType, Group, InteractionEvent, LoggedEvent, SessionStamp,
    UaClass,
};
use aurora_core::issue::{build_issue, IssueConfig};
use aurora_core::layout::{squarify, Rect};
use aurora_core::{Author, LocationId, LocationRegistry, MicroPost, PopulationTable, TimeWindow};
use aurora_service::issues::IssueStore;
use aurora_service::sessions::SessionStore;
use aurora_service::source::StaticPosts;
use aurora_service::state::{AppState, Parts};
use axum::body::Body;
use axum::http::{header, Request};
use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use http_body_util::BodyExt;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use tower::ServiceExt;

type Check = Result<String, String>;
type LogLik<'a> = &'a dyn Fn(&DVector<f64>) -> (f64, DVector<f64>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    budget: Option<StdDuration>,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion { name: "sideline_windows", budget: Some(StdDuration::from_secs(30)), run: sideline_windows },
        Criterion { name: "zero_turns_equals_div", budget: Some(StdDuration::from_secs(10)), run: zero_turns_equals_div },
        Criterion { name: "entropy_oracle", budget: Some(StdDuration::from_secs(5)), run: entropy_oracle },
        Criterion { name: "squarify_oracle", budget: Some(StdDuration::from_secs(5)), run: squarify_oracle },
        Criterion { name: "current_flow_betweenness", budget: Some(StdDuration::from_secs(60)), run: betweenness_oracle },
        Criterion { name: "regression_recovery", budget: Some(StdDuration::from_secs(60)), run: regression_recovery },
        Criterion { name: "odds_ratio_anchors", budget: None, run: odds_ratio_anchors },
        Criterion { name: "analytics_replay", budget: Some(StdDuration::from_secs(10)), run: analytics_replay },
        Criterion { name: "service_contract", budget: None, run: service_contract },
        Criterion { name: "bot_schedule", budget: None, run: bot_schedule },
    ];
    let quiet = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {:.2} s, budget {} s", elapsed.as_secs_f64(), b.as_secs())),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        if outcome.is_err() {
            failures += 1;
        }
        println!("{tag} {:<26} {:>7.2} s  {detail}", c.name, elapsed.as_secs_f64());
        std::io::stdout().flush().ok();
    }
    std::panic::set_hook(quiet);
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Synthetic posts

fn loc(code: &str) -> LocationId {
    LocationId::new(code).unwrap()
}

fn codes(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("L{i:02}")).collect()
}

fn window_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2014, 10, 1, 6, 0, 0).unwrap()
}

/// Heavy-tailed count spanning several orders of magnitude.
fn spread<R: Rng>(rng: &mut R, max_exp: f64) -> u64 {
    if rng.random_bool(0.15) {
        0
    } else {
        10f64.powf(rng.random_range(0.0..max_exp)).floor() as u64
    }
}

fn synthetic_posts<R: Rng>(rng: &mut R, locations: &[String], n: usize, window_secs: i64) -> Vec<MicroPost> {
    const TAGS: [&str; 6] = ["Elecciones", "chile", "Debate", "marcha", "TEMUCO", "voto"];
    let start = window_start();
    (0..n)
        .map(|i| {
            let hashtags = match rng.random_range(0..4) {
                0 => vec![],
                1 => vec![format!("#{}", TAGS[rng.random_range(0..TAGS.len())])],
                _ => (0..rng.random_range(1..4)).map(|_| TAGS[rng.random_range(0..TAGS.len())].to_string()).collect(),
            };
            MicroPost {
                id: format!("p{i:05}"),
                author: Author {
                    id: format!("a{i:05}"),
                    screen_name: format!("user{i}"),
                    self_reported_location: String::new(),
                    followers: spread(rng, 5.0),
                    friends: spread(rng, 3.5),
                    statuses: spread(rng, 5.0),
                    account_created_at: start - Duration::days(900),
                },
                text: format!("mensaje {i} sobre {}", rng.random_range(0..1_000_000)),
                created_at: start + Duration::milliseconds(rng.random_range(0..window_secs * 1000)),
                retweet_count: spread(rng, 4.0),
                hashtags,
                urls: if rng.random_bool(0.4) { vec![format!("http://t.co/{i}")] } else { vec![] },
                mentions: vec![],
                reply_to: None,
                retweet_of: None,
                location: Some(loc(&locations[rng.random_range(0..locations.len())])),
            }
        })
        .collect()
}

fn pool_of(posts: Vec<MicroPost>, window_secs: i64) -> Pool {
    let start = window_start();
    Pool::with_window(posts, TimeWindow::new(start, start + Duration::seconds(window_secs)))
}

// ---------------------------------------------------------------------------
// 1. Sideline property

fn sideline_windows() -> Check {
    let locations = codes(15);
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let pool = pool_of(synthetic_posts(&mut rng, &locations, 2000, 6 * 3600), 6 * 3600);
    let mut clean = 0;
    for run in 0..200u64 {
        let cfg = FilterConfig { size: 30, turns: 5, seed: run, ..FilterConfig::default() };
        let t = select_pm(&pool, &cfg).map_err(|e| e.to_string())?;
        ensure!(t.len() == 30, "run {run}: {} posts", t.len());
        if t.relaxations > 0 {
            continue;
        }
        clean += 1;
        let locs: Vec<&LocationId> = t.posts.iter().map(|p| p.location.as_ref().unwrap()).collect();
        for (k, w) in locs.windows(6).enumerate() {
            let distinct: HashSet<_> = w.iter().collect();
            ensure!(distinct.len() == 6, "run {run}: repeated location in window starting at {k}");
        }
    }
    ensure!(clean > 0, "no run finished without relaxation");
    Ok(format!("{clean}/200 runs without relaxation, all windows distinct"))
}

// ---------------------------------------------------------------------------
// 2. turns = 0 reduces to DIV

fn zero_turns_equals_div() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    for k in 0..50u64 {
        let locations = codes(rng.random_range(1..=12));
        let n = rng.random_range(40..400);
        let pool = pool_of(synthetic_posts(&mut rng, &locations, n, 6 * 3600), 6 * 3600);
        let cfg = FilterConfig { turns: 0, seed: k, stream: k % 3, ..FilterConfig::default() };
        let pm = select_pm(&pool, &cfg).map_err(|e| e.to_string())?;
        let div = select_div(&pool, &cfg).map_err(|e| e.to_string())?;
        ensure!(pm.ids() == div.ids(), "pool {k}: sequences differ");
        ensure!(pm.relaxations == 0, "pool {k}: relaxations with turns=0");
    }
    Ok("50/50 pools identical".into())
}

// ---------------------------------------------------------------------------
// 3. Entropy against a direct histogram

fn magnitude(n: u64) -> u32 {
    if n == 0 {
        0
    } else {
        (n.to_string().len() as u32).min(4)
    }
}

fn shannon_bits<K: std::hash::Hash + Eq>(values: &[K]) -> f64 {
    let mut counts: HashMap<&K, f64> = HashMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1.0;
    }
    let n = values.len() as f64;
    counts.values().map(|c| -(c / n) * (c / n).log2()).sum()
}

fn brute_entropy(posts: &[MicroPost], start: DateTime<Utc>, len_secs: i64) -> f64 {
    let links: Vec<bool> = posts.iter().map(|p| !p.urls.is_empty()).collect();
    let tags: Vec<String> = posts
        .iter()
        .map(|p| {
            let mut t: Vec<String> = p.hashtags.iter().map(|h| h.trim_start_matches('#').to_lowercase()).collect();
            t.sort();
            t.into_iter().next().unwrap_or_default()
        })
        .collect();
    let conn: Vec<u32> = posts.iter().map(|p| magnitude(p.author.followers + p.author.friends)).collect();
    let exp: Vec<u32> = posts.iter().map(|p| magnitude(p.author.statuses)).collect();
    let age: Vec<i64> = posts
        .iter()
        .map(|p| ((p.created_at - start).num_milliseconds() * 6 / (len_secs * 1000)).clamp(0, 5))
        .collect();
    let pop: Vec<u32> = posts.iter().map(|p| magnitude(p.retweet_count)).collect();
    shannon_bits(&links) + shannon_bits(&tags) + shannon_bits(&conn) + shannon_bits(&exp) + shannon_bits(&age)
        + shannon_bits(&pop)
}

fn entropy_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let locations = codes(5);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let len = rng.random_range(60..=86_400);
        let n = rng.random_range(1..=80);
        let posts = synthetic_posts(&mut rng, &locations, n, len);
        let start = window_start();
        let window = TimeWindow::new(start, start + Duration::seconds(len));
        let features: Vec<_> = posts.iter().map(|p| extract_features(p, &window)).collect();
        let got = timeline_entropy(&features).map_err(|e| e.to_string())?;
        let want = brute_entropy(&posts, start, len);
        worst = worst.max((got - want).abs());
        ensure!((got - want).abs() <= 1e-9, "set {k}: {got} vs {want}");
    }
    Ok(format!("1000 sets, max |diff| = {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 4. Squarified treemap

fn squarify_oracle() -> Check {
    // Row acceptance traced by hand on the 6x4 rectangle.
    let traced = [
        (0.0, 0.0, 3.0, 2.0),
        (0.0, 2.0, 3.0, 2.0),
        (3.0, 0.0, 12.0 / 7.0, 7.0 / 3.0),
        (3.0 + 12.0 / 7.0, 0.0, 9.0 / 7.0, 7.0 / 3.0),
        (3.0, 7.0 / 3.0, 1.2, 5.0 / 3.0),
        (4.2, 7.0 / 3.0, 1.2, 5.0 / 3.0),
        (5.4, 7.0 / 3.0, 0.6, 5.0 / 3.0),
    ];
    let got = squarify(&[6.0, 6.0, 4.0, 3.0, 2.0, 2.0, 1.0], Rect::new(0.0, 0.0, 6.0, 4.0).unwrap())
        .map_err(|e| e.to_string())?;
    ensure!(got.len() == traced.len(), "{} rects", got.len());
    for (i, (r, t)) in got.iter().zip(traced).enumerate() {
        let same = [(r.x, t.0), (r.y, t.1), (r.w, t.2), (r.h, t.3)].iter().all(|(a, b)| (a - b).abs() <= 1e-12);
        ensure!(same, "rect {i}: {r:?} vs {t:?}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let (mut worst_fid, mut worst_tile): (f64, f64) = (0.0, 0.0);
    for k in 0..500 {
        let n = rng.random_range(1..=40);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..100.0)).collect();
        let outer = Rect::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(1.0..2000.0), rng.random_range(1.0..2000.0))
            .unwrap();
        let rects = squarify(&weights, outer).map_err(|e| e.to_string())?;
        let total: f64 = weights.iter().sum();
        let area = outer.w * outer.h;
        for (w, r) in weights.iter().zip(&rects) {
            let want = w / total * area;
            let rel = ((r.w * r.h) - want).abs() / want;
            worst_fid = worst_fid.max(rel);
            ensure!(rel <= 1e-9, "vector {k}: relative area error {rel:e}");
            let inside = r.x >= outer.x - 1e-6
                && r.y >= outer.y - 1e-6
                && r.x + r.w <= outer.x + outer.w + 1e-6
                && r.y + r.h <= outer.y + outer.h + 1e-6;
            ensure!(inside, "vector {k}: {r:?} leaves {outer:?}");
        }
        let covered: f64 = rects.iter().map(|r| r.w * r.h).sum();
        worst_tile = worst_tile.max((covered - area).abs());
        ensure!((covered - area).abs() <= 1e-6, "vector {k}: covered {covered} of {area}");
        for i in 0..rects.len() {
            for j in (i + 1)..rects.len() {
                let (a, b) = (&rects[i], &rects[j]);
                let dx = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
                let dy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
                let overlap = dx.max(0.0) * dy.max(0.0);
                ensure!(overlap <= 1e-6, "vector {k}: rects {i} and {j} overlap by {overlap}");
            }
        }
    }
    Ok(format!("trace exact; 500 vectors, max rel area err {worst_fid:.1e}, max tiling gap {worst_tile:.1e}"))
}

// ---------------------------------------------------------------------------
// 5. Random-walk betweenness against explicit flow equations

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (dst, src) in a[row].iter_mut().zip(&pivot_row).skip(col) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Unit current from `s` to `t`: Kirchhoff at every node except `t`, which is
/// held at zero potential.
fn flow_betweenness(w: &[Vec<f64>]) -> Vec<f64> {
    let n = w.len();
    let a: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { w[i][j] + w[j][i] }).collect()).collect();
    let mut score = vec![0.0; n];
    for s in 0..n {
        for t in (s + 1)..n {
            let mut m = vec![vec![0.0; n]; n];
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                if i == t {
                    m[i][i] = 1.0;
                    continue;
                }
                for j in 0..n {
                    m[i][i] += a[i][j];
                    m[i][j] -= a[i][j];
                }
            }
            rhs[s] = 1.0;
            let v = gauss_solve(m, rhs);
            for i in 0..n {
                score[i] += if i == s || i == t {
                    1.0
                } else {
                    0.5 * (0..n).map(|j| a[i][j] * (v[i] - v[j]).abs()).sum::<f64>()
                };
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    score.iter().map(|x| x / pairs).collect()
}

fn graph_from(w: &[Vec<f64>]) -> LocationInteractionGraph {
    let mut g = LocationInteractionGraph::new(codes(w.len()).iter().map(|c| loc(c)).collect());
    for (i, row) in w.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            g.set_weight_at(i, j, *x).unwrap();
        }
    }
    g
}

fn undirected(n: usize, edges: &[(usize, usize)]) -> LocationInteractionGraph {
    let mut w = vec![vec![0.0; n]; n];
    for &(a, b) in edges {
        w[a][b] = 1.0;
    }
    graph_from(&w)
}

fn betweenness_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = rng.random_range(2..=6);
        let mut w = vec![vec![0.0; n]; n];
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for i in 1..n {
            let parent = order[rng.random_range(0..i)];
            let (a, b) = if rng.random_bool(0.5) { (order[i], parent) } else { (parent, order[i]) };
            w[a][b] += rng.random_range(0.1..5.0);
        }
        for _ in 0..rng.random_range(0..=n * n) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            w[a][b] += rng.random_range(0.0..5.0);
        }
        let got = rw_betweenness_scores(&graph_from(&w)).map_err(|e| e.to_string())?;
        let want = flow_betweenness(&w);
        for (i, (g, e)) in got.iter().zip(&want).enumerate() {
            worst = worst.max((g - e).abs());
            ensure!((g - e).abs() <= 1e-8, "graph {k} node {i}: {g} vs {e}");
        }
    }

    let star = rw_betweenness_scores(&undirected(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])).map_err(|e| e.to_string())?;
    ensure!(star[1..].iter().all(|&l| star[0] > l + 1e-9), "star centre not greatest: {star:?}");
    ensure!(star[1..].iter().all(|&l| (l - star[1]).abs() < 1e-12), "star leaves differ: {star:?}");
    let path = rw_betweenness_scores(&undirected(5, &[(0, 1), (1, 2), (2, 3), (3, 4)])).map_err(|e| e.to_string())?;
    ensure!(path[2] > path[1] && path[1] > path[0], "path not peaked: {path:?}");
    ensure!((path[1] - path[3]).abs() < 1e-12 && (path[0] - path[4]).abs() < 1e-12, "path asymmetric: {path:?}");
    let all: Vec<(usize, usize)> = (0..5).flat_map(|a| ((a + 1)..5).map(move |b| (a, b))).collect();
    let complete = rw_betweenness_scores(&undirected(5, &all)).map_err(|e| e.to_string())?;
    ensure!(complete.iter().all(|c| (c - complete[0]).abs() < 1e-12), "complete graph uneven: {complete:?}");
    Ok(format!("100 graphs, max |diff| = {worst:.1e}; star, path and complete patterns hold"))
}

// ---------------------------------------------------------------------------
// 6. Regression recovery

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: {got:.4} vs {want} (±{tol})"))
    }
}

fn fd_check(name: &str, f: LogLik, at: &DVector<f64>) -> Result<f64, String> {
    let (_, grad) = f(at);
    let mut worst: f64 = 0.0;
    for i in 0..at.len() {
        let h = 1e-5 * at[i].abs().max(1.0);
        let (mut up, mut down) = (at.clone(), at.clone());
        up[i] += h;
        down[i] -= h;
        let fd = (f(&up).0 - f(&down).0) / (2.0 * h);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
        worst = worst.max(rel);
        if rel > 1e-5 {
            return Err(format!("{name} gradient {i}: analytic {} vs numeric {fd}", grad[i]));
        }
    }
    Ok(worst)
}

fn regression_recovery() -> Check {
    let n = 5000;
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x1: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let x2: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
    let design = DesignMatrix::with_intercept(&[("x1", &x1), ("x2", &x2)]).map_err(|e| e.to_string())?;

    // Logit: intercept -0.5, slopes 1.0 and -0.7.
    let y: Vec<f64> =
        (0..n).map(|i| f64::from(u8::from(rng.random_bool(sigmoid(-0.5 + x1[i] - 0.7 * x2[i]))))).collect();
    let fit = fit_logit(&y, &design, None).map_err(|e| e.to_string())?;
    close("logit intercept", fit.coefficients[INTERCEPT], -0.5, 0.1)?;
    close("logit x1", fit.coefficients["x1"], 1.0, 0.1)?;
    close("logit x2", fit.coefficients["x2"], -0.7, 0.1)?;

    // Proportional odds: P(y <= j) = sigmoid(c_j - x b), c = (-1, 0.5, 2), b = (0.8, -0.5).
    let cuts = [-1.0, 0.5, 2.0];
    let y_ord: Vec<u8> = (0..n)
        .map(|i| {
            let u: f64 = rng.random_range(1e-12..1.0);
            let latent = 0.8 * x1[i] - 0.5 * x2[i] + (u / (1.0 - u)).ln();
            cuts.iter().filter(|c| latent > **c).count() as u8
        })
        .collect();
    let fit = fit_ordinal(&y_ord, &design).map_err(|e| e.to_string())?;
    close("ordinal x1", fit.coefficients["x1"], 0.8, 0.1)?;
    close("ordinal x2", fit.coefficients["x2"], -0.5, 0.1)?;
    for (j, (got, want)) in fit.cutpoints.iter().zip(cuts).enumerate() {
        close(&format!("ordinal cut {j}"), *got, want, 0.1)?;
    }

    // NB2 as a gamma-Poisson mixture: mean exp(0.5 + 0.3 x1 - 0.4 x2), theta 2.
    let theta = 2.0;
    let gamma = Gamma::new(theta, 1.0 / theta).unwrap();
    let y_nb: Vec<f64> = (0..n)
        .map(|i| {
            let mu = (0.5 + 0.3 * x1[i] - 0.4 * x2[i]).exp() * gamma.sample(&mut rng);
            if mu <= 0.0 {
                0.0
            } else {
                Poisson::new(mu).unwrap().sample(&mut rng)
            }
        })
        .collect();
    let fit = fit_nb(&y_nb, &design).map_err(|e| e.to_string())?;
    close("nb intercept", fit.coefficients[INTERCEPT], 0.5, 0.1)?;
    close("nb x1", fit.coefficients["x1"], 0.3, 0.1)?;
    close("nb x2", fit.coefficients["x2"], -0.4, 0.1)?;
    close("nb theta", fit.theta.unwrap_or(f64::NAN), theta, 0.5)?;

    // Analytic against central-difference gradients.
    let small = 300;
    let xm = DMatrix::from_fn(small, 3, |i, j| match j {
        0 => 1.0,
        1 => x1[i],
        _ => x2[i],
    });
    let xs = DMatrix::from_fn(small, 2, |i, j| if j == 0 { x1[i] } else { x2[i] });
    let yl: Vec<f64> = y[..small].to_vec();
    let yo: Vec<usize> = y_ord[..small].iter().map(|v| *v as usize).collect();
    let yn: Vec<f64> = y_nb[..small].to_vec();
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let b = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        worst = worst.max(fd_check("logit", &|p| logit_loglik(&xm, &yl, None, p), &b)?);
        let mut c: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        c.sort_by(f64::total_cmp);
        let params = DVector::from_iterator(5, c.into_iter().chain([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]));
        worst = worst.max(fd_check("ordinal", &|p| ordinal_loglik(&xs, &yo, p), &params)?);
        let mut nb_params = b.clone().insert_row(3, rng.random_range(-1.0..2.0));
        nb_params[0] = 0.2 * trial as f64 / 20.0;
        worst = worst.max(fd_check(
            "nb",
            &|p| {
                let beta = p.rows(0, 3).into_owned();
                nb_loglik(&xm, &yn, &beta, p[3])
            },
            &nb_params,
        )?);
    }

    // Two ordered categories reduce to the logit with intercept -cutpoint.
    let single = DesignMatrix::with_intercept(&[("x1", &x1[..1500])]).map_err(|e| e.to_string())?;
    let yb: Vec<f64> = y[..1500].to_vec();
    let logit = fit_logit(&yb, &single, None).map_err(|e| e.to_string())?;
    let labels: Vec<u8> = yb.iter().map(|v| *v as u8).collect();
    let ord = fit_ordinal(&labels, &single).map_err(|e| e.to_string())?;
    close("two-category slope", ord.coefficients["x1"], logit.coefficients["x1"], 1e-6)?;
    close("two-category intercept", -ord.cutpoints[0], logit.coefficients[INTERCEPT], 1e-6)?;
    close("two-category loglik", ord.log_likelihood, logit.log_likelihood, 1e-6)?;
    Ok(format!("all coefficients within tolerance; worst gradient rel err {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 7. Odds-ratio anchors

fn odds_ratio_anchors() -> Check {
    let anchors = [(0.7541, 2.126), (-0.494, 0.610), (0.628, 1.873), (0.732, 2.080)];
    let mut out = Vec::new();
    for (beta, want) in anchors {
        let got = odds_ratio_from(beta, 0.1).odds_ratio;
        ensure!((got - want).abs() <= 0.001, "exp({beta}) = {got:.4}, expected {want}");
        out.push(format!("{got:.4}"));
    }
    Ok(out.join(" "))
}

// ---------------------------------------------------------------------------
// 8. Analytics replay

#[derive(Debug, PartialEq)]
struct Expected {
    group: Group,
    condition: Condition,
    active_days: u32,
    dwell: f64,
    distinct: usize,
    filter: u8,
    content: usize,
}

struct Fixture {
    events: Vec<LoggedEvent>,
    registry: LocationRegistry,
    excluded: [Vec<String>; 5],
    top_candidates: usize,
    expected: BTreeMap<String, Expected>,
}

/// 500 users with planted exclusions. Survivors 70..500 leave 430 users, of
/// which floor(0.05 * 430) = 21 are cut for dwell: 20 long visitors plus the
/// lower key of a tied pair.
fn analytics_fixture() -> Fixture {
    let registry = LocationRegistry::from_codes(["RM", "V", "VIII", "IX", "X"]).unwrap();
    let targets = ["RM", "V", "VIII", "IX", "X"];
    let content_kinds = [EventType::PostDetail, EventType::LinkClick, EventType::RetweetClick, EventType::ReplyClick];
    // 20:30 local time in UTC-3, so later users cross UTC midnight on the same local day.
    let base = Utc.with_ymd_and_hms(2014, 10, 2, 23, 30, 0).unwrap();
    let mut raw: Vec<(DateTime<Utc>, EventSource, SessionStamp, InteractionEvent)> = Vec::new();
    let mut excluded: [Vec<String>; 5] = Default::default();
    let mut expected = BTreeMap::new();

    for i in 0..500usize {
        let user = format!("u{i:03}");
        let start = base + Duration::seconds(7 * i as i64);
        let group = match i {
            30..45 => Group::Unknown,
            _ if i % 2 == 0 => Group::Rm,
            _ => Group::NotRm,
        };
        let condition = Condition::ALL[i % 3];
        let ua_class = if i < 20 { UaClass::Mobile } else { UaClass::Desktop };
        let stamp = SessionStamp { condition, group, ua_class };
        let mut push = |at: DateTime<Utc>, t: EventType, target: Option<&str>| {
            let source = if matches!(t, EventType::SessionCreated | EventType::SessionRestored) {
                EventSource::Server
            } else {
                EventSource::Client
            };
            let mut e = InteractionEvent::new(&user, t);
            if let Some(code) = target {
                e.target = Some(format!("post-{code}-{i}"));
                e.target_location = Some(loc(code));
            }
            raw.push((at, source, stamp.clone(), e));
        };
        push(start, EventType::SessionCreated, None);

        if (20..30).contains(&i) {
            push(start + Duration::seconds(30), EventType::SessionRestored, None);
            excluded[1].push(user);
            continue;
        }
        push(start, EventType::TimelineLoaded, None);
        if (45..70).contains(&i) {
            let ms = if i % 2 == 0 { 8_000 } else { 9_999 };
            push(start + Duration::milliseconds(ms), EventType::Ping, None);
            excluded[3].push(user);
            continue;
        }
        let pings: i64 = match i {
            70..90 => 150 + (i as i64 - 70),
            90 | 91 => 140,
            _ => 1 + (i as i64 % 60),
        };
        for k in 1..=pings {
            push(start + Duration::seconds(10 * k), EventType::Ping, None);
        }
        let clicks = i % 4;
        for k in 1..=clicks {
            push(start + Duration::seconds(10 * k as i64), content_kinds[(i + k) % 4], Some(targets[(i + k) % 5]));
        }
        let unregistered = i % 7 == 0;
        if unregistered {
            push(start + Duration::seconds(10), EventType::FollowClick, Some("ZZ"));
        }
        let filtered = i % 3 == 0;
        if filtered {
            let mut_target = Some("RM");
            push(start + Duration::seconds(10), EventType::LocationFilter, mut_target);
        }
        let second_day = i % 4 == 1;
        if second_day {
            let next = start + Duration::days(1);
            push(next, EventType::SessionRestored, None);
            push(next + Duration::seconds(10), EventType::Ping, None);
        }
        match i {
            0..20 => excluded[0].push(user),
            30..45 => excluded[2].push(user),
            70..=90 => excluded[4].push(user),
            _ => {
                let days = if second_day { 2 } else { 1 };
                expected.insert(
                    user,
                    Expected {
                        group,
                        condition,
                        active_days: days,
                        dwell: 10.0 * pings as f64 + if second_day { 10.0 } else { 0.0 },
                        distinct: clicks,
                        filter: u8::from(filtered),
                        content: clicks + usize::from(unregistered),
                    },
                );
            }
        }
    }

    raw.sort_by_key(|r| r.0);
    let events = raw
        .into_iter()
        .enumerate()
        .map(|(k, (at, source, stamp, event))| LoggedEvent { seq: k as u64 + 1, server_ts: at, source, stamp, event })
        .collect();
    Fixture { events, registry, excluded, top_candidates: 430, expected }
}

fn analytics_replay() -> Check {
    let fx = analytics_fixture();
    ensure!(fx.excluded[4].len() == fx.top_candidates * 5 / 100, "fixture plants {} top users", fx.excluded[4].len());
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("events.jsonl");
    {
        // Lines are shuffled on disk; replay restores sequence order.
        let mut lines: Vec<String> = fx.events.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(8008));
        std::fs::write(&path, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
    }
    let first = replay_path(&path).map_err(|e| e.to_string())?;
    let second = replay_path(&path).map_err(|e| e.to_string())?;
    ensure!(first.corrupt == 0, "{} corrupt lines", first.corrupt);
    let cfg = AnalyticsConfig::default();
    let table = sessionize_and_filter(&first.events, &fx.registry, &cfg);
    ensure!(table == sessionize_and_filter(&second.events, &fx.registry, &cfg), "replays disagree");

    let ex = &table.excluded;
    for (name, got, want) in [
        ("mobile", &ex.mobile, &fx.excluded[0]),
        ("no_client_events", &ex.no_client_events, &fx.excluded[1]),
        ("unknown_group", &ex.unknown_group, &fx.excluded[2]),
        ("short_dwell", &ex.short_dwell, &fx.excluded[3]),
        ("top_dwell", &ex.top_dwell, &fx.excluded[4]),
    ] {
        ensure!(got == want, "{name} exclusions differ: got {} users, want {}", got.len(), want.len());
    }
    ensure!(table.users.len() == fx.expected.len(), "{} users kept, want {}", table.users.len(), fx.expected.len());
    for u in &table.users {
        let e = fx.expected.get(&u.user).ok_or_else(|| format!("unexpected user {}", u.user))?;
        let got = Expected {
            group: u.group,
            condition: u.condition,
            active_days: u.active_days,
            dwell: u.dwell_seconds,
            distinct: u.distinct_locations,
            filter: u.filter_likelihood,
            content: u.content_events,
        };
        ensure!(&got == e, "{}: got {got:?}, want {e:?}", u.user);
        let per_day = e.content as f64 / f64::from(e.active_days);
        ensure!(u.content_events_per_day == per_day, "{}: per-day {} vs {per_day}", u.user, u.content_events_per_day);
    }
    Ok(format!("{} users kept, {} excluded as planted, replays identical", table.users.len(), ex.total()))
}

// ---------------------------------------------------------------------------
// 9. Service contract

fn service_posts(now: DateTime<Utc>) -> Vec<MicroPost> {
    let mut rng = ChaCha8Rng::seed_from_u64(9009);
    let mut posts = synthetic_posts(&mut rng, &codes(6), 300, 3600);
    for p in &mut posts {
        p.created_at = now - Duration::seconds(rng.random_range(1..3600));
    }
    posts
}

fn service_state(log: &std::path::Path, seed: u64) -> Result<Arc<AppState>, String> {
    let registry = LocationRegistry::from_codes(codes(6)).map_err(|e| e.to_string())?;
    let state = AppState::new(Parts {
        population: PopulationTable::uniform(&registry),
        registry,
        source: Arc::new(StaticPosts(service_posts(service_slot()))),
        geo: Arc::new(aurora_service::geo::CsvRangeGeo::default()),
        events: EventLog::open(log).map_err(|e| e.to_string())?,
        issues: IssueStore::in_memory(),
        issue_config: IssueConfig::default(),
        central_location: "L01".into(),
        condition_weights: Condition::ALL.iter().map(|c| (*c, 1.0)).collect(),
        seed: Some(seed),
    })
    .map_err(|e| e.to_string())?;
    Ok(Arc::new(state))
}

fn service_slot() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2014, 10, 1, 12, 0, 0).unwrap()
}

fn condition_in_html(html: &str) -> Option<String> {
    let rest = html.split("data-condition=\"").nth(1)?;
    Some(rest.split('"').next()?.to_string())
}

async fn stickiness(state: Arc<AppState>) -> Result<usize, String> {
    let app = aurora_service::router(state.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(9010);
    let mut tokens: Vec<Option<String>> = vec![None; 60];
    let mut seen: HashMap<String, BTreeSet<String>> = HashMap::new();
    for k in 0..1000 {
        let slot = rng.random_range(0..tokens.len());
        let uri = ["/timeline/current", "/api/issue/current", "/api/session", "/timeline/1", "/api/issue/1?loc=L02"][k % 5];
        let mut req = Request::get(uri).header(header::USER_AGENT, "Mozilla/5.0 (X11; Linux x86_64)");
        if let Some(t) = &tokens[slot] {
            req = req.header(header::COOKIE, format!("at_session={t}"));
        }
        let resp = app.clone().oneshot(req.body(Body::empty()).unwrap()).await.map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("{uri}: status {}", resp.status()));
        }
        let token = resp
            .headers()
            .get(header::SET_COOKIE)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("at_session="))
            .and_then(|v| v.split(';').next())
            .ok_or("missing session cookie")?
            .to_string();
        let body = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
        let text = String::from_utf8_lossy(&body);
        let condition = if uri.starts_with("/timeline") {
            condition_in_html(&text).ok_or("page without condition")?
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            v["hints"]["condition"].as_str().or(v["condition"].as_str()).ok_or("payload without condition")?.to_string()
        };
        if let Some(t) = &tokens[slot] {
            if *t != token {
                return Err(format!("request {k}: cookie {t} replaced"));
            }
        }
        tokens[slot] = Some(token.clone());
        seen.entry(token).or_default().insert(condition);
    }
    if let Some((t, c)) = seen.iter().find(|(_, c)| c.len() != 1) {
        return Err(format!("session {t} saw conditions {c:?}"));
    }
    Ok(seen.len())
}

fn service_contract() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = dir.path().join("events.jsonl");
    let state = service_state(&log, 77)?;
    state.generate_issue(service_slot()).map_err(|e| e.to_string())?;
    let runtime = tokio::runtime::Builder::new_current_thread().build().map_err(|e| e.to_string())?;
    let sessions = runtime.block_on(stickiness(state.clone()))?;
    let logged: HashMap<String, BTreeSet<Condition>> =
        replay_path(&log).map_err(|e| e.to_string())?.events.iter().fold(HashMap::new(), |mut m, e| {
            m.entry(e.event.session_id.clone()).or_default().insert(e.stamp.condition);
            m
        });
    ensure!(logged.values().all(|c| c.len() == 1), "event log shows a session with two conditions");

    let store = SessionStore::new(&Condition::ALL.iter().map(|c| (*c, 1.0)).collect::<Vec<_>>(), Some(3000))
        .map_err(|e| e.to_string())?;
    let mut counts: BTreeMap<Condition, usize> = BTreeMap::new();
    for _ in 0..3000 {
        *counts.entry(store.assign_condition(Group::Rm, UaClass::Desktop, Utc::now()).condition).or_default() += 1;
    }
    let sigma = (3000.0f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
    for c in Condition::ALL {
        let got = counts.get(c).copied().unwrap_or(0) as f64;
        ensure!((got - 1000.0).abs() <= 3.0 * sigma, "{c}: {got} sessions, outside 1000 ± {:.1}", 3.0 * sigma);
    }

    let writers: Vec<String> = (0..16)
        .map(|_| state.resolve_session(&Default::default(), false, Utc::now()).map(|r| r.session.session_id))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let acks: Vec<Vec<u64>> = std::thread::scope(|s| {
        let handles: Vec<_> = writers
            .iter()
            .map(|sid| {
                let state = &state;
                s.spawn(move || {
                    (0..100)
                        .map(|_| state.record_event(InteractionEvent::new(sid, EventType::Ping)).unwrap())
                        .collect::<Vec<u64>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    ensure!(acks.iter().all(|a| a.windows(2).all(|w| w[0] < w[1])), "a writer saw non-increasing acks");
    let file = std::fs::File::open(&log).map_err(|e| e.to_string())?;
    let seqs: Vec<u64> = BufReader::new(file)
        .lines()
        .map(|l| serde_json::from_str::<LoggedEvent>(&l.unwrap()).map(|e| e.seq).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    ensure!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "file sequence numbers not strictly increasing");
    let all: BTreeSet<u64> = acks.iter().flatten().copied().collect();
    ensure!(all.len() == 1600 && all.iter().all(|s| seqs.contains(s)), "acks do not match the log");
    Ok(format!("{sessions} sessions sticky over 1000 requests; counts {:?}; 1600 concurrent appends ordered", counts.values().collect::<Vec<_>>()))
}

// ---------------------------------------------------------------------------
// 10. Bot cycle

fn bot_schedule() -> Check {
    let locations = codes(15);
    let registry = LocationRegistry::from_codes(locations.clone()).map_err(|e| e.to_string())?;
    let population = PopulationTable::uniform(&registry);
    let slot = Utc.with_ymd_and_hms(2014, 10, 1, 12, 0, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10010);
    let mut posts = synthetic_posts(&mut rng, &locations, 600, 3600);
    for p in &mut posts {
        p.created_at = slot - Duration::seconds(rng.random_range(1..3600));
        p.retweet_count = rng.random_range(1..500);
    }
    let issue = build_issue(1, &posts, &registry, &population, &IssueConfig::default(), slot).map_err(|e| e.to_string())?;
    let cfg = BotConfig::default();
    let cycle = plan_cycle(&issue, &cfg, &mut rng);
    let announcements = cycle
        .iter()
        .filter(|p| matches!(p.kind, BotPostKind::AnnouncementTweets | BotPostKind::AnnouncementRetweets))
        .count();
    ensure!(announcements == 2, "{announcements} announcements");
    let retweets: Vec<_> = cycle.iter().filter(|p| p.kind == BotPostKind::Retweet).collect();
    let targets: HashSet<_> = retweets.iter().map(|p| p.target_post.clone()).collect();
    ensure!(retweets.len() <= 29 && targets.len() == retweets.len(), "{} retweets, {} distinct", retweets.len(), targets.len());
    let next = slot + Duration::seconds(cfg.period_secs);
    ensure!(cycle.iter().all(|p| p.scheduled_at >= slot && p.scheduled_at < next), "post outside the cycle");

    let sample = &posts;
    let hour: Vec<MicroPost> = locations
        .iter()
        .enumerate()
        .flat_map(|(k, code)| {
            (0..4).map(move |j| {
                let mut p = sample[k * 4 + j].clone();
                p.location = Some(loc(code));
                p.text = format!("votacion en {} mesa {j} participacion alta", code.to_lowercase());
                p
            })
        })
        .collect();
    let at = slot + Duration::minutes(45);
    let digests = compose_location_digests(&hour, &registry, &Tokenizer::spanish(), &cfg, at).map_err(|e| e.to_string())?;
    ensure!(digests.posts.len() == 15 && digests.omitted.is_empty(), "{} digests", digests.posts.len());
    ensure!(
        digests.posts.iter().all(|p| p.kind == BotPostKind::LocationDigest && p.scheduled_at.minute() == 45),
        "digest outside minute 45"
    );
    let mut instants: Vec<_> = cycle.iter().chain(&digests.posts).map(|p| p.scheduled_at).collect();
    let total = instants.len();
    instants.sort();
    instants.dedup();
    ensure!(instants.len() == total, "duplicate scheduled_at");
    ensure!(cycle.iter().chain(&digests.posts).all(|p| p.text.chars().count() <= MAX_TEXT_CHARS), "cycle post over 140");

    let alphabet: Vec<char> = "abcdefghijklmnñopqrstuvwxyzáéíóú ABCDEFG0123456789#@😀".chars().collect();
    let word = |rng: &mut ChaCha8Rng, max: usize| -> String {
        (0..rng.random_range(0..=max)).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
    };
    for k in 0..10_000 {
        let lead = word(&mut rng, 300);
        let mentions: Vec<String> = (0..rng.random_range(0..=4)).map(|_| word(&mut rng, 20).replace(' ', "_") + "x").collect();
        let link = rng.random_bool(0.8).then(|| format!("http://{}/timeline/{}", "h".repeat(rng.random_range(1..=73)), rng.random_range(0..100_000)));
        let (text, kept) = compose_text(&lead, &mentions, link.as_deref());
        ensure!(text.chars().count() <= MAX_TEXT_CHARS, "composition {k} has {} chars", text.chars().count());
        ensure!(kept.len() <= mentions.len(), "composition {k} invented mentions");
        if let Some(l) = &link {
            ensure!(text.ends_with(l.as_str()), "composition {k} lost its link");
        }
    }
    Ok(format!("2 announcements, {} retweets, 15 digests; 10000 compositions within 140", retweets.len()))
}
