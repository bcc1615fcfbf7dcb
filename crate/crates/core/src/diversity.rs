//! Timeline generation.
//!
//! Three selectors share one pool representation:
//!
//! * **POP** takes the `s` posts with the most retweets.
//! * **DIV** grows the timeline greedily. It seeds with a random member of
//!   the most-retweeted set, then at every step keeps the candidates whose
//!   addition maximizes the summed Shannon entropy of the content features
//!   and draws uniformly from the more popular part of that set.
//! * **PM** is DIV plus location sidelining. Once a post from a location is
//!   picked, that location stays ineligible for the next `turns` picks.
//!
//! All randomness flows from a seeded ChaCha generator, so every selector is
//! a pure function of `(pool, config)`.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::FilterError;
use crate::ingestion::content_key;
use crate::model::{LocationId, Method, MicroPost, TimeWindow, Timeline};

/// Tolerance used when comparing entropies for ties.
pub const ENTROPY_EPS: f64 = 1e-12;

/// Number of equal sub-windows used for the age feature.
pub const AGE_BUCKETS: u8 = 6;

/// Number of features entering the entropy sum.
pub const FEATURE_COUNT: usize = 6;

/// Placeholder hashtag bucket for posts without hashtags.
pub const NO_HASHTAG: &str = "∅";

/// Bucketized content features of one post.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub has_link: bool,
    /// Lexicographically smallest (lowercased) hashtag, or [`NO_HASHTAG`].
    pub hashtag_bucket: String,
    /// [`log_bucket`] of followers + friends.
    pub connectivity_bucket: u8,
    /// [`log_bucket`] of the author's status count.
    pub experience_bucket: u8,
    /// Sub-window of the pool window holding the creation time, `0..AGE_BUCKETS`.
    pub age_bucket: u8,
    /// [`log_bucket`] of the retweet count.
    pub popularity_bucket: u8,
}

/// Decimal order-of-magnitude bucket: 0 → 0, 1–9 → 1, 10–99 → 2,
/// 100–999 → 3, 1000+ → 4.
pub fn log_bucket(n: u64) -> u8 {
    match n {
        0 => 0,
        1..=9 => 1,
        10..=99 => 2,
        100..=999 => 3,
        _ => 4,
    }
}

fn age_bucket(t: chrono::DateTime<chrono::Utc>, window: &TimeWindow) -> u8 {
    let len = window.length_seconds();
    if len <= 0.0 {
        return 0;
    }
    let offset = (t - window.start).num_milliseconds() as f64 / 1000.0;
    let idx = (offset / len * AGE_BUCKETS as f64).floor();
    idx.clamp(0.0, (AGE_BUCKETS - 1) as f64) as u8
}

pub fn extract_features(post: &MicroPost, window: &TimeWindow) -> FeatureVector {
    let hashtag_bucket = post
        .hashtags
        .iter()
        .map(|h| h.trim_start_matches('#').to_lowercase())
        .filter(|h| !h.is_empty())
        .min()
        .unwrap_or_else(|| NO_HASHTAG.to_string());
    FeatureVector {
        has_link: !post.urls.is_empty(),
        hashtag_bucket,
        connectivity_bucket: log_bucket(post.author.followers.saturating_add(post.author.friends)),
        experience_bucket: log_bucket(post.author.statuses),
        age_bucket: age_bucket(post.created_at, window),
        popularity_bucket: log_bucket(post.retweet_count),
    }
}

/// Summed Shannon entropy (bits) of the six feature distributions.
pub fn timeline_entropy(features: &[FeatureVector]) -> Result<f64, FilterError> {
    if features.is_empty() {
        return Err(FilterError::EmptySet);
    }
    let n = features.len() as f64;
    let mut total = 0.0;
    let mut add = |counts: Vec<usize>| {
        let sum_clogc: f64 = counts.iter().map(|&c| clogc(c as u32)).sum();
        total += n.log2() - sum_clogc / n;
    };
    add(histogram(features.iter().map(|f| f.has_link)));
    add(histogram(features.iter().map(|f| f.hashtag_bucket.as_str())));
    add(histogram(features.iter().map(|f| f.connectivity_bucket)));
    add(histogram(features.iter().map(|f| f.experience_bucket)));
    add(histogram(features.iter().map(|f| f.age_bucket)));
    add(histogram(features.iter().map(|f| f.popularity_bucket)));
    Ok(total.max(0.0))
}

fn histogram<K: std::hash::Hash + Eq>(values: impl Iterator<Item = K>) -> Vec<usize> {
    let mut counts: HashMap<K, usize> = HashMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    counts.into_values().collect()
}

#[inline]
fn clogc(c: u32) -> f64 {
    if c <= 1 {
        0.0
    } else {
        let c = c as f64;
        c * c.log2()
    }
}

/// Whether adding `candidate` to `timeline` reaches the best entropy
/// attainable by adding any single member of `pool` (within [`ENTROPY_EPS`]).
pub fn max_entr(candidate: &FeatureVector, timeline: &[FeatureVector], pool: &[FeatureVector]) -> bool {
    let with = |f: &FeatureVector| {
        let mut set = timeline.to_vec();
        set.push(f.clone());
        timeline_entropy(&set).expect("set is non-empty")
    };
    let best = pool.iter().map(with).fold(f64::NEG_INFINITY, f64::max);
    with(candidate) >= best.max(with(candidate)) - ENTROPY_EPS
}

/// Indices of the posts with the maximum retweet count.
pub fn most_popular(posts: &[MicroPost]) -> Result<Vec<usize>, FilterError> {
    let max = posts.iter().map(|p| p.retweet_count).max().ok_or(FilterError::EmptySet)?;
    Ok(posts
        .iter()
        .enumerate()
        .filter(|(_, p)| p.retweet_count == max)
        .map(|(i, _)| i)
        .collect())
}

/// Linear-interpolation empirical quantile (type 7) of a non-empty sample.
pub fn empirical_quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Indices of the posts whose retweet count reaches the `1 - quantile`
/// empirical quantile of the input. Never empty for non-empty input.
pub fn popular(posts: &[MicroPost], quantile: f64) -> Result<Vec<usize>, FilterError> {
    let counts: Vec<u64> = posts.iter().map(|p| p.retweet_count).collect();
    popular_by_count(&counts, quantile)
}

fn popular_by_count(counts: &[u64], quantile: f64) -> Result<Vec<usize>, FilterError> {
    if counts.is_empty() {
        return Err(FilterError::EmptySet);
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(FilterError::BadConfig("popular quantile must lie in (0, 1]"));
    }
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let threshold = empirical_quantile(&values, 1.0 - quantile);
    let max = counts.iter().copied().max().expect("non-empty");
    Ok(counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c as f64 >= threshold || c == max)
        .map(|(i, _)| i)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Requested timeline size.
    pub size: usize,
    /// Number of following picks during which a chosen location is sidelined.
    pub turns: u32,
    pub seed: u64,
    /// ChaCha stream; [`generate_all`] gives each selector its own stream.
    pub stream: u64,
    pub popular_quantile: f64,
    pub dedupe_authors: bool,
    pub dedupe_content: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            size: 30,
            turns: 5,
            seed: 0,
            stream: 0,
            popular_quantile: 0.25,
            dedupe_authors: true,
            dedupe_content: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.size == 0 {
            return Err(FilterError::BadConfig("size must be at least 1"));
        }
        if !(self.popular_quantile > 0.0 && self.popular_quantile <= 1.0) {
            return Err(FilterError::BadConfig("popular quantile must lie in (0, 1]"));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Candidate posts with precomputed features, integer feature codes, and
/// location indices.
#[derive(Clone, Debug)]
pub struct Pool {
    posts: Vec<MicroPost>,
    window: TimeWindow,
    features: Vec<FeatureVector>,
    codes: Vec<[u32; FEATURE_COUNT]>,
    alphabet: [usize; FEATURE_COUNT],
    locations: Vec<LocationId>,
    location_of: Vec<Option<usize>>,
    content_keys: Vec<String>,
}

impl Pool {
    /// Pool whose window spans the earliest to the latest post.
    pub fn new(posts: Vec<MicroPost>) -> Self {
        let start = posts.iter().map(|p| p.created_at).min().unwrap_or_default();
        let end = posts.iter().map(|p| p.created_at).max().unwrap_or_default();
        Self::with_window(posts, TimeWindow::new(start, end))
    }

    pub fn with_window(posts: Vec<MicroPost>, window: TimeWindow) -> Self {
        let features: Vec<FeatureVector> = posts.iter().map(|p| extract_features(p, &window)).collect();

        let mut tags: BTreeMap<&str, u32> = BTreeMap::new();
        for f in &features {
            tags.entry(f.hashtag_bucket.as_str()).or_default();
        }
        for (i, v) in tags.values_mut().enumerate() {
            *v = i as u32;
        }
        let codes = features
            .iter()
            .map(|f| {
                [
                    f.has_link as u32,
                    tags[f.hashtag_bucket.as_str()],
                    f.connectivity_bucket as u32,
                    f.experience_bucket as u32,
                    f.age_bucket as u32,
                    f.popularity_bucket as u32,
                ]
            })
            .collect();
        let alphabet = [2, tags.len().max(1), 5, 5, AGE_BUCKETS as usize, 5];

        let mut locations: Vec<LocationId> = posts.iter().filter_map(|p| p.location.clone()).collect();
        locations.sort();
        locations.dedup();
        let location_of = posts
            .iter()
            .map(|p| p.location.as_ref().map(|l| locations.binary_search(l).expect("interned")))
            .collect();
        let content_keys = posts.iter().map(|p| content_key(&p.text)).collect();

        Self {
            posts,
            window,
            features,
            codes,
            alphabet,
            locations,
            location_of,
            content_keys,
        }
    }

    pub fn posts(&self) -> &[MicroPost] {
        &self.posts
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn window(&self) -> TimeWindow {
        self.window
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    fn timeline(&self, picked: &[usize], method: Method, shortfall: bool, relaxations: u32) -> Timeline {
        Timeline {
            posts: picked.iter().map(|&i| self.posts[i].clone()).collect(),
            method,
            source_window: self.window,
            shortfall,
            relaxations,
        }
    }
}

/// Per-feature value counts of the selected set, supporting O(1) evaluation
/// of the entropy after adding one post.
struct EntropyState {
    n: u32,
    counts: [Vec<u32>; FEATURE_COUNT],
    sum_clogc: [f64; FEATURE_COUNT],
}

impl EntropyState {
    fn new(alphabet: &[usize; FEATURE_COUNT]) -> Self {
        Self {
            n: 0,
            counts: std::array::from_fn(|f| vec![0; alphabet[f]]),
            sum_clogc: [0.0; FEATURE_COUNT],
        }
    }

    fn entropy_with(&self, code: &[u32; FEATURE_COUNT]) -> f64 {
        let n = (self.n + 1) as f64;
        let mut h = 0.0;
        for (f, &v) in code.iter().enumerate() {
            let c = self.counts[f][v as usize];
            let s = self.sum_clogc[f] - clogc(c) + clogc(c + 1);
            h += n.log2() - s / n;
        }
        h
    }

    fn add(&mut self, code: &[u32; FEATURE_COUNT]) {
        for (f, &v) in code.iter().enumerate() {
            let c = &mut self.counts[f][v as usize];
            self.sum_clogc[f] += clogc(*c + 1) - clogc(*c);
            *c += 1;
        }
        self.n += 1;
    }
}

/// Posts selected so far, with the author and content sets used for dedupe.
struct Chosen<'a> {
    pool: &'a Pool,
    picked: Vec<usize>,
    used: Vec<bool>,
    entropy: EntropyState,
    authors: HashSet<&'a str>,
    contents: HashSet<&'a str>,
}

impl<'a> Chosen<'a> {
    fn new(pool: &'a Pool, capacity: usize) -> Self {
        Self {
            pool,
            picked: Vec::with_capacity(capacity),
            used: vec![false; pool.len()],
            entropy: EntropyState::new(&pool.alphabet),
            authors: HashSet::new(),
            contents: HashSet::new(),
        }
    }

    fn take(&mut self, i: usize) {
        self.picked.push(i);
        self.used[i] = true;
        self.entropy.add(&self.pool.codes[i]);
        self.authors.insert(self.pool.posts[i].author.id.as_str());
        self.contents.insert(self.pool.content_keys[i].as_str());
    }

    fn is_open(&self, i: usize, config: &FilterConfig) -> bool {
        !self.used[i]
            && !(config.dedupe_authors && self.authors.contains(self.pool.posts[i].author.id.as_str()))
            && !(config.dedupe_content && self.contents.contains(self.pool.content_keys[i].as_str()))
    }
}

struct Selection {
    picked: Vec<usize>,
    shortfall: bool,
    relaxations: u32,
}

/// Shared greedy loop. `turns = None` disables sidelining (DIV).
fn greedy(pool: &Pool, config: &FilterConfig, turns: Option<u32>) -> Result<Selection, FilterError> {
    config.validate()?;
    if pool.is_empty() {
        return Err(FilterError::EmptySet);
    }
    if turns.is_some() {
        if let Some(i) = pool.location_of.iter().position(Option::is_none) {
            return Err(FilterError::MissingLocation(pool.posts[i].id.clone()));
        }
    }

    let mut rng = config.rng();
    let mut chosen = Chosen::new(pool, config.size);
    let mut sidelined = vec![0i64; pool.locations.len()];
    let mut relaxations = 0u32;

    // Seed: uniform draw among the most retweeted posts.
    let seeds = most_popular(&pool.posts)?;
    let seed = seeds[rng.random_range(0..seeds.len())];
    chosen.take(seed);
    if let (Some(t), Some(loc)) = (turns, pool.location_of[seed]) {
        sidelined[loc] = t as i64;
    }

    let mut values = Vec::with_capacity(pool.len());
    while chosen.picked.len() < config.size {
        let open: Vec<usize> = (0..pool.len())
            .filter(|&i| chosen.is_open(i, config))
            .collect();
        if open.is_empty() {
            return Ok(Selection { picked: chosen.picked, shortfall: true, relaxations });
        }
        let eligible: Vec<usize> = match turns {
            None => open,
            Some(_) => open
                .into_iter()
                .filter(|&i| sidelined[pool.location_of[i].expect("checked")] <= 0)
                .collect(),
        };
        if eligible.is_empty() {
            // Every location with remaining posts is sidelined: advance the clock.
            relaxations += 1;
            sidelined.iter_mut().for_each(|c| *c -= 1);
            continue;
        }

        values.clear();
        values.extend(eligible.iter().map(|&i| chosen.entropy.entropy_with(&pool.codes[i])));
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let candidates: Vec<usize> = eligible
            .iter()
            .zip(&values)
            .filter(|(_, &h)| h >= best - ENTROPY_EPS)
            .map(|(&i, _)| i)
            .collect();
        let counts: Vec<u64> = candidates.iter().map(|&i| pool.posts[i].retweet_count).collect();
        let preferred = popular_by_count(&counts, config.popular_quantile)?;
        let pick = candidates[preferred[rng.random_range(0..preferred.len())]];

        chosen.take(pick);
        if let Some(t) = turns {
            sidelined[pool.location_of[pick].expect("checked")] = t as i64 + 1;
            sidelined.iter_mut().for_each(|c| *c -= 1);
        }
    }
    Ok(Selection { picked: chosen.picked, shortfall: false, relaxations })
}

/// Top `size` posts by retweets; ties go to the newer post, then the smaller id.
pub fn select_pop(pool: &Pool, config: &FilterConfig) -> Result<Timeline, FilterError> {
    config.validate()?;
    if pool.is_empty() {
        return Err(FilterError::EmptySet);
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&pool.posts[a], &pool.posts[b]);
        pb.retweet_count
            .cmp(&pa.retweet_count)
            .then(pb.created_at.cmp(&pa.created_at))
            .then(pa.id.cmp(&pb.id))
    });
    let shortfall = order.len() < config.size;
    order.truncate(config.size);
    Ok(pool.timeline(&order, Method::Pop, shortfall, 0))
}

/// Greedy entropy maximization without geographic constraints.
pub fn select_div(pool: &Pool, config: &FilterConfig) -> Result<Timeline, FilterError> {
    let sel = greedy(pool, config, None)?;
    Ok(pool.timeline(&sel.picked, Method::Div, sel.shortfall, sel.relaxations))
}

/// Greedy entropy maximization with location sidelining.
pub fn select_pm(pool: &Pool, config: &FilterConfig) -> Result<Timeline, FilterError> {
    let sel = greedy(pool, config, Some(config.turns))?;
    Ok(pool.timeline(&sel.picked, Method::Pm, sel.shortfall, sel.relaxations))
}

/// Runs the three selectors, each on its own generator stream.
pub fn generate_all(pool: &Pool, config: &FilterConfig) -> Result<BTreeMap<Method, Timeline>, FilterError> {
    let mut out = BTreeMap::new();
    for (k, method) in Method::ALL.into_iter().enumerate() {
        let cfg = FilterConfig { stream: config.stream.wrapping_add(k as u64 + 1), ..config.clone() };
        let timeline = match method {
            Method::Pop => select_pop(pool, &cfg)?,
            Method::Div => select_div(pool, &cfg)?,
            Method::Pm => select_pm(pool, &cfg)?,
        };
        out.insert(method, timeline);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Author, LocationId};
    use chrono::{Duration, TimeZone, Utc};

    fn base() -> chrono::DateTime<Utc> {
        Utc.with_ymd_and_hms(2014, 10, 1, 12, 0, 0).unwrap()
    }

    fn post(id: usize, loc: &str, rts: u64, tag: &str) -> MicroPost {
        MicroPost {
            id: format!("p{id:04}"),
            author: Author {
                id: format!("a{id}"),
                screen_name: format!("u{id}"),
                self_reported_location: String::new(),
                followers: 10,
                friends: 0,
                statuses: 50,
                account_created_at: base(),
            },
            text: format!("texto numero {id}"),
            created_at: base() + Duration::minutes(id as i64),
            retweet_count: rts,
            hashtags: if tag.is_empty() { vec![] } else { vec![tag.to_string()] },
            urls: vec![],
            mentions: vec![],
            reply_to: None,
            retweet_of: None,
            location: Some(LocationId::new(loc).unwrap()),
        }
    }

    fn fv(tag: &str) -> FeatureVector {
        FeatureVector {
            has_link: false,
            hashtag_bucket: tag.into(),
            connectivity_bucket: 1,
            experience_bucket: 2,
            age_bucket: 0,
            popularity_bucket: 0,
        }
    }

    #[test]
    fn log_buckets() {
        assert_eq!([0, 1, 9, 10, 99, 100, 999, 1000, 10_000].map(log_bucket), [0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn feature_extraction() {
        let mut p = post(0, "RM", 0, "");
        let w = TimeWindow::new(base(), base() + Duration::hours(6));
        let f = extract_features(&p, &w);
        assert!(!f.has_link);
        assert_eq!(f.popularity_bucket, 0);
        assert_eq!(f.hashtag_bucket, NO_HASHTAG);
        assert_eq!(f.age_bucket, 0);
        p.created_at = w.end;
        assert_eq!(extract_features(&p, &w).age_bucket, AGE_BUCKETS - 1);
        p.hashtags = vec!["#Zeta".into(), "Alfa".into()];
        p.urls = vec!["http://x".into()];
        let f = extract_features(&p, &w);
        assert_eq!(f.hashtag_bucket, "alfa");
        assert!(f.has_link);
    }

    #[test]
    fn age_buckets_split_a_two_bucket_window() {
        // With the window divided into 6 slices, a window covering exactly two
        // slices' worth of posts still places start and end in different slices.
        let w = TimeWindow::new(base(), base() + Duration::minutes(60));
        let at = |m: i64| age_bucket(base() + Duration::minutes(m), &w);
        assert_eq!(at(0), 0);
        assert_eq!(at(9), 0);
        assert_eq!(at(10), 1);
        assert_eq!(at(60), 5);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(timeline_entropy(&[fv("a"), fv("a"), fv("a")]).unwrap(), 0.0);
        let four = [fv("a"), fv("b"), fv("c"), fv("d")];
        assert!((timeline_entropy(&four).unwrap() - 2.0).abs() < 1e-12);
        let three = [fv("a"), fv("a"), fv("b")];
        let expected = -(2.0f64 / 3.0) * (2.0f64 / 3.0).log2() - (1.0f64 / 3.0) * (1.0f64 / 3.0).log2();
        assert!((timeline_entropy(&three).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.9183).abs() < 1e-4);
        assert_eq!(timeline_entropy(&[]), Err(FilterError::EmptySet));
    }

    #[test]
    fn max_entr_examples() {
        let timeline = [fv("a"), fv("a"), fv("b")];
        assert!(max_entr(&fv("a"), &timeline, &[fv("a")]));
        // {a,a,b}+a: H(3/4,1/4)=0.811; {a,a,b}+c: H(1/2,1/4,1/4)=1.5.
        let pool = [fv("a"), fv("c")];
        assert!(!max_entr(&fv("a"), &timeline, &pool));
        assert!(max_entr(&fv("c"), &timeline, &pool));
        let twins = [fv("c"), fv("c")];
        assert!(max_entr(&twins[0], &timeline, &twins) && max_entr(&twins[1], &timeline, &twins));
    }

    #[test]
    fn popularity_helpers() {
        let posts: Vec<_> = [5, 5, 2].iter().enumerate().map(|(i, &r)| post(i, "RM", r, "")).collect();
        assert_eq!(most_popular(&posts).unwrap(), vec![0, 1]);
        let flat: Vec<_> = (0..3).map(|i| post(i, "RM", 4, "")).collect();
        assert_eq!(most_popular(&flat).unwrap(), vec![0, 1, 2]);
        assert_eq!(most_popular(&posts[..1]).unwrap(), vec![0]);
        assert_eq!(most_popular(&[]), Err(FilterError::EmptySet));

        assert_eq!(popular(&posts, 1.0).unwrap(), vec![0, 1, 2]);
        // 0.75 quantile of [1,1,1,9] by linear interpolation: 1 + 0.25 * 8 = 3.
        let skew: Vec<_> = [9, 1, 1, 1].iter().enumerate().map(|(i, &r)| post(i, "RM", r, "")).collect();
        assert_eq!(popular(&skew, 0.25).unwrap(), vec![0]);
        assert_eq!(popular(&skew[1..2], 0.01).unwrap(), vec![0]);
        assert_eq!(popular(&[], 0.5), Err(FilterError::EmptySet));
    }

    #[test]
    fn pop_takes_top_retweets() {
        let posts: Vec<_> = [7, 3, 1].iter().enumerate().map(|(i, &r)| post(i, "RM", r, "")).collect();
        let pool = Pool::new(posts);
        let t = select_pop(&pool, &FilterConfig { size: 2, ..Default::default() }).unwrap();
        assert_eq!(t.ids(), ["p0000", "p0001"]);
        assert!(!t.shortfall);
        let all = select_pop(&pool, &FilterConfig { size: 5, ..Default::default() }).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.shortfall);
        let exact = select_pop(&pool, &FilterConfig { size: 3, ..Default::default() }).unwrap();
        assert!(!exact.shortfall);
    }

    #[test]
    fn pop_tie_prefers_newer() {
        // p0001 and p0002 tie on 5 retweets at the cut; p0002 is newer.
        let posts: Vec<_> = [9, 5, 5].iter().enumerate().map(|(i, &r)| post(i, "RM", r, "")).collect();
        let t = select_pop(&Pool::new(posts), &FilterConfig { size: 2, ..Default::default() }).unwrap();
        assert_eq!(t.ids(), ["p0000", "p0002"]);
    }

    fn mixed_pool(n: usize, locations: &[&str]) -> Pool {
        let tags = ["a", "b", "c", "d", "", "e", "f"];
        Pool::new(
            (0..n)
                .map(|i| {
                    post(i, locations[i % locations.len()], ((i * 37) % 23) as u64, tags[(i * 5) % tags.len()])
                })
                .collect(),
        )
    }

    #[test]
    fn div_seeds_with_unique_most_popular() {
        let mut posts: Vec<_> = (0..20).map(|i| post(i, "RM", 1, "a")).collect();
        posts[13].retweet_count = 99;
        let pool = Pool::new(posts);
        for seed in 0..10 {
            let t = select_div(&pool, &FilterConfig { size: 5, seed, ..Default::default() }).unwrap();
            assert_eq!(t.posts[0].id, "p0013");
        }
    }

    #[test]
    fn div_on_exact_pool_returns_pool() {
        let pool = mixed_pool(8, &["RM"]);
        let t = select_div(&pool, &FilterConfig { size: 8, ..Default::default() }).unwrap();
        let mut ids = t.ids();
        ids.sort();
        let mut all: Vec<_> = pool.posts().iter().map(|p| p.id.as_str()).collect();
        all.sort();
        assert_eq!(ids, all);
        assert!(!t.shortfall);
    }

    #[test]
    fn selectors_are_deterministic() {
        let pool = mixed_pool(200, &["RM", "V", "VIII", "IX", "X", "II", "I"]);
        let cfg = FilterConfig { seed: 42, ..Default::default() };
        assert_eq!(select_div(&pool, &cfg).unwrap(), select_div(&pool, &cfg).unwrap());
        assert_eq!(select_pm(&pool, &cfg).unwrap(), select_pm(&pool, &cfg).unwrap());
        assert_eq!(generate_all(&pool, &cfg).unwrap(), generate_all(&pool, &cfg).unwrap());
    }

    #[test]
    fn pm_with_zero_turns_matches_div() {
        let pool = mixed_pool(120, &["RM", "V", "IX"]);
        for seed in 0..20 {
            let cfg = FilterConfig { turns: 0, seed, size: 25, ..Default::default() };
            assert_eq!(select_pm(&pool, &cfg).unwrap().ids(), select_div(&pool, &cfg).unwrap().ids());
        }
    }

    #[test]
    fn pm_alternates_two_locations_with_one_turn() {
        let pool = mixed_pool(100, &["A", "B"]);
        for seed in 0..10 {
            let t = select_pm(&pool, &FilterConfig { turns: 1, size: 12, seed, ..Default::default() }).unwrap();
            assert_eq!(t.relaxations, 0);
            for pair in t.posts.windows(2) {
                assert_ne!(pair[0].location, pair[1].location);
            }
        }
    }

    #[test]
    fn pm_relaxes_when_starved() {
        // Two locations but five turns: only relaxation can make progress.
        let pool = mixed_pool(40, &["A", "B"]);
        let t = select_pm(&pool, &FilterConfig { turns: 5, size: 10, ..Default::default() }).unwrap();
        assert_eq!(t.len(), 10);
        assert!(t.relaxations > 0);
    }

    #[test]
    fn pm_requires_locations() {
        let mut posts: Vec<_> = (0..5).map(|i| post(i, "RM", 1, "")).collect();
        posts[2].location = None;
        let err = select_pm(&Pool::new(posts), &FilterConfig::default()).unwrap_err();
        assert_eq!(err, FilterError::MissingLocation("p0002".into()));
    }

    #[test]
    fn dedupe_flags_are_honored() {
        let mut posts: Vec<_> = (0..30).map(|i| post(i, ["RM", "V", "IX"][i % 3], (i % 4) as u64, "")).collect();
        for (i, p) in posts.iter_mut().enumerate() {
            p.author.id = format!("a{}", i % 10);
            p.text = format!("mensaje {} http://t.co/{i}", i % 7);
        }
        let pool = Pool::new(posts);
        let t = select_pm(&pool, &FilterConfig { turns: 1, size: 30, ..Default::default() }).unwrap();
        assert!(t.shortfall);
        let authors: HashSet<_> = t.posts.iter().map(|p| &p.author.id).collect();
        let texts: HashSet<_> = t.posts.iter().map(|p| content_key(&p.text)).collect();
        assert_eq!(authors.len(), t.len());
        assert_eq!(texts.len(), t.len());
    }

    #[test]
    fn generate_all_cases() {
        assert_eq!(generate_all(&Pool::new(vec![]), &FilterConfig::default()), Err(FilterError::EmptySet));
        let pool = mixed_pool(6, &["RM", "V", "IX", "X", "I", "II", "III"]);
        let all = generate_all(&pool, &FilterConfig { size: 6, turns: 2, ..Default::default() }).unwrap();
        let sets: Vec<Vec<&str>> = all
            .values()
            .map(|t| {
                let mut ids = t.ids();
                ids.sort();
                ids
            })
            .collect();
        assert_eq!(sets[0], sets[1]);
        assert_eq!(sets[1], sets[2]);
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig { size: 0, ..Default::default() }.validate().is_err());
        assert!(FilterConfig { popular_quantile: 0.0, ..Default::default() }.validate().is_err());
    }
}
