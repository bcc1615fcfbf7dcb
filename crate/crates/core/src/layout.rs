//! Two-level squarified treemap: location groups, then post leaves.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::LayoutError;
use crate::model::{LocationId, LocationRegistry, MicroPost, PopulationTable, Timeline};

/// Axis-aligned rectangle with a top-left origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, LayoutError> {
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(LayoutError::BadRect(w, h));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn aspect_ratio(&self) -> f64 {
        (self.w / self.h).max(self.h / self.w)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// True when `other` lies inside `self`, allowing `tol` of slack per edge.
    pub fn contains_rect(&self, other: &Rect, tol: f64) -> bool {
        other.x >= self.x - tol
            && other.y >= self.y - tol
            && other.right() <= self.right() + tol
            && other.bottom() <= self.bottom() + tol
    }

    /// Area of the intersection of the two interiors.
    pub fn overlap_area(&self, other: &Rect) -> f64 {
        let w = self.right().min(other.right()) - self.x.max(other.x);
        let h = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }
}

/// Monotone non-decreasing transform applied to a raw count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `x`
    #[default]
    Linear,
    /// `log10(1 + x)`
    Log10,
    /// `ln(1 + x)`
    Ln,
    /// `sqrt(x)`
    Sqrt,
    /// `0`; drops the term.
    Zero,
}

impl Transform {
    pub fn apply(self, x: u64) -> f64 {
        let x = x as f64;
        match self {
            Transform::Linear => x,
            Transform::Log10 => (1.0 + x).log10(),
            Transform::Ln => x.ln_1p(),
            Transform::Sqrt => x.sqrt(),
            Transform::Zero => 0.0,
        }
    }
}

/// Leaf weight: `(1 + retweet_term(retweets) + connectivity_term(followers + friends)) / share`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpec {
    pub retweet_term: Transform,
    pub connectivity_term: Transform,
    pub population: PopulationTable,
}

impl WeightSpec {
    pub fn new(population: PopulationTable) -> Self {
        Self { retweet_term: Transform::Linear, connectivity_term: Transform::Log10, population }
    }
}

pub fn leaf_weight(post: &MicroPost, spec: &WeightSpec) -> Result<f64, LayoutError> {
    let location = post.location.as_ref().ok_or_else(|| LayoutError::MissingLocation(post.id.clone()))?;
    let share = spec
        .population
        .share(location)
        .ok_or_else(|| LayoutError::MissingPopulation(location.to_string()))?;
    let connectivity = post.author.followers.saturating_add(post.author.friends);
    let w = (1.0 + spec.retweet_term.apply(post.retweet_count) + spec.connectivity_term.apply(connectivity)) / share;
    if w.is_finite() && w > 0.0 {
        Ok(w)
    } else {
        Err(LayoutError::BadWeight(w))
    }
}

/// Worst aspect ratio of a row of `areas` laid along a side of length `side`.
pub fn worst_ratio(areas: &[f64], side: f64) -> Result<f64, LayoutError> {
    let (min, max, sum) = areas.iter().fold((f64::INFINITY, 0.0f64, 0.0), |(lo, hi, s), &a| (lo.min(a), hi.max(a), s + a));
    if areas.is_empty() {
        return Err(LayoutError::EmptyRow);
    }
    let side2 = side * side;
    Ok((side2 * max / (sum * sum)).max(sum * sum / (side2 * min)))
}

/// Lays `areas` (already scaled to the remaining rect) as one row along the
/// shorter side of `rect`. Returns the row's rects and the leftover rect.
fn lay_row(areas: &[f64], rect: Rect, last: bool) -> (Vec<Rect>, Option<Rect>) {
    let sum: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(areas.len());
    if rect.w >= rect.h {
        // Column at the left edge.
        let width = if last { rect.w } else { sum / rect.h };
        let mut y = rect.y;
        for (i, a) in areas.iter().enumerate() {
            let h = if i + 1 == areas.len() { rect.bottom() - y } else { a / width };
            out.push(Rect { x: rect.x, y, w: width, h });
            y += h;
        }
        let rest = (!last).then(|| Rect { x: rect.x + width, y: rect.y, w: rect.right() - (rect.x + width), h: rect.h });
        (out, rest)
    } else {
        // Row along the top edge.
        let height = if last { rect.h } else { sum / rect.w };
        let mut x = rect.x;
        for (i, a) in areas.iter().enumerate() {
            let w = if i + 1 == areas.len() { rect.right() - x } else { a / height };
            out.push(Rect { x, y: rect.y, w, h: height });
            x += w;
        }
        let rest = (!last).then(|| Rect { x: rect.x, y: rect.y + height, w: rect.w, h: rect.bottom() - (rect.y + height) });
        (out, rest)
    }
}

/// Squarified treemap of `weights` inside `rect`. Rects are returned in input
/// order; layout order is by descending weight, ties by input index.
pub fn squarify(weights: &[f64], rect: Rect) -> Result<Vec<Rect>, LayoutError> {
    if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(LayoutError::BadWeight(w));
    }
    Rect::new(rect.x, rect.y, rect.w, rect.h)?;
    if weights.is_empty() {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let total: f64 = weights.iter().sum();
    let scale = rect.area() / total;
    let areas: Vec<f64> = order.iter().map(|&i| weights[i] * scale).collect();

    let mut placed = Vec::with_capacity(weights.len());
    let mut remaining = rect;
    let mut start = 0;
    while start < areas.len() {
        let side = remaining.w.min(remaining.h);
        let mut end = start + 1;
        let mut current = worst_ratio(&areas[start..end], side)?;
        while end < areas.len() {
            let next = worst_ratio(&areas[start..=end], side)?;
            if next > current {
                break;
            }
            current = next;
            end += 1;
        }
        let last = end == areas.len();
        let (row, rest) = lay_row(&areas[start..end], remaining, last);
        placed.extend(row);
        if let Some(rest) = rest {
            remaining = rest;
        }
        start = end;
    }

    let mut out = vec![rect; weights.len()];
    for (slot, r) in order.into_iter().zip(placed) {
        out[slot] = r;
    }
    Ok(out)
}

/// Slice-and-dice reference layout: one strip per weight along the longer side.
pub fn slice_and_dice(weights: &[f64], rect: Rect) -> Result<Vec<Rect>, LayoutError> {
    if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(LayoutError::BadWeight(w));
    }
    let total: f64 = weights.iter().sum();
    let mut offset = 0.0;
    Ok(weights
        .iter()
        .map(|w| {
            let frac = w / total;
            let r = if rect.w >= rect.h {
                Rect { x: rect.x + offset * rect.w, y: rect.y, w: frac * rect.w, h: rect.h }
            } else {
                Rect { x: rect.x, y: rect.y + offset * rect.h, w: rect.w, h: frac * rect.h }
            };
            offset += frac;
            r
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutLeaf {
    pub post_id: String,
    pub rect: Rect,
    pub weight: f64,
    /// Degrees in `[0, 360)`.
    pub hue: f64,
    /// Fraction in `[0.3, 1]`; 1 is newest.
    pub saturation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutGroup {
    pub location: LocationId,
    pub rect: Rect,
    pub weight: f64,
    pub leaves: Vec<LayoutLeaf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutTree {
    pub viewport: Rect,
    pub groups: Vec<LayoutGroup>,
}

impl LayoutTree {
    pub fn leaves(&self) -> impl Iterator<Item = &LayoutLeaf> {
        self.groups.iter().flat_map(|g| g.leaves.iter())
    }

    pub fn leaf_count(&self) -> usize {
        self.groups.iter().map(|g| g.leaves.len()).sum()
    }
}

pub const MIN_SATURATION: f64 = 0.3;

/// `1 - 0.7 * age / window`, clamped to `[0.3, 1]`.
pub fn recency_saturation(age_seconds: f64, window_seconds: f64) -> f64 {
    if window_seconds <= 0.0 {
        return 1.0;
    }
    (1.0 - (1.0 - MIN_SATURATION) * age_seconds / window_seconds).clamp(MIN_SATURATION, 1.0)
}

/// Groups are emitted in registry order and leaves in post-id order.
pub fn layout_issue(
    timeline: &Timeline,
    viewport: Rect,
    spec: &WeightSpec,
    registry: &LocationRegistry,
    now: DateTime<Utc>,
) -> Result<LayoutTree, LayoutError> {
    let viewport = Rect::new(viewport.x, viewport.y, viewport.w, viewport.h)?;
    let mut by_location: BTreeMap<usize, Vec<(&MicroPost, f64)>> = BTreeMap::new();
    for post in &timeline.posts {
        let location = post.location.as_ref().ok_or_else(|| LayoutError::MissingLocation(post.id.clone()))?;
        let index = registry
            .index_of(location)
            .ok_or_else(|| LayoutError::MissingPopulation(location.to_string()))?;
        by_location.entry(index).or_default().push((post, leaf_weight(post, spec)?));
    }
    for leaves in by_location.values_mut() {
        leaves.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    }

    let group_weights: Vec<f64> = by_location.values().map(|l| l.iter().map(|(_, w)| w).sum()).collect();
    let group_rects = squarify(&group_weights, viewport)?;
    let window = timeline.source_window.length_seconds();
    let ids: Vec<&LocationId> = registry.ids().collect();

    let mut groups = Vec::with_capacity(by_location.len());
    for (((index, leaves), rect), weight) in by_location.into_iter().zip(group_rects).zip(group_weights) {
        let hue = index as f64 / registry.len() as f64 * 360.0;
        let weights: Vec<f64> = leaves.iter().map(|(_, w)| *w).collect();
        let rects = squarify(&weights, rect)?;
        let leaves = leaves
            .into_iter()
            .zip(rects)
            .map(|((post, weight), rect)| {
                let age = (now - post.created_at).num_milliseconds() as f64 / 1000.0;
                LayoutLeaf { post_id: post.id.clone(), rect, weight, hue, saturation: recency_saturation(age, window) }
            })
            .collect();
        groups.push(LayoutGroup { location: ids[index].clone(), rect, weight, leaves });
    }
    Ok(LayoutTree { viewport, groups })
}
